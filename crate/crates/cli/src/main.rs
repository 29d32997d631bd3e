use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anchor_cascade::bench::bench_throughput;
use anchor_cascade::cascade::{detect, CascadeConfig, DetectorModel, APN_FILE, RNET48_FILE, RNET96_FILE};
use anchor_cascade::config::{apply_cascade_config, apply_plan_config};
use anchor_cascade::eval::{evaluate, to_detections, Detection};
use anchor_cascade::formats::{
    draw_boxes, format_annotations, format_detections, parse_annotations, parse_detections, Record,
};
use anchor_cascade::geometry::{cost_ratio, cost_ratio_geometric, AnchorConfig, BBox};
use anchor_cascade::pyramid::{build_schedule, Image};
use anchor_cascade::train::{run_stage, synth_corpus, AnnotatedImage, StagePlan, SynthParams};
use anchor_cascade::Error;
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "acascade", version, about = "Anchor cascade face detector")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect faces in PPM/PGM images.
    Detect {
        model_dir: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long)]
        min_face: Option<f64>,
        /// Context templates per face scale.
        #[arg(long)]
        nc: Option<usize>,
        /// Detection file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for copies of the images with boxes drawn in red.
        #[arg(long)]
        draw: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one stage (apn, rnet48 or rnet96) into a model directory.
    Train {
        stage: String,
        annotations: PathBuf,
        out_model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Model directory with the earlier stages; needed for hard-negative
        /// mining and copied into the output.
        #[arg(long)]
        prev: Option<PathBuf>,
        /// Use the reduced schedule meant for the synthetic corpus.
        #[arg(long)]
        desk: bool,
    },
    /// Evaluate a detection file against annotations.
    Eval {
        detections: PathBuf,
        annotations: PathBuf,
        /// Print the full discrete ROC curve.
        #[arg(long)]
        roc: bool,
        #[arg(long, value_delimiter = ',', default_value = "50,100")]
        recall_at: Vec<u64>,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
    },
    /// Print the pyramid cost model and example schedules.
    Cost {
        #[arg(long, default_value_t = 0.7937)]
        alpha: f64,
        #[arg(long, default_value_t = 4)]
        anchors: usize,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
        #[arg(long, default_value_t = 12.0)]
        min_face: f64,
    },
    /// Time detection over a directory of images.
    Bench {
        model_dir: PathBuf,
        image_dir: PathBuf,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Evaluate slices and refinement batches in parallel.
        #[arg(long)]
        parallel: bool,
    },
    /// Write a synthetic corpus: PPM images plus annotations.txt.
    Synth {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

type Result<T> = std::result::Result<T, Error>;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))
}

fn cascade_config(config: Option<&Path>) -> Result<CascadeConfig> {
    let mut cfg = CascadeConfig::default();
    if let Some(p) = config {
        apply_cascade_config(&mut cfg, &read_text(p)?)?;
    }
    Ok(cfg)
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Detect {
            model_dir,
            images,
            min_face,
            nc,
            out,
            draw,
            config,
        } => {
            let mut cfg = cascade_config(config.as_deref())?;
            if let Some(m) = min_face {
                cfg.min_face = m;
            }
            if let Some(n) = nc {
                cfg.anchor.templates = n;
            }
            cfg.validate()?;
            let det = DetectorModel::load(&model_dir)?;
            if let Some(d) = &draw {
                fs::create_dir_all(d)?;
            }
            let mut records = Vec::with_capacity(images.len());
            for path in &images {
                let img = Image::load(path)
                    .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
                let found = detect(&img, &det, &cfg)?;
                log::info!("{}: {} faces", path.display(), found.len());
                let items = to_detections(&found);
                if let Some(d) = &draw {
                    let boxes: Vec<BBox> = items.iter().map(|d| d.bbox).collect();
                    let name = path.file_stem().unwrap_or_default().to_string_lossy();
                    draw_boxes(&img, &boxes).save_ppm(d.join(format!("{name}.ppm")))?;
                }
                records.push(Record {
                    path: path.display().to_string(),
                    items,
                });
            }
            let text = format_detections(&records);
            match out {
                Some(p) => fs::write(p, text)?,
                None => print!("{text}"),
            }
        }
        Command::Train {
            stage,
            annotations,
            out_model,
            config,
            seed,
            prev,
            desk,
        } => {
            let mut plan = if desk {
                StagePlan::desk(&stage)?
            } else {
                StagePlan::full(&stage)?
            };
            if let Some(p) = &config {
                apply_plan_config(&mut plan, &read_text(p)?)?;
            }
            if let Some(s) = seed {
                plan.train.seed = s;
            }
            let set = load_annotated(&annotations)?;
            let prev_det = match &prev {
                Some(d) => Some(DetectorModel::load(d)?),
                None => None,
            };
            let outcome = run_stage(&plan, &set, prev_det.as_ref())?;
            fs::create_dir_all(&out_model)?;
            if let Some(d) = &prev {
                for f in [APN_FILE, RNET48_FILE, RNET96_FILE] {
                    let src = d.join(f);
                    if src.is_file() && d != &out_model {
                        fs::copy(&src, out_model.join(f))?;
                    }
                }
            }
            let file = match stage.as_str() {
                "apn" => APN_FILE,
                "rnet48" => RNET48_FILE,
                _ => RNET96_FILE,
            };
            outcome.model.save(out_model.join(file))?;
            if let Some(last) = outcome.history.last() {
                println!(
                    "{stage}: {} epochs, final loss {:.6}, accuracy {:.4}",
                    outcome.history.len(),
                    last.loss,
                    last.accuracy
                );
            }
        }
        Command::Eval {
            detections,
            annotations,
            roc,
            recall_at,
            iou,
        } => {
            let dets = parse_detections(&read_text(&detections)?)?;
            let gts = parse_annotations(&read_text(&annotations)?)?;
            let (d, g) = align(&dets, &gts)?;
            let r = evaluate(&d, &g, iou, &recall_at)?;
            println!("images {} faces {}", g.len(), r.total_gt);
            for (k, v) in &r.recall_at_k {
                println!("recall@{k} {v:.4}");
            }
            for fp in [0, 10, 100, 1000] {
                println!("tpr@fp={fp} {:.4}", r.tpr_at_fp(fp));
            }
            if roc {
                println!("# threshold false_positives true_positive_rate");
                for p in &r.roc {
                    println!("{:.4} {} {:.6}", p.threshold, p.false_positives, p.true_positive_rate);
                }
            }
        }
        Command::Cost {
            alpha,
            anchors,
            width,
            height,
            min_face,
        } => {
            let ratio = cost_ratio(alpha, anchors)?;
            let geometric = cost_ratio_geometric(alpha, anchors)?;
            println!("cost ratio:             {ratio:.5} = 1/{:.2}", 1.0 / ratio);
            println!("cost ratio (geometric): {geometric:.5} = 1/{:.2}", 1.0 / geometric);
            let cfg = AnchorConfig {
                alpha,
                anchors,
                context_alpha: alpha,
                ..AnchorConfig::default()
            };
            let max_face = width.min(height) as f64;
            let coarse = build_schedule(width, height, &cfg, min_face, max_face)?;
            let dense_cfg = AnchorConfig { anchors: 1, ..cfg };
            let dense = build_schedule(width, height, &dense_cfg, min_face, max_face)?;
            println!("coarse step {:.5}", coarse.coarse_step);
            let fmt = |s: &[f64]| s.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ");
            println!("coarse pyramid {width}x{height}, faces {min_face}..{max_face}: {}", fmt(&coarse.scales));
            println!("dense pyramid: {}", fmt(&dense.scales));
            let px = |s: &anchor_cascade::pyramid::PyramidSchedule| s.pixel_count() as f64;
            println!("pixel ratio coarse/dense {:.4}", px(&coarse) / px(&dense).max(1.0));
        }
        Command::Bench {
            model_dir,
            image_dir,
            reps,
            config,
            parallel,
        } => {
            let mut cfg = cascade_config(config.as_deref())?;
            cfg.parallel |= parallel;
            let det = DetectorModel::load(&model_dir)?;
            let mut paths: Vec<PathBuf> = fs::read_dir(&image_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("ppm" | "pgm")))
                .collect();
            paths.sort();
            let images = paths.iter().map(Image::load).collect::<Result<Vec<_>>>()?;
            let report = bench_throughput(&det, &images, &cfg, reps)?;
            print!("{}", report.render());
        }
        Command::Synth { out_dir, n, seed } => {
            let corpus = synth_corpus(
                seed,
                &SynthParams {
                    n_images: n,
                    ..SynthParams::default()
                },
            )?;
            fs::create_dir_all(&out_dir)?;
            let mut records = Vec::with_capacity(corpus.len());
            for (i, a) in corpus.iter().enumerate() {
                let name = format!("img_{i:05}.ppm");
                a.image.save_ppm(out_dir.join(&name))?;
                records.push(Record {
                    path: name,
                    items: a.boxes.clone(),
                });
            }
            fs::write(out_dir.join("annotations.txt"), format_annotations(&records))?;
            println!("wrote {} images to {}", corpus.len(), out_dir.display());
        }
    }
    Ok(())
}

/// Pairs detection records with annotation records by path. Images absent
/// from the detection file contribute no detections.
fn align(dets: &[Record<Detection>], gts: &[Record<BBox>]) -> Result<(Vec<Vec<Detection>>, Vec<Vec<BBox>>)> {
    let mut d = Vec::with_capacity(gts.len());
    for g in gts {
        let matches: Vec<&Record<Detection>> = dets
            .iter()
            .filter(|r| r.path == g.path || Path::new(&r.path).ends_with(&g.path))
            .collect();
        d.push(matches.first().map(|r| r.items.clone()).unwrap_or_default());
    }
    for r in dets {
        if !gts.iter().any(|g| r.path == g.path || Path::new(&r.path).ends_with(&g.path)) {
            return Err(Error::InvalidArgument(format!("detections for unannotated image {}", r.path)));
        }
    }
    Ok((d, gts.iter().map(|g| g.items.clone()).collect()))
}

/// Annotation records with image paths resolved relative to the file.
fn load_annotated(annotations: &Path) -> Result<Vec<AnnotatedImage>> {
    let base = annotations.parent().unwrap_or(Path::new("."));
    parse_annotations(&read_text(annotations)?)?
        .into_iter()
        .map(|r| {
            let img = Image::load(resolve(base, &r.path))?;
            Ok(AnnotatedImage::new(img, r.items))
        })
        .collect()
}
