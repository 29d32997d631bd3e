use super::ops::softmax2;
use super::spec::HEAD_CHANNELS_PER_ANCHOR;
use super::tensor::{Scalar, Tensor};
use crate::error::{ensure_arg, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SampleKind {
    /// Classification (label face) and regression.
    Positive,
    /// Regression only.
    SemiPositive,
    /// Classification (label background) only.
    Negative,
}

impl SampleKind {
    pub fn trains_classifier(self) -> bool {
        !matches!(self, SampleKind::SemiPositive)
    }
    pub fn trains_regressor(self) -> bool {
        !matches!(self, SampleKind::Negative)
    }
}

/// Supervision for one patch. Only the head of `anchor` (0-based) receives
/// gradient from this sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    pub kind: SampleKind,
    pub anchor: usize,
    pub delta: [f32; 4],
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean cross-entropy over positive and negative samples.
    pub cls: f64,
    /// Mean squared error per regression target over positive and
    /// semi-positive samples.
    pub reg: f64,
    pub n_cls: usize,
    pub n_reg: usize,
    /// Classification samples whose argmax label is correct.
    pub correct: usize,
}

impl LossBreakdown {
    pub fn accuracy(&self) -> f64 {
        if self.n_cls == 0 {
            0.0
        } else {
            self.correct as f64 / self.n_cls as f64
        }
    }
}

/// `L_total = L_cls + lambda * L_reg` over a batch of raw patch-head outputs
/// of shape `(n, 6·anchors, 1, 1)`. Returns the loss and its gradient with
/// respect to the raw head output.
pub fn loss_multitask<T: Scalar>(
    head: &Tensor<T>,
    targets: &[Target],
    lambda: f64,
) -> Result<(LossBreakdown, Tensor<T>)> {
    let [n, c, h, w] = head.shape();
    ensure_arg!(n > 0 && !targets.is_empty(), "empty batch");
    ensure_arg!(
        n == targets.len(),
        "{} targets for a batch of {n}",
        targets.len()
    );
    ensure_arg!(h == 1 && w == 1, "loss expects 1x1 head maps, got {h}x{w}");
    ensure_arg!(
        c % HEAD_CHANNELS_PER_ANCHOR == 0,
        "head has {c} channels"
    );
    ensure_arg!(lambda >= 0.0 && lambda.is_finite(), "lambda must be >= 0");
    let anchors = c / HEAD_CHANNELS_PER_ANCHOR;
    for t in targets {
        ensure_arg!(t.anchor < anchors, "anchor {} out of range", t.anchor);
    }

    let n_cls = targets.iter().filter(|t| t.kind.trains_classifier()).count();
    let n_reg = targets.iter().filter(|t| t.kind.trains_regressor()).count();
    let mut out = LossBreakdown {
        n_cls,
        n_reg,
        ..Default::default()
    };
    let mut grad = Tensor::zeros(head.shape());
    let raw = head.data();

    for (i, t) in targets.iter().enumerate() {
        let base = i * c + t.anchor * HEAD_CHANNELS_PER_ANCHOR;
        if t.kind.trains_classifier() {
            let label = usize::from(t.kind == SampleKind::Positive);
            let (z0, z1) = (raw[base], raw[base + 1]);
            let (p0, p1) = softmax2(z0, z1);
            // log-sum-exp form stays finite for saturated logits
            let m = z0.max(z1).to_real();
            let lse = m + ((z0.to_real() - m).exp() + (z1.to_real() - m).exp()).ln();
            let z_label = if label == 1 { z1 } else { z0 };
            out.cls += lse - z_label.to_real();
            if (p1 > p0) == (label == 1) {
                out.correct += 1;
            }
            let inv = T::from_real(1.0 / n_cls as f64);
            let g = grad.data_mut();
            g[base] = (p0 - T::from_real((label == 0) as u8 as f64)) * inv;
            g[base + 1] = (p1 - T::from_real(label as f64)) * inv;
        }
        if t.kind.trains_regressor() {
            let scale = 2.0 * lambda / (4.0 * n_reg as f64);
            for j in 0..4 {
                let diff = raw[base + 2 + j].to_real() - t.delta[j] as f64;
                out.reg += diff * diff;
                grad.data_mut()[base + 2 + j] = T::from_real(scale * diff);
            }
        }
    }
    if n_cls > 0 {
        out.cls /= n_cls as f64;
    }
    if n_reg > 0 {
        out.reg /= 4.0 * n_reg as f64;
    }
    out.total = out.cls + lambda * out.reg;
    Ok((out, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head(values: &[f64]) -> Tensor<f64> {
        Tensor::from_vec([values.len() / 6, 6, 1, 1], values.to_vec()).unwrap()
    }

    fn target(kind: SampleKind, delta: [f32; 4]) -> Target {
        Target {
            kind,
            anchor: 0,
            delta,
        }
    }

    #[test]
    fn zero_logits_give_ln2() {
        let (l, _) = loss_multitask(
            &head(&[0.0; 6]),
            &[target(SampleKind::Positive, [0.0; 4])],
            0.5,
        )
        .unwrap();
        assert!((l.cls - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(l.reg, 0.0);
        assert_eq!(l.total, l.cls);
    }

    #[test]
    fn lambda_zero_ignores_regression() {
        let h = head(&[0.3, -0.2, 5.0, 5.0, 5.0, 5.0]);
        let (l, g) = loss_multitask(&h, &[target(SampleKind::Positive, [0.0; 4])], 0.0).unwrap();
        assert!(l.reg > 0.0);
        assert_eq!(l.total, l.cls);
        assert!(g.data()[2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn masking_by_kind() {
        let h = head(&[1.0, 2.0, 0.5, 0.5, 0.5, 0.5, 1.0, 2.0, 0.5, 0.5, 0.5, 0.5]);
        let t = [
            target(SampleKind::Negative, [9.0; 4]),
            target(SampleKind::SemiPositive, [0.0; 4]),
        ];
        let (l, g) = loss_multitask(&h, &t, 1.0).unwrap();
        assert_eq!((l.n_cls, l.n_reg), (1, 1));
        // negative: no regression gradient; semi: no classification gradient
        assert!(g.data()[2..6].iter().all(|&v| v == 0.0));
        assert!(g.data()[6..8].iter().all(|&v| v == 0.0));
        let t2 = [
            target(SampleKind::Negative, [-3.0; 4]),
            target(SampleKind::SemiPositive, [0.0; 4]),
        ];
        let (l2, _) = loss_multitask(&h, &t2, 1.0).unwrap();
        assert_eq!(l.total, l2.total);
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(loss_multitask(&Tensor::<f64>::zeros([0, 6, 1, 1]), &[], 1.0).is_err());
    }
}
