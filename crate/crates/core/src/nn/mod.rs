//! Dense tensors, plain convolutional networks and their training step.

mod loss;
mod model;
mod ops;
mod optim;
mod spec;
mod tensor;

pub use loss::{loss_multitask, LossBreakdown, SampleKind, Target};
pub use model::{
    ForwardTrace, Gradients, HeadOutputs, LayerParams, Model, MODEL_FORMAT_VERSION, MODEL_MAGIC,
};
pub use ops::{
    conv2d, conv2d_backward, conv2d_counted, conv2d_train, conv_out_dim, prelu, prelu_backward,
    softmax2, ConvCache, ConvGeometry, ConvGrads, MacCounter,
};
pub use optim::{backward_and_step, Sgd, SgdConfig};
pub use spec::{LayerSpec, Mode, NetworkSpec, HEAD_CHANNELS_PER_ANCHOR};
pub use tensor::{Scalar, Tensor};
