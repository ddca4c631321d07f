//! Dense tensors, the layer set the detector needs, and their gradients.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod ops;
pub mod optim;
pub mod tensor;

pub use checkpoint::{load_params, manifest, save_params};
pub use gradcheck::{
    grad_check, grad_check_piecewise, relative_error, GradCheckOptions, GradCheckReport, GroupError,
};
pub use layers::{
    uniform_init, BatchNorm1d, Conv1d, GlobalAvgPool, LeakyRelu, Linear, LogSoftmax, Module, Param,
    Sigmoid,
};
pub use optim::Adam;
pub use tensor::Tensor;
