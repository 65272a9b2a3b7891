//! Dense tensors, a reverse-mode autodiff tape, MLPs and Adam.

mod adam;
mod mlp;
mod params;
mod regress;
mod tape;
mod tensor;

pub use adam::{clip_global_norm, Adam, AdamConfig};
pub use mlp::{Activation, BoundMlp, Linear, Mlp};
pub use params::{ParamFile, PARAMS_MAGIC, PARAMS_VERSION};
pub use regress::{fit_mse, minibatches, mse, mse_step};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
