//! ECFNet image restoration on a self-contained tensor and autodiff core.

pub mod autodiff;
pub mod blocks;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod tensor;
pub mod train;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use model::{Checkpoint, Model, ModelConfig};
pub use nn::{Params, WeightInit};
pub use tensor::{AxisSet, ConvOptions, PaddingMode, Scalar, Shape, Tensor};
