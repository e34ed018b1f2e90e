//! Restoration blocks built from [`crate::nn`] layers.
//!
//! Every block is a plain struct of parameter handles; `forward` takes the
//! bound [`Ctx`](crate::nn::Ctx) and an input [`Var`](crate::Var).

mod attention;
mod backbone;

pub use attention::{ChannelScore, Fdam, FdamConfig, Sdam, Sfam, SfamBranches};
pub use backbone::{MsBlock, MsfBlock, MssfBlock, ScaBlock, Upsample};

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Splits the channels in half and multiplies the halves.
pub fn simple_gate<'t, T: Scalar>(x: &Var<'t, T>) -> Result<Var<'t, T>> {
    let c = x.shape().c();
    if c % 2 != 0 {
        return Err(Error::invalid(
            "simple_gate",
            format!("channel count {c} is odd"),
        ));
    }
    x.narrow_channels(0, c / 2)?
        .mul(&x.narrow_channels(c / 2, c / 2)?)
}
