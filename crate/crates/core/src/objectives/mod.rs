//! Training objectives and image quality metrics.

mod loss;
mod metrics;

pub use loss::{
    charbonnier, edge_loss, freq_loss, laplacian, total_loss, CharbonnierMode, HeadLoss,
    LossWeights,
};
pub use metrics::{mae, mse, psnr, ssim, SsimOptions};
