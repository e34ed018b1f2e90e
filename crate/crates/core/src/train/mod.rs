//! Optimization, data pipeline, synthetic degradations and image I/O.

pub mod data;
pub mod degrade;
pub mod optim;
pub mod ppm;
pub mod trainer;

pub use data::{augment, sample_patch, synthetic_image, synthetic_pairs, Pair};
pub use degrade::{degrade, Degradation};
pub use optim::{cosine_lr, Adam, AdamConfig};
pub use ppm::{load_ppm, save_ppm};
pub use trainer::{
    input_psnr, log_csv, mean_psnr, smoothed, train_loop, write_log_csv, StepRecord, TrainConfig,
    LOG_HEADER,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent deterministic generator `stream` of `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
