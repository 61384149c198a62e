//! Policy optimization, advantage estimation and communication learning.

pub mod autoencoder;
pub mod gae;
pub mod ppo;
pub mod trainer;

pub use autoencoder::{train_autoencoder, Autoencoder, AutoencoderConfig, AutoencoderReport};
pub use gae::compute_gae;
pub use ppo::{ppo_loss, ppo_update, Batch, PpoConfig, PpoStats};
pub use trainer::{train_variant, warmup_encoders, EpisodeLog, Trainer};
