//! Training stack: configuration, loss, optimizer, checkpoints, the train
//! loop, and prediction-map emission.

pub mod adamw;
pub mod checkpoint;
pub mod config;
pub mod loss;
pub mod predict;
pub mod trainer;

pub use adamw::{clip_grad_norm, AdamW};
pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint};
pub use config::TrainConfig;
pub use loss::cross_entropy_smoothed;
pub use predict::{labels_to_ppm, predict_map, write_map, PALETTE};
pub use trainer::{evaluate, predict_entries, train, RunArtifacts, TrainOptions};
