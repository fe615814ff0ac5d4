//! Data pipeline: cube I/O, PCA band reduction, patch extraction,
//! stratified splits, and classification metrics.

pub mod cube;
pub mod metrics;
pub mod patches;
pub mod pca;
pub mod split;

pub use cube::HsiCube;
pub use metrics::{metrics, metrics_from_confusion, ConfusionMatrix, Metrics};
pub use patches::{crop_patch, extract_pixel_patches, PatchDataset};
pub use pca::{pca_fit, pca_reduce, pca_transform, PcaModel};
pub use split::{read_split_file, stratified_split, write_split_file, SplitSpec};
