//! DSXFormer: a hyperspectral-image classifier built from dual-pooling
//! spectral recalibration, window-based dynamic context attention, and a
//! hierarchical patch encoder, together with the data pipeline and training
//! loop that drive it.

pub mod data;
pub mod dca;
pub mod dsx;
pub mod encoder;
pub mod error;
pub mod params;
pub mod tensor;
pub mod train;

pub use error::{DsxError, Result};
