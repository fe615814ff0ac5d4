//! The `.hsc` cube container.
//!
//! Layout: magic `HSC1`; little-endian u32 rows, cols, bands, K; then
//! rows*cols*bands f32 values band-fastest (pixel-major); then rows*cols
//! u16 labels row-major, 0 meaning unlabeled.

use crate::error::{data_err, fmt_err, Result};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"HSC1";

#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    /// Number of classes K; label ids run 1..=K, 0 is unlabeled.
    pub classes: usize,
    /// Pixel-major, band-fastest: `values[(r*cols + c)*bands + b]`.
    pub values: Vec<f32>,
    pub labels: Vec<u16>,
}

impl HsiCube {
    pub fn new(
        rows: usize,
        cols: usize,
        bands: usize,
        classes: usize,
        values: Vec<f32>,
        labels: Vec<u16>,
    ) -> Result<Self> {
        let cube = HsiCube { rows, cols, bands, classes, values, labels };
        cube.validate()?;
        Ok(cube)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rows * self.cols;
        if self.values.len() != n * self.bands {
            return Err(data_err!(
                "cube holds {} values, header implies {}",
                self.values.len(),
                n * self.bands
            ));
        }
        if self.labels.len() != n {
            return Err(data_err!(
                "cube holds {} labels, header implies {n}",
                self.labels.len()
            ));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(data_err!("cube contains non-finite value {v}"));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l as usize > self.classes) {
            return Err(data_err!("label {l} exceeds declared class count {}", self.classes));
        }
        Ok(())
    }

    #[inline]
    pub fn spectrum(&self, r: usize, c: usize) -> &[f32] {
        let base = (r * self.cols + c) * self.bands;
        &self.values[base..base + self.bands]
    }

    #[inline]
    pub fn label(&self, r: usize, c: usize) -> u16 {
        self.labels[r * self.cols + c]
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.values.len() * 4 + self.labels.len() * 2);
        out.extend_from_slice(MAGIC);
        for dim in [self.rows, self.cols, self.bands, self.classes] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[0..4] != MAGIC {
            return Err(fmt_err!("bad magic at byte 0: expected \"HSC1\""));
        }
        if bytes.len() < 20 {
            return Err(fmt_err!(
                "truncated header: expected 20 bytes, got {}",
                bytes.len()
            ));
        }
        let u32_at = |off: usize| {
            u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize
        };
        let (rows, cols, bands, classes) = (u32_at(4), u32_at(8), u32_at(12), u32_at(16));
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(bands))
            .ok_or_else(|| fmt_err!("header dimensions overflow"))?;
        let values_end = 20 + n * 4;
        let labels_end = values_end + rows * cols * 2;
        if bytes.len() < labels_end {
            return Err(fmt_err!(
                "truncated payload: expected {labels_end} bytes, got {} (values end at byte {values_end})",
                bytes.len()
            ));
        }
        let values = bytes[20..values_end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let labels = bytes[values_end..labels_end]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
            .collect();
        HsiCube::new(rows, cols, bands, classes, values, labels)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
