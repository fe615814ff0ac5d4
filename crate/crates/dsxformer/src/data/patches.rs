//! Labeled-pixel patch dataset: one entry per nonzero label, patches cut
//! lazily as S x S x bands crops centered on the pixel with edge
//! replication at the borders.

use super::cube::HsiCube;
use crate::error::{cfg_err, Result};

pub struct PatchDataset<'a> {
    pub cube: &'a HsiCube,
    pub side: usize,
    /// (pixel row, pixel col, class id >= 1)
    pub entries: Vec<(usize, usize, u16)>,
}

pub fn extract_pixel_patches(cube: &HsiCube, side: usize) -> Result<PatchDataset<'_>> {
    if side == 0 || side > 2 * cube.rows.min(cube.cols) {
        return Err(cfg_err!(
            "patch side {side} out of range for a {}x{} cube",
            cube.rows,
            cube.cols
        ));
    }
    let mut entries = Vec::new();
    for r in 0..cube.rows {
        for c in 0..cube.cols {
            let l = cube.label(r, c);
            if l != 0 {
                entries.push((r, c, l));
            }
        }
    }
    Ok(PatchDataset { cube, side, entries })
}

impl PatchDataset<'_> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Row-major S x S crop centered on (r, c), band-fastest, f64.
    pub fn crop(&self, r: usize, c: usize) -> Vec<f64> {
        crop_patch(self.cube, r, c, self.side)
    }

    pub fn patch(&self, idx: usize) -> Vec<f64> {
        let (r, c, _) = self.entries[idx];
        self.crop(r, c)
    }
}

/// Standalone crop used by both training and dense prediction.
pub fn crop_patch(cube: &HsiCube, r: usize, c: usize, side: usize) -> Vec<f64> {
    let half = side / 2;
    let mut out = Vec::with_capacity(side * side * cube.bands);
    for dr in 0..side {
        let rr = (r + dr).saturating_sub(half).min(cube.rows - 1);
        for dc in 0..side {
            let cc = (c + dc).saturating_sub(half).min(cube.cols - 1);
            out.extend(cube.spectrum(rr, cc).iter().map(|&v| v as f64));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_cube(rows: usize, cols: usize) -> HsiCube {
        // single band holding the flat pixel index, labels = index + 1 capped
        let n = rows * cols;
        let values = (0..n).map(|i| i as f32).collect();
        let labels = (0..n).map(|i| ((i % 3) as u16)).collect();
        HsiCube::new(rows, cols, 1, 2, values, labels).unwrap()
    }

    #[test]
    fn center_pixel_is_the_labeled_one() {
        let cube = grid_cube(30, 30);
        let ds = extract_pixel_patches(&cube, 25).unwrap();
        let patch = ds.crop(14, 17);
        let center = patch[(12 * 25 + 12) * cube.bands];
        assert_eq!(center, (14 * 30 + 17) as f64);
    }

    #[test]
    fn corner_patch_replicates_edges() {
        let cube = grid_cube(30, 30);
        let ds = extract_pixel_patches(&cube, 25).unwrap();
        let patch = ds.crop(0, 0);
        // first 12 rows and cols replicate row/col 0
        for dr in 0..13 {
            for dc in 0..13 {
                let want = ((dr.max(12) - 12) * 30 + (dc.max(12) - 12)) as f64;
                assert_eq!(patch[dr * 25 + dc], want, "({dr},{dc})");
            }
        }
        assert_eq!(patch[0], 0.0);
        assert_eq!(patch[12 * 25 + 12], 0.0);
    }

    #[test]
    fn entry_count_matches_nonzero_labels() {
        let cube = grid_cube(9, 9);
        let ds = extract_pixel_patches(&cube, 5).unwrap();
        assert_eq!(ds.len(), cube.labeled_count());
        assert!(ds.entries.iter().all(|&(_, _, l)| l >= 1));
    }

    #[test]
    fn oversized_side_is_config_error() {
        let cube = grid_cube(5, 8);
        assert!(extract_pixel_patches(&cube, 11).is_err());
        assert!(extract_pixel_patches(&cube, 10).is_ok());
    }

    #[test]
    fn even_side_crop_shape() {
        let cube = grid_cube(6, 6);
        let ds = extract_pixel_patches(&cube, 4).unwrap();
        assert_eq!(ds.crop(3, 3).len(), 16);
    }
}
