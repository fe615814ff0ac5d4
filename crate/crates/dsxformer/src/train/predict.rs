//! Dense prediction maps: centered-patch inference per pixel, emitted as a
//! binary PPM with a fixed per-class palette.

use crate::data::cube::HsiCube;
use crate::data::patches::crop_patch;
use crate::encoder::Model;
use crate::error::{cfg_err, Result};
use std::fs;
use std::path::Path;

/// Fixed class palette; class id c >= 1 uses `PALETTE[(c-1) % 20]`,
/// unlabeled/skipped pixels are black.
pub const PALETTE: [[u8; 3]; 20] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
    [128, 128, 0],
    [255, 215, 180],
    [0, 0, 128],
    [128, 128, 128],
];

/// Per-pixel argmax classification. In labeled-only mode unlabeled pixels
/// stay 0; with `all_pixels` every pixel is classified.
pub fn predict_map(model: &Model, cube: &HsiCube, all_pixels: bool) -> Result<Vec<u16>> {
    if cube.bands != model.config.bands {
        return Err(cfg_err!(
            "cube has {} bands, checkpoint expects {}",
            cube.bands,
            model.config.bands
        ));
    }
    if cube.classes != 0 && cube.classes != model.config.classes {
        return Err(cfg_err!(
            "cube declares {} classes, checkpoint expects {}",
            cube.classes,
            model.config.classes
        ));
    }
    let side = model.config.input_side;
    let mut out = vec![0u16; cube.rows * cube.cols];
    for r in 0..cube.rows {
        for c in 0..cube.cols {
            if !all_pixels && cube.label(r, c) == 0 {
                continue;
            }
            let patch = crop_patch(cube, r, c, side);
            let probs = model.predict_probs(&patch)?;
            out[r * cube.cols + c] = super::trainer::argmax(&probs) as u16 + 1;
        }
    }
    Ok(out)
}

/// Binary PPM (P6) encoding of a label grid.
pub fn labels_to_ppm(labels: &[u16], rows: usize, cols: usize) -> Result<Vec<u8>> {
    if labels.len() != rows * cols {
        return Err(cfg_err!("{} labels for a {rows}x{cols} map", labels.len()));
    }
    let mut out = format!("P6\n{cols} {rows}\n255\n").into_bytes();
    for &l in labels {
        if l == 0 {
            out.extend_from_slice(&[0, 0, 0]);
        } else {
            out.extend_from_slice(&PALETTE[(l as usize - 1) % PALETTE.len()]);
        }
    }
    Ok(out)
}

pub fn write_map(
    path: &Path,
    model: &Model,
    cube: &HsiCube,
    all_pixels: bool,
) -> Result<Vec<u16>> {
    let labels = predict_map(model, cube, all_pixels)?;
    fs::write(path, labels_to_ppm(&labels, cube.rows, cube.cols)?)?;
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::ModelConfig;

    fn toy_model(bands: usize, classes: usize) -> Model {
        let cfg = ModelConfig {
            input_side: 3,
            bands,
            classes,
            patch: 1,
            dim: 4,
            heads: 2,
            window: 2,
            mlp_hidden: 8,
            depths: vec![1],
            expansion: 2,
            dropout: 0.0,
            drop_path: 0.0,
            dcs_enabled: true,
            dcs_abs_context: false,
        };
        Model::new(cfg, 1).unwrap()
    }

    fn toy_cube() -> HsiCube {
        let n = 4 * 5;
        let values = (0..n * 2).map(|i| (i % 7) as f32 * 0.1).collect();
        let labels = (0..n).map(|i| (i % 3) as u16).collect();
        HsiCube::new(4, 5, 2, 2, values, labels).unwrap()
    }

    #[test]
    fn map_covers_cube_dimensions() {
        let model = toy_model(2, 2);
        let cube = toy_cube();
        let labels = predict_map(&model, &cube, true).unwrap();
        assert_eq!(labels.len(), 20);
        assert!(labels.iter().all(|&l| l >= 1 && l <= 2));
        let ppm = labels_to_ppm(&labels, 4, 5).unwrap();
        assert!(ppm.starts_with(b"P6\n5 4\n255\n"));
        assert_eq!(ppm.len(), 11 + 60);
    }

    #[test]
    fn labeled_only_mode_blacks_out_unlabeled() {
        let model = toy_model(2, 2);
        let cube = toy_cube();
        let labels = predict_map(&model, &cube, false).unwrap();
        for (i, &l) in labels.iter().enumerate() {
            if cube.labels[i] == 0 {
                assert_eq!(l, 0);
            } else {
                assert!(l >= 1);
            }
        }
    }

    #[test]
    fn band_mismatch_is_config_error() {
        let model = toy_model(3, 2);
        let cube = toy_cube();
        assert!(predict_map(&model, &cube, true).is_err());
    }

    #[test]
    fn identical_predictions_identical_bytes() {
        let model = toy_model(2, 2);
        let cube = toy_cube();
        let a = labels_to_ppm(&predict_map(&model, &cube, true).unwrap(), 4, 5).unwrap();
        let b = labels_to_ppm(&predict_map(&model, &cube, true).unwrap(), 4, 5).unwrap();
        assert_eq!(a, b);
    }
}
