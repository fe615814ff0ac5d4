//! PCA band reduction via eigendecomposition of the bands x bands
//! covariance. Each band is z-scored over the whole cube first; statistics
//! include unlabeled pixels.

use super::cube::HsiCube;
use crate::error::{cfg_err, Result};
use nalgebra::{DMatrix, SymmetricEigen};

pub struct PcaModel {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// k rows of length `bands`, eigenvalue-descending. Sign convention:
    /// the largest-magnitude component of each eigenvector is positive.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

pub fn pca_fit(cube: &HsiCube, k: usize) -> Result<PcaModel> {
    let b = cube.bands;
    if k == 0 || k > b {
        return Err(cfg_err!("k must be in 1..={b}, got {k}"));
    }
    let n = cube.rows * cube.cols;
    let mut mean = vec![0.0f64; b];
    for px in 0..n {
        for (j, v) in cube.values[px * b..(px + 1) * b].iter().enumerate() {
            mean[j] += *v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0f64; b];
    for px in 0..n {
        for (j, v) in cube.values[px * b..(px + 1) * b].iter().enumerate() {
            let d = *v as f64 - mean[j];
            var[j] += d * d;
        }
    }
    // constant bands carry no signal; unit std leaves them at zero
    let std: Vec<f64> =
        var.iter().map(|v| (v / n as f64).sqrt()).map(|s| if s > 0.0 { s } else { 1.0 }).collect();

    let mut cov = DMatrix::<f64>::zeros(b, b);
    for px in 0..n {
        let spec = &cube.values[px * b..(px + 1) * b];
        for i in 0..b {
            let zi = (spec[i] as f64 - mean[i]) / std[i];
            for j in i..b {
                let zj = (spec[j] as f64 - mean[j]) / std[j];
                cov[(i, j)] += zi * zj;
            }
        }
    }
    for i in 0..b {
        for j in i..b {
            let v = cov[(i, j)] / n as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let mut components = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let col = eig.eigenvectors.column(idx);
        let mut v: Vec<f64> = col.iter().copied().collect();
        let peak = (0..b).max_by(|&i, &j| v[i].abs().partial_cmp(&v[j].abs()).unwrap()).unwrap();
        if v[peak] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        eigenvalues.push(eig.eigenvalues[idx]);
    }
    Ok(PcaModel { mean, std, components, eigenvalues })
}

/// Projects every pixel spectrum; output is pixel-major, component-fastest.
pub fn pca_transform(cube: &HsiCube, model: &PcaModel) -> Vec<f64> {
    let b = cube.bands;
    let k = model.components.len();
    let n = cube.rows * cube.cols;
    let mut out = vec![0.0f64; n * k];
    let mut z = vec![0.0f64; b];
    for px in 0..n {
        let spec = &cube.values[px * b..(px + 1) * b];
        for j in 0..b {
            z[j] = (spec[j] as f64 - model.mean[j]) / model.std[j];
        }
        for (c, comp) in model.components.iter().enumerate() {
            out[px * k + c] = comp.iter().zip(&z).map(|(a, b)| a * b).sum();
        }
    }
    out
}

pub fn pca_reduce(cube: &HsiCube, k: usize) -> Result<HsiCube> {
    let model = pca_fit(cube, k)?;
    let scores = pca_transform(cube, &model);
    HsiCube::new(
        cube.rows,
        cube.cols,
        k,
        cube.classes,
        scores.iter().map(|&v| v as f32).collect(),
        cube.labels.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cube(rows: usize, cols: usize, bands: usize, seed: u64) -> HsiCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rows * cols;
        let values = (0..n * bands).map(|_| rng.gen_range(-3.0f32..3.0)).collect();
        HsiCube::new(rows, cols, bands, 0, values, vec![0; n]).unwrap()
    }

    #[test]
    fn k_above_bands_is_config_error() {
        let cube = random_cube(4, 4, 5, 1);
        assert!(pca_fit(&cube, 6).is_err());
    }

    #[test]
    fn full_basis_reconstructs() {
        let cube = random_cube(8, 7, 6, 2);
        let model = pca_fit(&cube, 6).unwrap();
        let scores = pca_transform(&cube, &model);
        let b = cube.bands;
        for px in 0..cube.rows * cube.cols {
            let spec = cube.spectrum(px / cube.cols, px % cube.cols);
            for j in 0..b {
                // x_j = mean_j + std_j * sum_c score_c * comp_c[j]
                let mut z = 0.0;
                for c in 0..b {
                    z += scores[px * b + c] * model.components[c][j];
                }
                let rec = model.mean[j] + model.std[j] * z;
                assert!((rec - spec[j] as f64).abs() < 1e-8, "pixel {px} band {j}");
            }
        }
    }

    #[test]
    fn rank_one_cube_first_component_dominates() {
        let bands = 5;
        let dir = [0.8f32, -0.4, 0.3, 0.2, -0.1];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let mut values = Vec::with_capacity(n * bands);
        for _ in 0..n {
            let a: f32 = rng.gen_range(-2.0..2.0);
            values.extend(dir.iter().map(|d| a * d));
        }
        let cube = HsiCube::new(8, 5, bands, 0, values, vec![0; n]).unwrap();
        let model = pca_fit(&cube, bands).unwrap();
        let total: f64 = model.eigenvalues.iter().sum();
        assert!(model.eigenvalues[0] / total > 0.99999, "{:?}", model.eigenvalues);
    }

    #[test]
    fn output_covariance_diagonal() {
        let cube = random_cube(10, 9, 7, 4);
        let model = pca_fit(&cube, 7).unwrap();
        let scores = pca_transform(&cube, &model);
        let n = cube.rows * cube.cols;
        let k = 7;
        let mut mean = vec![0.0; k];
        for px in 0..n {
            for c in 0..k {
                mean[c] += scores[px * k + c];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut trace = 0.0;
        let mut cov = vec![0.0; k * k];
        for px in 0..n {
            for i in 0..k {
                for j in 0..k {
                    cov[i * k + j] +=
                        (scores[px * k + i] - mean[i]) * (scores[px * k + j] - mean[j]);
                }
            }
        }
        for i in 0..k {
            trace += cov[i * k + i];
        }
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    assert!(cov[i * k + j].abs() / trace < 1e-6, "cov[{i}][{j}]");
                }
            }
        }
    }

    #[test]
    fn full_k_preserves_pairwise_distances() {
        let cube = random_cube(6, 6, 5, 5);
        let model = pca_fit(&cube, 5).unwrap();
        let scores = pca_transform(&cube, &model);
        let n = cube.rows * cube.cols;
        let b = cube.bands;
        let z = |px: usize, j: usize| {
            (cube.values[px * b + j] as f64 - model.mean[j]) / model.std[j]
        };
        for p in 0..n.min(10) {
            for q in (p + 1)..n.min(10) {
                let dz: f64 = (0..b).map(|j| (z(p, j) - z(q, j)).powi(2)).sum::<f64>().sqrt();
                let ds: f64 = (0..b)
                    .map(|c| (scores[p * b + c] - scores[q * b + c]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!((dz - ds).abs() <= 1e-6 * dz.max(1.0), "{p},{q}: {dz} vs {ds}");
            }
        }
    }

    #[test]
    fn sign_convention_deterministic() {
        let cube = random_cube(7, 7, 4, 6);
        let a = pca_fit(&cube, 4).unwrap();
        let b = pca_fit(&cube, 4).unwrap();
        for (ca, cb) in a.components.iter().zip(&b.components) {
            assert_eq!(ca, cb);
        }
        for comp in &a.components {
            let peak =
                comp.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(peak > 0.0);
        }
    }

    #[test]
    fn reduce_keeps_labels_and_dims() {
        let mut cube = random_cube(5, 4, 6, 7);
        cube.classes = 2;
        cube.labels = (0..20).map(|i| (i % 3) as u16).collect();
        let out = pca_reduce(&cube, 3).unwrap();
        assert_eq!((out.rows, out.cols, out.bands, out.classes), (5, 4, 3, 2));
        assert_eq!(out.labels, cube.labels);
    }
}
