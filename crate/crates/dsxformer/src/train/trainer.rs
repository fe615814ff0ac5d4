//! The training loop: seeded shuffled batches, per-epoch validation OA,
//! best-validation checkpointing, and a final test report computed from the
//! reloaded best checkpoint.

use super::adamw::{clip_grad_norm, AdamW};
use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::config::TrainConfig;
use super::loss::cross_entropy_smoothed;
use crate::data::cube::HsiCube;
use crate::data::metrics::{metrics, Metrics};
use crate::data::patches::{extract_pixel_patches, PatchDataset};
use crate::data::split::{stratified_split, write_split_file, SplitSpec};
use crate::encoder::Model;
use crate::error::{data_err, num_err, Result};
use crate::tensor::Tape;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, Default)]
pub struct TrainOptions {
    /// Global gradient-norm clip; 0 disables.
    pub clip_norm: f64,
    /// Cosine learning-rate schedule over epochs.
    pub cosine: bool,
}

pub struct RunArtifacts {
    pub checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
    pub metrics_log: PathBuf,
    pub split_file: PathBuf,
    pub test_metrics: Metrics,
}

/// Argmax class id (1-based) for each listed dataset entry, eval mode.
pub fn predict_entries(model: &Model, ds: &PatchDataset, idxs: &[usize]) -> Result<Vec<u16>> {
    idxs.iter()
        .map(|&i| {
            let probs = model.predict_probs(&ds.patch(i))?;
            Ok(argmax(&probs) as u16 + 1)
        })
        .collect()
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn accuracy(model: &Model, ds: &PatchDataset, idxs: &[usize]) -> Result<f64> {
    let pred = predict_entries(model, ds, idxs)?;
    let hit = pred
        .iter()
        .zip(idxs)
        .filter(|&(&p, &i)| p == ds.entries[i].2)
        .count();
    Ok(hit as f64 / idxs.len().max(1) as f64)
}

pub fn train(
    config: &TrainConfig,
    cube: &HsiCube,
    split: &SplitSpec,
    out_dir: &Path,
    opts: TrainOptions,
) -> Result<RunArtifacts> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let ds = extract_pixel_patches(cube, config.patch_side)?;
    if ds.is_empty() {
        return Err(data_err!("cube carries no labeled pixels"));
    }
    let (mut train_idx, test_idx) = stratified_split(&ds, split, config.seed)?;

    let split_file = out_dir.join("split.txt");
    write_split_file(&split_file, config.seed, split, &ds, &train_idx)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    train_idx.shuffle(&mut rng);
    let val_n = (config.val_fraction * train_idx.len() as f64).round() as usize;
    let val_idx: Vec<usize> = train_idx[..val_n].to_vec();
    let mut fit_idx: Vec<usize> = train_idx[val_n..].to_vec();
    if fit_idx.is_empty() {
        return Err(data_err!("validation split leaves no training samples"));
    }
    let val_on_fit = val_idx.is_empty();

    let mut model =
        Model::new(config.model_config(cube.bands, cube.classes), config.seed)?;
    let mut opt = AdamW::new(&model.store, config.lr, config.weight_decay);

    let metrics_log = out_dir.join("metrics.csv");
    let mut log = File::create(&metrics_log)?;
    writeln!(log, "epoch,train_loss,val_oa")?;

    let best_path = out_dir.join("best.ckpt");
    let last_path = out_dir.join("last.ckpt");
    save_checkpoint(&best_path, &model)?;
    save_checkpoint(&last_path, &model)?;
    let mut best_oa = f64::NEG_INFINITY;

    for epoch in 0..config.epochs {
        if opts.cosine {
            let t = epoch as f64 / config.epochs.max(1) as f64;
            opt.lr = config.lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
        }
        fit_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in fit_idx.chunks(config.batch) {
            let mut grad_sum: Vec<Vec<f64>> = model
                .store
                .iter()
                .map(|(_, p)| vec![0.0; p.data.len()])
                .collect();
            let mut batch_loss = 0.0;
            for &i in batch {
                let (_, _, label) = ds.entries[i];
                let patch = ds.patch(i);
                let tape = Tape::new();
                let bound = model.store.bind(&tape, true)?;
                let s = config.patch_side;
                let input = tape.leaf(s * s, cube.bands, patch, false)?;
                let logits = model.forward_logits(&bound, &input, true, &mut rng)?;
                let loss =
                    cross_entropy_smoothed(&logits, label as usize, config.label_smoothing)?;
                let loss_val = loss.item();
                if !loss_val.is_finite() {
                    return Err(num_err!(
                        "loss diverged to {loss_val} at epoch {epoch}; last checkpoint retained"
                    ));
                }
                batch_loss += loss_val;
                tape.backward(loss)?;
                for (acc, g) in grad_sum.iter_mut().zip(bound.grads()) {
                    for (a, b) in acc.iter_mut().zip(&g) {
                        *a += b;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in grad_sum.iter_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
            clip_grad_norm(&mut grad_sum, opts.clip_norm);
            opt.step(&mut model.store, &grad_sum)?;
            epoch_loss += batch_loss;
            seen += batch.len();
        }
        let train_loss = epoch_loss / seen.max(1) as f64;
        let val_oa =
            accuracy(&model, &ds, if val_on_fit { &fit_idx } else { &val_idx })?;
        writeln!(log, "{},{},{}", epoch + 1, train_loss, val_oa)?;
        log.flush()?;
        save_checkpoint(&last_path, &model)?;
        if val_oa > best_oa {
            best_oa = val_oa;
            save_checkpoint(&best_path, &model)?;
        }
        log::info!("epoch {} loss {train_loss:.6} val_oa {val_oa:.4}", epoch + 1);
    }

    // report from the reloaded best checkpoint so eval reproduces it exactly
    let best = load_checkpoint(&best_path)?;
    let report_idx: &[usize] = if test_idx.is_empty() {
        log::warn!("empty test set; reporting metrics on the training split");
        &train_idx
    } else {
        &test_idx
    };
    let pred = predict_entries(&best, &ds, report_idx)?;
    let truth: Vec<u16> = report_idx.iter().map(|&i| ds.entries[i].2).collect();
    let test_metrics = metrics(&pred, &truth, cube.classes)?;

    Ok(RunArtifacts {
        checkpoint: best_path,
        last_checkpoint: last_path,
        metrics_log,
        split_file,
        test_metrics,
    })
}

/// Test metrics for a checkpointed model against the complement of the
/// pixels listed in a split file.
pub fn evaluate(
    model: &Model,
    cube: &HsiCube,
    train_pixels: &[(usize, usize, u16)],
) -> Result<Metrics> {
    let ds = extract_pixel_patches(cube, model.config.input_side)?;
    let mut in_train = vec![false; cube.rows * cube.cols];
    for &(r, c, _) in train_pixels {
        if r >= cube.rows || c >= cube.cols {
            return Err(data_err!("split pixel ({r}, {c}) outside the cube"));
        }
        in_train[r * cube.cols + c] = true;
    }
    let test_idx: Vec<usize> = ds
        .entries
        .iter()
        .enumerate()
        .filter(|(_, &(r, c, _))| !in_train[r * cube.cols + c])
        .map(|(i, _)| i)
        .collect();
    if test_idx.is_empty() {
        return Err(data_err!("split leaves no test pixels"));
    }
    let pred = predict_entries(model, &ds, &test_idx)?;
    let truth: Vec<u16> = test_idx.iter().map(|&i| ds.entries[i].2).collect();
    metrics(&pred, &truth, cube.classes)
}
