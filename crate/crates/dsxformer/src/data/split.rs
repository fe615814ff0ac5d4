//! Stratified, seeded train/test splitting and the split file format:
//! a text header naming the seed and spec digest, then one
//! `row,col,class` line per selected pixel.

use super::patches::PatchDataset;
use crate::error::{data_err, fmt_err, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

#[derive(Clone, Debug)]
pub enum SplitSpec {
    /// Training count per class, indexed by class id - 1.
    PerClass(Vec<usize>),
    /// Same fraction of every class goes to training.
    Ratio(f64),
}

impl SplitSpec {
    /// Canonical text used for the split file digest.
    pub fn canonical(&self) -> String {
        match self {
            SplitSpec::PerClass(counts) => format!(
                "counts={}",
                counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
            ),
            SplitSpec::Ratio(r) => format!("ratio={r}"),
        }
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical().as_bytes());
        format!("{:x}", h.finalize())
    }
}

/// Returns (train, test) entry indices into `ds.entries`. Per-class counts
/// match the spec exactly; the sets are disjoint and exhaust the dataset.
pub fn stratified_split(
    ds: &PatchDataset,
    spec: &SplitSpec,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let classes = ds.cube.classes;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &(_, _, l)) in ds.entries.iter().enumerate() {
        let c = l as usize;
        if c == 0 || c > classes {
            return Err(data_err!("entry {i} carries class {c} outside 1..={classes}"));
        }
        by_class[c - 1].push(i);
    }
    if let SplitSpec::Ratio(r) = spec {
        if !(0.0..=1.0).contains(r) {
            return Err(data_err!("split ratio must be in [0, 1], got {r}"));
        }
        if *r == 1.0 {
            log::warn!("split ratio 1.0 leaves an empty test set");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, pool) in by_class.iter_mut().enumerate() {
        let want = match spec {
            SplitSpec::PerClass(counts) => *counts.get(c).unwrap_or(&0),
            SplitSpec::Ratio(r) => (r * pool.len() as f64).round() as usize,
        };
        if want > pool.len() {
            return Err(data_err!(
                "class {} holds {} samples, split requests {want}",
                c + 1,
                pool.len()
            ));
        }
        pool.shuffle(&mut rng);
        train.extend_from_slice(&pool[..want]);
        test.extend_from_slice(&pool[want..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Writes the chosen training pixels with a provenance header.
pub fn write_split_file(
    path: &Path,
    seed: u64,
    spec: &SplitSpec,
    ds: &PatchDataset,
    train: &[usize],
) -> Result<()> {
    let mut out = format!("# seed={seed}\n# spec={}\n", spec.digest());
    for &i in train {
        let (r, c, l) = ds.entries[i];
        out.push_str(&format!("{r},{c},{l}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Returns (seed, spec digest, entries).
pub fn read_split_file(path: &Path) -> Result<(u64, String, Vec<(usize, usize, u16)>)> {
    let text = fs::read_to_string(path)?;
    let mut seed = None;
    let mut digest = None;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("seed=") {
                seed = Some(
                    v.parse::<u64>()
                        .map_err(|_| fmt_err!("line {}: bad seed {v:?}", lineno + 1))?,
                );
            } else if let Some(v) = rest.strip_prefix("spec=") {
                digest = Some(v.to_string());
            }
            continue;
        }
        let mut parts = line.split(',');
        let mut next = |what: &str| {
            parts
                .next()
                .ok_or_else(|| fmt_err!("line {}: missing {what}", lineno + 1))
        };
        let r = next("row")?.parse::<usize>().map_err(|_| fmt_err!("line {}: bad row", lineno + 1))?;
        let c = next("col")?.parse::<usize>().map_err(|_| fmt_err!("line {}: bad col", lineno + 1))?;
        let l =
            next("class")?.parse::<u16>().map_err(|_| fmt_err!("line {}: bad class", lineno + 1))?;
        entries.push((r, c, l));
    }
    let seed = seed.ok_or_else(|| fmt_err!("split file missing seed header"))?;
    let digest = digest.ok_or_else(|| fmt_err!("split file missing spec header"))?;
    Ok((seed, digest, entries))
}
