//! Flat key=value training configuration. Unknown keys are errors; every
//! field has a default so an empty file is a valid config.

use crate::encoder::ModelConfig;
use crate::error::{cfg_err, Result};
use std::fs;
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub dropout: f64,
    pub drop_path: f64,
    pub seed: u64,
    /// Input patch side S (spatial window fed to the model).
    pub patch_side: usize,
    pub pca_k: usize,
    pub window: usize,
    pub heads: usize,
    pub dim: usize,
    pub mlp_hidden: usize,
    pub depths: Vec<usize>,
    pub val_fraction: f64,
    /// Patch-embedding side p inside the model.
    pub embed_patch: usize,
    /// DSX expansion ratio r.
    pub expansion: usize,
    pub dcs_enabled: bool,
    pub dcs_abs_context: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch: 128,
            epochs: 100,
            weight_decay: 1e-4,
            label_smoothing: 0.1,
            dropout: 0.03,
            drop_path: 0.1,
            seed: 42,
            patch_side: 25,
            pca_k: 30,
            window: 4,
            heads: 8,
            dim: 64,
            mlp_hidden: 256,
            depths: vec![2, 2],
            val_fraction: 0.1,
            embed_patch: 2,
            expansion: 2,
            dcs_enabled: true,
            dcs_abs_context: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(cfg_err!("lr must be positive, got {}", self.lr));
        }
        if self.batch == 0 {
            return Err(cfg_err!("batch must be >= 1"));
        }
        for (v, name) in [
            (self.label_smoothing, "label_smoothing"),
            (self.dropout, "dropout"),
            (self.drop_path, "drop_path"),
            (self.val_fraction, "val_fraction"),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(cfg_err!("{name} must be in [0, 1], got {v}"));
            }
        }
        if self.weight_decay < 0.0 {
            return Err(cfg_err!("weight_decay must be >= 0"));
        }
        if self.val_fraction >= 1.0 {
            return Err(cfg_err!("val_fraction must leave training data, got {}", self.val_fraction));
        }
        Ok(())
    }

    /// Architecture derived from this config once the data dimensions are
    /// known.
    pub fn model_config(&self, bands: usize, classes: usize) -> ModelConfig {
        ModelConfig {
            input_side: self.patch_side,
            bands,
            classes,
            patch: self.embed_patch,
            dim: self.dim,
            heads: self.heads,
            window: self.window,
            mlp_hidden: self.mlp_hidden,
            depths: self.depths.clone(),
            expansion: self.expansion,
            dropout: self.dropout,
            drop_path: self.drop_path,
            dcs_enabled: self.dcs_enabled,
            dcs_abs_context: self.dcs_abs_context,
        }
    }

    pub fn to_text(&self) -> String {
        let depths =
            self.depths.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "lr={}\nbatch={}\nepochs={}\nweight_decay={}\nlabel_smoothing={}\ndropout={}\n\
             drop_path={}\nseed={}\npatch_side={}\npca_k={}\nwindow={}\nheads={}\ndim={}\n\
             mlp_hidden={}\ndepths={depths}\nval_fraction={}\nembed_patch={}\nexpansion={}\n\
             dcs_enabled={}\ndcs_abs_context={}\n",
            self.lr,
            self.batch,
            self.epochs,
            self.weight_decay,
            self.label_smoothing,
            self.dropout,
            self.drop_path,
            self.seed,
            self.patch_side,
            self.pca_k,
            self.window,
            self.heads,
            self.dim,
            self.mlp_hidden,
            self.val_fraction,
            self.embed_patch,
            self.expansion,
            self.dcs_enabled,
            self.dcs_abs_context
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err!("line {}: expected key=value, got {line:?}", lineno + 1))?;
            let (k, v) = (k.trim(), v.trim());
            macro_rules! parse {
                ($ty:ty) => {
                    v.parse::<$ty>().map_err(|_| cfg_err!("bad value for {k}: {v:?}"))?
                };
            }
            match k {
                "lr" => cfg.lr = parse!(f64),
                "batch" => cfg.batch = parse!(usize),
                "epochs" => cfg.epochs = parse!(usize),
                "weight_decay" => cfg.weight_decay = parse!(f64),
                "label_smoothing" => cfg.label_smoothing = parse!(f64),
                "dropout" => cfg.dropout = parse!(f64),
                "drop_path" => cfg.drop_path = parse!(f64),
                "seed" => cfg.seed = parse!(u64),
                "patch_side" => cfg.patch_side = parse!(usize),
                "pca_k" => cfg.pca_k = parse!(usize),
                "window" => cfg.window = parse!(usize),
                "heads" => cfg.heads = parse!(usize),
                "dim" => cfg.dim = parse!(usize),
                "mlp_hidden" => cfg.mlp_hidden = parse!(usize),
                "depths" => {
                    cfg.depths = v
                        .split(',')
                        .map(|s| {
                            s.trim()
                                .parse::<usize>()
                                .map_err(|_| cfg_err!("bad depths entry: {s:?}"))
                        })
                        .collect::<Result<_>>()?
                }
                "val_fraction" => cfg.val_fraction = parse!(f64),
                "embed_patch" => cfg.embed_patch = parse!(usize),
                "expansion" => cfg.expansion = parse!(usize),
                "dcs_enabled" => cfg.dcs_enabled = parse!(bool),
                "dcs_abs_context" => cfg.dcs_abs_context = parse!(bool),
                other => return Err(cfg_err!("unknown config key: {other:?}")),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}
