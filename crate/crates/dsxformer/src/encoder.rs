//! Full network assembly: patch embedding, stacked encoder blocks
//! (DSX -> LN -> windowed DCA -> LN -> MLP with pre-norm residuals and
//! drop-path), patch merging between stages, and the global-average
//! classification head.

use crate::dca::{dca_forward, dropout, DcaParams};
use crate::dsx::{dsx_forward, DsxParams};
use crate::error::{cfg_err, dim_err, Result};
use crate::params::{trunc_normal, Bound, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Architecture hyperparameters. `dim`, `heads`, `window`, `mlp_hidden`
/// apply to stage 1; widths double at each patch merge.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Input patch side S (pixels).
    pub input_side: usize,
    /// Spectral bands B after PCA.
    pub bands: usize,
    /// Output classes K.
    pub classes: usize,
    /// Patch-embedding side p.
    pub patch: usize,
    pub dim: usize,
    pub heads: usize,
    pub window: usize,
    pub mlp_hidden: usize,
    /// Blocks per stage; one patch merge between consecutive stages.
    pub depths: Vec<usize>,
    /// DSX expansion ratio r.
    pub expansion: usize,
    /// Dropout on attention output and inside the MLP.
    pub dropout: f64,
    /// Peak stochastic-depth rate, linearly scaled across blocks.
    pub drop_path: f64,
    pub dcs_enabled: bool,
    pub dcs_abs_context: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 {
            return Err(cfg_err!("patch side must be positive"));
        }
        if self.input_side == 0 || self.bands == 0 {
            return Err(cfg_err!("input side and band count must be positive"));
        }
        if self.classes < 2 {
            return Err(cfg_err!("need at least 2 classes, got {}", self.classes));
        }
        if self.window == 0 {
            return Err(cfg_err!("window side must be >= 1"));
        }
        if self.depths.is_empty() {
            return Err(cfg_err!("at least one stage required"));
        }
        if self.expansion < 1 {
            return Err(cfg_err!("dsx expansion ratio must be >= 1"));
        }
        for (rate, name) in [(self.dropout, "dropout"), (self.drop_path, "drop_path")] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(cfg_err!("{name} must be in [0, 1], got {rate}"));
            }
        }
        for s in 0..self.depths.len() {
            let d = self.dim << s;
            let hid = self.mlp_hidden << s;
            if d % self.heads != 0 {
                return Err(cfg_err!("stage {s} dim {d} not divisible by {} heads", self.heads));
            }
            if hid < d {
                return Err(cfg_err!("stage {s} mlp hidden {hid} below dim {d}"));
            }
        }
        Ok(())
    }

    /// Token-grid side at stage 1 entry (input padded up to a patch
    /// multiple by edge replication).
    pub fn entry_grid(&self) -> usize {
        (self.input_side + self.patch - 1) / self.patch
    }

    /// Canonical key=value serialization (stable field order), used for
    /// checkpoint digests and reconstruction.
    pub fn to_text(&self) -> String {
        let depths =
            self.depths.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "input_side={}\nbands={}\nclasses={}\npatch={}\ndim={}\nheads={}\nwindow={}\n\
             mlp_hidden={}\ndepths={}\nexpansion={}\ndropout={}\ndrop_path={}\n\
             dcs_enabled={}\ndcs_abs_context={}\n",
            self.input_side,
            self.bands,
            self.classes,
            self.patch,
            self.dim,
            self.heads,
            self.window,
            self.mlp_hidden,
            depths,
            self.expansion,
            self.dropout,
            self.drop_path,
            self.dcs_enabled,
            self.dcs_abs_context
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig {
            input_side: 0,
            bands: 0,
            classes: 0,
            patch: 0,
            dim: 0,
            heads: 0,
            window: 0,
            mlp_hidden: 0,
            depths: vec![],
            expansion: 0,
            dropout: 0.0,
            drop_path: 0.0,
            dcs_enabled: true,
            dcs_abs_context: false,
        };
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err!("malformed config line: {line:?}"))?;
            let parse_usize =
                |v: &str| v.parse::<usize>().map_err(|_| cfg_err!("bad value for {k}: {v:?}"));
            let parse_f64 =
                |v: &str| v.parse::<f64>().map_err(|_| cfg_err!("bad value for {k}: {v:?}"));
            let parse_bool =
                |v: &str| v.parse::<bool>().map_err(|_| cfg_err!("bad value for {k}: {v:?}"));
            match k {
                "input_side" => cfg.input_side = parse_usize(v)?,
                "bands" => cfg.bands = parse_usize(v)?,
                "classes" => cfg.classes = parse_usize(v)?,
                "patch" => cfg.patch = parse_usize(v)?,
                "dim" => cfg.dim = parse_usize(v)?,
                "heads" => cfg.heads = parse_usize(v)?,
                "window" => cfg.window = parse_usize(v)?,
                "mlp_hidden" => cfg.mlp_hidden = parse_usize(v)?,
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
                "expansion" => cfg.expansion = parse_usize(v)?,
                "dropout" => cfg.dropout = parse_f64(v)?,
                "drop_path" => cfg.drop_path = parse_f64(v)?,
                "dcs_enabled" => cfg.dcs_enabled = parse_bool(v)?,
                "dcs_abs_context" => cfg.dcs_abs_context = parse_bool(v)?,
                other => return Err(cfg_err!("unknown model config key: {other:?}")),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug)]
pub struct BlockParams {
    pub dsx: DsxParams,
    pub ln1: (ParamId, ParamId),
    pub dca: DcaParams,
    pub ln2: (ParamId, ParamId),
    pub mlp_w1: ParamId,
    pub mlp_b1: ParamId,
    pub mlp_w2: ParamId,
    pub mlp_b2: ParamId,
    pub shift: usize,
    pub drop_path: f64,
}

#[derive(Debug)]
pub struct Stage {
    pub blocks: Vec<BlockParams>,
    /// Projection applied after this stage (4d -> 2d), if any.
    pub merge: Option<ParamId>,
    pub dim: usize,
    /// Token-grid side at stage entry.
    pub grid: usize,
}

#[derive(Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub patch_w: ParamId,
    pub patch_b: ParamId,
    pub stages: Vec<Stage>,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

const LN_EPS: f64 = 1e-5;

impl Model {
    /// Builds all parameters deterministically from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let in_dim = config.patch * config.patch * config.bands;
        let patch_w = store.register(
            "patch_embed.w",
            in_dim,
            config.dim,
            trunc_normal(in_dim * config.dim, 0.02, &mut rng),
            true,
        )?;
        let patch_b = store.register("patch_embed.b", 1, config.dim, vec![0.0; config.dim], false)?;

        let total_blocks: usize = config.depths.iter().sum();
        let mut block_index = 0usize;
        let mut grid = config.entry_grid();
        let mut stages = Vec::with_capacity(config.depths.len());
        for (s, &depth) in config.depths.iter().enumerate() {
            let d = config.dim << s;
            let hid = config.mlp_hidden << s;
            let mut blocks = Vec::with_capacity(depth);
            for b in 0..depth {
                let prefix = format!("stage{s}.block{b}");
                let dsx =
                    DsxParams::init(&mut store, &format!("{prefix}.dsx"), d, config.expansion, &mut rng)?;
                let ln = |store: &mut ParamStore, name: &str| -> Result<(ParamId, ParamId)> {
                    Ok((
                        store.register(format!("{prefix}.{name}.gamma"), 1, d, vec![1.0; d], false)?,
                        store.register(format!("{prefix}.{name}.beta"), 1, d, vec![0.0; d], false)?,
                    ))
                };
                let ln1 = ln(&mut store, "ln1")?;
                let mut dca = DcaParams::init(
                    &mut store,
                    &format!("{prefix}.dca"),
                    d,
                    config.heads,
                    config.window,
                    config.dropout,
                    &mut rng,
                )?;
                dca.dcs_enabled = config.dcs_enabled;
                dca.dcs_abs_context = config.dcs_abs_context;
                let ln2 = ln(&mut store, "ln2")?;
                let mlp_w1 = store.register(
                    format!("{prefix}.mlp.w1"),
                    d,
                    hid,
                    trunc_normal(d * hid, 0.02, &mut rng),
                    true,
                )?;
                let mlp_b1 =
                    store.register(format!("{prefix}.mlp.b1"), 1, hid, vec![0.0; hid], false)?;
                let mlp_w2 = store.register(
                    format!("{prefix}.mlp.w2"),
                    hid,
                    d,
                    trunc_normal(hid * d, 0.02, &mut rng),
                    true,
                )?;
                let mlp_b2 = store.register(format!("{prefix}.mlp.b2"), 1, d, vec![0.0; d], false)?;
                let drop_path = if total_blocks > 1 {
                    config.drop_path * block_index as f64 / (total_blocks - 1) as f64
                } else {
                    0.0
                };
                let shift = if b % 2 == 1 { config.window / 2 } else { 0 };
                blocks.push(BlockParams {
                    dsx,
                    ln1,
                    dca,
                    ln2,
                    mlp_w1,
                    mlp_b1,
                    mlp_w2,
                    mlp_b2,
                    shift,
                    drop_path,
                });
                block_index += 1;
            }
            let merge = if s + 1 < config.depths.len() {
                Some(store.register(
                    format!("stage{s}.merge.w"),
                    4 * d,
                    2 * d,
                    trunc_normal(4 * d * 2 * d, 0.02, &mut rng),
                    true,
                )?)
            } else {
                None
            };
            stages.push(Stage { blocks, merge, dim: d, grid });
            grid = (grid + 1) / 2;
        }

        let final_dim = config.dim << (config.depths.len() - 1);
        let head_w = store.register(
            "head.w",
            final_dim,
            config.classes,
            trunc_normal(final_dim * config.classes, 0.02, &mut rng),
            true,
        )?;
        let head_b =
            store.register("head.b", 1, config.classes, vec![0.0; config.classes], false)?;
        Ok(Model { config, store, patch_w, patch_b, stages, head_w, head_b })
    }

    pub fn param_count(&self) -> usize {
        self.store.total_values()
    }

    /// Embeds a raw `[S*S, B]` pixel matrix into the stage-1 token grid.
    /// Odd sizes are edge-replicated up to a patch multiple; each p x p x B
    /// block is flattened pixel-major and linearly projected to d channels.
    pub fn patch_embed<'t>(&self, input: &Tensor<'t>, bound: &Bound<'t>) -> Result<Tensor<'t>> {
        let s = self.config.input_side;
        let b = self.config.bands;
        let p = self.config.patch;
        let (ir, ic) = input.shape();
        if (ir, ic) != (s * s, b) {
            return Err(dim_err!("patch_embed expects [{}, {b}], got [{ir}, {ic}]", s * s));
        }
        let g = self.config.entry_grid();
        let mut idx = Vec::with_capacity(g * g * p * p);
        for ti in 0..g {
            for tj in 0..g {
                for u in 0..p {
                    for v in 0..p {
                        let r = (ti * p + u).min(s - 1);
                        let c = (tj * p + v).min(s - 1);
                        idx.push(Some(r * s + c));
                    }
                }
            }
        }
        let blocks = input.gather_rows(&idx)?.reshape(g * g, p * p * b)?;
        blocks.matmul(&bound.get(self.patch_w))?.add_row(&bound.get(self.patch_b))
    }

    /// Class probabilities for one raw pixel patch, eval mode.
    pub fn predict_probs(&self, patch: &[f64]) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let bound = self.store.bind(&tape, false)?;
        let s = self.config.input_side;
        let input = tape.leaf(s * s, self.config.bands, patch.to_vec(), false)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = self.forward_logits(&bound, &input, false, &mut rng)?;
        Ok(logits.softmax_rows()?.data())
    }

    /// Logits `[1, K]` for one embedded sample.
    pub fn forward_logits<'t, R: Rng>(
        &self,
        bound: &Bound<'t>,
        input: &Tensor<'t>,
        train: bool,
        rng: &mut R,
    ) -> Result<Tensor<'t>> {
        let mut tokens = self.patch_embed(input, bound)?;
        let mut grid = self.config.entry_grid();
        for stage in &self.stages {
            for block in &stage.blocks {
                tokens = encoder_block_forward(&tokens, grid, block, bound, train, rng)?;
            }
            if let Some(merge) = stage.merge {
                let merged = patch_merge(&tokens, grid, &bound.get(merge))?;
                tokens = merged;
                grid = (grid + 1) / 2;
            }
        }
        classify_logits(&tokens, &bound.get(self.head_w), &bound.get(self.head_b))
    }

    /// Probabilities `[1, K]` (softmax over the head logits).
    pub fn model_forward<'t, R: Rng>(
        &self,
        bound: &Bound<'t>,
        input: &Tensor<'t>,
        train: bool,
        rng: &mut R,
    ) -> Result<Tensor<'t>> {
        self.forward_logits(bound, input, train, rng)?.softmax_rows()
    }
}

/// Two-layer MLP with GELU and train-only dropout between the layers.
pub fn mlp_forward<'t, R: Rng>(
    tokens: &Tensor<'t>,
    w1: &Tensor<'t>,
    b1: &Tensor<'t>,
    w2: &Tensor<'t>,
    b2: &Tensor<'t>,
    drop: f64,
    train: bool,
    rng: &mut R,
) -> Result<Tensor<'t>> {
    let h = tokens.matmul(w1)?.add_row(b1)?.gelu()?;
    let h = dropout(&h, drop, train, rng)?;
    h.matmul(w2)?.add_row(b2)
}

/// Merges each 2x2 token neighborhood: channel-wise concat to 4d, then
/// projection to 2d. Odd grids are padded with zero tokens.
pub fn patch_merge<'t>(
    tokens: &Tensor<'t>,
    grid: usize,
    w_merge: &Tensor<'t>,
) -> Result<Tensor<'t>> {
    let (tr, d) = tokens.shape();
    if tr != grid * grid {
        return Err(dim_err!("patch_merge expects {grid}x{grid} tokens, got {tr}"));
    }
    let (wr, _) = w_merge.shape();
    if wr != 4 * d {
        return Err(dim_err!("merge projection expects {} input channels, got {wr}", 4 * d));
    }
    let out = (grid + 1) / 2;
    let mut idx = Vec::with_capacity(out * out * 4);
    let at = |r: usize, c: usize| -> Option<usize> {
        if r < grid && c < grid {
            Some(r * grid + c)
        } else {
            None
        }
    };
    for oi in 0..out {
        for oj in 0..out {
            let (r, c) = (2 * oi, 2 * oj);
            idx.push(at(r, c));
            idx.push(at(r + 1, c));
            idx.push(at(r, c + 1));
            idx.push(at(r + 1, c + 1));
        }
    }
    tokens.gather_rows(&idx)?.reshape(out * out, 4 * d)?.matmul(w_merge)
}

/// Pre-norm block: DSX replaces the input on the residual stream, then
/// attention and MLP branches are added back through drop-path.
pub fn encoder_block_forward<'t, R: Rng>(
    tokens: &Tensor<'t>,
    grid: usize,
    block: &BlockParams,
    bound: &Bound<'t>,
    train: bool,
    rng: &mut R,
) -> Result<Tensor<'t>> {
    let x0 = dsx_forward(tokens, &block.dsx, bound)?;
    let normed = x0.layer_norm(&bound.get(block.ln1.0), &bound.get(block.ln1.1), LN_EPS)?;
    let attn = dca_forward(&normed, grid, grid, &block.dca, bound, block.shift, train, rng)?;
    let x1 = x0.add(&drop_path(&attn, block.drop_path, train, rng)?)?;
    let normed = x1.layer_norm(&bound.get(block.ln2.0), &bound.get(block.ln2.1), LN_EPS)?;
    let mlp = mlp_forward(
        &normed,
        &bound.get(block.mlp_w1),
        &bound.get(block.mlp_b1),
        &bound.get(block.mlp_w2),
        &bound.get(block.mlp_b2),
        block.dca.drop,
        train,
        rng,
    )?;
    x1.add(&drop_path(&mlp, block.drop_path, train, rng)?)
}

/// Stochastic depth on a residual branch: drop with probability `rate` in
/// train mode, rescale survivors by 1/(1-rate).
pub fn drop_path<'t, R: Rng>(
    branch: &Tensor<'t>,
    rate: f64,
    train: bool,
    rng: &mut R,
) -> Result<Tensor<'t>> {
    if !train || rate == 0.0 {
        return Ok(*branch);
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(cfg_err!("drop_path rate must be in [0, 1], got {rate}"));
    }
    if rate >= 1.0 {
        return Ok(branch.scale(0.0));
    }
    let keep = 1.0 - rate;
    if rng.gen::<f64>() < keep {
        Ok(branch.scale(1.0 / keep))
    } else {
        Ok(branch.scale(0.0))
    }
}

/// Global average pooling over tokens, then the linear head.
pub fn classify_logits<'t>(
    tokens: &Tensor<'t>,
    w_out: &Tensor<'t>,
    b_out: &Tensor<'t>,
) -> Result<Tensor<'t>> {
    let (d, k) = w_out.shape();
    let (_, td) = tokens.shape();
    if td != d {
        return Err(cfg_err!("head expects {d} channels, tokens have {td}"));
    }
    let (_, bk) = b_out.shape();
    if bk != k {
        return Err(cfg_err!("head bias has {bk} entries, expected {k} classes"));
    }
    tokens.mean_rows()?.matmul(w_out)?.add_row(b_out)
}

/// Probabilities from the head: softmax of [`classify_logits`].
pub fn classify_head<'t>(
    tokens: &Tensor<'t>,
    w_out: &Tensor<'t>,
    b_out: &Tensor<'t>,
) -> Result<Tensor<'t>> {
    classify_logits(tokens, w_out, b_out)?.softmax_rows()
}
