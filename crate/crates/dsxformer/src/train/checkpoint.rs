//! Model checkpoints: magic `DSXC`, version, sha-256 digest of the embedded
//! model-config text, the config text itself, then named parameter blobs as
//! 32-bit little-endian values. Loading rebuilds the model from the config
//! and validates every blob's name and shape.

use crate::encoder::{Model, ModelConfig};
use crate::error::{fmt_err, Result};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"DSXC";
const VERSION: u32 = 1;

pub fn checkpoint_bytes(model: &Model) -> Vec<u8> {
    let config = model.config.to_text();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let mut h = Sha256::new();
    h.update(config.as_bytes());
    out.extend_from_slice(&h.finalize());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&(model.store.len() as u32).to_le_bytes());
    for (_, p) in model.store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.rows as u32).to_le_bytes());
        out.extend_from_slice(&(p.cols as u32).to_le_bytes());
        for v in &p.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, checkpoint_bytes(model))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(fmt_err!(
                "truncated checkpoint: needed {n} bytes for {what} at offset {}",
                self.pos
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(fmt_err!("bad checkpoint magic: expected \"DSXC\""));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(fmt_err!("unsupported checkpoint version {version}"));
    }
    let digest: Vec<u8> = r.take(32, "config digest")?.to_vec();
    let config_len = r.u32("config length")? as usize;
    let config_text = std::str::from_utf8(r.take(config_len, "config text")?)
        .map_err(|_| fmt_err!("config text is not UTF-8"))?
        .to_string();
    let mut h = Sha256::new();
    h.update(config_text.as_bytes());
    if h.finalize().as_slice() != digest {
        return Err(fmt_err!("config digest mismatch: checkpoint is corrupt"));
    }
    let config = ModelConfig::from_text(&config_text)?;
    let mut model = Model::new(config, 0)?;

    let count = r.u32("parameter count")? as usize;
    if count != model.store.len() {
        return Err(fmt_err!(
            "checkpoint holds {count} parameters, config implies {}",
            model.store.len()
        ));
    }
    let ids: Vec<_> = model.store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "parameter name")?)
            .map_err(|_| fmt_err!("parameter name is not UTF-8"))?
            .to_string();
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let p = model.store.param_mut(id);
        if name != p.name {
            return Err(fmt_err!("parameter order mismatch: got {name:?}, expected {:?}", p.name));
        }
        if (rows, cols) != (p.rows, p.cols) {
            return Err(fmt_err!(
                "parameter {name:?} has shape [{rows}, {cols}], config implies [{}, {}]",
                p.rows,
                p.cols
            ));
        }
        let raw = r.take(rows * cols * 4, "parameter values")?;
        for (dst, chunk) in p.data.iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        }
    }
    Ok(model)
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    checkpoint_from_bytes(&fs::read(path)?)
}
