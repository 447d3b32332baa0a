//! Self-describing binary checkpoints.
//!
//! Layout (all integers little-endian u32, all values little-endian f32):
//!
//! ```text
//! magic   "RWSP"
//! version u32 (currently 1)
//! cfg_len u32, cfg utf-8       # the resolved flat key-value config text
//! n       u32                  # tensor entries
//! entry*  name_len u32, name utf-8,
//!         rank u32, dim u32 * rank,
//!         value f32 * prod(dim)
//! ```
//!
//! Entries cover every trainable parameter plus the normalization running
//! buffers, named exactly as the in-graph parameter names (documented in the
//! README). Values are stored at f32 regardless of the training precision.

use super::config::TrainConfig;
use super::model::SpoofModel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"RWSP";
const VERSION: u32 = 1;

pub fn checkpoint_bytes<S: Scalar>(cfg: &TrainConfig, model: &SpoofModel<S>) -> Vec<u8> {
    let mut entries: Vec<(String, &crate::tensor::Tensor<S>)> = Vec::new();
    model.visit_params(&mut entries);
    model.visit_buffers(&mut entries);
    let cfg_text = cfg.to_text();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg_text.len() as u32).to_le_bytes());
    out.extend_from_slice(cfg_text.as_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v.to_float() as f32).to_le_bytes());
        }
    }
    out
}

pub fn save<S: Scalar>(path: &Path, cfg: &TrainConfig, model: &SpoofModel<S>) -> Result<()> {
    let bytes = checkpoint_bytes(cfg, model);
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::Checkpoint(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(&bytes)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Load a checkpoint as an f32 model (the storage precision).
pub fn load(path: &Path) -> Result<(TrainConfig, SpoofModel<f32>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    load_bytes(&bytes)
}

pub fn load_bytes(bytes: &[u8]) -> Result<(TrainConfig, SpoofModel<f32>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let cfg_len = r.u32()? as usize;
    let cfg_text = std::str::from_utf8(r.take(cfg_len)?)
        .map_err(|_| Error::Checkpoint("config echo is not utf-8".into()))?;
    let cfg = TrainConfig::from_text(cfg_text)?;

    // rebuild the skeleton with the recorded seed, then overwrite every tensor
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = SpoofModel::<f32>::init(&cfg, &mut rng)?;

    let n = r.u32()? as usize;
    let mut loaded: std::collections::BTreeMap<String, crate::tensor::Tensor<f32>> =
        std::collections::BTreeMap::new();
    for _ in 0..n {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("entry name is not utf-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        loaded.insert(name, crate::tensor::Tensor::new(shape, data)?);
    }

    let mut assign = |slots: Vec<(String, &mut crate::tensor::Tensor<f32>)>| -> Result<()> {
        for (name, slot) in slots {
            let t = loaded.remove(&name).ok_or_else(|| {
                Error::Checkpoint(format!("checkpoint is missing parameter '{name}'"))
            })?;
            if t.shape() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter '{}' has shape {:?} in the checkpoint but the config implies {:?}",
                    name,
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(())
    };
    let mut slots = Vec::new();
    model.visit_params_mut(&mut slots);
    assign(slots)?;
    let mut slots = Vec::new();
    model.visit_buffers_mut(&mut slots);
    assign(slots)?;
    if let Some(extra) = loaded.keys().next() {
        return Err(Error::Checkpoint(format!(
            "checkpoint carries unknown parameter '{extra}'"
        )));
    }
    Ok((cfg, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::tiny_config;
    use crate::encoder::AttentionKind;

    fn tiny_train_cfg() -> TrainConfig {
        TrainConfig {
            encoder: tiny_config(AttentionKind::SimAm),
            relation_hidden: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn save_load_round_trip_is_exact_for_f32_models() {
        let cfg = tiny_train_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let model = SpoofModel::<f32>::init(&cfg, &mut rng).unwrap();
        let bytes = checkpoint_bytes(&cfg, &model);
        let (cfg2, model2) = load_bytes(&bytes).unwrap();
        assert_eq!(cfg2.to_text(), cfg.to_text());
        let mut a = Vec::new();
        model.visit_params(&mut a);
        let mut b = Vec::new();
        model2.visit_params(&mut b);
        assert_eq!(a.len(), b.len());
        for ((na, ta), (nb, tb)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data(), "param {na}");
        }
        // and the serialized bytes are stable
        assert_eq!(checkpoint_bytes(&cfg2, &model2), bytes);
    }

    #[test]
    fn shape_mismatch_is_detected() {
        let cfg = tiny_train_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = SpoofModel::<f32>::init(&cfg, &mut rng).unwrap();
        let mut bytes = checkpoint_bytes(&cfg, &model);
        // corrupt the config echo: change embed_dim so shapes disagree
        let text = cfg.to_text().replace("embed_dim = 5", "embed_dim = 6");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        let old_cfg_len = cfg.to_text().len();
        out.extend_from_slice(&bytes[4 + 4 + 4 + old_cfg_len..]);
        bytes = out;
        let err = load_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("shape"), "{err}");
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(load_bytes(b"not a checkpoint").is_err());
    }
}
