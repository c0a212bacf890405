//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! "CLGN" | u16 version=1
//! u32 C | f32 fs | u32 N_F | f32 window_sec | f32 bn_eps | f32 bn_momentum
//! 18 learnable arrays then 8 running-stat arrays, each:
//!     u16 name_len | ASCII name | u8 rank | rank x u32 dims | f32 payload
//! u32 epoch | f32 val_loss | u64 seed
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::CleegnConfig;
use super::network::{CleegnModel, PARAM_NAMES, RUNNING_STAT_NAMES};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CLGN";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: u32,
    pub val_loss: f32,
    pub seed: u64,
}

pub fn save_checkpoint(model: &CleegnModel<f32>, meta: &CheckpointMeta) -> Vec<u8> {
    let cfg = model.config();
    let mut out = Vec::with_capacity(64 + 4 * (model.learnable_count() + 256));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg.channels as u32).to_le_bytes());
    out.extend_from_slice(&cfg.fs.to_le_bytes());
    out.extend_from_slice(&(cfg.n_filters as u32).to_le_bytes());
    out.extend_from_slice(&cfg.window_sec.to_le_bytes());
    out.extend_from_slice(&cfg.bn_eps.to_le_bytes());
    out.extend_from_slice(&cfg.bn_momentum.to_le_bytes());
    for array in model.params().into_iter().chain(model.running_stats()) {
        out.extend_from_slice(&(array.name.len() as u16).to_le_bytes());
        out.extend_from_slice(array.name.as_bytes());
        out.push(array.shape.len() as u8);
        for d in &array.shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in array.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&meta.epoch.to_le_bytes());
    out.extend_from_slice(&meta.val_loss.to_le_bytes());
    out.extend_from_slice(&meta.seed.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos,
                msg: format!("truncated while reading {what} ({n} bytes needed, {} left)", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn err(&self, offset: usize, msg: impl Into<String>) -> Error {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }
}

/// Parse a checkpoint. Either the whole model is returned or an error naming
/// the byte offset where parsing stopped.
pub fn load_checkpoint(bytes: &[u8]) -> Result<(CleegnModel<f32>, CheckpointMeta)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(r.err(0, "bad magic, expected \"CLGN\""));
    }
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(r.err(4, format!("unsupported version {version}")));
    }
    let config_at = r.pos;
    let config = CleegnConfig {
        channels: r.u32("channels")? as usize,
        fs: r.f32("fs")?,
        n_filters: r.u32("n_filters")? as usize,
        window_sec: r.f32("window_sec")?,
        bn_eps: r.f32("bn_eps")?,
        bn_momentum: r.f32("bn_momentum")?,
    };
    let mut model = CleegnModel::<f32>::build(config, 0).map_err(|e| r.err(config_at, format!("config block: {e}")))?;

    let expected: Vec<(&'static str, Vec<usize>)> = model
        .params()
        .into_iter()
        .chain(model.running_stats())
        .map(|a| (a.name, a.shape))
        .collect();
    let mut payloads = Vec::with_capacity(expected.len());
    for (name, shape) in &expected {
        let at = r.pos;
        let len = r.u16("array name length")? as usize;
        let got_name = r.take(len, "array name")?;
        if got_name != name.as_bytes() {
            return Err(r.err(
                at,
                format!("expected array {name:?}, found {:?}", String::from_utf8_lossy(got_name)),
            ));
        }
        let rank_at = r.pos;
        let rank = r.u8("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dimension")? as usize);
        }
        if &dims != shape {
            return Err(r.err(rank_at, format!("array {name} has shape {dims:?}, config implies {shape:?}")));
        }
        let count: usize = dims.iter().product();
        let raw = r.take(count * 4, name)?;
        payloads.push(
            raw.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect::<Vec<_>>(),
        );
    }
    let meta = CheckpointMeta {
        epoch: r.u32("epoch")?,
        val_loss: r.f32("val_loss")?,
        seed: r.u64("seed")?,
    };
    if r.pos != bytes.len() {
        return Err(r.err(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let (learnable, running) = payloads.split_at(PARAM_NAMES.len());
    debug_assert_eq!(running.len(), RUNNING_STAT_NAMES.len());
    for (dst, src) in model.params_mut().into_iter().zip(learnable) {
        dst.copy_from_slice(src);
    }
    for (dst, src) in model.running_stats_mut().into_iter().zip(running) {
        dst.copy_from_slice(src);
    }
    Ok((model, meta))
}

pub fn write_checkpoint(path: impl AsRef<Path>, model: &CleegnModel<f32>, meta: &CheckpointMeta) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, save_checkpoint(model, meta)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(CleegnModel<f32>, CheckpointMeta)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_checkpoint(&bytes)
}
