//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! "ECFN" | u32 version | u32 len | config JSON | u32 count
//! count × ( u32 name_len | name | 4 × u32 dims | f32 data )
//! u32 CRC-32 of every preceding byte
//! ```

use std::path::Path;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ECFN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Decoded checkpoint contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub entries: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn of(model: &Model<f32>) -> Self {
        Checkpoint {
            config: model.config.clone(),
            entries: model
                .params
                .iter()
                .map(|(n, t)| (n.to_owned(), t.clone()))
                .collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        let cfg = serde_json::to_vec(&self.config).expect("config serializes");
        put_u32(&mut out, cfg.len() as u32);
        out.extend_from_slice(&cfg);
        put_u32(&mut out, self.entries.len() as u32);
        for (name, t) in &self.entries {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            for d in t.shape().0 {
                put_u32(&mut out, d as u32);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        put_u32(&mut out, crc);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < 8 {
            return Err(Error::MalformedCheckpoint("missing version".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        if bytes.len() < 12 {
            return Err(Error::MalformedCheckpoint("missing checksum".into()));
        }
        let (payload, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }

        let mut r = Reader {
            buf: payload,
            pos: 8,
        };
        let cfg_len = r.u32()? as usize;
        let config: ModelConfig = serde_json::from_slice(r.take(cfg_len)?)
            .map_err(|e| Error::MalformedCheckpoint(format!("config: {e}")))?;
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::MalformedCheckpoint("parameter name is not UTF-8".into()))?
                .to_owned();
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = r.u32()? as usize;
            }
            let shape = Shape(dims);
            let raw = r.take(shape.numel() * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            entries.push((name, Tensor::from_vec(shape, data)?));
        }
        if r.pos != payload.len() {
            return Err(Error::MalformedCheckpoint(format!(
                "{} trailing bytes",
                payload.len() - r.pos
            )));
        }
        Ok(Checkpoint { config, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Copies the stored tensors into `model`, which must have exactly the
    /// same parameter names and shapes.
    pub fn apply_to(&self, model: &mut Model<f32>) -> Result<()> {
        for (name, t) in &self.entries {
            let id = model
                .params
                .id(name)
                .ok_or_else(|| Error::UnexpectedParam(name.clone()))?;
            model.params.set(id, t.clone())?;
        }
        if let Some((name, _)) = model
            .params
            .iter()
            .find(|(n, _)| !self.entries.iter().any(|(m, _)| m == n))
        {
            return Err(Error::MissingParam(name.to_owned()));
        }
        Ok(())
    }

    /// Rebuilds the model the checkpoint describes.
    pub fn into_model(self) -> Result<Model<f32>> {
        let mut model = Model::build(self.config.clone(), 0)?;
        self.apply_to(&mut model)?;
        Ok(model)
    }
}

impl Model<f32> {
    pub fn save(&self, path: &Path) -> Result<()> {
        Checkpoint::of(self).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::load(path)?.into_model()
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::MalformedCheckpoint("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
