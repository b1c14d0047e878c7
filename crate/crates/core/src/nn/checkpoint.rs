//! Binary checkpoint: `SLTC`, u32 version, u32-length JSON metadata, then one
//! record per parameter (u16 name length, name, u8 rank, u32 dims, f32 data),
//! all little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::hparams::Hyperparameters;
use super::model::{ModelConfig, TransformerModel};
use crate::corpus::{GlossVocabulary, TextVocabulary};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SLTC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub gloss_vocab: GlossVocabulary,
    pub text_vocab: TextVocabulary,
    pub hyperparameters: Hyperparameters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<NamedTensor>,
}

fn corrupt(m: impl Into<String>) -> Error {
    Error::Checkpoint(m.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn from_model(
        model: &TransformerModel,
        gloss_vocab: &GlossVocabulary,
        text_vocab: &TextVocabulary,
        hyperparameters: &Hyperparameters,
    ) -> Self {
        let tensors = model
            .params
            .iter()
            .map(|(_, p)| NamedTensor {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
                data: p.tensor.data().iter().map(|&v| v as f32).collect(),
            })
            .collect();
        Self {
            meta: CheckpointMeta {
                model: model.config().clone(),
                gloss_vocab: gloss_vocab.clone(),
                text_vocab: text_vocab.clone(),
                hyperparameters: hyperparameters.clone(),
            },
            tensors,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&u32::try_from(meta.len()).map_err(|_| corrupt("metadata too large"))?.to_le_bytes());
        out.extend_from_slice(&meta);
        for t in &self.tensors {
            let name = t.name.as_bytes();
            let len = u16::try_from(name.len()).map_err(|_| corrupt(format!("name `{}` too long", t.name)))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name);
            out.push(u8::try_from(t.shape.len()).map_err(|_| corrupt("rank too large"))?);
            for &d in &t.shape {
                out.extend_from_slice(&u32::try_from(d).map_err(|_| corrupt("dimension too large"))?.to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| corrupt(format!("metadata: {e}")))?;
        let mut tensors = Vec::new();
        while r.pos < buf.len() {
            let n = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| corrupt("parameter name is not UTF-8"))?
                .to_string();
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let count = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| corrupt(format!("`{name}` is too large")))?;
            let bytes = r.take(count.checked_mul(4).ok_or_else(|| corrupt("size overflow"))?)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }

    /// Rebuilds the model described by the metadata; every parameter must be present.
    pub fn to_model(&self) -> Result<TransformerModel> {
        let mut model = TransformerModel::new(self.meta.model.clone(), 0)?;
        if model.params.len() != self.tensors.len() {
            return Err(corrupt(format!(
                "expected {} parameters, found {}",
                model.params.len(),
                self.tensors.len()
            )));
        }
        for p in model.params.iter_mut() {
            let t = self
                .tensor(&p.name)
                .ok_or_else(|| corrupt(format!("missing parameter `{}`", p.name)))?;
            if t.shape != p.tensor.shape() {
                return Err(corrupt(format!("parameter `{}` has shape {:?}", p.name, t.shape)));
            }
            p.tensor
                .data_mut()
                .iter_mut()
                .zip(&t.data)
                .for_each(|(d, &s)| *d = f64::from(s));
        }
        Ok(model)
    }
}
