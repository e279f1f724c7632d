//! Versioned little-endian checkpoint container.
//!
//! Layout: magic `VIBVITCK`, u32 version, u32-length JSON config, u64
//! completed epochs, u64 rng seed, u32 parameter count, then per parameter
//! its name, shape and f32 values, then the optimizer step counter and the
//! first and second moments in parameter order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::optim::OptimizerState;
use super::trainer::Trainer;
use crate::compute::Tensor;
use crate::error::{Error, Result};
use crate::vit::{ViTConfig, ViTModel};

pub const MAGIC: &[u8; 8] = b"VIBVITCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub model: ViTConfig,
    pub train: TrainConfig,
}

/// Everything needed to resume or evaluate a run.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: ViTModel<f32>,
    pub train: TrainConfig,
    pub optimizer: OptimizerState,
    pub epoch: u64,
    /// All draws are keyed by this seed and the epoch counter, so the pair
    /// is the complete rng state.
    pub rng_seed: u64,
}

impl From<&Trainer> for Checkpoint {
    fn from(t: &Trainer) -> Self {
        Checkpoint {
            model: t.model.clone(),
            train: t.config.clone(),
            optimizer: t.optimizer.clone(),
            epoch: t.epoch as u64,
            rng_seed: t.config.seed,
        }
    }
}

impl From<Checkpoint> for Trainer {
    fn from(c: Checkpoint) -> Self {
        Trainer {
            model: c.model,
            optimizer: c.optimizer,
            config: c.train,
            epoch: c.epoch as usize,
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, t: &Tensor<f32>) {
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, shape: &[usize]) -> Result<Tensor<f32>> {
        let n: usize = shape.iter().product();
        let bytes = self.take(n * 4)?;
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Tensor::new(shape.to_vec(), data)
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        let config = serde_json::to_vec(&CheckpointConfig {
            model: self.model.config().clone(),
            train: self.train.clone(),
        })?;
        put_u32(&mut out, config.len() as u32);
        out.extend_from_slice(&config);
        put_u64(&mut out, self.epoch);
        put_u64(&mut out, self.rng_seed);
        let params = self.model.params();
        put_u32(&mut out, params.len() as u32);
        for p in params {
            put_u32(&mut out, p.name.len() as u32);
            out.extend_from_slice(p.name.as_bytes());
            put_u32(&mut out, p.value.rank() as u32);
            for &d in p.value.shape() {
                put_u64(&mut out, d as u64);
            }
            put_f32s(&mut out, &p.value);
        }
        put_u64(&mut out, self.optimizer.step);
        for t in self.optimizer.m.iter().chain(&self.optimizer.v) {
            put_f32s(&mut out, t);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let n = r.u32()? as usize;
        let config: CheckpointConfig = serde_json::from_slice(r.take(n)?)
            .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
        let epoch = r.u64()?;
        let rng_seed = r.u64()?;
        let mut model = ViTModel::<f32>::zeros(config.model.clone())?;
        let count = r.u32()? as usize;
        if count != model.params().len() {
            return Err(Error::Format(format!(
                "checkpoint has {count} parameters, config implies {}",
                model.params().len()
            )));
        }
        for i in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Format("parameter name is not utf-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let expected = &model.params()[i];
            if name != expected.name || shape != expected.value.shape() {
                return Err(Error::Format(format!(
                    "parameter {i}: found {name} {shape:?}, expected {} {:?}",
                    expected.name,
                    expected.value.shape()
                )));
            }
            model.params_mut()[i].value = r.f32s(&shape)?;
        }
        let mut optimizer = OptimizerState::new(&model);
        optimizer.step = r.u64()?;
        let shapes: Vec<Vec<usize>> = model.params().iter().map(|p| p.value.shape().to_vec()).collect();
        for (i, s) in shapes.iter().enumerate() {
            optimizer.m[i] = r.f32s(s)?;
        }
        for (i, s) in shapes.iter().enumerate() {
            optimizer.v[i] = r.f32s(s)?;
        }
        if !r.buf.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes in checkpoint", r.buf.len())));
        }
        Ok(Checkpoint {
            model,
            train: config.train,
            optimizer,
            epoch,
            rng_seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = fs::File::open(path)
            .map_err(|e| Error::Usage(format!("cannot open checkpoint {}: {e}", path.display())))?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
