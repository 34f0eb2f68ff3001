//! Binary checkpoint: `UNITCKPT`, a little-endian header, a table of named
//! arrays and their `f32` payloads.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::numeric::{AdamState, ParamId, Tensor};

use super::config::{Lambdas, ModelConfig, TrainSettings};
use super::net::UnitModel;
use super::train::Trainer;

pub const MAGIC: &[u8; 8] = b"UNITCKPT";
pub const FORMAT_VERSION: u16 = 1;

const ADAM_GEN: &str = "adam_gen";
const ADAM_DISC: &str = "adam_disc";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint format version {found}, expected {expected}")]
    Version { found: u16, expected: u16 },
    #[error("array {name}: shape {found:?}, model expects {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("array {0} missing from checkpoint")]
    MissingArray(String),
    #[error("invalid stored configuration: {0}")]
    Config(String),
}

/// Text stored alongside the arrays; enough to rebuild the model and resume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredConfig {
    pub model: ModelConfig,
    pub train: TrainSettings,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub lambdas: Lambdas,
    pub rng_seed: [u8; 32],
    pub rng_stream: u64,
    pub rng_word_pos: u128,
    pub config: StoredConfig,
    pub arrays: Vec<(String, Tensor)>,
}

fn moment_name(opt: &str, which: &str, param: &str) -> String {
    format!("{opt}.{which}/{param}")
}

fn config_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
}

impl Checkpoint {
    /// Parameters only; resuming from it starts the optimizers afresh.
    pub fn from_model(model: &UnitModel, train: TrainSettings) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(train.seed);
        Checkpoint {
            step: 0,
            lambdas: model.config.lambdas,
            rng_seed: rng.get_seed(),
            rng_stream: rng.get_stream(),
            rng_word_pos: rng.get_word_pos(),
            config: StoredConfig {
                model: model.config.clone(),
                train,
            },
            arrays: model
                .params
                .iter()
                .map(|(_, name, t)| (name.to_string(), t.clone()))
                .collect(),
        }
    }

    pub(crate) fn from_trainer(trainer: &Trainer) -> Self {
        let model = trainer.model();
        let rng = trainer.rng();
        let mut ckpt = Checkpoint::from_model(model, trainer.settings().clone());
        ckpt.step = trainer.step_count();
        ckpt.rng_seed = rng.get_seed();
        ckpt.rng_stream = rng.get_stream();
        ckpt.rng_word_pos = rng.get_word_pos();
        let (gen, disc) = trainer.optimizers();
        for (opt, state) in [(ADAM_GEN, gen), (ADAM_DISC, disc)] {
            for (i, &id) in state.params().iter().enumerate() {
                let name = model.params.name(id);
                ckpt.arrays
                    .push((moment_name(opt, "m", name), state.first_moments()[i].clone()));
                ckpt.arrays
                    .push((moment_name(opt, "v", name), state.second_moments()[i].clone()));
            }
        }
        ckpt
    }

    fn array(&self, name: &str) -> Option<&Tensor> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn expect_array(&self, name: &str, shape: &[usize]) -> Result<Tensor, CheckpointError> {
        let t = self
            .array(name)
            .ok_or_else(|| CheckpointError::MissingArray(name.to_string()))?;
        if t.shape() != shape {
            return Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: t.shape().to_vec(),
            });
        }
        Ok(t.clone())
    }

    /// Rebuilds the model and overwrites its parameters with the stored arrays.
    pub fn model(&self) -> Result<UnitModel, CheckpointError> {
        let mut model = UnitModel::build(&self.config.model)
            .map_err(|e| CheckpointError::Config(e.to_string()))?;
        let ids: Vec<ParamId> = model.params.ids().collect();
        for id in ids {
            let name = model.params.name(id).to_string();
            let t = self.expect_array(&name, model.params.get(id).shape())?;
            *model.params.get_mut(id) = t;
        }
        Ok(model)
    }

    /// Restores the model, both optimizers and the random stream. Without
    /// stored moments the optimizers start from zero.
    pub fn trainer(&self) -> Result<Trainer, CheckpointError> {
        let model = self.model()?;
        let settings = self.config.train.clone();
        settings
            .validate()
            .map_err(|e| CheckpointError::Config(e.to_string()))?;
        let restore = |opt: &str, ids: Vec<ParamId>| -> Result<AdamState, CheckpointError> {
            let prefix = format!("{opt}.");
            if !self.arrays.iter().any(|(n, _)| n.starts_with(&prefix)) {
                return Ok(AdamState::new(settings.adam(), &model.params, &ids));
            }
            let (mut first, mut second) = (Vec::new(), Vec::new());
            for &id in &ids {
                let name = model.params.name(id);
                let shape = model.params.get(id).shape();
                first.push(self.expect_array(&moment_name(opt, "m", name), shape)?);
                second.push(self.expect_array(&moment_name(opt, "v", name), shape)?);
            }
            AdamState::from_parts(settings.adam(), self.step, &model.params, ids, first, second)
                .map_err(|e| CheckpointError::Corrupt(e.to_string()))
        };
        let adam_gen = restore(ADAM_GEN, model.vae_params())?;
        let adam_disc = restore(ADAM_DISC, model.disc_params())?;
        let mut rng = ChaCha8Rng::from_seed(self.rng_seed);
        rng.set_stream(self.rng_stream);
        rng.set_word_pos(self.rng_word_pos);
        Ok(Trainer::assemble(
            model, settings, adam_gen, adam_disc, rng, self.step,
        ))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let text = toml::to_string(&self.config).map_err(|e| CheckpointError::Config(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        for l in self.lambdas.to_array() {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out.extend_from_slice(&config_hash(&text).to_le_bytes());
        out.extend_from_slice(&self.rng_seed);
        out.extend_from_slice(&self.rng_stream.to_le_bytes());
        out.extend_from_slice(&self.rng_word_pos.to_le_bytes());
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());

        let table_len: usize = self
            .arrays
            .iter()
            .map(|(name, t)| 2 + name.len() + 1 + 4 * t.shape().len() + 8)
            .sum();
        let mut offset = (out.len() + table_len) as u64;
        for (name, t) in &self.arrays {
            let name_len = u16::try_from(name.len())
                .map_err(|_| CheckpointError::Corrupt(format!("array name too long: {name}")))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &e in t.shape() {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            offset += 4 * t.numel() as u64;
        }
        for (_, t) in &self.arrays {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::Corrupt("bad magic bytes".into()));
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let step = r.u64()?;
        let mut l = [0f32; 5];
        for v in &mut l {
            *v = f32::from_le_bytes(r.array()?);
        }
        let hash = r.u64()?;
        let rng_seed: [u8; 32] = r.array()?;
        let rng_stream = r.u64()?;
        let rng_word_pos = u128::from_le_bytes(r.array()?);
        let text_len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(text_len)?)
            .map_err(|_| CheckpointError::Corrupt("configuration is not UTF-8".into()))?;
        if config_hash(text) != hash {
            return Err(CheckpointError::Corrupt("configuration hash mismatch".into()));
        }
        let config: StoredConfig =
            toml::from_str(text).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        let lambdas = Lambdas::from_array(l);
        if lambdas.to_array().map(f32::to_bits) != config.model.lambdas.to_array().map(f32::to_bits) {
            return Err(CheckpointError::Corrupt(
                "header loss weights disagree with configuration".into(),
            ));
        }

        let count = r.u32()? as usize;
        let mut table = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CheckpointError::Corrupt("array name is not UTF-8".into()))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let offset = r.u64()?;
            table.push((name, shape, offset));
        }
        let mut arrays = Vec::with_capacity(table.len());
        for (name, shape, offset) in table {
            let numel: usize = shape.iter().product();
            let start = usize::try_from(offset)
                .map_err(|_| CheckpointError::Corrupt(format!("{name}: bad offset")))?;
            let end = numel
                .checked_mul(4)
                .and_then(|n| start.checked_add(n))
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| CheckpointError::Corrupt(format!("{name}: payload truncated")))?;
            let data = bytes[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
            arrays.push((name, t));
        }
        Ok(Checkpoint {
            step,
            lambdas,
            rng_seed,
            rng_stream,
            rng_word_pos,
            config,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let bytes = self.to_bytes()?;
        fs::write(path, bytes).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Checkpoint::from_bytes(&bytes)
    }
}

/// Writes the model's parameters (no optimizer state).
pub fn save_checkpoint(model: &UnitModel, path: &Path) -> Result<(), CheckpointError> {
    Checkpoint::from_model(model, TrainSettings::default()).save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<UnitModel, CheckpointError> {
    Checkpoint::load(path)?.model()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CheckpointError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
}
