//! Model checkpoints: configuration, parameters and optional optimizer and
//! RNG state in the shared binary container.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::container;
use crate::error::{Error, FormatErrorCode, Result};
use crate::generator::{Generator, GeneratorConfig, GeneratorParams};
use crate::tensor::Tensor;
use crate::training::{AdamState, EpochRecord, LossWeights, TrainConfig, TrainState};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"DMCKPT\0\0";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateHeader {
    epoch: usize,
    adam_step: u64,
    rng_stream: u64,
    /// ChaCha word position as a decimal string (it exceeds 64 bits).
    rng_word_pos: String,
    trace: Vec<EpochRecord>,
    adam_m: Vec<TensorEntry>,
    adam_v: Vec<TensorEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    generator: GeneratorConfig,
    train: TrainConfig,
    loss_weights: LossWeights,
    #[serde(default)]
    run_config: Option<serde_json::Value>,
    params: Vec<TensorEntry>,
    #[serde(default)]
    state: Option<StateHeader>,
    payload_values: usize,
}

/// Everything needed to rebuild a generator, and optionally to resume its
/// training run bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    pub loss_weights: LossWeights,
    pub params: GeneratorParams,
    pub state: Option<TrainState>,
    pub run_config: Option<serde_json::Value>,
}

fn pack(map: &BTreeMap<String, Tensor>, payload: &mut Vec<f64>) -> Vec<TensorEntry> {
    map.iter()
        .map(|(name, t)| {
            let e = TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset: payload.len(),
            };
            payload.extend_from_slice(t.data());
            e
        })
        .collect()
}

fn unpack(entries: &[TensorEntry], payload: &[f64], cursor: &mut usize) -> Result<BTreeMap<String, Tensor>> {
    let mut out = BTreeMap::new();
    for e in entries {
        let n: usize = e.shape.iter().product();
        if e.offset != *cursor || e.offset + n > payload.len() {
            return Err(Error::format(
                FormatErrorCode::LengthMismatch,
                format!("tensor {} is out of place in the payload", e.name),
            ));
        }
        let t = Tensor::new(&e.shape, payload[e.offset..e.offset + n].to_vec())
            .map_err(|err| Error::format(FormatErrorCode::HeaderInvalid, err.to_string()))?;
        if out.insert(e.name.clone(), t).is_some() {
            return Err(Error::format(
                FormatErrorCode::HeaderInvalid,
                format!("duplicate tensor {}", e.name),
            ));
        }
        *cursor += n;
    }
    Ok(out)
}

impl Checkpoint {
    /// Snapshot of a generator with no training state.
    pub fn from_generator(generator: &Generator, train: TrainConfig, loss_weights: LossWeights) -> Self {
        Checkpoint {
            generator: generator.config().clone(),
            train,
            loss_weights,
            params: generator.params().clone(),
            state: None,
            run_config: None,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        let params = pack(self.params.as_map(), &mut payload);
        let state = self.state.as_ref().map(|s| StateHeader {
            epoch: s.epoch,
            adam_step: s.adam.step,
            rng_stream: s.rng.get_stream(),
            rng_word_pos: s.rng.get_word_pos().to_string(),
            trace: s.trace.clone(),
            adam_m: pack(&s.adam.m, &mut payload),
            adam_v: pack(&s.adam.v, &mut payload),
        });
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            generator: self.generator.clone(),
            train: self.train.clone(),
            loss_weights: self.loss_weights.clone(),
            run_config: self.run_config.clone(),
            params,
            state,
            payload_values: payload.len(),
        };
        container::encode(MAGIC, CHECKPOINT_VERSION, &header, &payload)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (Header, Vec<f64>) = container::decode(MAGIC, CHECKPOINT_VERSION, bytes)?;
        if h.format_version != CHECKPOINT_VERSION {
            return Err(Error::format(
                FormatErrorCode::VersionMismatch,
                format!("header format_version {}", h.format_version),
            ));
        }
        let mut cursor = 0;
        let params = GeneratorParams::from(unpack(&h.params, &payload, &mut cursor)?);
        let state = match h.state {
            None => None,
            Some(s) => {
                let m = unpack(&s.adam_m, &payload, &mut cursor)?;
                let v = unpack(&s.adam_v, &payload, &mut cursor)?;
                let word_pos: u128 = s.rng_word_pos.parse().map_err(|_| {
                    Error::format(FormatErrorCode::HeaderInvalid, "rng_word_pos is not an integer")
                })?;
                let mut rng = ChaCha8Rng::seed_from_u64(h.train.seed);
                rng.set_stream(s.rng_stream);
                rng.set_word_pos(word_pos);
                Some(TrainState {
                    epoch: s.epoch,
                    adam: AdamState {
                        step: s.adam_step,
                        m,
                        v,
                    },
                    rng,
                    trace: s.trace,
                })
            }
        };
        if cursor != payload.len() {
            return Err(Error::format(
                FormatErrorCode::LengthMismatch,
                format!("tensor index covers {cursor} of {} values", payload.len()),
            ));
        }
        Ok(Checkpoint {
            generator: h.generator,
            train: h.train,
            loss_weights: h.loss_weights,
            params,
            state,
            run_config: h.run_config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Rebuilds the generator, checking parameter shapes against the config.
    pub fn to_generator(&self) -> Result<Generator> {
        Generator::new(self.generator.clone(), self.params.clone(), self.train.diffusion_steps)
    }

    /// Short content hash of the encoded checkpoint.
    pub fn id(&self) -> Result<String> {
        Ok(checkpoint_id(&self.encode()?))
    }
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn checkpoint_id(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}
