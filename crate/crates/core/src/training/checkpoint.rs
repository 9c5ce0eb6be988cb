//! Model bundle and its binary checkpoint container.
//!
//! Layout: 8-byte magic, `u32` LE format version, `u64` LE header length,
//! UTF-8 JSON header (config echo, counters, tensor manifest), then every
//! manifest tensor as little-endian `f64` in manifest order.

use std::path::Path;

use ndarray::IxDyn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::TrainConfig;
use super::optim::{Adam, AdamConfig};
use crate::autograd::Array;
use crate::error::{Error, Result};
use crate::models::{ClassifierNet, CriticNet, GeneratorNet, ParamSet};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"LOGOGAN\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub generator_steps: u64,
    pub critic_steps: u64,
    /// Epoch of the next real batch.
    pub epoch: u64,
}

/// Everything training owns: the three networks, their optimizer state and
/// the step counters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: TrainConfig,
    pub generator: GeneratorNet,
    pub critic: CriticNet,
    pub classifier: ClassifierNet,
    pub opt_g: Adam,
    pub opt_d: Adam,
    pub opt_q: Adam,
    pub counters: Counters,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    counters: Counters,
    adam_steps: [u64; 3],
    tensors: Vec<TensorEntry>,
}

impl ModelBundle {
    /// Freshly initialized networks, seeded by `config.init_seed`.
    pub fn new(config: TrainConfig) -> Result<ModelBundle> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let generator = GeneratorNet::new(config.generator_arch(), &mut rng);
        let critic = CriticNet::new(config.critic_arch(), &mut rng);
        let classifier = ClassifierNet::new(config.classifier_arch(), &mut rng);
        let adam = AdamConfig { lr: config.lr, beta1: config.beta1, beta2: config.beta2, eps: config.adam_eps };
        Ok(ModelBundle {
            opt_g: Adam::new(adam, &generator.params),
            opt_d: Adam::new(adam, &critic.params),
            opt_q: Adam::new(adam, &classifier.params),
            generator,
            critic,
            classifier,
            config,
            counters: Counters::default(),
        })
    }

    fn groups(&self) -> [(&'static str, &ParamSet); 11] {
        [
            ("g", &self.generator.params),
            ("g.buf", &self.generator.buffers),
            ("d", &self.critic.params),
            ("q", &self.classifier.params),
            ("q.buf", &self.classifier.buffers),
            ("adam_g.m", &self.opt_g.m),
            ("adam_g.v", &self.opt_g.v),
            ("adam_d.m", &self.opt_d.m),
            ("adam_d.v", &self.opt_d.v),
            ("adam_q.m", &self.opt_q.m),
            ("adam_q.v", &self.opt_q.v),
        ]
    }

    fn groups_mut(&mut self) -> [&mut ParamSet; 11] {
        [
            &mut self.generator.params,
            &mut self.generator.buffers,
            &mut self.critic.params,
            &mut self.classifier.params,
            &mut self.classifier.buffers,
            &mut self.opt_g.m,
            &mut self.opt_g.v,
            &mut self.opt_d.m,
            &mut self.opt_d.v,
            &mut self.opt_q.m,
            &mut self.opt_q.v,
        ]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors = Vec::new();
        for (group, set) in self.groups() {
            for (name, v) in set.names().iter().zip(set.values()) {
                tensors.push(TensorEntry { name: format!("{group}/{name}"), shape: v.shape().to_vec() });
            }
        }
        let header = Header {
            config: self.config.clone(),
            counters: self.counters,
            adam_steps: [self.opt_g.t, self.opt_d.t, self.opt_q.t],
            tensors,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + header.len());
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, set) in self.groups() {
            for v in set.values() {
                for x in v.iter() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelBundle> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint format version {version}, this build reads version {CHECKPOINT_VERSION}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..).unwrap_or_default();
        let header_bytes = body.get(..hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(header_bytes).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        let mut bundle = ModelBundle::new(header.config)?;
        bundle.counters = header.counters;
        [bundle.opt_g.t, bundle.opt_d.t, bundle.opt_q.t] = header.adam_steps;

        let expected: Vec<(String, Vec<usize>)> = bundle
            .groups()
            .iter()
            .flat_map(|(g, set)| {
                set.names().iter().zip(set.values()).map(move |(n, v)| (format!("{g}/{n}"), v.shape().to_vec()))
            })
            .collect();
        if expected.len() != header.tensors.len()
            || expected.iter().zip(&header.tensors).any(|((n, s), t)| *n != t.name || *s != t.shape)
        {
            return Err(bad("tensor manifest does not match the configured architecture"));
        }
        let mut data = &body[hlen..];
        let total: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        if data.len() != total * 8 {
            return Err(Error::Checkpoint(format!("payload has {} bytes, expected {}", data.len(), total * 8)));
        }
        for set in bundle.groups_mut() {
            for v in set.values_mut() {
                let n = v.len();
                let vals: Vec<f64> =
                    data[..n * 8].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                *v = Array::from_shape_vec(IxDyn(v.shape()), vals).unwrap();
                data = &data[n * 8..];
            }
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelBundle> {
        ModelBundle::from_bytes(&std::fs::read(path)?)
    }

    /// SHA-256 of the serialized bundle, lowercase hex.
    pub fn checksum(&self) -> String {
        hex(&Sha256::digest(self.to_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn checkpoint_name(generator_step: u64) -> String {
    format!("ckpt_{generator_step}.bin")
}

pub const LATEST_MARKER: &str = "latest";

/// Writes `ckpt_<step>.bin` and points the `latest` marker at it.
pub fn write_checkpoint(bundle: &ModelBundle, dir: &Path) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let name = checkpoint_name(bundle.counters.generator_steps);
    let path = dir.join(&name);
    bundle.save(&path)?;
    std::fs::write(dir.join(LATEST_MARKER), format!("{name}\n"))?;
    Ok(path)
}

/// Resolves a checkpoint path: a file is used as is, a directory through
/// its `latest` marker.
pub fn resolve_checkpoint(path: &Path) -> Result<std::path::PathBuf> {
    if path.is_dir() {
        let marker = std::fs::read_to_string(path.join(LATEST_MARKER))
            .map_err(|e| Error::Checkpoint(format!("{}: no readable latest marker ({e})", path.display())))?;
        Ok(path.join(marker.trim()))
    } else {
        Ok(path.to_path_buf())
    }
}
