//! Training configuration and its flat `key = value` file format.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{GeneratorArch, TrunkArch};

/// Where training images come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataSource {
    /// PNG directory or packed container, labeled on load.
    Path(PathBuf),
    /// Generated solid-shape corpus.
    Synthetic { per_class: usize, seed: u64 },
}

impl DataSource {
    fn parse(s: &str) -> Result<DataSource> {
        if let Some(rest) = s.strip_prefix("synthetic:") {
            let mut parts = rest.split(':');
            let per_class = parts
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::Config(format!("bad synthetic source {s:?}; use synthetic:<per_class>[:<seed>]")))?;
            let seed = match parts.next() {
                Some(p) => p.parse().map_err(|_| Error::Config(format!("bad synthetic seed in {s:?}")))?,
                None => 0,
            };
            Ok(DataSource::Synthetic { per_class, seed })
        } else {
            Ok(DataSource::Path(PathBuf::from(s)))
        }
    }

    fn render(&self) -> String {
        match self {
            DataSource::Path(p) => p.display().to_string(),
            DataSource::Synthetic { per_class, seed } => format!("synthetic:{per_class}:{seed}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Critic updates per generator/classifier update.
    pub n_critic: usize,
    pub batch_size: usize,
    pub epochs: u64,
    /// Stop after this many generator updates; 0 means no cap.
    pub max_generator_steps: u64,
    pub lambda_gp: f64,
    pub z_dim: usize,
    /// Weight of the classifier cross-entropy in the generator objective.
    pub w_cls: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub g_channels: Vec<usize>,
    pub d_channels: Vec<usize>,
    pub q_channels: Vec<usize>,
    pub init_seed: u64,
    pub data_seed: u64,
    pub latent_seed: u64,
    pub alpha_seed: u64,
    pub sample_seed: u64,
    /// Generator steps between checkpoints; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    /// Epochs between sample grids; 0 disables them.
    pub sample_every: u64,
    pub samples_per_class: usize,
    pub data: DataSource,
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_critic: 5,
            batch_size: 64,
            epochs: 400,
            max_generator_steps: 0,
            lambda_gp: 10.0,
            z_dim: 100,
            w_cls: 1.0,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            adam_eps: 1e-8,
            g_channels: vec![256, 128, 64],
            d_channels: vec![64, 128, 256],
            q_channels: vec![64, 128, 256],
            init_seed: 0,
            data_seed: 1,
            latent_seed: 2,
            alpha_seed: 3,
            sample_seed: 4,
            checkpoint_every: 1000,
            sample_every: 1,
            samples_per_class: 64,
            data: DataSource::Synthetic { per_class: 100, seed: 0 },
            out_dir: None,
        }
    }
}

const KEYS: [&str; 25] = [
    "n_critic",
    "batch_size",
    "epochs",
    "max_generator_steps",
    "lambda_gp",
    "z_dim",
    "w_cls",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "g_channels",
    "d_channels",
    "q_channels",
    "init_seed",
    "data_seed",
    "latent_seed",
    "alpha_seed",
    "sample_seed",
    "checkpoint_every",
    "sample_every",
    "samples_per_class",
    "data",
    "out_dir",
    "seed",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|p| parse_num(key, p.trim())).collect()
}

fn list(v: &[usize]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// `#` comments are skipped; unknown keys are an error. `seed = s` is a
    /// shorthand setting every seed to `s, s+1, ...`.
    pub fn parse(text: &str) -> Result<TrainConfig> {
        let mut c = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "n_critic" => c.n_critic = parse_num(key, v)?,
                "batch_size" => c.batch_size = parse_num(key, v)?,
                "epochs" => c.epochs = parse_num(key, v)?,
                "max_generator_steps" => c.max_generator_steps = parse_num(key, v)?,
                "lambda_gp" => c.lambda_gp = parse_num(key, v)?,
                "z_dim" => c.z_dim = parse_num(key, v)?,
                "w_cls" => c.w_cls = parse_num(key, v)?,
                "lr" => c.lr = parse_num(key, v)?,
                "beta1" => c.beta1 = parse_num(key, v)?,
                "beta2" => c.beta2 = parse_num(key, v)?,
                "adam_eps" => c.adam_eps = parse_num(key, v)?,
                "g_channels" => c.g_channels = parse_list(key, v)?,
                "d_channels" => c.d_channels = parse_list(key, v)?,
                "q_channels" => c.q_channels = parse_list(key, v)?,
                "init_seed" => c.init_seed = parse_num(key, v)?,
                "data_seed" => c.data_seed = parse_num(key, v)?,
                "latent_seed" => c.latent_seed = parse_num(key, v)?,
                "alpha_seed" => c.alpha_seed = parse_num(key, v)?,
                "sample_seed" => c.sample_seed = parse_num(key, v)?,
                "seed" => {
                    let s: u64 = parse_num(key, v)?;
                    c.init_seed = s;
                    c.data_seed = s + 1;
                    c.latent_seed = s + 2;
                    c.alpha_seed = s + 3;
                    c.sample_seed = s + 4;
                }
                "checkpoint_every" => c.checkpoint_every = parse_num(key, v)?,
                "sample_every" => c.sample_every = parse_num(key, v)?,
                "samples_per_class" => c.samples_per_class = parse_num(key, v)?,
                "data" => c.data = DataSource::parse(v)?,
                "out_dir" => c.out_dir = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key {other:?}; known keys: {}",
                        lineno + 1,
                        KEYS.join(", ")
                    )))
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Every field as `key = value` lines, readable by [`TrainConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("n_critic", self.n_critic.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("epochs", self.epochs.to_string());
        kv("max_generator_steps", self.max_generator_steps.to_string());
        kv("lambda_gp", self.lambda_gp.to_string());
        kv("z_dim", self.z_dim.to_string());
        kv("w_cls", self.w_cls.to_string());
        kv("lr", self.lr.to_string());
        kv("beta1", self.beta1.to_string());
        kv("beta2", self.beta2.to_string());
        kv("adam_eps", self.adam_eps.to_string());
        kv("g_channels", list(&self.g_channels));
        kv("d_channels", list(&self.d_channels));
        kv("q_channels", list(&self.q_channels));
        kv("init_seed", self.init_seed.to_string());
        kv("data_seed", self.data_seed.to_string());
        kv("latent_seed", self.latent_seed.to_string());
        kv("alpha_seed", self.alpha_seed.to_string());
        kv("sample_seed", self.sample_seed.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv("sample_every", self.sample_every.to_string());
        kv("samples_per_class", self.samples_per_class.to_string());
        kv("data", self.data.render());
        kv("out_dir", self.out_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        s
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_critic", self.n_critic),
            ("batch_size", self.batch_size),
            ("z_dim", self.z_dim),
            ("samples_per_class", self.samples_per_class),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if self.lambda_gp < 0.0 || !self.lambda_gp.is_finite() {
            return Err(Error::Config("lambda_gp must be a non-negative number".into()));
        }
        if self.w_cls < 0.0 || !self.w_cls.is_finite() {
            return Err(Error::Config("w_cls must be a non-negative number".into()));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::Config("lr must be positive".into()));
        }
        for (k, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{k} must be in [0, 1)")));
            }
        }
        if self.adam_eps <= 0.0 {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        for (k, ch) in [("g_channels", &self.g_channels), ("d_channels", &self.d_channels), ("q_channels", &self.q_channels)] {
            if ch.is_empty() || ch.contains(&0) {
                return Err(Error::Config(format!("{k} needs at least one positive width")));
            }
        }
        if self.generator_arch().image_size() != 32 {
            return Err(Error::Config(format!(
                "g_channels must have 3 stages for 32x32 output (got {})",
                self.g_channels.len()
            )));
        }
        for (k, ch) in [("d_channels", &self.d_channels), ("q_channels", &self.q_channels)] {
            if ch.len() > 5 {
                return Err(Error::Config(format!("{k}: at most 5 halving stages fit a 32x32 input")));
            }
        }
        if let DataSource::Synthetic { per_class: 0, .. } = self.data {
            return Err(Error::Config("synthetic data needs at least one icon per class".into()));
        }
        Ok(())
    }

    pub fn generator_arch(&self) -> GeneratorArch {
        GeneratorArch { z_dim: self.z_dim, channels: self.g_channels.clone(), base_size: 4 }
    }

    pub fn critic_arch(&self) -> TrunkArch {
        TrunkArch { image_size: 32, channels: self.d_channels.clone() }
    }

    pub fn classifier_arch(&self) -> TrunkArch {
        TrunkArch { image_size: 32, channels: self.q_channels.clone() }
    }
}
