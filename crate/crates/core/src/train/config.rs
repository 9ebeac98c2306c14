use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::bytes::hash64;
use crate::model::ModelConfig;
use crate::optim::AdamWConfig;

/// Where a fold's starting parameters come from.
#[derive(Clone, Debug, PartialEq)]
pub enum InitSource {
    Random,
    Weights(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub decay_norm_and_bias: bool,
    pub k: usize,
    pub seed: u64,
    pub dropout_p: f64,
    pub init: InitSource,
    /// LPIPS is computed on epochs (1-based) divisible by this.
    pub lpips_every: usize,
    pub lpips_weights: Option<PathBuf>,
    pub preset: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = AdamWConfig::default();
        Self {
            max_epochs: 20,
            patience: 3,
            batch_size: 16,
            lr: opt.lr,
            beta1: opt.beta1,
            beta2: opt.beta2,
            eps: opt.eps,
            weight_decay: opt.weight_decay,
            decay_norm_and_bias: opt.decay_norm_and_bias,
            k: 10,
            seed: 42,
            dropout_p: 0.3,
            init: InitSource::Random,
            lpips_every: 2,
            lpips_weights: None,
            preset: "tiny".into(),
        }
    }
}

pub const CONFIG_KEYS: [&str; 16] = [
    "max_epochs",
    "patience",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "weight_decay",
    "decay_norm_and_bias",
    "k",
    "seed",
    "dropout_p",
    "init",
    "lpips_every",
    "lpips_weights",
    "preset",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: {key} = {value:?} is not a valid value")))
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("line {line}: {key} must be true or false, got {value:?}"))),
    }
}

impl TrainConfig {
    /// Parse `key = value` lines; `#` starts a comment. Unset keys keep their
    /// defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected key = value, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "max_epochs" => c.max_epochs = parse_num(key, value, line)?,
                "patience" => c.patience = parse_num(key, value, line)?,
                "batch_size" => c.batch_size = parse_num(key, value, line)?,
                "lr" => c.lr = parse_num(key, value, line)?,
                "beta1" => c.beta1 = parse_num(key, value, line)?,
                "beta2" => c.beta2 = parse_num(key, value, line)?,
                "eps" => c.eps = parse_num(key, value, line)?,
                "weight_decay" => c.weight_decay = parse_num(key, value, line)?,
                "decay_norm_and_bias" => c.decay_norm_and_bias = parse_bool(key, value, line)?,
                "k" => c.k = parse_num(key, value, line)?,
                "seed" => c.seed = parse_num(key, value, line)?,
                "dropout_p" => c.dropout_p = parse_num(key, value, line)?,
                "init" => {
                    c.init = match value {
                        "random" => InitSource::Random,
                        path => InitSource::Weights(PathBuf::from(path)),
                    }
                }
                "lpips_every" => c.lpips_every = parse_num(key, value, line)?,
                "lpips_weights" => {
                    c.lpips_weights = match value {
                        "" | "none" => None,
                        path => Some(PathBuf::from(path)),
                    }
                }
                "preset" => c.preset = value.to_string(),
                other => {
                    return Err(Error::Config(format!(
                        "line {line}: unknown key {other:?}; valid keys: {}",
                        CONFIG_KEYS.join(", ")
                    )))
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form: every key, in [`CONFIG_KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let init = match &self.init {
            InitSource::Random => "random".to_string(),
            InitSource::Weights(p) => p.display().to_string(),
        };
        let lpips = self
            .lpips_weights
            .as_ref()
            .map_or_else(|| "none".to_string(), |p| p.display().to_string());
        let values = [
            self.max_epochs.to_string(),
            self.patience.to_string(),
            self.batch_size.to_string(),
            format!("{:?}", self.lr),
            format!("{:?}", self.beta1),
            format!("{:?}", self.beta2),
            format!("{:?}", self.eps),
            format!("{:?}", self.weight_decay),
            self.decay_norm_and_bias.to_string(),
            self.k.to_string(),
            self.seed.to_string(),
            format!("{:?}", self.dropout_p),
            init,
            self.lpips_every.to_string(),
            lpips,
            self.preset.clone(),
        ];
        for (k, v) in CONFIG_KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Fingerprint of every setting; checkpoints only resume under an equal hash.
    pub fn hash(&self) -> u64 {
        hash64(self.to_text().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.max_epochs == 0 {
            return bad("max_epochs must be ≥ 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be ≥ 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1".into());
        }
        if self.k < 2 {
            return bad(format!("k must be ≥ 2, got {}", self.k));
        }
        if self.lpips_every == 0 {
            return bad("lpips_every must be ≥ 1".into());
        }
        self.optimizer().validate()?;
        self.model_config()?.validate()
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
            decay_norm_and_bias: self.decay_norm_and_bias,
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        Ok(ModelConfig::preset(&self.preset)?.with_dropout(self.dropout_p))
    }
}
