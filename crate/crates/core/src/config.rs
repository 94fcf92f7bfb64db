//! Run configuration: flat `key = value` text with precedence
//! command-line flag > config file > built-in default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::layers::QuantumGrad;
use crate::models::{ModelKind, BENIGN, MALIGNANT};

/// Environment variable naming the default dataset archive.
pub const DATA_ENV: &str = "QFUSION_DATA";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    /// Optimizer base rate; the schedule sets the rate actually applied.
    pub lr: f64,
    pub max_lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip: f64,
    pub smoothing: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub warmup: f64,
    pub div_factor: f64,
    pub final_div: f64,
    pub positive_class: usize,
    pub swap_labels: bool,
    pub quantum_grad: QuantumGrad,
    /// Use only the first N training samples (0 = all).
    pub train_limit: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Hybrid,
            seed: 0,
            data: std::env::var_os(DATA_ENV).map(PathBuf::from),
            out: PathBuf::from("runs"),
            lr: 0.001,
            max_lr: 0.002,
            batch: 16,
            max_epochs: 80,
            patience: 25,
            clip: 1.0,
            smoothing: 0.1,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            warmup: 0.3,
            div_factor: 25.0,
            final_div: 1e4,
            positive_class: BENIGN,
            swap_labels: false,
            quantum_grad: QuantumGrad::Adjoint,
            train_limit: 0,
        }
    }
}

fn class_name(c: usize) -> &'static str {
    if c == MALIGNANT {
        "malignant"
    } else {
        "benign"
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 22] = [
        "model",
        "seed",
        "data",
        "out",
        "lr",
        "max_lr",
        "batch",
        "max_epochs",
        "patience",
        "clip",
        "smoothing",
        "weight_decay",
        "beta1",
        "beta2",
        "adam_eps",
        "warmup",
        "div_factor",
        "final_div",
        "positive_class",
        "swap_labels",
        "quantum_grad",
        "train_limit",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        }
        let v = value.trim();
        match key.trim() {
            "model" => self.model = ModelKind::parse(v)?,
            "seed" => self.seed = num(key, v)?,
            "data" => self.data = Some(PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "lr" => self.lr = num(key, v)?,
            "max_lr" => self.max_lr = num(key, v)?,
            "batch" => self.batch = num(key, v)?,
            "max_epochs" => self.max_epochs = num(key, v)?,
            "patience" => self.patience = num(key, v)?,
            "clip" => self.clip = num(key, v)?,
            "smoothing" => self.smoothing = num(key, v)?,
            "weight_decay" => self.weight_decay = num(key, v)?,
            "beta1" => self.beta1 = num(key, v)?,
            "beta2" => self.beta2 = num(key, v)?,
            "adam_eps" => self.adam_eps = num(key, v)?,
            "warmup" => self.warmup = num(key, v)?,
            "div_factor" => self.div_factor = num(key, v)?,
            "final_div" => self.final_div = num(key, v)?,
            "positive_class" => {
                self.positive_class = match v {
                    "benign" | "1" => BENIGN,
                    "malignant" | "0" => MALIGNANT,
                    _ => return Err(Error::Config(format!("positive_class: expected benign or malignant, got {v:?}"))),
                }
            }
            "swap_labels" => self.swap_labels = num(key, v)?,
            "quantum_grad" => self.quantum_grad = QuantumGrad::parse(v)?,
            "train_limit" => self.train_limit = num(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if !(self.max_lr > 0.0 && self.div_factor > 0.0 && self.final_div > 0.0) {
            return bad("max_lr, div_factor and final_div must be positive");
        }
        if !(0.0..1.0).contains(&self.warmup) || self.warmup == 0.0 {
            return bad("warmup must lie in (0, 1)");
        }
        if self.clip <= 0.0 {
            return bad("clip must be positive");
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return bad("smoothing must lie in [0, 1)");
        }
        Ok(())
    }

    /// Every setting as text, in a form [`RunConfig::set`] reads back.
    pub fn entries(&self) -> BTreeMap<String, String> {
        let f = |v: f64| format!("{v:?}");
        let values = [
            self.model.name().to_string(),
            self.seed.to_string(),
            self.data.as_ref().map_or(String::new(), |p| p.display().to_string()),
            self.out.display().to_string(),
            f(self.lr),
            f(self.max_lr),
            self.batch.to_string(),
            self.max_epochs.to_string(),
            self.patience.to_string(),
            f(self.clip),
            f(self.smoothing),
            f(self.weight_decay),
            f(self.beta1),
            f(self.beta2),
            f(self.adam_eps),
            f(self.warmup),
            f(self.div_factor),
            f(self.final_div),
            class_name(self.positive_class).to_string(),
            self.swap_labels.to_string(),
            self.quantum_grad.name().to_string(),
            self.train_limit.to_string(),
        ];
        Self::KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
