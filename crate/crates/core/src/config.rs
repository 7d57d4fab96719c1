//! Experiment configuration.
//!
//! Files are flat key/value TOML with dotted section keys, e.g.
//!
//! ```toml
//! seed = 7
//! strategy = "atsssf_static"
//! dataset.concentration = "iid"
//! adversaries.count = 2
//! adversaries.behavior = "label_flip:1.0"
//! ```
//!
//! `[section]` tables are accepted too and flatten to the same keys. Unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Behavior, GeneratorParams, DEFAULT_SMOTE_K};
use crate::error::{Error, Result};
use crate::federation::StrategyKind;
use crate::model::{AdamState, LayerLayout, TrainOptions};
use crate::participation::{DEFAULT_MAX_OMISSIONS, DEFAULT_TAU};
use crate::smoothing::{DEFAULT_ALPHA_FLOOR, DEFAULT_VARIANCE_THRESHOLD, STATIC_ALPHA};

pub const DESK_CLIENTS: usize = 10;
pub const DESK_ROUNDS: usize = 50;
pub const FULL_CLIENTS: usize = 100;
pub const FULL_ROUNDS: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_per_class: usize,
    pub bins: usize,
    pub noise: f64,
    pub peak_jitter: f64,
    /// Dirichlet concentration; `None` deals every class evenly (IID).
    pub concentration: Option<f64>,
    pub smote_k: usize,
    pub test_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let g = GeneratorParams::default();
        // ~110 validation samples per client at desk scale keeps honest
        // clients' trust scores stable enough to stay above tau
        Self {
            n_per_class: 1000,
            bins: g.bins,
            noise: g.noise,
            peak_jitter: g.peak_jitter,
            concentration: None,
            smote_k: DEFAULT_SMOTE_K,
            test_fraction: 0.2,
        }
    }
}

impl DatasetConfig {
    pub fn generator(&self) -> GeneratorParams {
        GeneratorParams {
            n_per_class: self.n_per_class,
            bins: self.bins,
            noise: self.noise,
            peak_jitter: self.peak_jitter,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub count: usize,
    pub behavior: Behavior,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        Self {
            count: 0,
            behavior: Behavior::LabelFlip { fraction: 1.0 },
        }
    }
}

impl std::str::FromStr for AdversarySpec {
    type Err = String;

    /// `COUNT` or `COUNT:BEHAVIOUR[:PARAM]`, e.g. `2:label_flip:1.0`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (count, rest) = match s.split_once(':') {
            Some((c, r)) => (c, Some(r)),
            None => (s, None),
        };
        let count = count
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("bad adversary count `{count}`"))?;
        let behavior = match rest {
            Some(r) => r.parse()?,
            None => AdversarySpec::default().behavior,
        };
        Ok(Self { count, behavior })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: LayerLayout::DEFAULT_HIDDEN.to_vec(),
            dropout: LayerLayout::DEFAULT_DROPOUT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    /// Fraction of clients selected per round.
    pub participation: f64,
    /// Train clients on the rayon pool; results are identical either way.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: AdamState::DEFAULT_LR,
            batch_size: 16,
            local_epochs: 1,
            participation: 1.0,
            parallel: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub clients: usize,
    pub rounds: usize,
    pub strategy: StrategyKind,
    pub tau: f64,
    pub m: usize,
    pub alpha_init: f64,
    pub variance_threshold: f64,
    pub alpha_floor: f64,
    pub criteria_weights: [f64; 4],
    pub dataset: DatasetConfig,
    pub adversaries: AdversarySpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            clients: DESK_CLIENTS,
            rounds: DESK_ROUNDS,
            strategy: StrategyKind::AtsssfAdaptive,
            tau: DEFAULT_TAU,
            m: DEFAULT_MAX_OMISSIONS,
            alpha_init: STATIC_ALPHA,
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            alpha_floor: DEFAULT_ALPHA_FLOOR,
            criteria_weights: [0.25; 4],
            dataset: DatasetConfig::default(),
            adversaries: AdversarySpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::config(key, "expected a number")),
    }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(Error::config(key, "expected a non-negative integer")),
    }
}

fn as_str<'a>(key: &str, v: &'a toml::Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::config(key, "expected a string"))
}

fn as_bool(key: &str, v: &toml::Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| Error::config(key, "expected true or false"))
}

impl ExperimentConfig {
    /// Parse configuration text; unset keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        let mut entries = Vec::new();
        flatten("", &table, &mut entries);
        let mut config = Self::default();
        // scale first so explicit keys override it
        if let Some(pos) = entries.iter().position(|(k, _)| k == "scale") {
            let (key, value) = entries.remove(pos);
            config.set(&key, &value)?;
        }
        for (key, value) in &entries {
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Set one dotted key.
    pub fn set(&mut self, key: &str, v: &toml::Value) -> Result<()> {
        match key {
            "scale" => match as_str(key, v)? {
                "desk" => {
                    self.clients = DESK_CLIENTS;
                    self.rounds = DESK_ROUNDS;
                }
                "full" => {
                    self.clients = FULL_CLIENTS;
                    self.rounds = FULL_ROUNDS;
                }
                other => return Err(Error::config(key, format!("expected desk or full, got `{other}`"))),
            },
            "seed" => self.seed = as_usize(key, v)? as u64,
            "clients" => self.clients = as_usize(key, v)?,
            "rounds" => self.rounds = as_usize(key, v)?,
            "strategy" => {
                self.strategy = as_str(key, v)?
                    .parse()
                    .map_err(|e: String| Error::config(key, e))?
            }
            "tau" => self.tau = as_f64(key, v)?,
            "m" => self.m = as_usize(key, v)?,
            "alpha_init" => self.alpha_init = as_f64(key, v)?,
            "smoother.variance_threshold" => self.variance_threshold = as_f64(key, v)?,
            "smoother.alpha_floor" => self.alpha_floor = as_f64(key, v)?,
            "criteria.weights" => {
                let arr = v
                    .as_array()
                    .ok_or_else(|| Error::config(key, "expected an array of 4 numbers"))?;
                if arr.len() != 4 {
                    return Err(Error::config(key, "expected exactly 4 weights"));
                }
                for (slot, item) in self.criteria_weights.iter_mut().zip(arr) {
                    *slot = as_f64(key, item)?;
                }
            }
            "dataset.n_per_class" => self.dataset.n_per_class = as_usize(key, v)?,
            "dataset.bins" => self.dataset.bins = as_usize(key, v)?,
            "dataset.noise" => self.dataset.noise = as_f64(key, v)?,
            "dataset.peak_jitter" => self.dataset.peak_jitter = as_f64(key, v)?,
            "dataset.concentration" => {
                self.dataset.concentration = match v {
                    toml::Value::String(s) if s == "iid" => None,
                    other => Some(as_f64(key, other)?),
                }
            }
            "dataset.smote_k" => self.dataset.smote_k = as_usize(key, v)?,
            "dataset.test_fraction" => self.dataset.test_fraction = as_f64(key, v)?,
            "adversaries.count" => self.adversaries.count = as_usize(key, v)?,
            "adversaries.behavior" => {
                self.adversaries.behavior = as_str(key, v)?
                    .parse()
                    .map_err(|e: String| Error::config(key, e))?
            }
            "model.hidden" => {
                let arr = v
                    .as_array()
                    .ok_or_else(|| Error::config(key, "expected an array of widths"))?;
                self.model.hidden = arr.iter().map(|w| as_usize(key, w)).collect::<Result<_>>()?;
            }
            "model.dropout" => self.model.dropout = as_f64(key, v)?,
            "train.lr" => self.train.lr = as_f64(key, v)?,
            "train.batch_size" => self.train.batch_size = as_usize(key, v)?,
            "train.local_epochs" => self.train.local_epochs = as_usize(key, v)?,
            "train.participation" => self.train.participation = as_f64(key, v)?,
            "train.parallel" => self.train.parallel = as_bool(key, v)?,
            "output.dir" => self.out_dir = PathBuf::from(as_str(key, v)?),
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, reason: &str| Err(Error::config(key, reason));
        if self.clients == 0 {
            return fail("clients", "must be >= 1");
        }
        // tau = 0 is allowed and means "never omit"
        if !(0.0..1.0).contains(&self.tau) {
            return fail("tau", "must be in [0, 1)");
        }
        if !(self.alpha_init > 0.0 && self.alpha_init <= 1.0) {
            return fail("alpha_init", "must be in (0, 1]");
        }
        if !(self.variance_threshold >= 0.0 && self.variance_threshold.is_finite()) {
            return fail("smoother.variance_threshold", "must be >= 0");
        }
        if !(self.alpha_floor > 0.0 && self.alpha_floor <= self.alpha_init) {
            return fail("smoother.alpha_floor", "must be in (0, alpha_init]");
        }
        crate::topsis::CriteriaWeights::new(self.criteria_weights)
            .map_err(|e| Error::config("criteria.weights", e.to_string()))?;
        if self.adversaries.count > self.clients {
            return fail("adversaries.count", "cannot exceed clients");
        }
        let d = &self.dataset;
        if d.n_per_class == 0 {
            return fail("dataset.n_per_class", "must be >= 1");
        }
        if d.bins < 2 {
            return fail("dataset.bins", "must be >= 2");
        }
        if !(d.noise >= 0.0 && d.noise.is_finite()) {
            return fail("dataset.noise", "must be >= 0");
        }
        if !(d.peak_jitter >= 0.0 && d.peak_jitter.is_finite()) {
            return fail("dataset.peak_jitter", "must be >= 0");
        }
        if let Some(c) = d.concentration {
            if !(c > 0.0 && c.is_finite()) {
                return fail("dataset.concentration", "must be > 0 or \"iid\"");
            }
        }
        if d.smote_k == 0 {
            return fail("dataset.smote_k", "must be >= 1");
        }
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            return fail("dataset.test_fraction", "must be in (0, 1)");
        }
        if self.model.hidden.contains(&0) {
            return fail("model.hidden", "widths must be >= 1");
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return fail("model.dropout", "must be in [0, 1)");
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return fail("train.lr", "must be > 0");
        }
        if self.train.batch_size == 0 {
            return fail("train.batch_size", "must be >= 1");
        }
        if !(self.train.participation > 0.0 && self.train.participation <= 1.0) {
            return fail("train.participation", "must be in (0, 1]");
        }
        Ok(())
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.train.local_epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
        }
    }
}
