//! Flat `key = value` run configuration with field-checked parsing.
//!
//! A config file holds one assignment per line (`#` comments and blank lines
//! allowed); the same `key=value` syntax is accepted on the command line as
//! overrides applied on top of the file. Every field rejects out-of-range
//! values with an error naming the offending key, and a resolved snapshot can
//! be written back out for reproducibility.

use crate::error::{Error, Result};
use crate::frontier::{Chronology, Regime};
use crate::params::{Activation, Dims};
use crate::timeenc::TimeCodecMode;
use crate::train::TrainConfig;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // model
    pub d: usize,
    pub d_a: usize,
    pub num_steps: usize,
    pub shared_relations: bool,
    pub time_mode: TimeCodecMode,
    /// 0 means: infer the span from the dataset's largest timestamp.
    pub time_span: f64,
    pub activation: Activation,
    pub init_seed: u64,
    // training
    pub regime: Regime,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dropout: f64,
    pub fact_fraction: f64,
    pub val_every: usize,
    pub patience: usize,
    pub seed: u64,
    // frontier
    pub self_loops: bool,
    /// 0 means unlimited out-degree per frontier node.
    pub degree_cap: usize,
    pub chronology: Chronology,
    pub freeze_attention: bool,
    /// 0 means: let the worker pool pick its default size.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            d: 128,
            d_a: 5,
            num_steps: 5,
            shared_relations: false,
            time_mode: TimeCodecMode::PerDimension,
            time_span: 0.0,
            activation: Activation::Identity,
            init_seed: 1,
            regime: Regime::Interpolation,
            epochs: 20,
            batch_size: 10,
            lr: 3e-4,
            dropout: 0.2,
            fact_fraction: 0.75,
            val_every: 1,
            patience: 3,
            seed: 0,
            self_loops: true,
            degree_cap: 0,
            chronology: Chronology::Relaxed,
            freeze_attention: false,
            threads: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("expected {what}, got `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::config(
            key,
            format!("expected true|false, got `{other}`"),
        )),
    }
}

impl RunConfig {
    /// Apply one `key = value` assignment, validating the value's range.
    /// A rejected assignment leaves the configuration unchanged.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let mut next = self.clone();
        next.apply_unchecked(key, value)?;
        *self = next;
        Ok(())
    }

    fn apply_unchecked(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        match key {
            "d" => {
                self.d = parse_num(key, value, "a positive integer")?;
                if self.d == 0 {
                    return Err(Error::config(key, "hidden width must be positive"));
                }
            }
            "d_a" => {
                self.d_a = parse_num(key, value, "a positive integer")?;
                if self.d_a == 0 {
                    return Err(Error::config(key, "attention width must be positive"));
                }
            }
            "num_steps" => {
                self.num_steps = parse_num(key, value, "a positive integer")?;
                if self.num_steps == 0 {
                    return Err(Error::config(key, "at least one expansion step is required"));
                }
            }
            "shared_relations" => self.shared_relations = parse_bool(key, value)?,
            "time_mode" => self.time_mode = value.parse()?,
            "time_span" => {
                self.time_span = parse_num(key, value, "a non-negative number")?;
                if !self.time_span.is_finite() || self.time_span < 0.0 {
                    return Err(Error::config(key, "span must be finite and non-negative"));
                }
            }
            "activation" => self.activation = value.parse()?,
            "init_seed" => self.init_seed = parse_num(key, value, "an unsigned integer")?,
            "regime" => self.regime = value.parse()?,
            "epochs" => {
                self.epochs = parse_num(key, value, "a positive integer")?;
                if self.epochs == 0 {
                    return Err(Error::config(key, "at least one epoch is required"));
                }
            }
            "batch_size" => {
                self.batch_size = parse_num(key, value, "a positive integer")?;
                if self.batch_size == 0 {
                    return Err(Error::config(key, "batch size must be positive"));
                }
            }
            "lr" => {
                self.lr = parse_num(key, value, "a positive number")?;
                if !(self.lr.is_finite() && self.lr > 0.0) {
                    return Err(Error::config(key, "learning rate must be positive and finite"));
                }
            }
            "dropout" => {
                self.dropout = parse_num(key, value, "a number in [0, 1)")?;
                if !(self.dropout >= 0.0 && self.dropout < 1.0) {
                    return Err(Error::config(key, "dropout must lie in [0, 1)"));
                }
            }
            "fact_fraction" => {
                self.fact_fraction = parse_num(key, value, "a number in (0, 1)")?;
                if !(self.fact_fraction > 0.0 && self.fact_fraction < 1.0) {
                    return Err(Error::config(key, "fact fraction must lie in (0, 1)"));
                }
            }
            "val_every" => self.val_every = parse_num(key, value, "a non-negative integer")?,
            "patience" => self.patience = parse_num(key, value, "a non-negative integer")?,
            "seed" => self.seed = parse_num(key, value, "an unsigned integer")?,
            "self_loops" => self.self_loops = parse_bool(key, value)?,
            "degree_cap" => self.degree_cap = parse_num(key, value, "a non-negative integer")?,
            "chronology" => self.chronology = value.parse()?,
            "freeze_attention" => self.freeze_attention = parse_bool(key, value)?,
            "threads" => self.threads = parse_num(key, value, "a non-negative integer")?,
            other => {
                return Err(Error::config(
                    other,
                    "unknown configuration key",
                ))
            }
        }
        Ok(())
    }

    /// Apply a sequence of `key=value` override strings.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (key, value) = o.split_once('=').ok_or_else(|| {
                Error::config("override", format!("expected key=value, got `{o}`"))
            })?;
            self.apply(key, value)?;
        }
        Ok(())
    }

    /// Parse a full config file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    "config",
                    format!("line {}: expected key = value, got `{line}`", lineno + 1),
                )
            })?;
            cfg.apply(key, value)?;
        }
        Ok(cfg)
    }

    /// Render the resolved configuration back to config-file syntax.
    pub fn snapshot(&self) -> String {
        format!(
            "d = {}\n\
             d_a = {}\n\
             num_steps = {}\n\
             shared_relations = {}\n\
             time_mode = {}\n\
             time_span = {}\n\
             activation = {}\n\
             init_seed = {}\n\
             regime = {}\n\
             epochs = {}\n\
             batch_size = {}\n\
             lr = {}\n\
             dropout = {}\n\
             fact_fraction = {}\n\
             val_every = {}\n\
             patience = {}\n\
             seed = {}\n\
             self_loops = {}\n\
             degree_cap = {}\n\
             chronology = {}\n\
             freeze_attention = {}\n\
             threads = {}\n",
            self.d,
            self.d_a,
            self.num_steps,
            self.shared_relations,
            self.time_mode,
            self.time_span,
            self.activation,
            self.init_seed,
            self.regime,
            self.epochs,
            self.batch_size,
            self.lr,
            self.dropout,
            self.fact_fraction,
            self.val_every,
            self.patience,
            self.seed,
            self.self_loops,
            self.degree_cap,
            self.chronology,
            self.freeze_attention,
            self.threads,
        )
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.snapshot()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn dims(&self, num_base_relations: usize) -> Dims {
        Dims {
            d: self.d,
            d_a: self.d_a,
            num_steps: self.num_steps,
            num_base_relations,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            regime: self.regime,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            dropout: self.dropout,
            activation: self.activation,
            fact_fraction: self.fact_fraction,
            self_loops: self.self_loops,
            degree_cap: self.degree_cap_option(),
            chronology: self.chronology,
            freeze_attention: self.freeze_attention,
            seed: self.seed,
            val_every: self.val_every,
            patience: self.patience,
        }
    }

    pub fn degree_cap_option(&self) -> Option<usize> {
        if self.degree_cap == 0 {
            None
        } else {
            Some(self.degree_cap)
        }
    }

    /// The time span used for frequency initialization: the configured value,
    /// or the dataset's largest timestamp when left at 0.
    pub fn resolved_span(&self, max_time: i64) -> f64 {
        if self.time_span > 0.0 {
            self.time_span
        } else {
            max_time.max(1) as f64
        }
    }
}
