//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Adversary parameters
//! use the `adversary.` prefix, e.g. `adversary.bit = 1`. Real-valued keys
//! accept decimals and fractions such as `2/3`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use fpc_core::adversary::AdversarySpec;
use fpc_core::chain::fmt_float;
use fpc_core::fpc::{FpcParams, InitMode, Sampling};
use fpc_core::randomness::{ThresholdMode, ThresholdRule};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {reason}")]
    Value { key: String, reason: String },
    #[error("missing required field `{0}`")]
    Missing(&'static str),
}

/// Inclusive arithmetic grid `start:stop:step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self, String> {
        let parts: Vec<&str> = text.split(':').collect();
        let (start, stop, step) = match parts.as_slice() {
            [x] => {
                let x = parse_real(x)?;
                (x, x, 1.0)
            }
            [a, b, s] => (parse_real(a)?, parse_real(b)?, parse_real(s)?),
            _ => return Err(format!("expected start:stop:step, got `{text}`")),
        };
        if !(step > 0.0) || stop < start {
            return Err(format!("empty or invalid grid `{text}`"));
        }
        Ok(Self { start, stop, step })
    }

    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        // Round to 12 decimals so 0.1 + 2 * 0.05 prints as 0.2.
        (0..count)
            .map(|i| ((self.start + i as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }

    fn canonical(&self) -> String {
        format!("{}:{}:{}", fmt_float(self.start), fmt_float(self.stop), fmt_float(self.step))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: FpcParams,
    pub adversary: AdversarySpec,
    pub runs: usize,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub q_grid: Grid,
    pub beta_grid: Grid,
    pub buckets: usize,
    theta: f64,
    rule: ThresholdRule,
    delta: f64,
    degraded: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: FpcParams::default(),
            adversary: AdversarySpec::named("none"),
            runs: 100,
            seed: None,
            out_dir: None,
            workers: None,
            q_grid: Grid { start: 0.0, stop: 0.5, step: 0.05 },
            beta_grid: Grid { start: 0.0, stop: 0.5, step: 0.05 },
            buckets: 20,
            theta: 1.0,
            rule: ThresholdRule::Fixed(0.5),
            delta: 0.0,
            degraded: false,
        }
    }
}

pub fn parse_real(text: &str) -> Result<f64, String> {
    let value = match text.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| format!("not a number: `{text}`"))?;
            let den: f64 = den.trim().parse().map_err(|_| format!("not a number: `{text}`"))?;
            if den == 0.0 {
                return Err(format!("zero denominator in `{text}`"));
            }
            num / den
        }
        None => text.parse().map_err(|_| format!("not a number: `{text}`"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("not a finite number: `{text}`"))
    }
}

fn parse_int<T: std::str::FromStr>(text: &str) -> Result<T, String> {
    text.parse().map_err(|_| format!("not a nonnegative integer: `{text}`"))
}

impl RunConfig {
    /// Parses config text on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: line.to_string(),
            })?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Applies an override of the form `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (key, value) = pair.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: pair.to_string(),
        })?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: String| ConfigError::Value {
            key: key.to_string(),
            reason,
        };
        if let Some(param) = key.strip_prefix("adversary.") {
            if param.is_empty() {
                return Err(ConfigError::UnknownKey(key.to_string()));
            }
            self.adversary.params.insert(param.to_string(), value.to_string());
            return Ok(());
        }
        let p = &mut self.params;
        match key {
            "n" => p.n = parse_int(value).map_err(bad)?,
            "k" => p.k = parse_int(value).map_err(bad)?,
            "a" => p.a = parse_real(value).map_err(bad)?,
            "b" => p.b = parse_real(value).map_err(bad)?,
            "beta" => p.beta = parse_real(value).map_err(bad)?,
            "m0" => p.m0 = parse_int(value).map_err(bad)?,
            "ell" => p.ell = parse_int(value).map_err(bad)?,
            "delta_max" => p.delta_max = parse_int(value).map_err(bad)?,
            "initial_ones_fraction" => p.initial_ones_fraction = parse_real(value).map_err(bad)?,
            "q" => p.q = parse_real(value).map_err(bad)?,
            "sampling" => {
                p.sampling = match value {
                    "with_replacement" => Sampling::WithReplacement,
                    "without_replacement" => Sampling::WithoutReplacement,
                    _ => return Err(bad("expected with_replacement or without_replacement".into())),
                }
            }
            "init" => {
                p.init = match value {
                    "deterministic" => InitMode::Deterministic,
                    "random" => InitMode::Random,
                    _ => return Err(bad("expected deterministic or random".into())),
                }
            }
            "threshold_mode" => {
                self.degraded = match value {
                    "ideal" => false,
                    "degraded" => true,
                    _ => return Err(bad("expected ideal or degraded".into())),
                }
            }
            "theta" => self.theta = parse_real(value).map_err(bad)?,
            "rule" => self.rule = ThresholdRule::parse(value).map_err(|e| bad(e.to_string()))?,
            "delta" => self.delta = parse_real(value).map_err(bad)?,
            "adversary" => self.adversary.name = value.to_string(),
            "runs" => self.runs = parse_int(value).map_err(bad)?,
            "seed" => self.seed = Some(parse_int(value).map_err(bad)?),
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "workers" => self.workers = Some(parse_int(value).map_err(bad)?),
            "q_grid" => self.q_grid = Grid::parse(value).map_err(bad)?,
            "beta_grid" => self.beta_grid = Grid::parse(value).map_err(bad)?,
            "buckets" => self.buckets = parse_int(value).map_err(bad)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        self.params.threshold_mode = if self.degraded {
            ThresholdMode::Degraded {
                theta: self.theta,
                rule: self.rule,
                delta: self.delta,
            }
        } else {
            ThresholdMode::Ideal
        };
        Ok(())
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or(ConfigError::Missing("seed"))
    }

    /// Every key with its resolved value. `out_dir` and `workers` describe
    /// where and how a study runs, not what it computes, and are left out.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let p = &self.params;
        let mut out = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            out.insert(k.to_string(), v);
        };
        put("n", p.n.to_string());
        put("k", p.k.to_string());
        put("a", fmt_float(p.a));
        put("b", fmt_float(p.b));
        put("beta", fmt_float(p.beta));
        put("m0", p.m0.to_string());
        put("ell", p.ell.to_string());
        put("delta_max", p.delta_max.to_string());
        put("initial_ones_fraction", fmt_float(p.initial_ones_fraction));
        put("q", fmt_float(p.q));
        put(
            "sampling",
            match p.sampling {
                Sampling::WithReplacement => "with_replacement",
                Sampling::WithoutReplacement => "without_replacement",
            }
            .into(),
        );
        put(
            "init",
            match p.init {
                InitMode::Deterministic => "deterministic",
                InitMode::Random => "random",
            }
            .into(),
        );
        put("threshold_mode", if self.degraded { "degraded" } else { "ideal" }.into());
        put("theta", fmt_float(self.theta));
        put("rule", self.rule.name());
        put("delta", fmt_float(self.delta));
        put("adversary", self.adversary.name.clone());
        put("runs", self.runs.to_string());
        if let Some(seed) = self.seed {
            put("seed", seed.to_string());
        }
        put("q_grid", self.q_grid.canonical());
        put("beta_grid", self.beta_grid.canonical());
        put("buckets", self.buckets.to_string());
        for (k, v) in &self.adversary.params {
            out.insert(format!("adversary.{k}"), v.clone());
        }
        out
    }
}
