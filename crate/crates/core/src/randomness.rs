//! Seeded random streams: decision thresholds, query sampling and the
//! degraded common-coin model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stream identifiers inside one run. Each run seed feeds several
/// independent ChaCha streams so that, for instance, drawing an extra
/// freshness coin never shifts the query samples.
pub mod stream {
    pub const THRESHOLDS: u64 = 1;
    pub const FRESHNESS: u64 = 2;
    pub const QUERIES: u64 = 3;
    pub const ADVERSARY: u64 = 4;
    pub const INIT: u64 = 5;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based derivation of per-run seeds from a master seed.
///
/// `derive` is a bijection of the run index for a fixed master seed, so
/// distinct runs always receive distinct seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSchedule {
    pub master: u64,
}

impl SeedSchedule {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn derive(&self, run_index: u64) -> u64 {
        splitmix64(self.master.wrapping_add(run_index.wrapping_mul(GOLDEN)))
    }

    /// ChaCha8 generator for `(seed, stream)`.
    pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RandomnessError {
    #[error("unknown threshold rule `{0}` (expected half, fixed:<v> or median_eta)")]
    UnknownRule(String),
    #[error("theta must lie in [0, 1], got {0}")]
    Theta(f64),
    #[error("delta must lie in [0, 1], got {0}")]
    Delta(f64),
}

/// Value the adversary commits to for rounds in which the common coin is
/// not fresh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum ThresholdRule {
    Fixed(f64),
    /// Median of the honest η values of the round, which is where a split
    /// population is hardest to tip over.
    MedianEta,
}

impl ThresholdRule {
    pub fn parse(text: &str) -> Result<Self, RandomnessError> {
        match text {
            "half" => Ok(Self::Fixed(0.5)),
            "median_eta" => Ok(Self::MedianEta),
            other => other
                .strip_prefix("fixed:")
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .map(Self::Fixed)
                .ok_or_else(|| RandomnessError::UnknownRule(other.to_string())),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Fixed(v) if *v == 0.5 => "half".into(),
            Self::Fixed(v) => format!("fixed:{v}"),
            Self::MedianEta => "median_eta".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ThresholdMode {
    Ideal,
    /// With probability `theta` a fresh uniform, otherwise the adversary's
    /// committed value. `delta` is the fraction of honest nodes that never
    /// see the common value and use the adversary's value instead
    /// (experimental).
    Degraded {
        theta: f64,
        rule: ThresholdRule,
        delta: f64,
    },
}

impl ThresholdMode {
    pub fn validate(&self) -> Result<(), RandomnessError> {
        if let Self::Degraded { theta, delta, .. } = *self {
            if !(0.0..=1.0).contains(&theta) {
                return Err(RandomnessError::Theta(theta));
            }
            if !(0.0..=1.0).contains(&delta) {
                return Err(RandomnessError::Delta(delta));
            }
        }
        Ok(())
    }
}

/// Outcome of one round's threshold draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDraw {
    pub value: f64,
    /// `Some(fresh)` in degraded mode.
    pub fresh: Option<bool>,
    /// Adversary's committed value in degraded mode, clamped to the round's
    /// interval.
    pub committed: Option<f64>,
}

/// Threshold laws: `U_1 ~ Unif[a, b]` and `U_t ~ Unif[beta, 1 - beta]` for
/// `t >= 2`, all independent.
#[derive(Debug, Clone)]
pub struct ThresholdSource {
    a: f64,
    b: f64,
    beta: f64,
    mode: ThresholdMode,
    uniforms: ChaCha8Rng,
    coins: ChaCha8Rng,
}

impl ThresholdSource {
    pub fn new(a: f64, b: f64, beta: f64, mode: ThresholdMode, seed: u64) -> Self {
        Self {
            a,
            b,
            beta,
            mode,
            uniforms: SeedSchedule::rng(seed, stream::THRESHOLDS),
            coins: SeedSchedule::rng(seed, stream::FRESHNESS),
        }
    }

    pub fn mode(&self) -> ThresholdMode {
        self.mode
    }

    /// Interval the threshold of `round` lives in.
    pub fn interval(&self, round: usize) -> (f64, f64) {
        if round <= 1 {
            (self.a, self.b)
        } else {
            (self.beta, 1.0 - self.beta)
        }
    }

    /// Fresh threshold for `round` (1-based) under the ideal law.
    pub fn next_threshold(&mut self, round: usize) -> f64 {
        let (lo, hi) = self.interval(round);
        if lo == hi {
            return lo;
        }
        let u: f64 = self.uniforms.gen();
        (lo + (hi - lo) * u).clamp(lo, hi)
    }

    /// Degraded-mode draw. The adversary's value is committed before the
    /// freshness coin is flipped; it is clamped to the round's interval.
    pub fn degraded_threshold(&mut self, round: usize, theta: f64, committed: f64) -> ThresholdDraw {
        let (lo, hi) = self.interval(round);
        let committed = committed.clamp(lo, hi);
        let fresh = self.coins.gen_bool(theta);
        let value = if fresh {
            self.next_threshold(round)
        } else {
            committed
        };
        ThresholdDraw {
            value,
            fresh: Some(fresh),
            committed: Some(committed),
        }
    }

    /// Draw for `round` in whatever mode the source is in. `commit` is only
    /// called in degraded mode.
    pub fn draw(&mut self, round: usize, commit: impl FnOnce() -> f64) -> ThresholdDraw {
        match self.mode {
            ThresholdMode::Ideal => ThresholdDraw {
                value: self.next_threshold(round),
                fresh: None,
                committed: None,
            },
            ThresholdMode::Degraded { theta, .. } => {
                let value = commit();
                self.degraded_threshold(round, theta, value)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_distinct_and_pure() {
        let s = SeedSchedule::new(7);
        let seeds: std::collections::BTreeSet<_> = (0..10_000).map(|i| s.derive(i)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert_eq!(s.derive(5), SeedSchedule::new(7).derive(5));
        assert_ne!(s.derive(5), SeedSchedule::new(8).derive(5));
    }

    #[test]
    fn deterministic_first_threshold() {
        let mut src = ThresholdSource::new(2.0 / 3.0, 2.0 / 3.0, 0.5, ThresholdMode::Ideal, 1);
        assert_eq!(src.next_threshold(1), 2.0 / 3.0);
        for t in 2..50 {
            assert_eq!(src.next_threshold(t), 0.5);
        }
    }

    #[test]
    fn thresholds_stay_in_interval() {
        let mut src = ThresholdSource::new(0.2, 0.9, 0.3, ThresholdMode::Ideal, 11);
        let u1 = src.next_threshold(1);
        assert!((0.2..=0.9).contains(&u1));
        for t in 2..2000 {
            let u = src.next_threshold(t);
            assert!((0.3..=0.7).contains(&u));
        }
    }

    #[test]
    fn degraded_with_theta_one_matches_ideal() {
        let mode = ThresholdMode::Degraded {
            theta: 1.0,
            rule: ThresholdRule::Fixed(0.5),
            delta: 0.0,
        };
        let mut ideal = ThresholdSource::new(0.5, 0.8, 0.3, ThresholdMode::Ideal, 99);
        let mut degraded = ThresholdSource::new(0.5, 0.8, 0.3, mode, 99);
        for t in 1..200 {
            let d = degraded.draw(t, || 0.5);
            assert_eq!(d.value, ideal.next_threshold(t));
            assert_eq!(d.fresh, Some(true));
        }
    }

    #[test]
    fn degraded_with_theta_zero_uses_commitment() {
        let mode = ThresholdMode::Degraded {
            theta: 0.0,
            rule: ThresholdRule::Fixed(0.5),
            delta: 0.0,
        };
        let mut src = ThresholdSource::new(0.6, 0.6, 0.3, mode, 5);
        let first = src.draw(1, || 0.5);
        assert_eq!(first.value, 0.6); // clamped into [a, b]
        for t in 2..100 {
            let d = src.draw(t, || 0.5);
            assert_eq!(d.value, 0.5);
            assert_eq!(d.committed, Some(0.5));
            assert_eq!(d.fresh, Some(false));
        }
    }

    #[test]
    fn rule_names_round_trip() {
        for text in ["half", "median_eta", "fixed:0.42"] {
            assert_eq!(ThresholdRule::parse(text).unwrap().name(), text);
        }
        assert!(ThresholdRule::parse("nope").is_err());
    }
}
