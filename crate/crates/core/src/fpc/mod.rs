//! Round-based FPC simulation: honest nodes query `k` peers per round,
//! compare the mean answer with a common random threshold and finalize
//! after `ell` unchanged rounds past the cooling-off period.

mod engine;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AdversaryError, Answer, Violation};
use crate::models::adversary_count;
use crate::randomness::{RandomnessError, ThresholdMode};

pub use engine::{run, run_with, RoundReport, RunOptions, Simulation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FpcError {
    #[error("invalid parameters: {0}")]
    Param(String),
    #[error("strategy violation: {0}")]
    StrategyViolation(Violation),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Randomness(#[from] RandomnessError),
    #[error("round limit {0} already reached")]
    RoundLimit(usize),
    #[error("beta = {beta} must exceed q = {q}")]
    BetaNotAboveQ { beta: f64, q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Uniform over all `n` nodes, repeats and self allowed.
    #[default]
    WithReplacement,
    /// `k` distinct nodes, self allowed.
    WithoutReplacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// The first `round(p0 H)` honest nodes hold 1.
    #[default]
    Deterministic,
    /// The same number of 1-holders, placed by a seeded shuffle.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpcParams {
    pub n: usize,
    pub k: usize,
    pub a: f64,
    pub b: f64,
    pub beta: f64,
    pub m0: usize,
    pub ell: usize,
    /// Hard cap on rounds, cooling-off included.
    pub delta_max: usize,
    pub initial_ones_fraction: f64,
    pub q: f64,
    pub sampling: Sampling,
    pub init: InitMode,
    pub threshold_mode: ThresholdMode,
}

impl Default for FpcParams {
    fn default() -> Self {
        Self {
            n: 1000,
            k: 25,
            a: 2.0 / 3.0,
            b: 2.0 / 3.0,
            beta: 0.3,
            m0: 0,
            ell: 10,
            delta_max: 100,
            initial_ones_fraction: 2.0 / 3.0,
            q: 0.0,
            sampling: Sampling::WithReplacement,
            init: InitMode::Deterministic,
            threshold_mode: ThresholdMode::Ideal,
        }
    }
}

impl FpcParams {
    pub fn validate(&self) -> Result<(), FpcError> {
        let bad = |msg: String| Err(FpcError::Param(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(0.0 <= self.a && self.a <= self.b && self.b <= 1.0) {
            return bad(format!("need 0 <= a <= b <= 1, got a = {}, b = {}", self.a, self.b));
        }
        if !(0.0..=0.5).contains(&self.beta) {
            return bad(format!("beta = {} must lie in [0, 1/2]", self.beta));
        }
        if self.ell == 0 {
            return bad("ell must be at least 1".into());
        }
        if self.delta_max < self.m0 + self.ell {
            return bad(format!(
                "delta_max = {} is below m0 + ell = {}",
                self.delta_max,
                self.m0 + self.ell
            ));
        }
        if !(0.0..=1.0).contains(&self.initial_ones_fraction) {
            return bad(format!(
                "initial_ones_fraction = {} must lie in [0, 1]",
                self.initial_ones_fraction
            ));
        }
        if !(0.0..1.0).contains(&self.q) || self.adversaries() >= self.n {
            return bad(format!("q = {} leaves no honest node", self.q));
        }
        if self.sampling == Sampling::WithoutReplacement && self.k > self.n {
            return bad(format!("cannot draw k = {} distinct peers from n = {}", self.k, self.n));
        }
        self.threshold_mode.validate()?;
        Ok(())
    }

    pub fn adversaries(&self) -> usize {
        adversary_count(self.n as u64, self.q) as usize
    }

    pub fn honest(&self) -> usize {
        self.n - self.adversaries()
    }

    /// `round(p0 H)`.
    pub fn initial_ones(&self) -> usize {
        (self.initial_ones_fraction * self.honest() as f64).round() as usize
    }
}

/// Per-node protocol state. Opinions are stored as `0`/`1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeState {
    pub opinion: u8,
    pub finalized: bool,
    /// Trailing run of identical opinions among rounds after cooling-off.
    pub unchanged_streak: usize,
    /// Opinion after each round, starting with round 1.
    pub opinion_history: Vec<u8>,
}

impl NodeState {
    pub fn new(opinion: u8) -> Self {
        Self {
            opinion,
            finalized: false,
            unchanged_streak: 0,
            opinion_history: Vec::new(),
        }
    }
}

/// Mean of the answered bits; `None` without replies.
pub fn compute_eta(replies: &[Answer]) -> Option<f64> {
    let (ones, count) = replies.iter().fold((0u32, 0u32), |(o, c), r| match r {
        Answer::Zero => (o, c + 1),
        Answer::One => (o + 1, c + 1),
        Answer::Silent => (o, c),
    });
    (count > 0).then(|| ones as f64 / count as f64)
}

/// `1` if `eta > u`, `0` if `eta < u`, otherwise (tie or no reply) `prev`.
///
/// `eta` is a correctly rounded quotient of small integers, so comparing it
/// with a correctly rounded rational threshold such as `2/3` agrees with the
/// exact rational comparison.
pub fn apply_update(eta: Option<f64>, u: f64, prev: u8) -> u8 {
    match eta {
        Some(e) if e > u => 1,
        Some(e) if e < u => 0,
        _ => prev,
    }
}

/// Whether a node with opinions `history` (rounds `1..=round`) finalizes at
/// `round`: the last `ell` opinions agree and all come from rounds after the
/// cooling-off period, so the earliest possible round is `m0 + ell`.
pub fn finalization_check(history: &[u8], m0: usize, ell: usize, round: usize) -> bool {
    if ell == 0 || round < m0 + ell || history.len() < ell {
        return false;
    }
    let tail = &history[history.len() - ell..];
    tail.iter().all(|&x| x == tail[0])
}

/// Band edge `(beta - q) / (2(1 - q))`.
pub fn psi_threshold(beta: f64, q: f64) -> Result<f64, FpcError> {
    if !(beta > q) {
        return Err(FpcError::BetaNotAboveQ { beta, q });
    }
    Ok((beta - q) / (2.0 * (1.0 - q)))
}

/// First round `m >= 1` whose honest 1-fraction `p_hat[m - 1]` leaves the
/// central band, i.e. is at most the band edge or at least one minus it.
pub fn detect_psi(p_hat: &[f64], beta: f64, q: f64) -> Result<Option<usize>, FpcError> {
    let edge = psi_threshold(beta, q)?;
    Ok(p_hat
        .iter()
        .position(|&p| p <= edge || p >= 1.0 - edge)
        .map(|i| i + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeTag {
    AgreementOn0,
    AgreementOn1,
    AgreementFailure,
    TerminationFailure,
}

impl OutcomeTag {
    pub const ALL: [OutcomeTag; 4] = [
        Self::AgreementOn0,
        Self::AgreementOn1,
        Self::AgreementFailure,
        Self::TerminationFailure,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::AgreementOn0 => "agreement_on_0",
            Self::AgreementOn1 => "agreement_on_1",
            Self::AgreementFailure => "agreement_failure",
            Self::TerminationFailure => "termination_failure",
        }
    }

    pub fn is_agreement(&self) -> bool {
        matches!(self, Self::AgreementOn0 | Self::AgreementOn1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub tag: OutcomeTag,
    pub rounds_used: usize,
}

/// One round as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fresh: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub committed: Option<f64>,
    pub honest_ones: usize,
    pub finalized_count: usize,
    /// One `0`/`1` character per honest node.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub finalized: Option<String>,
}

pub const TRACE_SCHEMA: &str = "fpc-trace/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub schema: String,
    pub seed: u64,
    pub honest: usize,
    pub adversaries: usize,
    pub rounds: Vec<RoundRecord>,
    pub psi_round: Option<usize>,
    pub outcome: Outcome,
    /// How often the adversary strategy was consulted.
    pub strategy_calls: u64,
}

impl RunTrace {
    /// Honest 1-fraction after each round.
    pub fn p_hat(&self) -> Vec<f64> {
        self.rounds
            .iter()
            .map(|r| r.honest_ones as f64 / self.honest as f64)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}
