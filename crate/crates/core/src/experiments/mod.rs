//! Monte Carlo studies on top of the simulator and the chain analysis.
//!
//! Run `i` of a study always uses the seed derived from `(master, i)` and
//! results are reduced in run-index order, so every output is the same for
//! any number of worker threads.

mod chains;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AdversaryError, AdversarySpec, StrategyRegistry};
use crate::chain::{fmt_float, ChainError};
use crate::fpc::{FpcError, FpcParams, OutcomeTag, RunOptions, Simulation};
use crate::models::ModelError;
use crate::randomness::SeedSchedule;

pub use chains::{
    escape_exponentiality_study, hitting_time_bound, hitting_time_study, tail_block,
    EscapeDiagnostics, HittingTimeRow,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("{0}")]
    Param(String),
    #[error("{0}")]
    Regime(String),
    #[error(transparent)]
    Fpc(#[from] FpcError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Runs `f` on a pool with `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// What one run contributes to [`Metrics`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub tag: OutcomeTag,
    pub rounds: usize,
    pub psi_round: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub runs: usize,
    /// Runs where all honest nodes finalized the same bit.
    pub agreement_rate: f64,
    /// Runs where every honest node finalized within `delta_max`.
    pub termination_rate: f64,
    pub agreement_failure_rate: f64,
    pub termination_failure_rate: f64,
    pub agreement_se: f64,
    pub termination_se: f64,
    pub mean_rounds: f64,
    pub median_rounds: f64,
    pub psi_hit_rate: f64,
    pub histogram: BTreeMap<OutcomeTag, usize>,
}

fn proportion_se(p: f64, runs: usize) -> f64 {
    (p * (1.0 - p) / runs as f64).sqrt()
}

impl Metrics {
    /// Aggregates integer counts only, so the result does not depend on the
    /// order of `runs`.
    pub fn from_runs(runs: &[RunSummary]) -> Self {
        let total = runs.len();
        let mut histogram: BTreeMap<OutcomeTag, usize> =
            OutcomeTag::ALL.iter().map(|&t| (t, 0)).collect();
        for r in runs {
            *histogram.entry(r.tag).or_default() += 1;
        }
        let rate = |count: usize| if total == 0 { 0.0 } else { count as f64 / total as f64 };
        let agreements = histogram[&OutcomeTag::AgreementOn0] + histogram[&OutcomeTag::AgreementOn1];
        let term_fail = histogram[&OutcomeTag::TerminationFailure];
        let mut rounds: Vec<usize> = runs.iter().map(|r| r.rounds).collect();
        rounds.sort_unstable();
        let median_rounds = match total {
            0 => 0.0,
            t if t % 2 == 1 => rounds[t / 2] as f64,
            t => 0.5 * (rounds[t / 2 - 1] + rounds[t / 2]) as f64,
        };
        let agreement_rate = rate(agreements);
        let termination_rate = rate(total - term_fail);
        Self {
            runs: total,
            agreement_rate,
            termination_rate,
            agreement_failure_rate: rate(histogram[&OutcomeTag::AgreementFailure]),
            termination_failure_rate: rate(term_fail),
            agreement_se: proportion_se(agreement_rate, total.max(1)),
            termination_se: proportion_se(termination_rate, total.max(1)),
            mean_rounds: rate(rounds.iter().sum()),
            median_rounds,
            psi_hit_rate: rate(runs.iter().filter(|r| r.psi_round.is_some()).count()),
            histogram,
        }
    }
}

/// Plays run `index` of a study.
pub fn play(
    params: FpcParams,
    adversary: &AdversarySpec,
    master_seed: u64,
    index: u64,
) -> Result<RunSummary, ExperimentError> {
    let strategy = StrategyRegistry::with_builtins().build(adversary)?;
    let seed = SeedSchedule::new(master_seed).derive(index);
    let (trace, _) = Simulation::new(params, strategy, seed, RunOptions::default())?
        .run_with_observer(|_| {})?;
    Ok(RunSummary {
        tag: trace.outcome.tag,
        rounds: trace.outcome.rounds_used,
        psi_round: trace.psi_round,
    })
}

pub fn run_summaries(
    params: FpcParams,
    adversary: &AdversarySpec,
    runs: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<Vec<RunSummary>, ExperimentError> {
    if runs == 0 {
        return Err(ExperimentError::Param("runs must be at least 1".into()));
    }
    params.validate()?;
    StrategyRegistry::with_builtins().build(adversary)?;
    with_workers(workers, || {
        (0..runs as u64)
            .into_par_iter()
            .map(|i| play(params, adversary, master_seed, i))
            .collect()
    })
}

pub fn monte_carlo(
    params: FpcParams,
    adversary: &AdversarySpec,
    runs: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<Metrics, ExperimentError> {
    Ok(Metrics::from_runs(&run_summaries(params, adversary, runs, master_seed, workers)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub q: f64,
    pub beta: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub q_values: Vec<f64>,
    pub beta_values: Vec<f64>,
    pub seed: u64,
    /// Row-major: all betas for the first q, then the next q.
    pub cells: Vec<SweepCell>,
}

pub const SWEEP_HEADER: &str =
    "q,beta,agreement_rate,termination_rate,mean_rounds,runs,seed,agreement_se,termination_se";

impl SweepGrid {
    pub fn cell(&self, q: f64, beta: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.q == q && c.beta == beta)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_HEADER}\n");
        for c in &self.cells {
            let m = &c.metrics;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                fmt_float(c.q),
                fmt_float(c.beta),
                fmt_float(m.agreement_rate),
                fmt_float(m.termination_rate),
                fmt_float(m.mean_rounds),
                m.runs,
                self.seed,
                fmt_float(m.agreement_se),
                fmt_float(m.termination_se),
            );
        }
        out
    }
}

/// Every `(q, beta)` cell uses the same master seed, so neighbouring cells
/// share their random thresholds and query samples.
pub fn sweep_q_beta(
    q_values: &[f64],
    beta_values: &[f64],
    base: FpcParams,
    adversary: &AdversarySpec,
    runs: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<SweepGrid, ExperimentError> {
    if q_values.is_empty() || beta_values.is_empty() {
        return Err(ExperimentError::Param("q and beta grids must be nonempty".into()));
    }
    let mut cells = Vec::with_capacity(q_values.len() * beta_values.len());
    for &q in q_values {
        for &beta in beta_values {
            let params = FpcParams { q, beta, ..base };
            let metrics = monte_carlo(params, adversary, runs, seed, workers)?;
            cells.push(SweepCell { q, beta, metrics });
        }
    }
    Ok(SweepGrid {
        q_values: q_values.to_vec(),
        beta_values: beta_values.to_vec(),
        seed,
        cells,
    })
}

/// Per-round histogram of η over the honest nodes that were still querying.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub buckets: usize,
    pub seed: u64,
    /// `counts[r][b]` for round `r + 1`, padded with zeros up to `delta_max`.
    pub counts: Vec<Vec<u64>>,
    pub outcome: OutcomeTag,
    pub rounds_used: usize,
    pub psi_round: Option<usize>,
}

pub const HEATMAP_HEADER: &str = "round,bucket_low,bucket_high,count";

impl Heatmap {
    pub fn bucket_bounds(&self, b: usize) -> (f64, f64) {
        let w = self.buckets as f64;
        (b as f64 / w, (b + 1) as f64 / w)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{HEATMAP_HEADER}\n");
        for (r, row) in self.counts.iter().enumerate() {
            for (b, count) in row.iter().enumerate() {
                let (lo, hi) = self.bucket_bounds(b);
                let _ = writeln!(out, "{},{},{},{}", r + 1, fmt_float(lo), fmt_float(hi), count);
            }
        }
        out
    }

    /// First round in which less than half of the counted η mass lies in
    /// buckets inside `[beta, 1 - beta]` (or no node is left).
    pub fn central_exit_round(&self, beta: f64) -> Option<usize> {
        let eps = 1e-12;
        self.counts.iter().enumerate().find_map(|(r, row)| {
            let total: u64 = row.iter().sum();
            let central: u64 = row
                .iter()
                .enumerate()
                .filter(|&(b, _)| {
                    let (lo, hi) = self.bucket_bounds(b);
                    lo >= beta - eps && hi <= 1.0 - beta + eps
                })
                .map(|(_, c)| c)
                .sum();
            (total == 0 || 2 * central < total).then_some(r + 1)
        })
    }
}

pub fn eta_heatmap(
    params: FpcParams,
    adversary: &AdversarySpec,
    buckets: usize,
    seed: u64,
) -> Result<Heatmap, ExperimentError> {
    if buckets < 2 {
        return Err(ExperimentError::Param(format!("buckets = {buckets} must be at least 2")));
    }
    let strategy = StrategyRegistry::with_builtins().build(adversary)?;
    let sim = Simulation::new(params, strategy, seed, RunOptions::default())?;
    let mut counts = Vec::with_capacity(params.delta_max);
    let (trace, _) = sim.run_with_observer(|report| {
        let mut row = vec![0u64; buckets];
        for eta in report.etas.iter().flatten() {
            let b = ((eta * buckets as f64) as usize).min(buckets - 1);
            row[b] += 1;
        }
        counts.push(row);
    })?;
    counts.resize(params.delta_max, vec![0; buckets]);
    Ok(Heatmap {
        buckets,
        seed,
        counts,
        outcome: trace.outcome.tag,
        rounds_used: trace.outcome.rounds_used,
        psi_round: trace.psi_round,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(tag: OutcomeTag, rounds: usize) -> RunSummary {
        RunSummary {
            tag,
            rounds,
            psi_round: None,
        }
    }

    #[test]
    fn metrics_are_order_free() {
        use OutcomeTag::*;
        let mut runs = vec![
            summary(AgreementOn0, 12),
            summary(TerminationFailure, 100),
            summary(AgreementOn1, 15),
            summary(AgreementFailure, 30),
        ];
        let m = Metrics::from_runs(&runs);
        runs.reverse();
        assert_eq!(m, Metrics::from_runs(&runs));
        assert_eq!(m.agreement_rate, 0.5);
        assert_eq!(m.termination_rate, 0.75);
        assert_eq!(m.median_rounds, 22.5);
        assert_eq!(m.histogram.values().sum::<usize>(), 4);
        let sum = m.agreement_rate + m.agreement_failure_rate + m.termination_failure_rate;
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_runs_rejected() {
        let err = monte_carlo(FpcParams::default(), &AdversarySpec::named("none"), 0, 1, None);
        assert!(matches!(err, Err(ExperimentError::Param(_))));
    }

    #[test]
    fn heatmap_layout() {
        let params = FpcParams {
            n: 100,
            k: 9,
            delta_max: 40,
            ..FpcParams::default()
        };
        let h = eta_heatmap(params, &AdversarySpec::named("none"), 4, 3).unwrap();
        assert_eq!(h.counts.len(), 40);
        assert!(h.counts[h.rounds_used..].iter().all(|r| r.iter().all(|&c| c == 0)));
        let csv = h.to_csv();
        assert_eq!(csv.lines().count(), 1 + 40 * 4);
        assert!(csv.starts_with("round,bucket_low,bucket_high,count\n1,0,0.25,"));
        assert!(eta_heatmap(params, &AdversarySpec::named("none"), 1, 3).is_err());
    }
}
