use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{with_workers, ExperimentError};
use crate::chain::{build_potential, escape_time_samples, expected_absorption_time, hitting_time};
use crate::models::{byzantine_chain, folded_honest_chain};
use crate::randomness::SeedSchedule;

/// `(256/15) n (1 + ln n)`.
pub fn hitting_time_bound(n: u64) -> f64 {
    256.0 / 15.0 * n as f64 * (1.0 + (n as f64).ln())
}

/// `ceil((512/15) n (1 + ln n))`, the block length of the tail bound.
pub fn tail_block(n: u64) -> u64 {
    (512.0 / 15.0 * n as f64 * (1.0 + (n as f64).ln())).ceil() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingTimeRow {
    pub n: u64,
    pub runs: usize,
    /// `E_{n/2} tau` from the linear solve.
    pub exact: f64,
    pub mean: f64,
    pub std_error: f64,
    pub bound: f64,
    /// `P[tau > j * tail_block(n)]` for `j = 1, 2, 3`.
    pub tail_exceedance: [f64; 3],
}

/// Time for the honest walk started at `n/2` to reach a consensus state,
/// exactly and by simulation of the folded walk.
pub fn hitting_time_study(
    ns: &[u64],
    runs: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<HittingTimeRow>, ExperimentError> {
    if runs < 2 {
        return Err(ExperimentError::Param("need at least 2 runs".into()));
    }
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        if n < 20 || n % 4 != 0 {
            return Err(ExperimentError::Param(format!(
                "n = {n} must be at least 20 and divisible by 4"
            )));
        }
        let chain = folded_honest_chain(n)?;
        let start = (n / 2) as usize;
        let target: BTreeSet<usize> = [0].into_iter().collect();
        let exact = expected_absorption_time(&chain, start, &target)?;
        let schedule = SeedSchedule::new(seed);
        let times: Vec<u64> = with_workers(workers, || {
            (0..runs as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = SeedSchedule::rng(schedule.derive(i), 0);
                    hitting_time(&chain, start, &target, u64::MAX, &mut rng)
                        .expect("consensus is reached with probability one")
                })
                .collect()
        });
        let r = runs as f64;
        let mean = times.iter().map(|&t| t as f64).sum::<f64>() / r;
        let var = times.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>() / (r - 1.0);
        let block = tail_block(n);
        let tail = |j: u64| times.iter().filter(|&&t| t > j * block).count() as f64 / r;
        rows.push(HittingTimeRow {
            n,
            runs,
            exact,
            mean,
            std_error: (var / r).sqrt(),
            bound: hitting_time_bound(n),
            tail_exceedance: [tail(1), tail(2), tail(3)],
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeDiagnostics {
    pub n: u64,
    pub q: f64,
    pub k: u32,
    pub runs: usize,
    /// Bottom of the central well.
    pub start: usize,
    /// Rims of the well on either side; reaching one ends the escape.
    pub exits: (usize, usize),
    pub mean: f64,
    pub std_dev: f64,
    pub coefficient_of_variation: f64,
    pub log_mean: f64,
    /// Smaller of the two hill heights above the well bottom.
    pub depth: f64,
    /// Exact expected escape time.
    pub exact_mean: f64,
}

/// Escape from the central well of the Byzantine walk.
///
/// The well bottom is the local minimum of the potential nearest to the
/// middle of the state space; the exits are the nearest local maxima on
/// either side. `start` overrides the starting state and must lie strictly between
/// the exits.
pub fn escape_exponentiality_study(
    n: u64,
    q: f64,
    k: u32,
    runs: usize,
    seed: u64,
    start: Option<usize>,
) -> Result<EscapeDiagnostics, ExperimentError> {
    if runs < 2 {
        return Err(ExperimentError::Param("need at least 2 runs".into()));
    }
    let chain = byzantine_chain(n, q, k)?;
    let v = build_potential(&chain)?;
    let values = v.values();
    let last = values.len() - 1;
    let middle = last / 2;
    let bottom = v
        .local_minima()
        .into_iter()
        .min_by_key(|&m| (m.abs_diff(middle), m))
        .ok_or_else(|| ExperimentError::Regime("potential has no local minimum".into()))?;
    // Climb from the bottom to the nearest rim on each side.
    let mut left = bottom;
    while left > 0 && values[left - 1] >= values[left] {
        left -= 1;
    }
    let mut right = bottom;
    while right < last && values[right + 1] >= values[right] {
        right += 1;
    }
    if left == 0 || right == last || left == bottom || right == bottom {
        return Err(ExperimentError::Regime(format!(
            "no central well for n = {n}, q = {q}, k = {k}: the potential rises to an endpoint"
        )));
    }
    let start = start.unwrap_or(bottom);
    if start <= left || start >= right {
        return Err(ExperimentError::Regime(format!(
            "start {start} lies outside the central well ({left}, {right})"
        )));
    }
    let exits: BTreeSet<usize> = [left, right].into_iter().collect();
    let exact_mean = expected_absorption_time(&chain, start, &exits)?;
    let samples = escape_time_samples(&chain, start, &exits, runs, seed)?;
    let r = runs as f64;
    let mean = samples.iter().map(|&t| t as f64).sum::<f64>() / r;
    let var = samples.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let std_dev = var.sqrt();
    Ok(EscapeDiagnostics {
        n,
        q,
        k,
        runs,
        start,
        exits: (left, right),
        mean,
        std_dev,
        coefficient_of_variation: std_dev / mean,
        log_mean: mean.ln(),
        depth: (values[left] - values[bottom]).min(values[right] - values[bottom]),
        exact_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        assert!((hitting_time_bound(20) - 1363.9).abs() < 0.1);
        assert!(hitting_time_study(&[22], 10, 1, None).is_err());
    }

    #[test]
    fn no_central_well_without_adversaries_nearby() {
        // q = 0.2 leaves a single well whose rims are the endpoints.
        assert!(matches!(
            escape_exponentiality_study(200, 0.2, 3, 10, 1, None),
            Err(ExperimentError::Regime(_))
        ));
        assert!(matches!(
            escape_exponentiality_study(200, 0.1, 3, 10, 1, Some(2)),
            Err(ExperimentError::Regime(_))
        ));
    }
}
