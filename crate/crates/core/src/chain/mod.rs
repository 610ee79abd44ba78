//! One-dimensional nearest-neighbour Markov chains ("random walks on a
//! potential").
//!
//! A [`BirthDeathChain`] lives on the states `0..=N`. From state `m` it moves
//! down with probability `p_m`, up with probability `q_m` and holds with
//! `v_m = 1 - p_m - q_m`. The potential is
//!
//! ```text
//! V(0) = 0,   V(k) = sum_{j=1..k} ln(p_j / q_j)      (k = 0..N-1)
//! ```
//!
//! and the exit probability of an interval follows from it:
//!
//! ```text
//! P_x[tau_b < tau_a] = sum_{y=a..x-1} e^{V(y)} / sum_{y=a..b-1} e^{V(y)}
//! ```
//!
//! Every sum of exponentials is evaluated with log-sum-exp, since `V` grows
//! linearly in the chain size and `e^V` overflows for a few hundred states.

mod sim;
mod tridiag;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sim::{escape_time_samples, hitting_time, simulate, StopReason, Trajectory};
pub use tridiag::solve_tridiagonal;

/// Tolerance on `p + q + v = 1` and on the endpoint constraints.
pub const PROB_TOL: f64 = 1e-12;

/// A state index of a chain.
pub type State = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("chain must have at least one transition (size N >= 1), got N = {0}")]
    Empty(usize),
    #[error("down/up vectors have lengths {down} and {up}, expected {expected}")]
    Length {
        down: usize,
        up: usize,
        expected: usize,
    },
    #[error("invalid probabilities at state {state}: p = {down}, q = {up}")]
    InvalidProbability { state: State, down: f64, up: f64 },
    #[error("absorbing endpoint {state} has a nonzero move probability")]
    AbsorbingEndpointMoves { state: State },
    #[error("p_{state} or q_{state} is zero, the potential ratio is undefined")]
    ZeroRatio { state: State },
    #[error("expected {a} < {x} < {b} <= {n}")]
    Ordering {
        a: State,
        x: State,
        b: State,
        n: State,
    },
    #[error("state {state} out of range 0..={n}")]
    OutOfRange { state: State, n: State },
    #[error("target set is not reached with probability one from state {from}")]
    NotAbsorbed { from: State },
    #[error("chain has an absorbing endpoint, no stationary distribution")]
    HasAbsorbingState,
    #[error("chain is not irreducible: p_{state} or q_{state} vanishes")]
    Reducible { state: State },
    #[error("closed form needs q_N = 0 and p_N > 0 at the top state")]
    TopBoundary,
}

/// What happens at an endpoint of the state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Absorbing,
    Reflecting,
}

/// Transition kernel `(p_m, q_m, v_m)` on the states `0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthDeathChain {
    down: Vec<f64>,
    up: Vec<f64>,
    lower: Boundary,
    upper: Boundary,
}

impl BirthDeathChain {
    /// Builds a chain from per-state down (`p`) and up (`q`) probabilities.
    ///
    /// Both vectors have `N + 1` entries. `p_0` and `q_N` must be zero; an
    /// absorbing endpoint must also have a zero probability of moving inward.
    pub fn new(
        down: Vec<f64>,
        up: Vec<f64>,
        lower: Boundary,
        upper: Boundary,
    ) -> Result<Self, ChainError> {
        if down.len() != up.len() || down.len() < 2 {
            if down.len() == up.len() {
                return Err(ChainError::Empty(down.len().saturating_sub(1)));
            }
            return Err(ChainError::Length {
                down: down.len(),
                up: up.len(),
                expected: down.len().max(up.len()),
            });
        }
        let n = down.len() - 1;
        for (state, (&p, &q)) in down.iter().zip(&up).enumerate() {
            let ok = p.is_finite()
                && q.is_finite()
                && (0.0..=1.0).contains(&p)
                && (0.0..=1.0).contains(&q)
                && p + q <= 1.0 + PROB_TOL;
            if !ok {
                return Err(ChainError::InvalidProbability {
                    state,
                    down: p,
                    up: q,
                });
            }
        }
        if down[0] != 0.0 {
            return Err(ChainError::InvalidProbability {
                state: 0,
                down: down[0],
                up: up[0],
            });
        }
        if up[n] != 0.0 {
            return Err(ChainError::InvalidProbability {
                state: n,
                down: down[n],
                up: up[n],
            });
        }
        if lower == Boundary::Absorbing && up[0] != 0.0 {
            return Err(ChainError::AbsorbingEndpointMoves { state: 0 });
        }
        if upper == Boundary::Absorbing && down[n] != 0.0 {
            return Err(ChainError::AbsorbingEndpointMoves { state: n });
        }
        Ok(Self {
            down,
            up,
            lower,
            upper,
        })
    }

    /// Builds a chain from a kernel function `state -> (p, q)`.
    pub fn from_fn(
        size: usize,
        lower: Boundary,
        upper: Boundary,
        mut kernel: impl FnMut(State) -> (f64, f64),
    ) -> Result<Self, ChainError> {
        let (down, up) = (0..=size).map(&mut kernel).unzip();
        Self::new(down, up, lower, upper)
    }

    /// Largest state `N`.
    pub fn size(&self) -> usize {
        self.down.len() - 1
    }

    pub fn down(&self, m: State) -> f64 {
        self.down[m]
    }

    pub fn up(&self, m: State) -> f64 {
        self.up[m]
    }

    pub fn hold(&self, m: State) -> f64 {
        1.0 - self.down[m] - self.up[m]
    }

    pub fn lower(&self) -> Boundary {
        self.lower
    }

    pub fn upper(&self) -> Boundary {
        self.upper
    }

    pub fn down_probs(&self) -> &[f64] {
        &self.down
    }

    pub fn up_probs(&self) -> &[f64] {
        &self.up
    }

    fn check_state(&self, state: State) -> Result<(), ChainError> {
        if state > self.size() {
            return Err(ChainError::OutOfRange {
                state,
                n: self.size(),
            });
        }
        Ok(())
    }
}

/// The potential `V(0..N-1)` of a chain, natural-log units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialProfile {
    values: Vec<f64>,
}

impl PotentialProfile {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, k: State) -> f64 {
        self.values[k]
    }

    /// `ln sum_{y in range} e^{V(y)}`.
    pub fn log_sum_exp(&self, range: std::ops::Range<State>) -> f64 {
        log_sum_exp(&self.values[range])
    }

    /// Interior local minima, i.e. states strictly lower than both neighbours
    /// (plateaus count once). Endpoints count when lower than their single
    /// neighbour.
    pub fn local_minima(&self) -> Vec<State> {
        let v = &self.values;
        let mut minima = Vec::new();
        let mut i = 0;
        while i < v.len() {
            let mut j = i;
            while j + 1 < v.len() && v[j + 1] == v[i] {
                j += 1;
            }
            let left_higher = i == 0 || v[i - 1] > v[i];
            let right_higher = j + 1 == v.len() || v[j + 1] > v[i];
            if left_higher && right_higher && v.len() > 1 {
                minima.push(i);
            }
            i = j + 1;
        }
        minima
    }

    /// CSV with columns `state,value`.
    pub fn to_csv(&self) -> String {
        values_to_csv(&self.values)
    }
}

/// Writes `state,value` rows with 17 significant digits and LF endings.
pub fn values_to_csv(values: &[f64]) -> String {
    let mut out = String::from("state,value\n");
    for (state, value) in values.iter().enumerate() {
        let _ = writeln!(out, "{state},{}", fmt_float(*value));
    }
    out
}

/// Shortest round-trip decimal representation; always >= 15 significant
/// digits of precision because it reproduces the exact double.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let mag = x.abs();
    if (1e-5..1e15).contains(&mag) {
        format!("{x:?}")
    } else {
        format!("{x:e}")
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Potential of the chain. Requires `p_j, q_j > 0` for every interior state.
pub fn build_potential(chain: &BirthDeathChain) -> Result<PotentialProfile, ChainError> {
    let n = chain.size();
    let mut values = Vec::with_capacity(n);
    values.push(0.0);
    let mut acc = 0.0;
    for j in 1..n {
        let (p, q) = (chain.down(j), chain.up(j));
        if p <= 0.0 || q <= 0.0 {
            return Err(ChainError::ZeroRatio { state: j });
        }
        acc += p.ln() - q.ln();
        values.push(acc);
    }
    Ok(PotentialProfile { values })
}

/// `P_x[tau_b < tau_a]` for `a < x < b`, computed from the potential.
pub fn exit_probability(
    chain: &BirthDeathChain,
    a: State,
    x: State,
    b: State,
) -> Result<f64, ChainError> {
    let n = chain.size();
    if !(a < x && x < b && b <= n) {
        return Err(ChainError::Ordering { a, x, b, n });
    }
    let potential = build_potential(chain)?;
    let numer = potential.log_sum_exp(a..x);
    let denom = potential.log_sum_exp(a..b);
    Ok((numer - denom).exp().min(1.0))
}

/// Expected number of steps until the chain started at `x` enters `target`.
///
/// Target states are treated as absorbing. The system
/// `T(m) = 1 + p_m T(m-1) + v_m T(m) + q_m T(m+1)` is solved on the interval
/// of states reachable from `x` by tridiagonal elimination.
pub fn expected_absorption_time(
    chain: &BirthDeathChain,
    x: State,
    target: &BTreeSet<State>,
) -> Result<f64, ChainError> {
    chain.check_state(x)?;
    if let Some(&t) = target.iter().next_back() {
        chain.check_state(t)?;
    }
    if target.contains(&x) {
        return Ok(0.0);
    }
    let n = chain.size();
    let lo = target.range(..x).next_back().copied();
    let hi = target.range(x..).next().copied();

    // States reachable from x without crossing a target.
    let mut left = x;
    while left > 0 && Some(left - 1) != lo && chain.down(left) > 0.0 {
        left -= 1;
    }
    let mut right = x;
    while right < n && Some(right + 1) != hi && chain.up(right) > 0.0 {
        right += 1;
    }

    // From every reachable state some target must be reachable.
    let len = right - left + 1;
    let mut reach_up = vec![false; len];
    for m in (left..=right).rev() {
        let q = chain.up(m);
        reach_up[m - left] = q > 0.0
            && match hi {
                Some(h) if m + 1 == h => true,
                _ => m < right && reach_up[m + 1 - left],
            };
    }
    let mut reach_down = vec![false; len];
    for m in left..=right {
        let p = chain.down(m);
        reach_down[m - left] = p > 0.0
            && match lo {
                Some(l) if m == l + 1 => true,
                _ => m > left && reach_down[m - 1 - left],
            };
    }
    if (0..len).any(|i| !reach_up[i] && !reach_down[i]) {
        return Err(ChainError::NotAbsorbed { from: x });
    }

    // -p_m T(m-1) + (p_m + q_m) T(m) - q_m T(m+1) = 1
    let mut sub = vec![0.0; len];
    let mut diag = vec![0.0; len];
    let mut sup = vec![0.0; len];
    for m in left..=right {
        let i = m - left;
        let (p, q) = (chain.down(m), chain.up(m));
        diag[i] = p + q;
        if i > 0 {
            sub[i] = -p;
        }
        if m < right {
            sup[i] = -q;
        }
    }
    let rhs = vec![1.0; len];
    let sol = solve_tridiagonal(&sub, &diag, &sup, &rhs);
    Ok(sol[x - left])
}

/// Expected time to hit `0` from `m` via the closed-form double sum.
///
/// The chain must have an absorbing (or at least never-left) state `0` and a
/// top state `N` with `q_N = 0` and `p_N > 0`, such as the folded majority
/// chain whose top state holds with probability one half.
pub fn absorption_time_closed_form(chain: &BirthDeathChain, m: State) -> Result<f64, ChainError> {
    chain.check_state(m)?;
    if m == 0 {
        return Ok(0.0);
    }
    let top = chain.size();
    if chain.up(top) != 0.0 || chain.down(top) <= 0.0 {
        return Err(ChainError::TopBoundary);
    }
    let (p, q) = (chain.down_probs(), chain.up_probs());
    if let Some(j) = (1..=top).find(|&j| p[j] <= 0.0) {
        return Err(ChainError::ZeroRatio { state: j });
    }

    // T_m = sum_{j=1..m} ( (1/p_N) prod_{l=j..N-1} q_l/p_l
    //                      + (1/p_j) sum_{k=j-1..N-2} prod_{l=j..k} q_l/p_{l+1} )
    let mut total = 0.0;
    for j in 1..=m {
        let mut tail = 1.0 / p[top];
        for l in j..top {
            tail *= q[l] / p[l];
        }
        // Empty when j = N.
        let mut inner = if j < top { 1.0 } else { 0.0 };
        let mut prod = 1.0;
        for k in j..top.saturating_sub(1) {
            prod *= q[k] / p[k + 1];
            inner += prod;
        }
        total += tail + inner / p[j];
    }
    Ok(total)
}

/// Stationary law of an irreducible chain with two reflecting endpoints.
///
/// Uses the reversible product form
/// `pi(x) ∝ (q_0 ... q_{x-1}) / (p_1 ... p_x)`, normalised in log space.
pub fn stationary_distribution(chain: &BirthDeathChain) -> Result<Vec<f64>, ChainError> {
    if chain.lower() == Boundary::Absorbing || chain.upper() == Boundary::Absorbing {
        return Err(ChainError::HasAbsorbingState);
    }
    let n = chain.size();
    let mut log_weights = Vec::with_capacity(n + 1);
    log_weights.push(0.0);
    let mut acc = 0.0;
    for x in 1..=n {
        let (q_prev, p_here) = (chain.up(x - 1), chain.down(x));
        if q_prev <= 0.0 {
            return Err(ChainError::Reducible { state: x - 1 });
        }
        if p_here <= 0.0 {
            return Err(ChainError::Reducible { state: x });
        }
        acc += q_prev.ln() - p_here.ln();
        log_weights.push(acc);
    }
    let norm = log_sum_exp(&log_weights);
    Ok(log_weights.iter().map(|w| (w - norm).exp()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(n: usize, p: f64) -> BirthDeathChain {
        BirthDeathChain::from_fn(n, Boundary::Absorbing, Boundary::Absorbing, |m| {
            if m == 0 || m == n {
                (0.0, 0.0)
            } else {
                (p, p)
            }
        })
        .unwrap()
    }

    #[test]
    fn rejects_bad_kernels() {
        let err = BirthDeathChain::new(
            vec![0.0, 0.6, 0.0],
            vec![0.0, 0.6, 0.0],
            Boundary::Absorbing,
            Boundary::Absorbing,
        );
        assert!(matches!(err, Err(ChainError::InvalidProbability { state: 1, .. })));
        let err = BirthDeathChain::new(
            vec![0.0, 0.5, 0.0],
            vec![0.1, 0.5, 0.0],
            Boundary::Absorbing,
            Boundary::Absorbing,
        );
        assert_eq!(err, Err(ChainError::AbsorbingEndpointMoves { state: 0 }));
        let err = BirthDeathChain::new(
            vec![0.1, 0.5, 0.0],
            vec![0.1, 0.5, 0.0],
            Boundary::Reflecting,
            Boundary::Reflecting,
        );
        assert!(err.is_err());
    }

    #[test]
    fn constant_ratio_potential_is_linear() {
        let chain = BirthDeathChain::from_fn(30, Boundary::Absorbing, Boundary::Absorbing, |m| {
            if m == 0 || m == 30 {
                (0.0, 0.0)
            } else {
                (0.4, 0.2)
            }
        })
        .unwrap();
        let v = build_potential(&chain).unwrap();
        assert_eq!(v.len(), 30);
        for k in 0..30 {
            assert!((v.get(k) - k as f64 * 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_interior_ratio_is_reported() {
        let chain = BirthDeathChain::from_fn(4, Boundary::Absorbing, Boundary::Absorbing, |m| {
            match m {
                2 => (0.3, 0.0),
                1 | 3 => (0.3, 0.3),
                _ => (0.0, 0.0),
            }
        })
        .unwrap();
        assert_eq!(build_potential(&chain), Err(ChainError::ZeroRatio { state: 2 }));
        assert_eq!(
            exit_probability(&chain, 0, 1, 4),
            Err(ChainError::ZeroRatio { state: 2 })
        );
    }

    #[test]
    fn flat_chain_exit_probability() {
        let chain = flat(10, 0.25);
        let p = exit_probability(&chain, 0, 3, 10).unwrap();
        assert!((p - 0.3).abs() < 1e-12);
        assert!(matches!(
            exit_probability(&chain, 3, 3, 10),
            Err(ChainError::Ordering { .. })
        ));
        let near = exit_probability(&chain, 0, 9, 10).unwrap();
        assert!(near < 1.0);
    }

    #[test]
    fn gamblers_ruin_duration() {
        let n = 12;
        let target: BTreeSet<_> = [0, n].into_iter().collect();
        let simple = flat(n, 0.5);
        let lazy = flat(n, 0.25);
        for x in 0..=n {
            let expect = (x * (n - x)) as f64;
            let t = expected_absorption_time(&simple, x, &target).unwrap();
            assert!((t - expect).abs() < 1e-10, "x={x}: {t} vs {expect}");
            let t = expected_absorption_time(&lazy, x, &target).unwrap();
            assert!((t - 2.0 * expect).abs() < 1e-9);
        }
    }

    #[test]
    fn unreachable_target_is_an_error() {
        let chain = flat(6, 0.25);
        let target: BTreeSet<_> = [3].into_iter().collect();
        // From 1 the walk can be absorbed at 0 before ever reaching 3.
        assert_eq!(
            expected_absorption_time(&chain, 1, &target),
            Err(ChainError::NotAbsorbed { from: 1 })
        );
        let empty = BTreeSet::new();
        assert!(expected_absorption_time(&chain, 2, &empty).is_err());
    }

    #[test]
    fn stationary_uniform_for_symmetric_chain() {
        let chain = BirthDeathChain::from_fn(9, Boundary::Reflecting, Boundary::Reflecting, |m| {
            let p = if m == 0 { 0.0 } else { 0.3 };
            let q = if m == 9 { 0.0 } else { 0.3 };
            (p, q)
        })
        .unwrap();
        let pi = stationary_distribution(&chain).unwrap();
        for x in &pi {
            assert!((x - 0.1).abs() < 1e-12);
        }
        assert_eq!(
            stationary_distribution(&flat(4, 0.2)),
            Err(ChainError::HasAbsorbingState)
        );
    }

    #[test]
    fn closed_form_small_cases() {
        // Top state with p = 1/2, v = 1/2 and N = 1: T_1 = 2.
        let chain = BirthDeathChain::new(
            vec![0.0, 0.5],
            vec![0.0, 0.0],
            Boundary::Absorbing,
            Boundary::Reflecting,
        )
        .unwrap();
        assert_eq!(absorption_time_closed_form(&chain, 1).unwrap(), 2.0);
        assert_eq!(absorption_time_closed_form(&chain, 0).unwrap(), 0.0);
        // N = 2: T_1 = (1 + 2 q_1) / p_1.
        let chain = BirthDeathChain::new(
            vec![0.0, 0.3, 0.5],
            vec![0.0, 0.2, 0.0],
            Boundary::Absorbing,
            Boundary::Reflecting,
        )
        .unwrap();
        let t1 = absorption_time_closed_form(&chain, 1).unwrap();
        assert!((t1 - (1.0 + 0.4) / 0.3).abs() < 1e-12);
    }

    #[test]
    fn local_minima_with_plateaus() {
        let v = PotentialProfile {
            values: vec![0.0, -1.0, -1.0, 0.5, -2.0, 1.0],
        };
        assert_eq!(v.local_minima(), vec![1, 4]);
    }

    #[test]
    fn csv_layout() {
        let csv = values_to_csv(&[0.0, 1.0 / 3.0]);
        assert_eq!(csv, "state,value\n0,0\n1,0.3333333333333333\n");
        assert_eq!(fmt_float(1e-30), "1e-30");
    }
}
