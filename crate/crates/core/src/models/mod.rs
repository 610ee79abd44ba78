//! Honest and Byzantine majority-dynamics walks on the number of 1-opinions.

mod kernel;
mod landscape;
mod lyapunov;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{build_potential, ChainError};

pub use kernel::{
    byzantine_chain, byzantine_transitions, byzantine_transitions_exact, folded_honest_chain,
    honest_chain, honest_transitions, honest_transitions_exact, k_query_transitions, kernel, Exact,
    Transitions,
};
pub use landscape::{
    classify_regime, continuum_drift, continuum_log_ratio, continuum_wells, critical_q,
    critical_q_in, equilibrium_points, f_ratio, lattice_drift, left_well_bottom,
    well_depth_integral, well_depth_integral_k, Equilibria, Regime, QSTAR_BRACKET,
};
pub use lyapunov::{lyapunov_drift_check, LyapunovReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{0}")]
    Range(String),
    #[error("{0}")]
    Domain(String),
    #[error("k = {0} must be odd")]
    EvenK(u32),
    #[error("no sign change of the well-depth integral on [{lo}, {hi}]")]
    NoRootBracketed { lo: f64, hi: f64 },
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Number of adversarial nodes, `floor(q n)`. The small offset keeps
/// products such as `0.1 * 30` from rounding down to the integer below.
pub fn adversary_count(n: u64, q: f64) -> u64 {
    (q * n as f64 + 1e-9).floor() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HonestModelParams {
    pub n: u64,
}

impl HonestModelParams {
    pub fn new(n: u64) -> Result<Self, ModelError> {
        if n < 4 {
            return Err(ModelError::Range(format!("n = {n} must be at least 4")));
        }
        Ok(Self { n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ByzantineModelParams {
    pub n: u64,
    pub q: f64,
    pub k: u32,
}

impl ByzantineModelParams {
    pub fn new(n: u64, q: f64, k: u32) -> Result<Self, ModelError> {
        // Building the chain runs every parameter check.
        byzantine_chain(n, q, k)?;
        Ok(Self { n, q, k })
    }

    pub fn adversaries(&self) -> u64 {
        adversary_count(self.n, self.q)
    }

    pub fn honest(&self) -> u64 {
        self.n - self.adversaries()
    }
}

/// Lower bound `1 - x exp(-(V(n/2) - V(x)))` on the probability that the
/// honest walk started at `x < n/2` reaches consensus on 0.
pub fn consensus_bias_bound(n: u64, x: u64) -> Result<f64, ModelError> {
    if 2 * x >= n {
        return Err(ModelError::Range(format!("x = {x} must be below n/2 = {}", n / 2)));
    }
    if x == 0 {
        return Ok(1.0);
    }
    let v = build_potential(&honest_chain(n)?)?;
    let gap = v.get((n / 2) as usize) - v.get(x as usize);
    Ok((1.0 - x as f64 * (-gap).exp()).clamp(0.0, 1.0))
}
