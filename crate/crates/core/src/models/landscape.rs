//! Shape of the Byzantine potential: equilibria of the drift, the critical
//! adversary fraction and the regime it implies.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::kernel::{kernel, Transitions};
use super::{adversary_count, ModelError};
use crate::numeric::{binomial_coefficient, bisect, simpson};

/// `p_m / q_m = f(m/n)` for the honest 3-choice walk.
pub fn f_ratio(u: f64) -> Result<f64, ModelError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(ModelError::Domain(format!("f(u) needs u in (0, 1), got {u}")));
    }
    let w = 1.0 - u;
    Ok((w * w + 3.0 * u * w) / (u * u + 3.0 * u * w))
}

/// Zeros of the 3-choice drift on the left half and their mirror images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibria {
    /// Bottom of the left pre-consensus well.
    pub alpha0: f64,
    /// Top of the hill between the left well and the central well.
    pub alpha1: f64,
    pub alpha0_star: f64,
    pub alpha1_star: f64,
}

/// `alpha_{0,1}(q) = (1 ∓ sqrt(1 - 8q/(1-q)))/4 - q`; none when `q > 1/9`.
pub fn equilibrium_points(q: f64) -> Result<Option<Equilibria>, ModelError> {
    if !(q > 0.0 && q < 0.5) {
        return Err(ModelError::Domain(format!("q = {q} must lie in (0, 1/2)")));
    }
    // 1 - 8q/(1-q) = (1 - 9q)/(1 - q)
    let disc = (1.0 - 9.0 * q) / (1.0 - q);
    if disc < 0.0 {
        return Ok(None);
    }
    let root = disc.sqrt();
    // 1 - sqrt(1 - x) = x / (1 + sqrt(1 - x)) keeps alpha0 accurate for small q.
    let x = 8.0 * q / (1.0 - q);
    let alpha0 = 0.25 * (x / (1.0 + root)) - q;
    let alpha1 = 0.25 * (1.0 + root) - q;
    let alpha0 = if root == 0.0 { alpha1 } else { alpha0 };
    Ok(Some(Equilibria {
        alpha0,
        alpha1,
        alpha0_star: 1.0 - q - alpha0,
        alpha1_star: 1.0 - q - alpha1,
    }))
}

/// `P[Bin(k, h) <= (k-1)/2]` and `P[Bin(k, h) >= (k+1)/2]`.
fn majority_tails(k: u32, h: f64) -> (f64, f64) {
    let mut low = 0.0;
    let mut high = 0.0;
    for j in 0..=k {
        let term = binomial_coefficient(k, j) * h.powi(j as i32) * (1.0 - h).powi((k - j) as i32);
        if 2 * j < k {
            low += term;
        } else {
            high += term;
        }
    }
    (low, high)
}

/// Continuum drift `q~ - p~` at honest-1 fraction `s` left of the centre,
/// with adversary fraction `a` voting 1.
pub fn continuum_drift(s: f64, a: f64, k: u32) -> f64 {
    let (low, high) = majority_tails(k, s + a);
    (1.0 - s - a) * high - s * low
}

/// `ln(p~/q~)` in the continuum limit left of the centre. For `k = 3` this
/// is the integrand of the critical-fraction equation.
pub fn continuum_log_ratio(s: f64, a: f64, k: u32) -> f64 {
    if k == 3 {
        let w = 1.0 - s - a;
        let h = s + a;
        return (s * (w * w + 3.0 * h * w)).ln() - (h * h * h + 3.0 * h * h * w).ln();
    }
    let (low, high) = majority_tails(k, s + a);
    (s * low).ln() - ((1.0 - s - a) * high).ln()
}

/// Zeros of the continuum drift on `(0, (1-a)/2)`: the bottom of the left
/// pre-consensus well and the hill top next to it. `None` if the drift keeps
/// its sign (no pre-consensus well).
pub fn continuum_wells(a: f64, k: u32) -> Option<(f64, f64)> {
    let centre = 0.5 * (1.0 - a);
    let drift = |s: f64| continuum_drift(s, a, k);
    // Geometric grid near zero (well bottoms can sit at ~q^((k+1)/2)),
    // linear grid further out, geometric again towards the centre (hill tops
    // sit at ~q/2 below it).
    let mut grid: Vec<f64> = (0..600).map(|i| 1e-300 * 10f64.powf(i as f64 * 0.5)).take_while(|&s| s < 1e-3).collect();
    grid.extend((1..2000).map(|i| centre * i as f64 / 2000.0).filter(|&s| s >= 1e-3));
    grid.extend((8..30).map(|i| centre * (1.0 - 10f64.powf(-0.5 * i as f64))));
    let mut prev = grid[0];
    let mut bottom = None;
    for &s in &grid[1..] {
        if drift(prev) > 0.0 && drift(s) <= 0.0 {
            bottom = bisect(drift, prev, s, prev.max(1e-300) * 1e-12);
            prev = s;
            break;
        }
        prev = s;
    }
    let bottom = bottom?;
    let start = grid.iter().position(|&s| s >= prev).unwrap_or(grid.len() - 1);
    let mut lo = grid[start.saturating_sub(1)].max(bottom);
    for &s in &grid[start..] {
        if drift(lo) <= 0.0 && drift(s) > 0.0 {
            let top = bisect(drift, lo, s, 1e-14)?;
            return Some((bottom, top));
        }
        lo = s;
    }
    None
}

/// `int_{alpha0(q)}^{(1-q)/2} ln(p~/q~) ds`; positive when the pre-consensus
/// wells are deeper than the central one.
pub fn well_depth_integral(q: f64) -> Result<f64, ModelError> {
    let eq = equilibrium_points(q)?
        .ok_or_else(|| ModelError::Domain(format!("no pre-consensus well for q = {q} > 1/9")))?;
    Ok(simpson(
        |s| continuum_log_ratio(s, q, 3),
        eq.alpha0,
        0.5 * (1.0 - q),
        1e-10,
    ))
}

/// Same integral for a `k`-query walk, between the numerically located well
/// bottom and the centre.
pub fn well_depth_integral_k(q: f64, k: u32) -> Result<Option<f64>, ModelError> {
    if !(q > 0.0 && q < 0.5) {
        return Err(ModelError::Domain(format!("q = {q} must lie in (0, 1/2)")));
    }
    if k.is_multiple_of(2) {
        return Err(ModelError::EvenK(k));
    }
    Ok(continuum_wells(q, k).map(|(bottom, _)| {
        // The bottom can sit many decades below the centre, so integrate
        // over dyadic pieces [b, 2b], [2b, 4b], ... that each look smooth.
        let centre = 0.5 * (1.0 - q);
        let mut total = 0.0;
        let mut lo = bottom;
        while lo < centre {
            let hi = (2.0 * lo).min(centre);
            total += simpson(|s| continuum_log_ratio(s, q, k), lo, hi, 1e-12);
            lo = hi;
        }
        total
    }))
}

/// Default bracket for [`critical_q`].
pub const QSTAR_BRACKET: (f64, f64) = (0.01, 1.0 / 9.0);

/// Root in `q` of the well-depth integral (the switch between pre-consensus
/// and balanced ground states), bisected to `tolerance`.
pub fn critical_q(tolerance: f64) -> Result<f64, ModelError> {
    critical_q_in(QSTAR_BRACKET.0, QSTAR_BRACKET.1, tolerance)
}

pub fn critical_q_in(lo: f64, hi: f64, tolerance: f64) -> Result<f64, ModelError> {
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(ModelError::Domain(format!("tolerance must be positive, got {tolerance}")));
    }
    let f = |q: f64| well_depth_integral(q).unwrap_or(f64::NAN);
    let (f_lo, f_hi) = (f(lo), f(hi));
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(ModelError::NoRootBracketed { lo, hi });
    }
    bisect(f, lo, hi, tolerance).ok_or(ModelError::NoRootBracketed { lo, hi })
}

fn cached_qstar() -> f64 {
    static QSTAR: OnceLock<f64> = OnceLock::new();
    *QSTAR.get_or_init(|| critical_q(1e-9).expect("critical fraction is bracketed"))
}

/// Which potential well is the ground state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Three wells, the two pre-consensus ones are deepest.
    PreconsensusGround,
    /// Three wells, the balanced one is deepest.
    BalancedGround,
    /// Only the central well.
    SingleCentralWell,
}

pub fn classify_regime(q: f64, k: u32) -> Result<Regime, ModelError> {
    if !(q > 0.0 && q < 0.5) {
        return Err(ModelError::Domain(format!("q = {q} must lie in (0, 1/2)")));
    }
    if k == 3 {
        return Ok(if 9.0 * q > 1.0 {
            Regime::SingleCentralWell
        } else if q < cached_qstar() {
            Regime::PreconsensusGround
        } else {
            Regime::BalancedGround
        });
    }
    Ok(match well_depth_integral_k(q, k)? {
        None => Regime::SingleCentralWell,
        Some(depth) if depth > 0.0 => Regime::PreconsensusGround,
        Some(_) => Regime::BalancedGround,
    })
}

/// Drift `q~_m - p~_m` of the `k`-query walk at every lattice state.
pub fn lattice_drift(n: u64, q: f64, k: u32) -> Vec<f64> {
    let adv = adversary_count(n, q);
    (0..=n - adv)
        .map(|m| {
            let t: Transitions<f64> = kernel(n, adv, k, m);
            t.up - t.down
        })
        .collect()
}

/// Bottom of the left pre-consensus well as a fraction of `n`.
///
/// Scans the lattice drift for its first `+ -> -` sign change and refines
/// between the two states with the continuum drift.
pub fn left_well_bottom(n: u64, q: f64, k: u32) -> Option<f64> {
    let drift = lattice_drift(n, q, k);
    let half = drift.len() / 2;
    let m = (1..=half).find(|&m| drift[m - 1] > 0.0 && drift[m] <= 0.0)?;
    let a = adversary_count(n, q) as f64 / n as f64;
    let lo = (m - 1) as f64 / n as f64;
    let hi = m as f64 / n as f64;
    bisect(|s| continuum_drift(s, a, k), lo, hi, hi * 1e-13).or(Some(hi))
}
