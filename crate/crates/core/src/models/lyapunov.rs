//! Exact check of the Lyapunov function behind the honest absorption-time
//! bound.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::kernel::{kernel, Transitions};
use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub n: u64,
    /// `max_{1 <= m < n/2} E_m g(Y_1) - g(m)`.
    pub max_interior_drift: f64,
    /// Drift at `n/2`, `-Delta_{n/2} / 2`.
    pub drift_at_half: f64,
    pub g_at_half: f64,
    /// Exact comparison of the interior drift with `-15/128`.
    pub interior_drift_below_15_128: bool,
    /// Exact comparison of the drift at `n/2` with `-1/2`.
    pub drift_at_half_below_half: bool,
    /// `g(n/2) <= 2n(1 + ln n)`, compared in floating point.
    pub g_bound_holds: bool,
}

fn ratio(num: u64, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Increments `Delta_1..=Delta_{n/2}` of `g` (index 0 unused):
/// `n/m + 2` below `n/4`, `n/(n/2 - m) + 2` up to `n/2 - ceil(sqrt n)`, and
/// `n/2 - m + 2 - delta_n` on the last stretch, where
/// `delta_n = ceil(sqrt n) - n / ceil(sqrt n)`.
fn increments(n: u64) -> Vec<BigRational> {
    let half = n / 2;
    let root = (1..).find(|r: &u64| r * r >= n).expect("n is finite");
    let delta_n = ratio(root, 1) - ratio(n, root);
    let two = ratio(2, 1);
    let mut out = vec![BigRational::zero()];
    for m in 1..=half {
        let d = if 4 * m < n {
            ratio(n, m) + &two
        } else if m + root < half {
            ratio(n, half - m) + &two
        } else {
            ratio(half - m, 1) + &two - &delta_n
        };
        out.push(d);
    }
    out
}

/// Builds `Delta_m` and `g` for the folded honest walk and evaluates the
/// one-step drift of `g` at every state, in exact rational arithmetic.
pub fn lyapunov_drift_check(n: u64) -> Result<LyapunovReport, ModelError> {
    if n < 20 || !n.is_multiple_of(4) {
        return Err(ModelError::Range(format!(
            "n = {n} must be at least 20 and divisible by 4"
        )));
    }
    let half = n / 2;
    let delta = increments(n);
    let mut max_drift: Option<BigRational> = None;
    for m in 1..half {
        let t: Transitions<BigRational> = kernel(n, 0, 3, m);
        let drift = -(t.down * &delta[m as usize]) + t.up * &delta[m as usize + 1];
        if max_drift.as_ref().is_none_or(|best| drift > *best) {
            max_drift = Some(drift);
        }
    }
    let max_drift = max_drift.expect("n/2 > 1");
    let at_half = -(&delta[half as usize]) / ratio(2, 1);
    let g_half = delta.iter().fold(BigRational::zero(), |acc, d| acc + d);
    let limit = 2.0 * n as f64 * (1.0 + (n as f64).ln());
    Ok(LyapunovReport {
        n,
        max_interior_drift: to_f64(&max_drift),
        drift_at_half: to_f64(&at_half),
        g_at_half: to_f64(&g_half),
        interior_drift_below_15_128: max_drift <= -ratio(15, 128),
        drift_at_half_below_half: at_half <= -(BigRational::one() / ratio(2, 1)),
        g_bound_holds: to_f64(&g_half) <= limit && g_half.is_positive(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_n() {
        assert!(lyapunov_drift_check(16).is_err());
        assert!(lyapunov_drift_check(22).is_err());
    }

    #[test]
    fn small_case() {
        let r = lyapunov_drift_check(20).unwrap();
        assert!(r.interior_drift_below_15_128, "{r:?}");
        assert!(r.drift_at_half_below_half);
        assert!(r.g_bound_holds);
    }
}
