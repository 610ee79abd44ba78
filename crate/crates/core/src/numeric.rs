//! Quadrature and scalar root bracketing used by the model analysis.

/// Composite Simpson rule on `[lo, hi]`, doubling the number of panels until
/// two successive estimates differ by less than `tol`.
///
/// Returns the last estimate. Gives up refining after 2^24 panels.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    if lo == hi {
        return 0.0;
    }
    let mut panels: usize = 2;
    let h = (hi - lo) / panels as f64;
    // Sums of f at the endpoints, at odd nodes and at even interior nodes.
    let ends = f(lo) + f(hi);
    let mut odd = f(lo + h);
    let mut even = 0.0;
    let mut estimate = (ends + 4.0 * odd + 2.0 * even) * h / 3.0;
    loop {
        panels *= 2;
        let h = (hi - lo) / panels as f64;
        even += odd;
        odd = (0..panels / 2).map(|i| f(lo + (2 * i + 1) as f64 * h)).sum();
        let next = (ends + 4.0 * odd + 2.0 * even) * h / 3.0;
        if (next - estimate).abs() < tol || panels >= 1 << 24 {
            return next;
        }
        estimate = next;
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Returns `None` when `f(lo)` and `f(hi)` have the same strict sign.
/// Stops once the bracket is narrower than `tol`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return None;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// `C(k, j)` as a float; exact for the small `k` used here.
pub fn binomial_coefficient(k: u32, j: u32) -> f64 {
    let j = j.min(k - j);
    (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_polynomials_and_logs() {
        let v = simpson(|x| x * x * x, 0.0, 2.0, 1e-12);
        assert!((v - 4.0).abs() < 1e-12);
        // Integrable log singularity at 0: int_0^1 ln x dx = -1.
        let v = simpson(|x| if x == 0.0 { 0.0 } else { x.ln() }, 0.0, 1.0, 1e-6);
        assert!((v + 1.0).abs() < 1e-3);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-11);
        assert_eq!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-6), None);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial_coefficient(5, 2), 10.0);
        assert_eq!(binomial_coefficient(41, 20), 269128937220.0);
    }
}
