use num_rational::Ratio;
use num_traits::{FromPrimitive, Num};

use super::{adversary_count, ModelError};
use crate::chain::{BirthDeathChain, Boundary};

/// One-step probabilities `(p_m, q_m, v_m)` of a majority-dynamics walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transitions<T> {
    pub down: T,
    pub up: T,
    pub hold: T,
}

/// Exact rational arithmetic for kernel checks.
pub type Exact = Ratio<i128>;

fn pow<T: Num + Clone>(x: &T, e: u32) -> T {
    (0..e).fold(T::one(), |acc, _| acc * x.clone())
}

fn choose(k: u32, j: u32) -> u64 {
    let j = j.min(k - j);
    (0..j as u64).fold(1, |acc, i| acc * (k as u64 - i) / (i + 1))
}

/// `(P[Bin(k, h) <= (k-1)/2], P[Bin(k, h) >= (k+1)/2])`, each summed from its
/// own terms.
fn majority_split<T: Num + Clone + FromPrimitive>(k: u32, h: &T) -> (T, T) {
    let one_minus = T::one() - h.clone();
    let mut low = T::zero();
    let mut high = T::zero();
    for j in 0..=k {
        let term = T::from_u64(choose(k, j)).expect("binomial fits")
            * pow(h, j)
            * pow(&one_minus, k - j);
        if 2 * j < k {
            low = low + term;
        } else {
            high = high + term;
        }
    }
    (low, high)
}

/// Kernel of the walk on the number `m` of honest 1-opinions, `n` nodes of
/// which `adversaries` always vote for the honest minority (ties count as a
/// 0-majority, so the adversary then votes 1). The selected node queries `k`
/// peers with replacement, itself included.
pub fn kernel<T: Num + Clone + FromPrimitive>(
    n: u64,
    adversaries: u64,
    k: u32,
    m: u64,
) -> Transitions<T> {
    let honest = n - adversaries;
    let nn = T::from_u64(n).expect("n fits");
    let frac = |x: u64| T::from_u64(x).expect("count fits") / nn.clone();
    let voting_ones = if 2 * m <= honest { m + adversaries } else { m };
    let (flip_down, flip_up) = majority_split(k, &frac(voting_ones));
    let down = frac(m) * flip_down;
    let up = frac(honest - m) * flip_up;
    let hold = T::one() - down.clone() - up.clone();
    Transitions { down, up, hold }
}

fn check_n(n: u64) -> Result<(), ModelError> {
    if n < 4 {
        return Err(ModelError::Range(format!("n = {n} must be at least 4")));
    }
    Ok(())
}

fn check_q(q: f64) -> Result<(), ModelError> {
    if !(0.0..0.5).contains(&q) {
        return Err(ModelError::Domain(format!("q = {q} must lie in [0, 1/2)")));
    }
    Ok(())
}

fn check_k(k: u32) -> Result<(), ModelError> {
    if k.is_multiple_of(2) {
        return Err(ModelError::EvenK(k));
    }
    if k < 3 {
        return Err(ModelError::Range(format!("k = {k} must be at least 3")));
    }
    Ok(())
}

/// Honest 3-choice kernel:
/// `p_m = (m/n)((1-m/n)^3 + 3(1-m/n)^2 (m/n))`,
/// `q_m = (1-m/n)((m/n)^3 + 3(1-m/n)(m/n)^2)`.
pub fn honest_transitions(n: u64, m: u64) -> Result<Transitions<f64>, ModelError> {
    check_n(n)?;
    if m > n {
        return Err(ModelError::Range(format!("state {m} outside 0..={n}")));
    }
    Ok(kernel(n, 0, 3, m))
}

pub fn honest_transitions_exact(n: u64, m: u64) -> Result<Transitions<Exact>, ModelError> {
    check_n(n)?;
    if m > n {
        return Err(ModelError::Range(format!("state {m} outside 0..={n}")));
    }
    Ok(kernel(n, 0, 3, m))
}

/// 3-choice kernel with `floor(q n)` adversaries playing help-the-weakest.
/// States are `0..=n - floor(q n)`.
pub fn byzantine_transitions(n: u64, q: f64, m: u64) -> Result<Transitions<f64>, ModelError> {
    k_query_transitions(n, q, 3, m)
}

pub fn byzantine_transitions_exact(
    n: u64,
    q: f64,
    m: u64,
) -> Result<Transitions<Exact>, ModelError> {
    check_n(n)?;
    check_q(q)?;
    let adv = adversary_count(n, q);
    if m > n - adv {
        return Err(ModelError::Range(format!("state {m} outside 0..={}", n - adv)));
    }
    Ok(kernel(n, adv, 3, m))
}

/// Same walk with `k` (odd) queries per update.
pub fn k_query_transitions(n: u64, q: f64, k: u32, m: u64) -> Result<Transitions<f64>, ModelError> {
    check_n(n)?;
    check_q(q)?;
    check_k(k)?;
    let adv = adversary_count(n, q);
    if m > n - adv {
        return Err(ModelError::Range(format!("state {m} outside 0..={}", n - adv)));
    }
    Ok(kernel(n, adv, k, m))
}

/// Honest walk on `0..=n` with both consensus states absorbing.
pub fn honest_chain(n: u64) -> Result<BirthDeathChain, ModelError> {
    check_n(n)?;
    let chain = BirthDeathChain::from_fn(n as usize, Boundary::Absorbing, Boundary::Absorbing, |m| {
        let t: Transitions<f64> = kernel(n, 0, 3, m as u64);
        (t.down, t.up)
    })?;
    Ok(chain)
}

/// Honest walk folded at `n/2` (distance to the nearer consensus state).
/// `0` is absorbing; from `n/2` both moves of the unfolded walk lead to
/// `n/2 - 1`.
pub fn folded_honest_chain(n: u64) -> Result<BirthDeathChain, ModelError> {
    check_n(n)?;
    if !n.is_multiple_of(2) {
        return Err(ModelError::Range(format!("n = {n} must be even to fold")));
    }
    let half = n / 2;
    let chain = BirthDeathChain::from_fn(half as usize, Boundary::Absorbing, Boundary::Reflecting, |m| {
        let t: Transitions<f64> = kernel(n, 0, 3, m as u64);
        if m as u64 == half {
            (t.down + t.up, 0.0)
        } else {
            (t.down, t.up)
        }
    })?;
    Ok(chain)
}

/// Byzantine `k`-query walk on `0..=n - floor(q n)`. Endpoints reflect when
/// there is at least one adversary and absorb otherwise.
pub fn byzantine_chain(n: u64, q: f64, k: u32) -> Result<BirthDeathChain, ModelError> {
    check_n(n)?;
    check_q(q)?;
    check_k(k)?;
    let adv = adversary_count(n, q);
    let boundary = if adv > 0 {
        Boundary::Reflecting
    } else {
        Boundary::Absorbing
    };
    let chain = BirthDeathChain::from_fn((n - adv) as usize, boundary, boundary, |m| {
        let t: Transitions<f64> = kernel(n, adv, k, m as u64);
        (t.down, t.up)
    })?;
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn honest_values() {
        let t = honest_transitions(20, 5).unwrap();
        assert_eq!(t.down, 0.2109375);
        assert_eq!(t.up, 0.1171875);
        let t = honest_transitions(20, 0).unwrap();
        assert_eq!((t.down, t.up, t.hold), (0.0, 0.0, 1.0));
        let t = honest_transitions(20, 20).unwrap();
        assert_eq!((t.down, t.up, t.hold), (0.0, 0.0, 1.0));
        assert!(honest_transitions(20, 21).is_err());
        assert!(honest_transitions(3, 1).is_err());
    }

    #[test]
    fn honest_symmetry_exact() {
        for n in [4u64, 7, 20, 33] {
            for m in 0..=n {
                let a = honest_transitions_exact(n, m).unwrap();
                let b = honest_transitions_exact(n, n - m).unwrap();
                assert_eq!(a.down, b.up);
                assert_eq!(a.up, b.down);
            }
        }
    }

    #[test]
    fn byzantine_bottom_state_is_not_absorbing() {
        let t = byzantine_transitions(20, 0.1, 0).unwrap();
        assert_eq!(t.down, 0.0);
        assert!((t.up - 0.0252).abs() < 1e-15);
        let exact = byzantine_transitions_exact(20, 0.1, 0).unwrap();
        assert_eq!(exact.up, Exact::new(252, 10_000));
    }

    #[test]
    fn byzantine_with_no_adversary_is_honest() {
        for n in [4u64, 10, 25] {
            for m in 0..=n {
                assert_eq!(
                    byzantine_transitions(n, 0.0, m).unwrap(),
                    honest_transitions(n, m).unwrap()
                );
            }
        }
    }

    #[test]
    fn k_query_validation() {
        assert_eq!(k_query_transitions(20, 0.1, 4, 3), Err(ModelError::EvenK(4)));
        assert!(k_query_transitions(20, 0.1, 1, 3).is_err());
        assert!(k_query_transitions(20, 0.6, 3, 3).is_err());
        assert!(k_query_transitions(20, 0.1, 3, 19).is_err());
        assert_eq!(
            k_query_transitions(40, 0.1, 3, 17).unwrap(),
            byzantine_transitions(40, 0.1, 17).unwrap()
        );
    }

    #[test]
    fn folded_chain_top() {
        let y = folded_honest_chain(20).unwrap();
        assert_eq!(y.size(), 10);
        assert!((y.down(10) - 0.5).abs() < 1e-15);
        assert!((y.hold(10) - 0.5).abs() < 1e-15);
        assert_eq!(y.up(10), 0.0);
        assert!(folded_honest_chain(21).is_err());
    }
}
