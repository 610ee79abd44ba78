use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{expected_absorption_time, BirthDeathChain, ChainError, State};
use crate::randomness::SeedSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    HitStopSet,
    MaxSteps,
}

/// A sampled path of the chain, one entry per step including the start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub seed: u64,
    pub stop_reason: StopReason,
}

impl Trajectory {
    /// Number of steps taken.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }
}

fn step(chain: &BirthDeathChain, m: State, rng: &mut impl Rng) -> State {
    let u: f64 = rng.gen();
    let p = chain.down(m);
    if u < p {
        m - 1
    } else if u < p + chain.up(m) {
        m + 1
    } else {
        m
    }
}

/// Runs the chain from `x0` until it enters `stop_set` or `max_steps` steps
/// have been taken. Deterministic in `seed`.
pub fn simulate(
    chain: &BirthDeathChain,
    x0: State,
    stop_set: &BTreeSet<State>,
    max_steps: usize,
    seed: u64,
) -> Result<Trajectory, ChainError> {
    chain.check_state(x0)?;
    let mut rng = SeedSchedule::rng(seed, 0);
    let mut states = vec![x0];
    let mut m = x0;
    let mut stop_reason = StopReason::MaxSteps;
    if stop_set.contains(&x0) {
        stop_reason = StopReason::HitStopSet;
    } else {
        for _ in 0..max_steps {
            m = step(chain, m, &mut rng);
            states.push(m);
            if stop_set.contains(&m) {
                stop_reason = StopReason::HitStopSet;
                break;
            }
        }
    }
    Ok(Trajectory {
        states,
        seed,
        stop_reason,
    })
}

/// Hitting time of `stop_set` from `x0`, or `None` if it exceeds `max_steps`
/// or the walk gets stuck in a state that never moves.
///
/// Holding periods are sampled in one draw as geometric variables, so only
/// actual moves cost work. The law of the hitting time is the same as for
/// step-by-step simulation.
pub fn hitting_time(
    chain: &BirthDeathChain,
    x0: State,
    stop_set: &BTreeSet<State>,
    max_steps: u64,
    rng: &mut ChaCha8Rng,
) -> Option<u64> {
    let mut m = x0;
    let mut t: u64 = 0;
    while !stop_set.contains(&m) {
        let (p, q) = (chain.down(m), chain.up(m));
        let r = p + q;
        if r <= 0.0 {
            return None;
        }
        let wait = if r >= 1.0 {
            1
        } else {
            // Geometric on {1, 2, ...} with success probability r.
            let u: f64 = 1.0 - rng.gen::<f64>();
            (u.ln() / (-r).ln_1p()).ceil().max(1.0) as u64
        };
        t = t.saturating_add(wait);
        if t > max_steps {
            return None;
        }
        let u: f64 = rng.gen();
        m = if u * r < p { m - 1 } else { m + 1 };
    }
    Some(t)
}

/// Independent hitting-time samples of `exit_set` from `start`.
///
/// Run `i` draws from the stream derived from `(seed, i)`, so the sample
/// vector does not depend on how runs are scheduled across threads.
pub fn escape_time_samples(
    chain: &BirthDeathChain,
    start: State,
    exit_set: &BTreeSet<State>,
    runs: usize,
    seed: u64,
) -> Result<Vec<u64>, ChainError> {
    expected_absorption_time(chain, start, exit_set)?;
    let schedule = SeedSchedule::new(seed);
    let samples = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = SeedSchedule::rng(schedule.derive(i as u64), 0);
            hitting_time(chain, start, exit_set, u64::MAX, &mut rng)
                .expect("target reachable with probability one")
        })
        .collect();
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Boundary;

    fn walk(n: usize) -> BirthDeathChain {
        BirthDeathChain::from_fn(n, Boundary::Absorbing, Boundary::Absorbing, |m| {
            if m == 0 || m == n {
                (0.0, 0.0)
            } else {
                (0.3, 0.3)
            }
        })
        .unwrap()
    }

    #[test]
    fn start_in_stop_set() {
        let stop: BTreeSet<_> = [0, 5].into_iter().collect();
        let tr = simulate(&walk(5), 5, &stop, 100, 1).unwrap();
        assert_eq!(tr.states, vec![5]);
        assert_eq!(tr.stop_reason, StopReason::HitStopSet);
        assert_eq!(escape_time_samples(&walk(5), 0, &stop, 4, 9).unwrap(), vec![0; 4]);
    }

    #[test]
    fn trajectories_are_nearest_neighbour_and_seeded() {
        let stop: BTreeSet<_> = [0, 20].into_iter().collect();
        let a = simulate(&walk(20), 10, &stop, 10_000, 42).unwrap();
        let b = simulate(&walk(20), 10, &stop, 10_000, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.states.windows(2).all(|w| w[0].abs_diff(w[1]) <= 1));
        let capped = simulate(&walk(20), 10, &stop, 3, 42).unwrap();
        assert_eq!(capped.steps(), 3);
        assert_eq!(capped.stop_reason, StopReason::MaxSteps);
    }

    #[test]
    fn escape_samples_are_reproducible() {
        let stop: BTreeSet<_> = [0, 20].into_iter().collect();
        let a = escape_time_samples(&walk(20), 7, &stop, 64, 3).unwrap();
        let b = escape_time_samples(&walk(20), 7, &stop, 64, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&t| t > 0));
    }
}
