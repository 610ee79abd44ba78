//! Transition kernels against brute-force enumeration of every selected node
//! and every ordered triple of queried nodes.

mod common;

use common::enumerate;
use fpc_core::models::{
    adversary_count, byzantine_transitions, byzantine_transitions_exact, honest_transitions,
    honest_transitions_exact, Exact,
};

fn check(n: usize, q: f64, m: usize) {
    let adv = adversary_count(n as u64, q) as usize;
    let (down, up) = enumerate(n, adv, m);
    let total = (n as i128).pow(4);
    let expected_down = Exact::new(down, total);
    let expected_up = Exact::new(up, total);
    let exact = if q == 0.0 {
        honest_transitions_exact(n as u64, m as u64).unwrap()
    } else {
        byzantine_transitions_exact(n as u64, q, m as u64).unwrap()
    };
    assert_eq!(exact.down, expected_down, "n={n} q={q} m={m}");
    assert_eq!(exact.up, expected_up, "n={n} q={q} m={m}");
    assert_eq!(exact.hold, Exact::from_integer(1) - expected_down - expected_up);

    let float = if q == 0.0 {
        honest_transitions(n as u64, m as u64).unwrap()
    } else {
        byzantine_transitions(n as u64, q, m as u64).unwrap()
    };
    let approx = |r: Exact| *r.numer() as f64 / *r.denom() as f64;
    assert!((float.down - approx(expected_down)).abs() <= 1e-12);
    assert!((float.up - approx(expected_up)).abs() <= 1e-12);
}

#[test]
fn honest_kernel_matches_enumeration() {
    for n in 4..=30 {
        for m in 0..=n {
            check(n, 0.0, m);
        }
    }
}

#[test]
fn byzantine_kernel_matches_enumeration() {
    for q in [0.1, 0.2] {
        for n in 4..=30 {
            let honest = n - adversary_count(n as u64, q) as usize;
            for m in 0..=honest {
                check(n, q, m);
            }
        }
    }
}

#[test]
fn byzantine_case_split_is_discontinuous() {
    // n = 40, q = 0.1: 36 honest nodes, the split sits at m = 18.
    let left = byzantine_transitions(40, 0.1, 18).unwrap();
    let right = byzantine_transitions(40, 0.1, 19).unwrap();
    check(40, 0.1, 18);
    check(40, 0.1, 19);
    // Left of the split the adversary pushes up, right of it down.
    assert!(left.up > left.down);
    assert!(right.down > right.up);
}

#[test]
fn documented_values() {
    let t = honest_transitions_exact(20, 5).unwrap();
    assert_eq!(t.down, Exact::new(2109375, 10_000_000));
    assert_eq!(t.up, Exact::new(1171875, 10_000_000));
}
