//! Shape of the Byzantine potential: k-query well scaling and escape from
//! the central well.

use fpc_core::experiments::escape_exponentiality_study;
use fpc_core::models::{continuum_wells, equilibrium_points};

#[test]
fn well_bottom_scales_like_q_to_half_k_plus_one() {
    for k in [3u32, 5, 7, 9, 11] {
        let (q1, q2) = (1e-4, 2e-4);
        let h1 = continuum_wells(q1, k).unwrap().0;
        let h2 = continuum_wells(q2, k).unwrap().0;
        let slope = (h2 / h1).ln() / (q2 / q1).ln();
        let expected = (k + 1) as f64 / 2.0;
        assert!((slope - expected).abs() < 0.01, "k={k}: slope {slope}");
    }
}

#[test]
fn well_bottom_shrinks_with_k() {
    let bottoms: Vec<f64> = (3..=21)
        .step_by(2)
        .map(|k| continuum_wells(0.05, k).unwrap().0)
        .collect();
    assert!(bottoms.windows(2).all(|w| w[1] < w[0]), "{bottoms:?}");
}

#[test]
fn three_query_wells_match_closed_form() {
    for q in [0.01, 0.05, 0.1] {
        let (bottom, top) = continuum_wells(q, 3).unwrap();
        let e = equilibrium_points(q).unwrap().unwrap();
        assert!((bottom - e.alpha0).abs() < 1e-10, "q={q}: {bottom} vs {}", e.alpha0);
        assert!((top - e.alpha1).abs() < 1e-10, "q={q}: {top} vs {}", e.alpha1);
    }
}

#[test]
fn central_escape_times_look_exponential() {
    let mut means = Vec::new();
    for q in [0.06, 0.08, 0.1] {
        let d = escape_exponentiality_study(200, q, 3, 1000, 7, None).unwrap();
        assert!(
            (0.8..=1.2).contains(&d.coefficient_of_variation),
            "q={q}: cv {}",
            d.coefficient_of_variation
        );
        // Sample mean within 4 standard errors of the exact mean.
        let se = d.std_dev / (d.runs as f64).sqrt();
        assert!((d.mean - d.exact_mean).abs() < 4.0 * se, "q={q}: {d:?}");
        means.push(d.exact_mean);
    }
    assert!(means.windows(2).all(|w| w[1] > w[0]), "{means:?}");
}
