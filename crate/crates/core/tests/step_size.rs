//! The certified step size keeps the comparison matrix contractive.

mod common;

use nalgebra::{Matrix3, Vector3};
use qdgt::constants::{build_g, max_step_size, spectral_radius3, AnalysisOptions, NetworkConstants, ProblemScalars};
use qdgt::digraph::{build_weights, perron_vectors, Digraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Collatz–Wielandt bracket for the Perron root of a nonnegative matrix:
/// for any positive `v`, `min_i (Gv)_i / v_i ≤ ρ(G) ≤ max_i (Gv)_i / v_i`.
/// Power iteration drives `v` toward the Perron vector so the bracket
/// tightens.
fn perron_bracket(g: &Matrix3<f64>) -> (f64, f64) {
    assert!(g.iter().all(|&e| e >= 0.0), "G must be nonnegative");
    let mut v = Vector3::repeat(1.0);
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for _ in 0..20_000 {
        let gv = g * v;
        let ratios = gv.component_div(&v);
        lo = lo.max(ratios.min());
        hi = hi.min(ratios.max());
        if hi - lo <= 1e-15 {
            break;
        }
        // a small shift keeps every entry positive for reducible G
        v = (gv + v * 1e-300).normalize();
    }
    (lo, hi)
}

#[test]
fn collatz_wielandt_oracle_brackets_known_radius() {
    let g = Matrix3::new(0.5, 0.2, 0.0, 0.1, 0.6, 0.3, 0.0, 0.4, 0.2);
    let (lo, hi) = perron_bracket(&g);
    let ev = nalgebra::DMatrix::from_column_slice(3, 3, g.as_slice()).complex_eigenvalues();
    let rho = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(lo <= rho + 1e-12 && rho <= hi + 1e-12);
    assert!(hi - lo < 1e-12);
}

#[test]
fn eta_max_and_below_are_contractive_on_random_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let opts = AnalysisOptions::default();
    for case in 0..100 {
        let n = rng.random_range(3..=12);
        let p = rng.random_range(0.1..0.6);
        let graph = Digraph::random_strongly_connected(n, p, rng.random()).unwrap();
        let alpha = rng.random_range(0.2..0.9);
        let beta = rng.random_range(0.2..0.9);
        let w = build_weights(&graph, alpha, beta).unwrap();
        let pv = perron_vectors(&w).unwrap();
        let net = NetworkConstants::compute(&w, &pv, &opts).unwrap();
        let mu = rng.random_range(0.05..2.0);
        let l = mu * rng.random_range(1.0..20.0);
        let prob = ProblemScalars { mu, l, n, m: rng.random_range(1..4) };
        let eta_max = max_step_size(&prob, &net).eta_max;
        assert!(eta_max > 0.0 && eta_max.is_finite(), "case {case}");

        let mut etas = vec![eta_max];
        etas.extend((0..5).map(|_| eta_max * rng.random_range(1e-3..1.0)));
        for eta in etas {
            let g = build_g(&prob, eta, &net).unwrap();
            assert!(g.iter().all(|e| e.is_finite()));
            let (lo, hi) = perron_bracket(&g);
            assert!(hi < 1.0, "case {case} (n = {n}): Perron root bracket [{lo}, {hi}] at eta = {eta:e}");
            let rho = spectral_radius3(&g);
            assert!(rho >= lo - 1e-9 && rho <= hi + 1e-9, "case {case}: {rho} outside [{lo}, {hi}]");
        }
    }
}
