mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use common::{balancing_dense_qp, interior_point, random_instance, rng};
use nddid::balancing::{build_qp, solve_qp, BalancingWeights, QpProblem};

const TOL: f64 = 1e-8;

fn solve(f: &DMatrix<f64>, s: &[bool], t: &[bool], sigma2: f64) -> (QpProblem, BalancingWeights) {
    let qp = build_qp(f, s, t, sigma2).unwrap();
    let w = solve_qp(&qp, TOL, 50_000).unwrap();
    (qp, w)
}

fn equality_residual(s: &[bool], t: &[bool], gamma: &[f64]) -> f64 {
    let mut sums = [0.0; 4];
    for i in 0..gamma.len() {
        let (si, ti) = (s[i] as u8 as f64, t[i] as u8 as f64);
        sums[0] += gamma[i];
        sums[1] += si * gamma[i];
        sums[2] += ti * gamma[i];
        sums[3] += si * ti * gamma[i];
    }
    sums[..3].iter().map(|v| v.abs()).fold((sums[3] - 1.0).abs(), f64::max)
}

#[test]
fn matches_dense_interior_point_oracle() {
    let mut r = rng(2024);
    for k in 0..50 {
        let n = 8 + (k * 7) % 43;
        let p = 1 + k % 5;
        let (f, s, t, sigma2) = random_instance(&mut r, n, p);
        let (qp, w) = solve(&f, &s, &t, sigma2);
        let oracle = interior_point(&balancing_dense_qp(&f, &s, &t, sigma2));
        let ours = qp.objective(&w.gamma, &w.epigraph);
        let rel = (ours - oracle.objective).abs() / oracle.objective.abs().max(1e-12);
        assert!(rel <= 1e-5, "instance {k} (n={n}, p={p}): {ours} vs oracle {}", oracle.objective);
        assert!(equality_residual(&s, &t, &w.gamma) <= 1e-8);
        assert!(qp.max_violation(&w.gamma, &w.epigraph) <= 1e-8);
        assert!(w.kkt_residual <= TOL);
    }
}

#[test]
fn hand_solved_instance() {
    let f = DMatrix::zeros(4, 1);
    let s = [true, true, false, false];
    let t = [true, false, true, false];
    let (_, w) = solve(&f, &s, &t, 1.0);
    for (g, want) in w.gamma.iter().zip([1.0, -1.0, -1.0, 1.0]) {
        assert!((g - want).abs() < 1e-8, "{:?}", w.gamma);
    }
    assert!(w.epigraph.iter().all(|e| e.abs() < 1e-8));
}

#[test]
fn epigraph_bounds_hold_at_the_solution() {
    let mut r = rng(9);
    let (f, s, t, sigma2) = random_instance(&mut r, 40, 3);
    let (_, w) = solve(&f, &s, &t, sigma2);
    let n = f.nrows() as f64;
    for j in 0..f.ncols() {
        let mut sums = [0.0; 4];
        for i in 0..f.nrows() {
            let (si, ti) = (s[i] as u8 as f64, t[i] as u8 as f64);
            let v = f[(i, j)] * w.gamma[i];
            sums[0] += v;
            sums[1] += ti * v;
            sums[2] += si * v;
            sums[3] += si * ti * v;
        }
        sums[3] -= f.column(j).sum() / n;
        for b in 0..4 {
            assert!(sums[b].abs() <= w.epigraph[b] + 1e-8);
        }
    }
}

#[test]
fn scaled_objective_has_the_same_minimizer() {
    let mut r = rng(77);
    let (f, s, t, sigma2) = random_instance(&mut r, 20, 3);
    let (qp, plain) = solve(&f, &s, &t, sigma2);
    let mut scaled = qp.clone();
    scaled.objective_scale = 1.0 / 400.0;
    let w = solve_qp(&scaled, TOL, 50_000).unwrap();
    for (a, b) in plain.gamma.iter().zip(&w.gamma) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn optimum_grows_with_sigma2_and_shrinks_without_a_column() {
    let mut r = rng(5);
    let (f, s, t, sigma2) = random_instance(&mut r, 30, 4);
    let (qp, w) = solve(&f, &s, &t, sigma2);
    let (qp2, w2) = solve(&f, &s, &t, 2.0 * sigma2);
    assert!(qp2.objective(&w2.gamma, &w2.epigraph) >= qp.objective(&w.gamma, &w.epigraph) - 1e-9);
    let fewer = f.columns(0, 3).into_owned();
    let (qp3, w3) = solve(&fewer, &s, &t, sigma2);
    assert!(qp3.objective(&w3.gamma, &w3.epigraph) <= qp.objective(&w.gamma, &w.epigraph) + 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn returned_weights_are_feasible(seed in any::<u64>(), n in 8usize..40, p in 1usize..5) {
        let mut r = rng(seed);
        let (f, s, t, sigma2) = random_instance(&mut r, n, p);
        let (qp, w) = solve(&f, &s, &t, sigma2);
        prop_assert!(equality_residual(&s, &t, &w.gamma) <= 1e-8);
        prop_assert!(qp.max_violation(&w.gamma, &w.epigraph) <= 1e-8);
        prop_assert!(w.kkt_residual <= TOL);
    }
}
