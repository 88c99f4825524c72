mod common;

use nalgebra::DMatrix;
use rand::Rng;

use common::{balanced_dgp, rng};
use nddid::balancing::estimate_sigma2;
use nddid::data::make_folds;
use nddid::estimators::{
    aipw_estimate, gamma_hat, hte_fit, ipw_estimate, ols_baseline, sample_means, standard_normals, weighted_target,
    TruthModel,
};
use nddid::nuisance::{crossfit_nuisances, CrossFittedNuisances, LearnerFeatures};
use nddid::orthogonal::coefficients;
use nddid::pipeline::{run_methods, NuisanceSource};
use nddid::simulation::{generate, oracle_tr_estimate, GroundTruth, Setup, SetupSpec};
use nddid::{Dataset, EstimationConfig, Method};

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, _) = mean_se(a);
    let (mb, _) = mean_se(b);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn known(truth: &GroundTruth) -> CrossFittedNuisances {
    truth.nuisances().unwrap()
}

#[test]
fn tr_with_true_nuisances_matches_the_oracle_path() {
    let (data, truth) = SetupSpec::new(Setup::B, 800, 5, 51).generate().unwrap();
    let nuis = known(&truth);
    let run = run_methods(&data, &[Method::Tr], &EstimationConfig::default(), NuisanceSource::Known(&nuis)).unwrap();
    let tr = run.results[0].1.as_ref().unwrap();
    let oracle = oracle_tr_estimate(&data, &truth).unwrap();
    assert_eq!(tr.tau_hat, oracle.tau_hat);
    assert_eq!(tr.std_err, oracle.std_err);
}

#[test]
fn inverse_weights_recover_the_double_difference() {
    // One row per cell sharing the same cell probabilities: Σ e_k γ_k g_k = τ.
    let e = [0.1, 0.2, 0.3, 0.4];
    let g = [1.0, -2.0, 0.5, 3.0];
    let x = DMatrix::zeros(4, 1);
    let data = Dataset::new(x, vec![false, false, true, true], vec![false, true, false, true], g.to_vec()).unwrap();
    let nuis = CrossFittedNuisances::from_parts(vec![0.0; 4], vec![e; 4], vec![0.0; 4], vec![0.0; 4], vec![0; 4], 0.05).unwrap();
    let gamma = gamma_hat(&data, &nuis).unwrap();
    let total: f64 = (0..4).map(|k| e[k] * gamma[k] * g[k]).sum();
    assert!((total - (g[3] - g[2] - g[1] + g[0])).abs() < 1e-12);
}

#[test]
fn weighted_target_of_constant_effect_is_that_effect() {
    let w = weighted_target(&Setup::C.with_d(6), 20_000, &mut rng(52)).unwrap();
    assert!((w.tau_bar - 1.0).abs() < 1e-12);
}

#[test]
fn setup_f_weighted_target_two_formulas() {
    let model = Setup::F.with_d(6);
    let w = weighted_target(&model, 200_000, &mut rng(53)).unwrap();
    // Independent cells give E[C² | X] = s(1-s)t(1-t).
    let mut r = rng(54);
    let draws = 200_000;
    let (mut num, mut den) = (vec![], vec![]);
    for _ in 0..draws {
        let x = model.draw_x(&mut r);
        let e = model.cells(&x).unwrap();
        let (s, t) = (e[2] + e[3], e[1] + e[3]);
        assert!((e[3] - s * t).abs() < 1e-12);
        let wi = s * (1.0 - s) * t * (1.0 - t);
        num.push(wi * model.tau(&x));
        den.push(wi);
    }
    let closed = num.iter().sum::<f64>() / den.iter().sum::<f64>();
    assert!((closed - w.tau_bar).abs() <= 3.0 * 2f64.sqrt() * w.std_err, "{closed} vs {}", w.tau_bar);
}

#[test]
fn ols_recovers_a_correctly_specified_interaction() {
    let mut r = rng(55);
    let n = 2000;
    let mut x = DMatrix::zeros(n, 2);
    let (mut s, mut t, mut y) = (vec![], vec![], vec![]);
    for i in 0..n {
        let xi = standard_normals(&mut r, 2);
        let (si, ti) = (r.random::<f64>() < 0.5, r.random::<f64>() < 0.4);
        x[(i, 0)] = xi[0];
        x[(i, 1)] = xi[1];
        let (sf, tf) = (si as u8 as f64, ti as u8 as f64);
        y.push(0.5 + xi[0] - 2.0 * xi[1] + 0.7 * sf - 0.3 * tf + sf * tf + standard_normals(&mut r, 1)[0]);
        s.push(si);
        t.push(ti);
    }
    let r = ols_baseline(&Dataset::new(x, s, t, y).unwrap()).unwrap();
    assert!((r.tau_hat - 1.0).abs() <= 3.0 * r.std_err, "{} ± {}", r.tau_hat, r.std_err);
}

#[test]
fn sample_means_of_the_interaction_indicator() {
    let (data, _) = SetupSpec::new(Setup::A, 400, 5, 56).generate().unwrap();
    let y: Vec<f64> = (0..data.n()).map(|i| (data.s()[i] && data.t()[i]) as u8 as f64).collect();
    let r = sample_means(&data.with_outcome(y).unwrap()).unwrap();
    assert_eq!(r.tau_hat, 1.0);
    assert_eq!(r.std_err, 0.0);
}

fn crossfit_hte(data: &Dataset) -> Vec<f64> {
    let config = EstimationConfig::default();
    let folds = make_folds(data.n(), config.k_folds, 0, &data.cells()).unwrap();
    let feats = LearnerFeatures::build(data, &config).unwrap();
    let nuis = crossfit_nuisances(data, &folds, &feats, &config).unwrap();
    hte_fit(data, &nuis, &folds, &feats.outcome, &config.ridge_lambdas, feats.outcome_core).unwrap().tau_hat
}

#[test]
fn hte_tracks_heterogeneous_effect_on_setup_e() {
    let (data, truth) = SetupSpec::new(Setup::E, 4000, 5, 57).generate().unwrap();
    let tau = crossfit_hte(&data);
    let c = correlation(&tau, &truth.tau);
    assert!(c >= 0.7, "correlation {c}");
}

#[test]
fn hte_is_near_zero_without_an_effect() {
    // Averaged over datasets: a single draw mostly measures the sampling
    // error of the overall level.
    let mut total = 0.0;
    for rep in 0..10 {
        let (data, _) = SetupSpec::new(Setup::A, 2000, 5, 300 + rep).generate().unwrap();
        let y: Vec<f64> = (0..data.n()).map(|i| data.y()[i] - (data.s()[i] && data.t()[i]) as u8 as f64).collect();
        let tau = crossfit_hte(&data.with_outcome(y).unwrap());
        total += tau.iter().map(|v| v.abs()).sum::<f64>() / tau.len() as f64 / 10.0;
    }
    assert!(total <= 0.15, "mean |τ̂| = {total}");
}

/// Cell probabilities multiplied by factors in `[0.6, 1.4]`, renormalized.
fn corrupt(cells: &[[f64; 4]], r: &mut impl Rng) -> Vec<[f64; 4]> {
    cells
        .iter()
        .map(|e| {
            let raw = e.map(|p| p * r.random_range(0.6..1.4));
            let total: f64 = raw.iter().sum();
            raw.map(|p| p / total)
        })
        .collect()
}

#[test]
fn aipw_is_doubly_robust() {
    let reps = 200;
    let (mut wrong_weights, mut wrong_outcome) = (vec![], vec![]);
    for rep in 0..reps {
        let (data, truth) = SetupSpec::new(Setup::A, 2000, 5, 1000 + rep).generate().unwrap();
        let mut r = rng(2000 + rep);
        // True outcome regression, corrupted weights.
        let n = data.n();
        let bad = CrossFittedNuisances::from_parts(vec![0.0; n], corrupt(&truth.cells, &mut r), vec![0.0; n], vec![0.0; n], vec![0; n], 1e-3)
            .unwrap();
        let gamma = gamma_hat(&data, &bad).unwrap();
        let g = truth.noiseless_outcomes(&data);
        let psi: f64 = (0..n).map(|i| truth.tau[i] + gamma[i] * (data.y()[i] - g[i])).sum::<f64>() / n as f64;
        wrong_weights.push(psi - 1.0);
        // True weights, outcome regression with a wrong effect.
        let nuis = known(&truth);
        let coef = coefficients(&data, &nuis).unwrap();
        let tau_bad: Vec<f64> = (0..n).map(|i| 1.3 + 0.5 * data.x()[(i, 0)].sin()).collect();
        wrong_outcome.push(aipw_estimate(&data, &nuis, &coef, &tau_bad).unwrap().tau_hat - 1.0);
    }
    for (label, errs) in [("weights", &wrong_weights), ("outcome", &wrong_outcome)] {
        let (bias, se) = mean_se(errs);
        assert!(bias.abs() <= 3.0 * se, "corrupted {label}: bias {bias} se {se}");
    }
}

#[test]
fn ipw_with_true_cells_is_consistent() {
    let (data, truth) = SetupSpec::new(Setup::A, 200_000, 5, 59).generate().unwrap();
    let r = ipw_estimate(&data, &known(&truth)).unwrap();
    assert!((r.tau_hat - 1.0).abs() <= 4.0 * r.std_err, "{} ± {}", r.tau_hat, r.std_err);
    assert!(r.std_err < 0.05);
}

#[test]
fn sigma2_from_oracle_residuals() {
    let (data, truth) = SetupSpec::new(Setup::A, 4000, 5, 60).generate().unwrap();
    let g = truth.noiseless_outcomes(&data);
    let mut r = rng(61);
    let y: Vec<f64> = g.iter().map(|v| v + 2.0 * standard_normals(&mut r, 1)[0]).collect();
    let s2 = estimate_sigma2(&y, &g, None).unwrap();
    assert!((3.4..=4.6).contains(&s2), "{s2}");
}

#[test]
fn amle_variance_matches_the_balanced_closed_form() {
    // s = t = 1/2 and Δ = 0: n·se² ≈ σ²/(s(1-s)t(1-t)) = 16 with σ² = 1.
    let (data, _) = generate(&balanced_dgp(1.0), 4000, &mut rng(62)).unwrap();
    let run = run_methods(&data, &[Method::Amle], &EstimationConfig::default(), NuisanceSource::CrossFit).unwrap();
    let r = run.results[0].1.as_ref().unwrap();
    let v = data.n() as f64 * r.std_err.powi(2);
    assert!((v - 16.0).abs() <= 0.2 * 16.0, "n·se² = {v}");
}
