mod common;

use common::*;
use ndarray::Array2;
use rand::Rng;
use survcausal::causal::rmet;
use survcausal::domain::SurvivalCurve;
use survcausal::survival::*;

fn s(curve: &SurvivalCurve, u: f64) -> f64 {
    curve.at(u)
}

#[test]
fn km_three_point_fixture() {
    let c = km_fit(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
    assert_eq!(s(&c, 0.0), 1.0);
    assert_eq!(s(&c, 0.999), 1.0);
    assert!((s(&c, 1.0) - 2.0 / 3.0).abs() < 1e-12);
    assert!((s(&c, 2.5) - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(s(&c, 3.0), 0.0);
    assert!((rmet(&c, 96.0) - 7.0 / 3.0).abs() < 1e-12);
}

#[test]
fn km_all_censored_and_singleton() {
    let flat = km_fit(&[4.0, 7.0], &[false, false]).unwrap();
    for u in [0.0, 4.0, 7.0, 50.0] {
        assert_eq!(s(&flat, u), 1.0);
    }
    assert_eq!(rmet(&flat, 96.0), 96.0);
    let single = km_fit(&[2.0], &[true]).unwrap();
    assert_eq!(s(&single, 1.999), 1.0);
    assert_eq!(s(&single, 2.0), 0.0);
    assert_eq!(rmet(&single, 96.0), 2.0);
}

#[test]
fn censoring_curve_fixtures() {
    let g = censoring_km_fit(&[1.0, 2.0], &[true, false]).unwrap();
    assert_eq!(g.at(1.5), 1.0);
    assert_eq!(g.at(2.0), 0.0);
    let none = censoring_km_fit(&[1.0, 2.0, 5.0], &[true; 3]).unwrap();
    assert_eq!(none.at(10.0), 1.0);
    let all = censoring_km_fit(&[3.0, 3.0], &[false, false]).unwrap();
    assert_eq!((all.before(3.0), all.at(3.0)), (1.0, 0.0));
}

#[test]
fn cox_hand_loglik() {
    let x = Array2::from_shape_vec((2, 1), vec![1.0, 0.0]).unwrap();
    let (v, _) =
        cox_partial_loglik_and_gradient(x.view(), &[1.0, 2.0], &[true, true], &[0.0], 0.0).unwrap();
    assert!((v + 2f64.ln()).abs() < 1e-12);
}

#[test]
fn cox_matches_grid_search_in_one_and_two_dimensions() {
    for (seed, beta) in [(1, vec![0.8]), (2, vec![-0.4]), (3, vec![0.5, -0.7]), (4, vec![0.2, 0.9])] {
        let (x, t, e) = ph_sample(seed, 60, &beta);
        let (_, report) = coxph_fit(x.view(), &t, &e, 0.0).unwrap();
        assert!(report.converged);
        let grid = grid_argmax(
            |b| cox_partial_loglik_and_gradient(x.view(), &t, &e, b, 0.0).unwrap().0,
            beta.len(),
            -3.0,
            3.0,
        );
        for (a, b) in report.coefficients.iter().zip(&grid) {
            assert!((a - b).abs() < 1e-3, "seed {seed}: newton {a} grid {b}");
        }
    }
}

#[test]
fn cox_gradient_matches_finite_differences() {
    let (x, t, e) = ph_sample(7, 80, &[0.3, -0.5, 0.1]);
    let mut r = rng(70);
    for _ in 0..10 {
        let beta: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let pen = 0.1;
        let (_, g) = cox_partial_loglik_and_gradient(x.view(), &t, &e, &beta, pen).unwrap();
        let h = 1e-5;
        for j in 0..3 {
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[j] += h;
            dn[j] -= h;
            let fu = cox_partial_loglik_and_gradient(x.view(), &t, &e, &up, pen).unwrap().0;
            let fd = cox_partial_loglik_and_gradient(x.view(), &t, &e, &dn, pen).unwrap().0;
            let numeric = (fu - fd) / (2.0 * h);
            let rel = (numeric - g[j]).abs() / g[j].abs().max(1.0);
            assert!(rel < 1e-6, "component {j}: {numeric} vs {}", g[j]);
        }
    }
}

#[test]
fn cox_loglik_never_decreases() {
    for seed in 0..10 {
        let (x, t, e) = ph_sample(100 + seed, 50, &[1.0, -1.0]);
        let (_, report) = coxph_fit(x.view(), &t, &e, 0.01).unwrap();
        for w in report.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0], "trace went down: {:?}", report.log_likelihood_trace);
        }
    }
}

#[test]
fn cox_recovers_hazard_ratio_two() {
    let mut r = rng(11);
    let n = 4000;
    let mut x = Array2::zeros((n, 1));
    let mut times = Vec::new();
    for i in 0..n {
        let z = r.random_bool(0.5) as u8 as f64;
        x[(i, 0)] = z;
        let rate = 0.1 * 2f64.powf(z);
        times.push(-r.random::<f64>().max(1e-300).ln() / rate);
    }
    let events = vec![true; n];
    let (_, report) = coxph_fit(x.view(), &times, &events, 0.0).unwrap();
    assert!(report.converged);
    assert!((report.coefficients[0] - 2f64.ln()).abs() < 0.1);
}

#[test]
fn cox_converges_on_large_monthly_data() {
    // heavy ties and n in the thousands used to stall the line search
    let (x, t, e) = ph_sample(5, 4000, &[0.6, 0.4, -0.2]);
    let t: Vec<f64> = t.iter().map(|v| (v * 12.0).ceil()).collect();
    let (_, report) = coxph_fit(x.view(), &t, &e, 0.0).unwrap();
    assert!(report.converged, "{:?}", report.diagnostic);
}

#[test]
fn forest_predictions_are_valid_curves() {
    let (x, t, e) = ph_sample(9, 200, &[1.0, 0.0, -0.5]);
    let t: Vec<f64> = t.iter().map(|v| (v * 6.0).ceil()).collect();
    let params = RsfHyperparams {
        n_trees: 20,
        seed: 3,
        ..RsfHyperparams::default()
    };
    let forest = rsf_fit(x.view(), &t, &e, &params).unwrap();
    let mut r = rng(90);
    for _ in 0..100 {
        let z: Vec<f64> = (0..3).map(|_| 2.0 * normal(&mut r)).collect();
        let c = forest.predict(&z);
        assert_eq!(c.at(0.0), 1.0);
        for w in c.values().windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        assert!(c.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn degenerate_forest_is_the_km_curve() {
    let (x, t, e) = ph_sample(12, 30, &[1.0]);
    let params = RsfHyperparams {
        n_trees: 1,
        min_samples_split: 31,
        min_samples_leaf: 1,
        bootstrap: false,
        ..RsfHyperparams::default()
    };
    let forest = rsf_fit(x.view(), &t, &e, &params).unwrap();
    let km = km_fit(&t, &e).unwrap();
    for z in [-2.0, 0.0, 3.0] {
        let c = forest.predict(&[z]);
        for &u in &t {
            assert_eq!(c.at(u), km.at(u));
        }
    }
}
