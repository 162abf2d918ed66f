#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use survcausal::domain::*;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, rng)
}

/// Cohort from `(covariates, treated, residual_time, event)`; the treatment
/// column is appended last.
pub fn cohort_from(rows: Vec<(Vec<f64>, bool, u32, bool)>) -> SnapshotCohort {
    let p = rows.first().map_or(0, |r| r.0.len());
    let mut features: Vec<Feature> = (0..p)
        .map(|j| Feature {
            name: format!("x{j}"),
            kind: FeatureKind::Static,
        })
        .collect();
    features.push(Feature {
        name: TREATMENT_FEATURE.into(),
        kind: FeatureKind::Treatment,
    });
    SnapshotCohort {
        tau: 3,
        schema: FeatureSchema { features },
        rows: rows
            .into_iter()
            .enumerate()
            .map(|(i, (mut x, treated, t, event))| {
                x.push(treated as u8 as f64);
                CohortRow {
                    id: format!("s{i:03}"),
                    features: x,
                    treated,
                    residual_time: t,
                    event,
                    statics: StaticCovariates {
                        age: 40.0,
                        race: "r".into(),
                        gender: "g".into(),
                        education: "e".into(),
                    },
                    subgroups: SubgroupLabels::default(),
                }
            })
            .collect(),
        dropped_missing_risk: 0,
    }
}

/// Random confounded cohort with `p` covariates. `n_treated` fixes the arm
/// sizes when given.
pub fn random_cohort(seed: u64, n: usize, p: usize, n_treated: Option<usize>) -> SnapshotCohort {
    let mut r = rng(seed);
    let mut treated: Vec<bool> = match n_treated {
        Some(k) => (0..n).map(|i| i < k).collect(),
        None => (0..n).map(|_| r.random_bool(0.5)).collect(),
    };
    if n_treated.is_some() {
        // shuffle so arms are interleaved
        for i in (1..n).rev() {
            let j = r.random_range(0..=i);
            treated.swap(i, j);
        }
    }
    let rows = treated
        .into_iter()
        .map(|a| {
            let x: Vec<f64> = (0..p).map(|_| normal(&mut r)).collect();
            let lp = 0.5 * x.iter().sum::<f64>() + if a { 0.6 } else { 0.0 };
            let hazard = 0.1 * lp.exp();
            let u: f64 = r.random::<f64>().max(1e-12);
            let t = ((-u.ln() / hazard).ceil() as u32).clamp(1, 30);
            let event = t < 30 && r.random_bool(0.8);
            (x, a, t, event)
        })
        .collect();
    cohort_from(rows)
}

/// Brute-force maximizer of `f` over a box: a full grid, then two rounds of
/// finer grids around the incumbent.
pub fn grid_argmax(f: impl Fn(&[f64]) -> f64, dims: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut center = vec![(lo + hi) / 2.0; dims];
    let mut half = (hi - lo) / 2.0;
    let steps: usize = if dims == 1 { 4000 } else { 150 };
    for _ in 0..4 {
        let h = half / steps as f64;
        let mut best = (f64::NEG_INFINITY, center.clone());
        let side = 2 * steps + 1;
        for flat in 0..side.pow(dims as u32) {
            let mut k = flat;
            let point: Vec<f64> = center
                .iter()
                .map(|c| {
                    let i = k % side;
                    k /= side;
                    c - half + h * i as f64
                })
                .collect();
            let v = f(&point);
            if v > best.0 {
                best = (v, point);
            }
        }
        center = best.1;
        half = 4.0 * h;
    }
    center
}

/// Rows of `(covariates, time, event)` from a proportional-hazards model with
/// coefficients `beta` and continuous times.
pub fn ph_sample(seed: u64, n: usize, beta: &[f64]) -> (ndarray::Array2<f64>, Vec<f64>, Vec<bool>) {
    let mut r = rng(seed);
    let p = beta.len();
    let mut x = ndarray::Array2::zeros((n, p));
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let mut lp = 0.0;
        for j in 0..p {
            x[(i, j)] = normal(&mut r);
            lp += beta[j] * x[(i, j)];
        }
        let t = -r.random::<f64>().max(1e-300).ln() / lp.exp();
        let c = -r.random::<f64>().max(1e-300).ln() / 0.3;
        times.push(t.min(c));
        events.push(t <= c);
    }
    (x, times, events)
}

/// A small synthetic experiment that runs in seconds.
pub fn small_experiment(out: &std::path::Path) -> survcausal::experiment::ExperimentConfig {
    use survcausal::cohort::PreprocessConfig;
    use survcausal::experiment::{ExperimentConfig, InputSpec, ModelGrid};
    use survcausal::synth::DgpConfig;
    ExperimentConfig {
        input: InputSpec::Synthetic(DgpConfig {
            n: 900,
            seed: 4,
            horizon: 48,
            ..DgpConfig::default()
        }),
        preprocess: PreprocessConfig {
            taus: vec![3, 6, 9],
            n_repeats: 2,
            seed: 10,
            ..PreprocessConfig::default()
        },
        models: vec![
            ModelGrid::KaplanMeier,
            ModelGrid::CoxPh {
                penalizers: vec![0.01, 0.1],
            },
            ModelGrid::RandomSurvivalForest {
                n_trees: vec![15],
                min_samples_split: vec![10],
                min_samples_leaf: vec![5],
                features_per_split: None,
                seed: 1,
            },
        ],
        horizon: 48,
        out_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

/// Every file under `dir` with its bytes, sorted by name.
pub fn snapshot_dir(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

/// Checks `ate == mean(ite)` for every ok row of every `ate_<tau>.csv` in
/// `dir` against the matching `ite_*` file. Returns the number of rows checked.
pub fn check_emitted_ate_identity(dir: &std::path::Path, taus: &[u32]) -> usize {
    use std::collections::HashMap;
    let mut checked = 0;
    for tau in taus {
        let mut rdr = csv::Reader::from_path(dir.join(format!("ate_{tau}.csv"))).unwrap();
        let mut cache: HashMap<String, HashMap<String, Vec<f64>>> = HashMap::new();
        for rec in rdr.records() {
            let rec = rec.unwrap();
            if &rec[5] != "ok" {
                continue;
            }
            let (repeat, model, est) = (rec[1].to_string(), rec[2].to_string(), rec[4].to_string());
            let ate: f64 = rec[6].parse().unwrap();
            let file = format!("ite_{tau}_{model}_{est}.csv");
            let ites = cache.entry(file.clone()).or_insert_with(|| {
                let mut by_repeat: HashMap<String, Vec<f64>> = HashMap::new();
                let mut r = csv::Reader::from_path(dir.join(&file)).unwrap();
                for row in r.records() {
                    let row = row.unwrap();
                    by_repeat.entry(row[0].to_string()).or_default().push(row[5].parse().unwrap());
                }
                by_repeat
            });
            let v = &ites[&repeat];
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            assert!(
                (mean - ate).abs() <= 1e-9 * ate.abs().max(1.0),
                "{file} repeat {repeat}: ate {ate} mean {mean}"
            );
            checked += 1;
        }
    }
    checked
}
