//! Cohort builders shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::*;

fn statics() -> StaticCovariates {
    StaticCovariates {
        age: 40.0,
        race: "r".into(),
        gender: "g".into(),
        education: "e".into(),
    }
}

/// Cohort from `(covariates, treated, residual_time, event)` rows; the
/// treatment column is appended after the covariates.
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
                    id: format!("s{i}"),
                    features: x,
                    treated,
                    residual_time: t,
                    event,
                    statics: statics(),
                    subgroups: SubgroupLabels::default(),
                }
            })
            .collect(),
        dropped_missing_risk: 0,
    }
}

/// Random cohort with `p` normal covariates, a confounded treatment and
/// exponential monthly event times with about 20% censoring.
pub fn random_cohort(n: usize, p: usize, seed: u64) -> SnapshotCohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let x: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let treated = if i < 2 {
            i == 0
        } else {
            rng.random_bool(1.0 / (1.0 + (-0.5 * x[0]).exp()))
        };
        let rate = 0.08 * (0.4 * x[0] + 0.5 * treated as u8 as f64).exp();
        let event_time: f64 = -rng.random::<f64>().ln() / rate;
        let censor_time: f64 = -rng.random::<f64>().ln() / 0.02;
        let t = event_time.min(censor_time).min(60.0).ceil().max(1.0) as u32;
        rows.push((x, treated, t, event_time <= censor_time && event_time <= 60.0));
    }
    cohort_from(rows)
}
