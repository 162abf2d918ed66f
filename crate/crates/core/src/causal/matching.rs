//! K-nearest-neighbour matching on standardized covariates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::learners::check_same_schema;
use super::rmet::rmet;
use crate::domain::{EffectEstimate, EstimatorKind, SnapshotCohort};
use crate::error::{Error, Result};
use crate::survival::ModelSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingConfig {
    pub k: usize,
}

impl MatchingConfig {
    pub const DEFAULT_KS: [usize; 3] = [1, 5, 20];

    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("matching needs K >= 1".into()));
        }
        Ok(MatchingConfig { k })
    }
}

/// Covariates used for distances: every non-treatment column with non-zero
/// spread, divided by its standard deviation over the cohort. Centering is
/// skipped since it cancels in differences.
fn standardized_covariates(cohort: &SnapshotCohort) -> Vec<Vec<f64>> {
    let n = cohort.len() as f64;
    let t = cohort.schema.treatment_index();
    let mut scales = Vec::new();
    for j in (0..cohort.schema.len()).filter(|&j| Some(j) != t) {
        let mean = cohort.rows.iter().map(|r| r.features[j]).sum::<f64>() / n;
        let var = cohort
            .rows
            .iter()
            .map(|r| (r.features[j] - mean).powi(2))
            .sum::<f64>()
            / n;
        if var > 0.0 {
            scales.push((j, var.sqrt()));
        }
    }
    cohort
        .rows
        .iter()
        .map(|r| {
            scales
                .iter()
                .map(|&(j, s)| r.features[j] / s)
                .collect()
        })
        .collect()
}

/// For every row, the indices of its `k` nearest rows in the opposite arm,
/// closest first. Equal distances go to the lower row index.
pub fn matched_neighbors(cohort: &SnapshotCohort, k: usize) -> Result<Vec<Vec<usize>>> {
    let treated = cohort.arm_indices(true);
    let control = cohort.arm_indices(false);
    for (arm, name) in [(&treated, "treated"), (&control, "control")] {
        if k > arm.len() {
            return Err(Error::NeighborCount {
                k,
                group: name,
                size: arm.len(),
            });
        }
    }
    if k == 0 {
        return Err(Error::Config("matching needs K >= 1".into()));
    }
    let z = standardized_covariates(cohort);
    Ok((0..cohort.len())
        .into_par_iter()
        .map(|i| {
            let pool = if cohort.rows[i].treated { &control } else { &treated };
            let mut dist: Vec<(f64, usize)> = pool
                .iter()
                .map(|&j| {
                    let d = z[i].iter().zip(&z[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d, j)
                })
                .collect();
            let by_distance = |a: &(f64, usize), b: &(f64, usize)| {
                a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
            };
            if k < dist.len() {
                dist.select_nth_unstable_by(k - 1, by_distance);
                dist.truncate(k);
            }
            dist.sort_by(by_distance);
            dist.into_iter().map(|(_, j)| j).collect()
        })
        .collect())
}

/// Matching estimator. A joint model (treatment included) fit on `train`
/// gives each target row's factual RMET; the counterfactual is the mean
/// factual RMET of its `k` nearest opposite-arm rows in `target`. ITEs are
/// oriented so a positive value means treatment lengthens event time.
pub fn matching_estimate(
    train: &SnapshotCohort,
    target: &SnapshotCohort,
    spec: &ModelSpec,
    config: &MatchingConfig,
    horizon: f64,
) -> Result<EffectEstimate> {
    check_same_schema(train, target)?;
    if target.schema.treatment_index().is_none() {
        return Err(Error::MissingTreatment);
    }
    let neighbors = matched_neighbors(target, config.k)?;
    let model = spec.fit(
        train.feature_matrix().view(),
        &train.times(),
        &train.events(),
        &train.schema,
    )?;
    let factual = target
        .rows
        .par_iter()
        .map(|row| Ok(rmet(&model.predict(&row.features)?, horizon)))
        .collect::<Result<Vec<f64>>>()?;
    let ites = target
        .rows
        .iter()
        .zip(&neighbors)
        .enumerate()
        .map(|(i, (row, nb))| {
            let counterfactual = nb.iter().map(|&j| factual[j]).sum::<f64>() / nb.len() as f64;
            let sign = if row.treated { 1.0 } else { -1.0 };
            (factual[i] - counterfactual) * sign
        })
        .collect();
    Ok(EffectEstimate::new(
        ites,
        EstimatorKind::Matching { k: config.k },
        Some(spec.to_string()),
    ))
}

pub fn matching_ate(
    cohort: &SnapshotCohort,
    spec: &ModelSpec,
    config: &MatchingConfig,
    horizon: f64,
) -> Result<EffectEstimate> {
    matching_estimate(cohort, cohort, spec, config, horizon)
}
