use rayon::prelude::*;

use super::matching::{matching_estimate, MatchingConfig};
use super::rmet::rmet;
use crate::domain::{EffectEstimate, EstimatorKind, SnapshotCohort};
use crate::error::{Error, Result};
use crate::survival::{km_fit, ModelSpec};

/// Runs `kind`, fitting on `train` and estimating over every row of `target`.
///
/// Both cohorts must share one feature schema. For the ATE on the cohort the
/// models were trained on, pass the same cohort twice.
pub fn estimate(
    kind: EstimatorKind,
    train: &SnapshotCohort,
    target: &SnapshotCohort,
    spec: &ModelSpec,
    horizon: f64,
) -> Result<EffectEstimate> {
    match kind {
        EstimatorKind::TLearner => t_learner(train, target, spec, horizon),
        EstimatorKind::SLearner => s_learner(train, target, spec, horizon),
        EstimatorKind::Matching { k } => {
            matching_estimate(train, target, spec, &MatchingConfig::new(k)?, horizon)
        }
        EstimatorKind::UnadjustedKm => unadjusted_km(train, target, horizon),
    }
}

pub(crate) fn check_same_schema(train: &SnapshotCohort, target: &SnapshotCohort) -> Result<()> {
    train.schema.check_matches(&target.schema)
}

fn check_two_arms(cohort: &SnapshotCohort) -> Result<(Vec<usize>, Vec<usize>)> {
    let treated = cohort.arm_indices(true);
    let control = cohort.arm_indices(false);
    if treated.is_empty() || control.is_empty() {
        return Err(Error::Positivity("one-armed cohort".into()));
    }
    Ok((treated, control))
}

fn check_arm_events(cohort: &SnapshotCohort, arm: &[usize], name: &str) -> Result<()> {
    if arm.iter().any(|&i| cohort.rows[i].event) {
        Ok(())
    } else {
        Err(Error::Positivity(format!("no events in the {name} arm")))
    }
}

fn times_events(cohort: &SnapshotCohort, rows: &[usize]) -> (Vec<f64>, Vec<bool>) {
    rows.iter()
        .map(|&i| (cohort.rows[i].residual_time as f64, cohort.rows[i].event))
        .unzip()
}

fn base_model_tag(spec: &ModelSpec) -> Option<String> {
    Some(spec.to_string())
}

/// Separate models per arm, each fit without the treatment column.
pub fn t_learner(
    train: &SnapshotCohort,
    target: &SnapshotCohort,
    spec: &ModelSpec,
    horizon: f64,
) -> Result<EffectEstimate> {
    check_same_schema(train, target)?;
    let (treated, control) = check_two_arms(train)?;
    check_arm_events(train, &treated, "treated")?;
    check_arm_events(train, &control, "control")?;
    let (schema, columns) = train.schema.without_treatment();

    let fit_arm = |rows: &[usize]| {
        let x = train.feature_matrix_of(rows, &columns);
        let (t, e) = times_events(train, rows);
        spec.fit(x.view(), &t, &e, &schema)
    };
    let model1 = fit_arm(&treated)?;
    let model0 = fit_arm(&control)?;

    let ites = target
        .rows
        .par_iter()
        .map(|row| {
            let z: Vec<f64> = columns.iter().map(|&j| row.features[j]).collect();
            let mu1 = rmet(&model1.predict(&z)?, horizon);
            let mu0 = rmet(&model0.predict(&z)?, horizon);
            Ok(mu1 - mu0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EffectEstimate::new(
        ites,
        EstimatorKind::TLearner,
        base_model_tag(spec),
    ))
}

pub fn t_learner_ate(
    cohort: &SnapshotCohort,
    spec: &ModelSpec,
    horizon: f64,
) -> Result<EffectEstimate> {
    t_learner(cohort, cohort, spec, horizon)
}

/// One model with treatment as a feature; each row is predicted with the
/// treatment column set to 1 and then 0.
pub fn s_learner(
    train: &SnapshotCohort,
    target: &SnapshotCohort,
    spec: &ModelSpec,
    horizon: f64,
) -> Result<EffectEstimate> {
    check_same_schema(train, target)?;
    let t = train.schema.treatment_index().ok_or(Error::MissingTreatment)?;
    if !train.rows.iter().any(|r| r.event) {
        return Err(Error::NoEvents);
    }
    let x = train.feature_matrix();
    let model = spec.fit(x.view(), &train.times(), &train.events(), &train.schema)?;
    let ites = target
        .rows
        .par_iter()
        .map(|row| {
            let mut z = row.features.clone();
            z[t] = 1.0;
            let mu1 = rmet(&model.predict(&z)?, horizon);
            z[t] = 0.0;
            let mu0 = rmet(&model.predict(&z)?, horizon);
            Ok(mu1 - mu0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EffectEstimate::new(
        ites,
        EstimatorKind::SLearner,
        base_model_tag(spec),
    ))
}

pub fn s_learner_ate(
    cohort: &SnapshotCohort,
    spec: &ModelSpec,
    horizon: f64,
) -> Result<EffectEstimate> {
    s_learner(cohort, cohort, spec, horizon)
}

/// Difference of the arms' Kaplan-Meier RMETs, assigned to every target row.
pub fn unadjusted_km(
    train: &SnapshotCohort,
    target: &SnapshotCohort,
    horizon: f64,
) -> Result<EffectEstimate> {
    let (treated, control) = check_two_arms(train)?;
    let arm_rmet = |rows: &[usize]| -> Result<f64> {
        let (t, e) = times_events(train, rows);
        Ok(rmet(&km_fit(&t, &e)?, horizon))
    };
    let diff = arm_rmet(&treated)? - arm_rmet(&control)?;
    Ok(EffectEstimate::new(
        vec![diff; target.len()],
        EstimatorKind::UnadjustedKm,
        None,
    ))
}

pub fn unadjusted_km_ate(cohort: &SnapshotCohort, horizon: f64) -> Result<EffectEstimate> {
    unadjusted_km(cohort, cohort, horizon)
}
