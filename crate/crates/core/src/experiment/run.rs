use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, InputSpec, ModelGrid};
use crate::causal::{assumption_checks, estimate, subgroup_ite_report, AssumptionReport, SubgroupSummary};
use crate::cohort::{build_snapshot, ingest_longitudinal, split, trim, IngestOptions, NormalizationStats};
use crate::domain::{
    mean, sample_std, EffectEstimate, EstimatorKind, SnapshotCohort, SubjectRecord, SurvivalCurve,
};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::survival::{km_fit, FittedSurvivalModel, ModelSpec};
use crate::synth::{generate, oracle_ate, OracleEstimate};

/// Model name under which the covariate-free KM contrast is reported.
pub const UNADJUSTED_MODEL: &str = "unadjusted";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub tau: u32,
    /// Subjects in the snapshot before trimming.
    pub n_snapshot: usize,
    pub n_trimmed: usize,
    pub dropped_missing_risk: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub n_features: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub tau: u32,
    pub repeat: usize,
    pub model: String,
    /// Hyperparameters picked on the validation split.
    pub spec: Option<String>,
    pub validation_c_td: Option<f64>,
    pub status: CellStatus,
    pub c_td: Option<f64>,
    pub ibs: Option<f64>,
    pub auc_td_mean: Option<f64>,
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectCell {
    pub tau: u32,
    pub repeat: usize,
    pub model: String,
    pub spec: Option<String>,
    pub estimator: EstimatorKind,
    pub status: CellStatus,
    pub ate: Option<f64>,
    /// Per-subject ITEs in cohort row order; empty when failed.
    pub ites: Vec<f64>,
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AteSummary {
    pub tau: u32,
    pub model: String,
    pub estimator: EstimatorKind,
    /// `ok` only when every repeat succeeded.
    pub status: CellStatus,
    pub n_ok: usize,
    pub ate_mean: Option<f64>,
    pub ate_std: Option<f64>,
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupCell {
    pub model: String,
    pub estimator: EstimatorKind,
    /// Built from each subject's ITE averaged over the repeats.
    pub summaries: Vec<SubgroupSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectInfo {
    pub id: String,
    pub treated: bool,
    pub formulation: String,
    pub drug_name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauResults {
    pub tau: u32,
    pub cohort: CohortSummary,
    pub assumptions: AssumptionReport,
    pub subjects: Vec<SubjectInfo>,
    pub metrics: Vec<MetricCell>,
    pub effects: Vec<EffectCell>,
    pub summary: Vec<AteSummary>,
    pub subgroups: Vec<SubgroupCell>,
    pub km_treated: SurvivalCurve,
    pub km_control: SurvivalCurve,
}

impl TauResults {
    pub fn summary_for(&self, model: &str, estimator: EstimatorKind) -> Option<&AteSummary> {
        self.summary
            .iter()
            .find(|s| s.model == model && s.estimator == estimator)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub oracle: Option<OracleEstimate>,
    pub taus: Vec<TauResults>,
}

impl ExperimentResults {
    pub fn tau(&self, tau: u32) -> Option<&TauResults> {
        self.taus.iter().find(|t| t.tau == tau)
    }
}

/// Which parts of a repeat to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stages {
    pub metrics: bool,
    pub effects: bool,
}

impl Stages {
    pub const ALL: Stages = Stages {
        metrics: true,
        effects: true,
    };
}

pub fn load_records(config: &ExperimentConfig) -> Result<Vec<SubjectRecord>> {
    match &config.input {
        InputSpec::Csv { path } => ingest_longitudinal(
            path,
            &IngestOptions {
                threshold_days: config.preprocess.threshold_days,
                require_risk_scores: config.preprocess.include_risk_scores,
            },
        ),
        InputSpec::Synthetic(dgp) => Ok(generate(dgp)?.records),
    }
}

/// Snapshot at `tau` followed by positivity trimming.
pub fn prepare_cohort(
    records: &[SubjectRecord],
    tau: u32,
    config: &ExperimentConfig,
) -> Result<(SnapshotCohort, usize)> {
    let snapshot = build_snapshot(records, tau, &config.preprocess)?;
    let n = snapshot.len();
    Ok((trim(&snapshot)?, n))
}

pub(crate) fn repeat_seed(config: &ExperimentConfig, repeat: usize) -> u64 {
    config.preprocess.seed.wrapping_add(repeat as u64)
}

struct Encoded {
    train: SnapshotCohort,
    validation: SnapshotCohort,
    test: SnapshotCohort,
    full: SnapshotCohort,
}

/// Splits the trimmed cohort and encodes every part with training statistics.
fn encode_repeat(cohort: &SnapshotCohort, config: &ExperimentConfig, repeat: usize) -> Result<Encoded> {
    let (train, validation, test) =
        split(cohort, config.preprocess.split, repeat_seed(config, repeat))?;
    let stats = NormalizationStats::fit(&train, Some(cohort))?;
    Ok(Encoded {
        train: stats.transform(&train)?,
        validation: stats.transform(&validation)?,
        test: stats.transform(&test)?,
        full: stats.transform(cohort)?,
    })
}

fn fit_on(spec: &ModelSpec, cohort: &SnapshotCohort) -> Result<FittedSurvivalModel> {
    spec.fit(
        cohort.feature_matrix().view(),
        &cohort.times(),
        &cohort.events(),
        &cohort.schema,
    )
}

fn predict_all(model: &FittedSurvivalModel, cohort: &SnapshotCohort) -> Result<Vec<SurvivalCurve>> {
    cohort
        .rows
        .par_iter()
        .map(|r| model.predict(&r.features))
        .collect()
}

struct Selected {
    spec: ModelSpec,
    model: FittedSurvivalModel,
    validation_c_td: Option<f64>,
}

/// Fits every candidate on the training split and keeps the one with the
/// highest validation concordance; the first candidate wins ties. With a
/// single candidate no validation score is needed.
fn select(grid: &ModelGrid, data: &Encoded, repeat: usize) -> Result<Selected> {
    let candidates = grid.candidates(repeat);
    let mut best: Option<(f64, Selected)> = None;
    let mut last_err = None;
    for spec in candidates.iter() {
        let model = match fit_on(spec, &data.train) {
            Ok(m) => m,
            Err(e) => {
                log::debug!("candidate {spec} failed: {e}");
                last_err = Some(e);
                continue;
            }
        };
        if candidates.len() == 1 {
            return Ok(Selected {
                spec: spec.clone(),
                model,
                validation_c_td: None,
            });
        }
        let score = predict_all(&model, &data.validation).and_then(|curves| {
            crate::metrics::concordance_td(
                &curves,
                &data.validation.times(),
                &data.validation.events(),
            )
        });
        let score = match score {
            Ok(s) => s,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((
                score,
                Selected {
                    spec: spec.clone(),
                    model,
                    validation_c_td: Some(score),
                },
            ));
        }
    }
    best.map(|(_, s)| s).ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::Config(format!("no candidate for {}", grid.name())))
    })
}

fn effect_cell(
    tau: u32,
    repeat: usize,
    model: &str,
    spec: Option<String>,
    estimator: EstimatorKind,
    result: Result<EffectEstimate>,
) -> EffectCell {
    match result {
        Ok(e) => EffectCell {
            tau,
            repeat,
            model: model.to_string(),
            spec,
            estimator,
            status: CellStatus::Ok,
            ate: Some(e.ate),
            ites: e.ites,
            message: None,
        },
        Err(err) => EffectCell {
            tau,
            repeat,
            model: model.to_string(),
            spec,
            estimator,
            status: CellStatus::Failed,
            ate: None,
            ites: Vec::new(),
            message: Some(err.to_string()),
        },
    }
}

fn failed_metric(tau: u32, repeat: usize, model: &str, spec: Option<String>, err: &Error) -> MetricCell {
    MetricCell {
        tau,
        repeat,
        model: model.to_string(),
        spec,
        validation_c_td: None,
        status: CellStatus::Failed,
        c_td: None,
        ibs: None,
        auc_td_mean: None,
        message: Some(err.to_string()),
    }
}

fn run_repeat(
    cohort: &SnapshotCohort,
    config: &ExperimentConfig,
    repeat: usize,
    stages: Stages,
) -> (Vec<MetricCell>, Vec<EffectCell>) {
    let tau = cohort.tau;
    let horizon = config.horizon as f64;
    let mut metrics = Vec::new();
    let mut effects = Vec::new();
    let model_estimators: Vec<EstimatorKind> = config
        .estimators
        .iter()
        .copied()
        .filter(|e| *e != EstimatorKind::UnadjustedKm)
        .collect();

    let data = match encode_repeat(cohort, config, repeat) {
        Ok(d) => d,
        Err(err) => {
            for grid in &config.models {
                if stages.metrics {
                    metrics.push(failed_metric(tau, repeat, grid.name(), None, &err));
                }
                if stages.effects {
                    for &est in &model_estimators {
                        effects.push(effect_cell(tau, repeat, grid.name(), None, est, Err(Error::Config(err.to_string()))));
                    }
                }
            }
            if stages.effects && config.estimators.contains(&EstimatorKind::UnadjustedKm) {
                effects.push(effect_cell(tau, repeat, UNADJUSTED_MODEL, None, EstimatorKind::UnadjustedKm, Err(err)));
            }
            return (metrics, effects);
        }
    };

    for grid in &config.models {
        let name = grid.name();
        let selected = select(grid, &data, repeat);
        let spec_tag = selected.as_ref().ok().map(|s| s.spec.to_string());
        if stages.metrics {
            let cell = match &selected {
                Ok(sel) => {
                    let report = predict_all(&sel.model, &data.test)
                        .and_then(|curves| evaluate(&curves, &data.test.times(), &data.test.events()));
                    match report {
                        Ok(r) => MetricCell {
                            tau,
                            repeat,
                            model: name.to_string(),
                            spec: spec_tag.clone(),
                            validation_c_td: sel.validation_c_td,
                            status: CellStatus::Ok,
                            c_td: Some(r.c_td),
                            ibs: Some(r.ibs),
                            auc_td_mean: Some(r.auc_td_mean),
                            message: None,
                        },
                        Err(e) => failed_metric(tau, repeat, name, spec_tag.clone(), &e),
                    }
                }
                Err(e) => failed_metric(tau, repeat, name, None, e),
            };
            metrics.push(cell);
        }
        if stages.effects {
            for &est in &model_estimators {
                let result = match &selected {
                    Ok(sel) => estimate(est, &data.train, &data.full, &sel.spec, horizon),
                    Err(e) => Err(Error::Config(format!("model selection failed: {e}"))),
                };
                effects.push(effect_cell(tau, repeat, name, spec_tag.clone(), est, result));
            }
        }
    }
    if stages.effects && config.estimators.contains(&EstimatorKind::UnadjustedKm) {
        let result = estimate(
            EstimatorKind::UnadjustedKm,
            &data.train,
            &data.full,
            &ModelSpec::KaplanMeier,
            horizon,
        );
        effects.push(effect_cell(tau, repeat, UNADJUSTED_MODEL, None, EstimatorKind::UnadjustedKm, result));
    }
    (metrics, effects)
}

fn summarize(tau: u32, config: &ExperimentConfig, effects: &[EffectCell]) -> Vec<AteSummary> {
    let mut keys: Vec<(String, EstimatorKind)> = Vec::new();
    for cell in effects {
        let key = (cell.model.clone(), cell.estimator);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(model, estimator)| {
            let cells: Vec<&EffectCell> = effects
                .iter()
                .filter(|c| c.model == model && c.estimator == estimator)
                .collect();
            let ates: Vec<f64> = cells.iter().filter_map(|c| c.ate).collect();
            let all_ok = ates.len() == cells.len() && ates.len() == config.preprocess.n_repeats;
            let message = cells.iter().find_map(|c| c.message.clone());
            AteSummary {
                tau,
                model,
                estimator,
                status: if all_ok { CellStatus::Ok } else { CellStatus::Failed },
                n_ok: ates.len(),
                ate_mean: all_ok.then(|| mean(&ates)),
                ate_std: all_ok.then(|| sample_std(&ates)),
                message,
            }
        })
        .collect()
}

fn subgroup_cells(
    cohort: &SnapshotCohort,
    summary: &[AteSummary],
    effects: &[EffectCell],
    bins: usize,
) -> Vec<SubgroupCell> {
    summary
        .iter()
        .filter(|s| s.status == CellStatus::Ok)
        .filter_map(|s| {
            let runs: Vec<&Vec<f64>> = effects
                .iter()
                .filter(|c| c.model == s.model && c.estimator == s.estimator)
                .map(|c| &c.ites)
                .collect();
            let ites: Vec<f64> = (0..cohort.len())
                .map(|i| runs.iter().map(|r| r[i]).sum::<f64>() / runs.len() as f64)
                .collect();
            let est = EffectEstimate::new(ites, s.estimator, Some(s.model.clone()));
            subgroup_ite_report(&est, cohort, bins)
                .ok()
                .map(|summaries| SubgroupCell {
                    model: s.model.clone(),
                    estimator: s.estimator,
                    summaries,
                })
        })
        .collect()
}

fn arm_km(cohort: &SnapshotCohort, treated: bool) -> SurvivalCurve {
    let rows = cohort.arm_indices(treated);
    let times: Vec<f64> = rows.iter().map(|&i| cohort.rows[i].residual_time as f64).collect();
    let events: Vec<bool> = rows.iter().map(|&i| cohort.rows[i].event).collect();
    km_fit(&times, &events).unwrap_or_else(|_| SurvivalCurve::certain())
}

/// Runs every (tau, repeat) job and collects the results without writing
/// anything.
pub fn compute_experiment(config: &ExperimentConfig, stages: Stages) -> Result<ExperimentResults> {
    config.validate()?;
    let records = load_records(config)?;
    let cohorts = config
        .preprocess
        .taus
        .iter()
        .map(|&tau| prepare_cohort(&records, tau, config))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..cohorts.len())
        .flat_map(|c| (0..config.preprocess.n_repeats).map(move |r| (c, r)))
        .collect();
    let outputs: Vec<(Vec<MetricCell>, Vec<EffectCell>)> = jobs
        .par_iter()
        .map(|&(c, r)| run_repeat(&cohorts[c].0, config, r, stages))
        .collect();

    let mut taus = Vec::with_capacity(cohorts.len());
    for (c, (cohort, n_snapshot)) in cohorts.iter().enumerate() {
        let mut metrics = Vec::new();
        let mut effects = Vec::new();
        for ((jc, _), (m, e)) in jobs.iter().zip(&outputs) {
            if *jc == c {
                metrics.extend(m.iter().cloned());
                effects.extend(e.iter().cloned());
            }
        }
        // model-major order, repeats inside
        let key = |m: &str| {
            config
                .models
                .iter()
                .position(|g| g.name() == m)
                .unwrap_or(config.models.len())
        };
        metrics.sort_by_key(|m| (key(&m.model), m.repeat));
        effects.sort_by_key(|e| {
            let est = config.estimators.iter().position(|k| *k == e.estimator);
            (key(&e.model), est, e.repeat)
        });
        let summary = summarize(cohort.tau, config, &effects);
        let subgroups = subgroup_cells(cohort, &summary, &effects, config.histogram_bins);
        let assumptions = assumption_checks(cohort);
        taus.push(TauResults {
            tau: cohort.tau,
            cohort: CohortSummary {
                tau: cohort.tau,
                n_snapshot: *n_snapshot,
                n_trimmed: cohort.len(),
                dropped_missing_risk: cohort.dropped_missing_risk,
                n_treated: assumptions.n_treated,
                n_control: assumptions.n_control,
                n_features: cohort.schema.len(),
            },
            assumptions,
            subjects: cohort
                .rows
                .iter()
                .map(|r| SubjectInfo {
                    id: r.id.clone(),
                    treated: r.treated,
                    formulation: r.subgroups.formulation.to_string(),
                    drug_name: r.subgroups.drug_name.clone(),
                })
                .collect(),
            metrics,
            effects,
            summary,
            subgroups,
            km_treated: arm_km(cohort, true),
            km_control: arm_km(cohort, false),
        });
    }
    let oracle = match &config.input {
        InputSpec::Synthetic(dgp) if config.oracle_mc > 0 => Some(oracle_ate(dgp, config.oracle_mc)?),
        _ => None,
    };
    Ok(ExperimentResults {
        config: config.clone(),
        oracle,
        taus,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub tau: u32,
    pub repeat: usize,
    pub model: String,
    pub spec: String,
    pub validation_c_td: Option<f64>,
    /// Cox coefficients by feature name.
    pub coefficients: Option<Vec<(String, f64)>>,
    pub n_trees: Option<usize>,
}

/// Selects and fits every model grid on one repeat's training split of each
/// snapshot. Failures are returned per model.
pub fn fit_summaries(config: &ExperimentConfig, repeat: usize) -> Result<Vec<Result<FitSummary>>> {
    config.validate()?;
    let records = load_records(config)?;
    let mut out = Vec::new();
    for &tau in &config.preprocess.taus {
        let (cohort, _) = prepare_cohort(&records, tau, config)?;
        let data = encode_repeat(&cohort, config, repeat)?;
        for grid in &config.models {
            out.push(select(grid, &data, repeat).map(|sel| FitSummary {
                tau,
                repeat,
                model: grid.name().to_string(),
                spec: sel.spec.to_string(),
                validation_c_td: sel.validation_c_td,
                coefficients: sel.model.cox().map(|(cox, _)| {
                    data.train
                        .schema
                        .names()
                        .map(String::from)
                        .zip(cox.coefficients.iter().copied())
                        .collect()
                }),
                n_trees: sel.model.forest().map(|f| f.n_trees()),
            }));
        }
    }
    Ok(out)
}
