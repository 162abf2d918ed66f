//! The repeat protocol: per snapshot and seeded split, select hyperparameters
//! on validation concordance, score the test split, and estimate effects over
//! the whole cohort with models fit on the training split.

mod config;
mod report;
mod run;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{default_estimators, ExperimentConfig, InputSpec, ModelGrid};
pub use report::{emit_plot_data, ite_file_name, read_km_plot, read_results, write_reports};
pub use run::{
    compute_experiment, load_records, prepare_cohort, AteSummary, CellStatus, CohortSummary,
    fit_summaries, EffectCell, ExperimentResults, FitSummary, MetricCell, Stages, SubgroupCell, SubjectInfo, TauResults,
    UNADJUSTED_MODEL,
};

use crate::domain::EstimatorKind;
use crate::error::Result;
use crate::synth::OracleEstimate;

/// Computes everything, then writes the tables, manifest and plot data into
/// `config.out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    let results = compute_experiment(config, Stages::ALL)?;
    write_reports(&results, &config.out_dir)?;
    emit_plot_data(&results, &config.out_dir)?;
    Ok(results)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub tau: u32,
    pub model: String,
    pub estimator: EstimatorKind,
    pub full_mean: Option<f64>,
    pub full_std: Option<f64>,
    pub ablated_mean: Option<f64>,
    pub ablated_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationResults {
    pub full: ExperimentResults,
    pub ablated: ExperimentResults,
    pub rows: Vec<AblationRow>,
    pub oracle: Option<OracleEstimate>,
}

/// Runs the experiment with and without the risk-score features, writing
/// each run under `full/` and `ablated/` and the paired table as
/// `ablation_<tau>.csv`.
pub fn run_ablation(config: &ExperimentConfig) -> Result<AblationResults> {
    let out = &config.out_dir;
    let mut full_cfg = config.clone();
    full_cfg.preprocess.include_risk_scores = true;
    full_cfg.out_dir = out.join("full");
    let mut ablated_cfg = config.clone();
    ablated_cfg.preprocess.include_risk_scores = false;
    ablated_cfg.out_dir = out.join("ablated");
    ablated_cfg.oracle_mc = 0;

    let full = run_experiment(&full_cfg)?;
    let ablated = run_experiment(&ablated_cfg)?;
    let mut rows = Vec::new();
    for t in &full.taus {
        for s in &t.summary {
            let other = ablated
                .tau(t.tau)
                .and_then(|a| a.summary_for(&s.model, s.estimator));
            rows.push(AblationRow {
                tau: t.tau,
                model: s.model.clone(),
                estimator: s.estimator,
                full_mean: s.ate_mean,
                full_std: s.ate_std,
                ablated_mean: other.and_then(|o| o.ate_mean),
                ablated_std: other.and_then(|o| o.ate_std),
            });
        }
    }
    let oracle_tau = match &config.input {
        InputSpec::Synthetic(dgp) => full.oracle.as_ref().map(|o| (dgp.snapshot_tau, o)),
        InputSpec::Csv { .. } => None,
    };
    write_ablation(&rows, oracle_tau, out)?;
    let oracle = full.oracle;
    Ok(AblationResults {
        full,
        ablated,
        rows,
        oracle,
    })
}

/// The oracle column is filled only at the snapshot the DGP was built for.
fn write_ablation(
    rows: &[AblationRow],
    oracle: Option<(u32, &OracleEstimate)>,
    out: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut taus: Vec<u32> = rows.iter().map(|r| r.tau).collect();
    taus.dedup();
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "status=failed".into());
    for tau in taus {
        let mut w = csv::Writer::from_path(out.join(format!("ablation_{tau}.csv")))?;
        w.write_record([
            "tau",
            "model",
            "estimator",
            "full_mean",
            "full_std",
            "ablated_mean",
            "ablated_std",
            "oracle",
        ])?;
        for r in rows.iter().filter(|r| r.tau == tau) {
            w.write_record([
                r.tau.to_string(),
                r.model.clone(),
                r.estimator.to_string(),
                cell(r.full_mean),
                cell(r.full_std),
                cell(r.ablated_mean),
                cell(r.ablated_std),
                oracle
                    .filter(|(t, _)| *t == tau)
                    .map(|(_, o)| o.ate.to_string())
                    .unwrap_or_default(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}
