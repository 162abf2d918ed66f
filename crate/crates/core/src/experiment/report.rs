use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{CellStatus, ExperimentResults, TauResults};
use crate::domain::{EstimatorKind, SurvivalCurve};
use crate::error::{Error, Result};

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

pub fn ite_file_name(tau: u32, model: &str, estimator: EstimatorKind) -> String {
    format!("ite_{tau}_{model}_{estimator}.csv")
}

fn write_cohort_sizes(results: &ExperimentResults, out: &Path) -> Result<()> {
    let mut w = writer(&out.join("cohort_sizes.csv"))?;
    w.write_record([
        "tau",
        "n_snapshot",
        "n_trimmed",
        "dropped_missing_risk",
        "n_treated",
        "n_control",
        "n_features",
        "one_armed_strata",
    ])?;
    for t in &results.taus {
        let c = &t.cohort;
        w.write_record([
            c.tau.to_string(),
            c.n_snapshot.to_string(),
            c.n_trimmed.to_string(),
            c.dropped_missing_risk.to_string(),
            c.n_treated.to_string(),
            c.n_control.to_string(),
            c.n_features.to_string(),
            t.assumptions.one_armed_strata.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_metrics(t: &TauResults, out: &Path) -> Result<()> {
    let mut w = writer(&out.join(format!("metrics_{}.csv", t.tau)))?;
    w.write_record([
        "tau",
        "repeat",
        "model",
        "spec",
        "status",
        "validation_c_td",
        "c_td",
        "ibs",
        "auc_td_mean",
        "message",
    ])?;
    for m in &t.metrics {
        w.write_record([
            m.tau.to_string(),
            m.repeat.to_string(),
            m.model.clone(),
            m.spec.clone().unwrap_or_default(),
            m.status.as_str().to_string(),
            num(m.validation_c_td),
            num(m.c_td),
            num(m.ibs),
            num(m.auc_td_mean),
            m.message.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_ates(t: &TauResults, results: &ExperimentResults, out: &Path) -> Result<()> {
    let mut w = writer(&out.join(format!("ate_{}.csv", t.tau)))?;
    w.write_record([
        "tau", "repeat", "model", "spec", "estimator", "status", "ate", "n", "message",
    ])?;
    for e in &t.effects {
        w.write_record([
            e.tau.to_string(),
            e.repeat.to_string(),
            e.model.clone(),
            e.spec.clone().unwrap_or_default(),
            e.estimator.to_string(),
            e.status.as_str().to_string(),
            num(e.ate),
            e.ites.len().to_string(),
            e.message.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;

    let mut w = writer(&out.join(format!("ate_summary_{}.csv", t.tau)))?;
    w.write_record([
        "tau", "model", "estimator", "status", "n_ok", "ate_mean", "ate_std", "message",
    ])?;
    for s in &t.summary {
        w.write_record([
            s.tau.to_string(),
            s.model.clone(),
            s.estimator.to_string(),
            s.status.as_str().to_string(),
            s.n_ok.to_string(),
            num(s.ate_mean),
            num(s.ate_std),
            s.message.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;

    // rows = models, columns = estimators
    let estimators = &results.config.estimators;
    let mut models: Vec<&str> = Vec::new();
    for s in &t.summary {
        if !models.contains(&s.model.as_str()) {
            models.push(&s.model);
        }
    }
    let mut w = writer(&out.join(format!("ate_table_{}.csv", t.tau)))?;
    let mut header = vec!["model".to_string()];
    header.extend(estimators.iter().map(|e| e.to_string()));
    w.write_record(&header)?;
    for model in models {
        let mut row = vec![model.to_string()];
        for &est in estimators {
            row.push(match t.summary_for(model, est) {
                Some(s) if s.status == CellStatus::Ok => format!(
                    "{:.3} ± {:.3}",
                    s.ate_mean.unwrap_or_default(),
                    s.ate_std.unwrap_or_default()
                ),
                Some(_) => "status=failed".to_string(),
                None => String::new(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_ites(t: &TauResults, out: &Path) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for s in &t.summary {
        let name = ite_file_name(t.tau, &s.model, s.estimator);
        let mut w = writer(&out.join(&name))?;
        w.write_record(["repeat", "subject_id", "treatment", "formulation", "drug_name", "ite"])?;
        for cell in t
            .effects
            .iter()
            .filter(|c| c.model == s.model && c.estimator == s.estimator)
        {
            for (subject, ite) in t.subjects.iter().zip(&cell.ites) {
                w.write_record([
                    cell.repeat.to_string(),
                    subject.id.clone(),
                    (subject.treated as u8).to_string(),
                    subject.formulation.clone(),
                    subject.drug_name.clone().unwrap_or_default(),
                    ite.to_string(),
                ])?;
            }
        }
        w.flush()?;
        files.push(name);
    }
    Ok(files)
}

fn write_subgroups(t: &TauResults, out: &Path) -> Result<()> {
    for cell in &t.subgroups {
        let name = format!("subgroups_{}_{}_{}.csv", t.tau, cell.model, cell.estimator);
        let mut w = writer(&out.join(name))?;
        w.write_record(["label_kind", "label", "count", "mean_ite", "std_ite"])?;
        for s in &cell.summaries {
            w.write_record([
                s.label_kind.clone(),
                s.label.clone(),
                s.count.to_string(),
                s.mean_ite.to_string(),
                s.std_ite.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ManifestCell {
    tau: u32,
    repeat: usize,
    model: String,
    estimator: Option<String>,
    spec: Option<String>,
    status: CellStatus,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    crate_version: String,
    config: super::ExperimentConfig,
    cohorts: Vec<super::run::CohortSummary>,
    cells: Vec<ManifestCell>,
    files: Vec<String>,
}

/// Writes every table plus `manifest.json` and `results.json` into `out`.
/// Returns the file names written, sorted.
pub fn write_reports(results: &ExperimentResults, out: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(out)?;
    write_cohort_sizes(results, out)?;
    let mut files = vec!["cohort_sizes.csv".to_string()];
    let mut cells = Vec::new();
    for t in &results.taus {
        write_metrics(t, out)?;
        write_ates(t, results, out)?;
        files.extend([
            format!("metrics_{}.csv", t.tau),
            format!("ate_{}.csv", t.tau),
            format!("ate_summary_{}.csv", t.tau),
            format!("ate_table_{}.csv", t.tau),
        ]);
        files.extend(write_ites(t, out)?);
        write_subgroups(t, out)?;
        files.extend(
            t.subgroups
                .iter()
                .map(|c| format!("subgroups_{}_{}_{}.csv", t.tau, c.model, c.estimator)),
        );
        for m in &t.metrics {
            cells.push(ManifestCell {
                tau: m.tau,
                repeat: m.repeat,
                model: m.model.clone(),
                estimator: None,
                spec: m.spec.clone(),
                status: m.status,
                file: format!("metrics_{}.csv", t.tau),
            });
        }
        for e in &t.effects {
            cells.push(ManifestCell {
                tau: e.tau,
                repeat: e.repeat,
                model: e.model.clone(),
                estimator: Some(e.estimator.to_string()),
                spec: e.spec.clone(),
                status: e.status,
                file: format!("ate_{}.csv", t.tau),
            });
        }
    }
    if let Some(oracle) = &results.oracle {
        std::fs::write(out.join("oracle.json"), serde_json::to_string_pretty(oracle)?)?;
        files.push("oracle.json".into());
    }
    std::fs::write(out.join("results.json"), serde_json::to_string(results)?)?;
    files.push("results.json".into());
    files.push("manifest.json".into());
    files.sort();
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config: results.config.clone(),
        cohorts: results.taus.iter().map(|t| t.cohort.clone()).collect(),
        cells,
        files: files.clone(),
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(files)
}

pub fn read_results(path: &Path) -> Result<ExperimentResults> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Tidy data for the figures: the ATE trend over `tau`, ITE histograms per
/// subgroup and the per-arm Kaplan-Meier steps. Returns the files written.
pub fn emit_plot_data(results: &ExperimentResults, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();

    let path = out.join("plot_ate_trend.csv");
    let mut w = writer(&path)?;
    w.write_record([
        "tau", "model", "estimator", "status", "ate_mean", "ate_std", "lower", "upper",
    ])?;
    for t in &results.taus {
        for s in &t.summary {
            let band = s.ate_mean.zip(s.ate_std);
            w.write_record([
                s.tau.to_string(),
                s.model.clone(),
                s.estimator.to_string(),
                s.status.as_str().to_string(),
                num(s.ate_mean),
                num(s.ate_std),
                num(band.map(|(m, sd)| m - sd)),
                num(band.map(|(m, sd)| m + sd)),
            ])?;
        }
    }
    w.flush()?;
    written.push(path);

    for t in &results.taus {
        for cell in &t.subgroups {
            let path = out.join(format!(
                "plot_ite_hist_{}_{}_{}.csv",
                t.tau, cell.model, cell.estimator
            ));
            let mut w = writer(&path)?;
            w.write_record(["label_kind", "label", "bin", "lower", "upper", "count"])?;
            for s in &cell.summaries {
                let h = &s.histogram;
                for (b, count) in h.counts.iter().enumerate() {
                    w.write_record([
                        s.label_kind.clone(),
                        s.label.clone(),
                        b.to_string(),
                        h.edges[b].to_string(),
                        h.edges[b + 1].to_string(),
                        count.to_string(),
                    ])?;
                }
            }
            w.flush()?;
            written.push(path);
        }

        let path = out.join(format!("plot_km_{}.csv", t.tau));
        let mut w = writer(&path)?;
        w.write_record(["arm", "time", "survival"])?;
        for (arm, curve) in [("treated", &t.km_treated), ("control", &t.km_control)] {
            for (g, v) in curve.grid().iter().zip(curve.values()) {
                w.write_record([arm.to_string(), g.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a `plot_km_<tau>.csv` file back into `(treated, control)` curves.
pub fn read_km_plot(path: &Path) -> Result<(SurvivalCurve, SurvivalCurve)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut arms: [(Vec<f64>, Vec<f64>); 2] = Default::default();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: k as u64 + 2,
                    message: "expected arm,time,survival".into(),
                })
        };
        let slot = match rec.get(0) {
            Some("treated") => 0,
            Some("control") => 1,
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: k as u64 + 2,
                    message: "arm must be treated or control".into(),
                })
            }
        };
        arms[slot].0.push(parse(1)?);
        arms[slot].1.push(parse(2)?);
    }
    let [(tg, tv), (cg, cv)] = arms;
    Ok((SurvivalCurve::new(tg, tv)?, SurvivalCurve::new(cg, cv)?))
}
