use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{
    CohortRow, Feature, FeatureKind, FeatureSchema, SnapshotCohort, StaticCovariates,
    SubjectRecord, RISK_SCORE_NAMES, TREATMENT_FEATURE,
};
use crate::error::{Error, Result};

/// 1 (non-adherent) when the month's prescription coverage is at most
/// `threshold` days.
pub fn binarize_adherence(coverage_days: u8, threshold: u8) -> Result<u8> {
    if coverage_days > 31 {
        return Err(Error::InvalidInput(format!(
            "coverage of {coverage_days} days exceeds a month"
        )));
    }
    Ok((coverage_days <= threshold) as u8)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub threshold_days: u8,
    pub taus: Vec<u32>,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub n_repeats: usize,
    pub include_risk_scores: bool,
    pub seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            threshold_days: 10,
            taus: vec![3, 6, 9, 12],
            split: [0.6, 0.2, 0.2],
            n_repeats: 5,
            include_risk_scores: true,
            seed: 0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold_days > 31 {
            return Err(Error::Config("threshold_days must lie in 0..=31".into()));
        }
        if self.taus.is_empty() || self.taus.contains(&0) {
            return Err(Error::Config("taus must be a non-empty list of months >= 1".into()));
        }
        check_fractions(&self.split)?;
        if self.n_repeats == 0 {
            return Err(Error::Config("n_repeats must be at least 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_fractions(split: &[f64; 3]) -> Result<()> {
    if split.iter().any(|f| !(0.0..=1.0).contains(f)) || (split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {split:?} must be in [0, 1] and sum to 1"
        )));
    }
    Ok(())
}

pub(crate) fn one_hot_name(field: &str, level: &str) -> String {
    format!("{field}={level}")
}

pub(crate) fn history_name(month: u32) -> String {
    format!("adherence_m{month}")
}

/// Distinct levels of every categorical field, sorted.
pub(crate) fn category_levels<'a>(
    statics: impl Iterator<Item = &'a StaticCovariates> + Clone,
) -> BTreeMap<String, Vec<String>> {
    StaticCovariates::CATEGORICAL_FIELDS
        .iter()
        .map(|&field| {
            let levels: BTreeSet<&str> = statics
                .clone()
                .filter_map(|s| s.categorical(field))
                .collect();
            (
                field.to_string(),
                levels.into_iter().map(String::from).collect(),
            )
        })
        .collect()
}

/// Snapshot at month `tau`: subjects still event-free and observed at
/// `tau + 1`, with residual time `T - tau`.
///
/// Features, in order: age, one indicator per level of each categorical
/// field, the five risk scores at `tau` (when enabled), non-adherence in
/// months `1..tau`, and the treatment `A_tau`. Adherence is re-derived from
/// coverage days with the configured threshold. Subjects lacking risk scores
/// at `tau` are dropped and counted when risk scores are enabled.
pub fn build_snapshot(
    records: &[SubjectRecord],
    tau: u32,
    config: &PreprocessConfig,
) -> Result<SnapshotCohort> {
    if tau == 0 {
        return Err(Error::Config("snapshot tau must be at least 1".into()));
    }
    let t = tau as usize;
    let eligible: Vec<&SubjectRecord> = records
        .iter()
        .filter(|r| r.observed_time > tau && r.coverage_days.len() >= t)
        .collect();
    let (kept, missing): (Vec<&SubjectRecord>, Vec<&SubjectRecord>) = eligible
        .into_iter()
        .partition(|r| !config.include_risk_scores || matches!(r.risk_scores.get(t - 1), Some(Some(_))));
    if kept.is_empty() {
        return Err(Error::EmptyCohort(format!("no subject is observed past month {tau}")));
    }
    let levels = category_levels(kept.iter().map(|r| &r.statics));

    let mut features = vec![Feature {
        name: "age".into(),
        kind: FeatureKind::Static,
    }];
    for (field, lv) in &levels {
        features.extend(lv.iter().map(|l| Feature {
            name: one_hot_name(field, l),
            kind: FeatureKind::Static,
        }));
    }
    if config.include_risk_scores {
        features.extend(RISK_SCORE_NAMES.iter().map(|n| Feature {
            name: n.to_string(),
            kind: FeatureKind::RiskScore,
        }));
    }
    features.extend((1..tau).map(|m| Feature {
        name: history_name(m),
        kind: FeatureKind::AdherenceHistory,
    }));
    features.push(Feature {
        name: TREATMENT_FEATURE.into(),
        kind: FeatureKind::Treatment,
    });

    let mut rows = Vec::with_capacity(kept.len());
    for r in kept {
        let mut z = vec![r.statics.age];
        for (field, lv) in &levels {
            let value = r.statics.categorical(field).unwrap_or_default();
            z.extend(lv.iter().map(|l| (l == value) as u8 as f64));
        }
        if config.include_risk_scores {
            let scores = r.risk_scores[t - 1].expect("filtered above");
            z.extend(scores);
        }
        let adherence = r.coverage_days[..t]
            .iter()
            .map(|&d| binarize_adherence(d, config.threshold_days))
            .collect::<Result<Vec<u8>>>()?;
        z.extend(adherence.iter().map(|&a| a as f64));
        rows.push(CohortRow {
            id: r.id.clone(),
            features: z,
            treated: adherence[t - 1] == 1,
            residual_time: r.observed_time - tau,
            event: r.event,
            statics: r.statics.clone(),
            subgroups: r.subgroups.clone(),
        });
    }
    Ok(SnapshotCohort {
        tau,
        schema: FeatureSchema { features },
        rows,
        dropped_missing_risk: missing.len(),
    })
}

/// Drops every static stratum (race, gender, education) that holds a single
/// subject or only one treatment value.
pub fn trim(cohort: &SnapshotCohort) -> Result<SnapshotCohort> {
    let mut arms: BTreeMap<(String, String, String), (usize, usize)> = BTreeMap::new();
    for row in &cohort.rows {
        let e = arms.entry(row.statics.stratum()).or_default();
        if row.treated {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    let keep: Vec<usize> = (0..cohort.len())
        .filter(|&i| {
            let (t, c) = arms[&cohort.rows[i].statics.stratum()];
            t > 0 && c > 0
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyCohort("trimming removed every subject".into()));
    }
    Ok(cohort.subset(&keep))
}
