//! Data types shared across the pipeline: longitudinal subject records,
//! snapshot cohorts, survival curves and effect estimates.

use std::collections::HashSet;
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest follow-up a record may carry, in months.
pub const MAX_MONTHS: u32 = 96;

/// Column names of the five county risk scores, in their fixed order.
pub const RISK_SCORE_NAMES: [&str; 5] = [
    "risk_mortality",
    "risk_jail",
    "risk_shelter",
    "risk_hospitalization",
    "risk_overdose",
];

pub type RiskScores = [f64; 5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    Injectable,
    NonInjectable,
    NotCovered,
}

impl Formulation {
    pub fn as_str(self) -> &'static str {
        match self {
            Formulation::Injectable => "injectable",
            Formulation::NonInjectable => "non-injectable",
            Formulation::NotCovered => "not-covered",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "injectable" => Some(Formulation::Injectable),
            "non-injectable" => Some(Formulation::NonInjectable),
            // an empty cell means the subject had no covered formulation
            "not-covered" | "" => Some(Formulation::NotCovered),
            _ => None,
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupLabels {
    pub formulation: Formulation,
    pub drug_name: Option<String>,
}

impl Default for SubgroupLabels {
    fn default() -> Self {
        SubgroupLabels {
            formulation: Formulation::NotCovered,
            drug_name: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticCovariates {
    /// Years.
    pub age: f64,
    pub race: String,
    pub gender: String,
    pub education: String,
}

impl StaticCovariates {
    pub const CATEGORICAL_FIELDS: [&'static str; 3] = ["race", "gender", "education"];

    pub fn categorical(&self, field: &str) -> Option<&str> {
        match field {
            "race" => Some(&self.race),
            "gender" => Some(&self.gender),
            "education" => Some(&self.education),
            _ => None,
        }
    }

    /// Key of the static-covariate stratum used for trimming and positivity checks.
    pub fn stratum(&self) -> (String, String, String) {
        (
            self.race.clone(),
            self.gender.clone(),
            self.education.clone(),
        )
    }
}

/// One subject's monthly history and outcome.
///
/// Month `t` (1-based) lives at index `t - 1` of every series. The number of
/// observed months `M_i` is the length of the series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    /// Month of the first adverse event, or of censoring.
    pub observed_time: u32,
    /// `true` for an adverse event, `false` for censoring.
    pub event: bool,
    /// 1 = non-adherent that month.
    pub adherence: Vec<u8>,
    pub coverage_days: Vec<u8>,
    pub statics: StaticCovariates,
    pub risk_scores: Vec<Option<RiskScores>>,
    pub subgroups: SubgroupLabels,
}

impl SubjectRecord {
    pub fn months(&self) -> u32 {
        self.adherence.len() as u32
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub subject_id: String,
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateId,
    ObservedTimeZero,
    ObservedTimeExceedsHistory { observed_time: u32, months: u32 },
    HistoryTooLong { months: u32 },
    SeriesLengthMismatch { series: String, len: usize, months: u32 },
    AdherenceNotBinary { month: u32, value: u8 },
    CoverageOutOfRange { month: u32, days: u8 },
    RiskScoreOutOfRange { month: u32, value: f64 },
    AgeNotFinite,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "subject {}: ", self.subject_id)?;
        match &self.kind {
            ViolationKind::DuplicateId => write!(f, "duplicate subject id"),
            ViolationKind::ObservedTimeZero => write!(f, "observed_time must be at least 1"),
            ViolationKind::ObservedTimeExceedsHistory {
                observed_time,
                months,
            } => write!(
                f,
                "observed_time exceeds history ({observed_time} > {months} months)"
            ),
            ViolationKind::HistoryTooLong { months } => {
                write!(f, "history of {months} months exceeds {MAX_MONTHS}")
            }
            ViolationKind::SeriesLengthMismatch {
                series,
                len,
                months,
            } => write!(f, "{series} has {len} entries for {months} months"),
            ViolationKind::AdherenceNotBinary { month, value } => {
                write!(f, "adherence at month {month} is {value}, not 0 or 1")
            }
            ViolationKind::CoverageOutOfRange { month, days } => {
                write!(f, "coverage at month {month} is {days} days, outside 0..=31")
            }
            ViolationKind::RiskScoreOutOfRange { month, value } => {
                write!(f, "risk score out of [0,1] at month {month}: {value}")
            }
            ViolationKind::AgeNotFinite => write!(f, "age is not finite"),
        }
    }
}

/// Checks every record invariant and reports each violation. An empty
/// report means the dataset is well formed.
pub fn validate_dataset(records: &[SubjectRecord]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for r in records {
        let mut push = |kind| {
            out.push(Violation {
                subject_id: r.id.clone(),
                kind,
            })
        };
        if !seen.insert(r.id.as_str()) {
            push(ViolationKind::DuplicateId);
        }
        let months = r.months();
        if r.observed_time == 0 {
            push(ViolationKind::ObservedTimeZero);
        }
        if r.observed_time > months {
            push(ViolationKind::ObservedTimeExceedsHistory {
                observed_time: r.observed_time,
                months,
            });
        }
        if months > MAX_MONTHS {
            push(ViolationKind::HistoryTooLong { months });
        }
        for (series, len) in [
            ("coverage_days", r.coverage_days.len()),
            ("risk_scores", r.risk_scores.len()),
        ] {
            if len != months as usize {
                push(ViolationKind::SeriesLengthMismatch {
                    series: series.to_string(),
                    len,
                    months,
                });
            }
        }
        for (t, &a) in r.adherence.iter().enumerate() {
            if a > 1 {
                push(ViolationKind::AdherenceNotBinary {
                    month: t as u32 + 1,
                    value: a,
                });
            }
        }
        for (t, &d) in r.coverage_days.iter().enumerate() {
            if d > 31 {
                push(ViolationKind::CoverageOutOfRange {
                    month: t as u32 + 1,
                    days: d,
                });
            }
        }
        for (t, scores) in r.risk_scores.iter().enumerate() {
            for &v in scores.iter().flatten() {
                if !(0.0..=1.0).contains(&v) {
                    push(ViolationKind::RiskScoreOutOfRange {
                        month: t as u32 + 1,
                        value: v,
                    });
                }
            }
        }
        if !r.statics.age.is_finite() {
            push(ViolationKind::AgeNotFinite);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Static,
    RiskScore,
    AdherenceHistory,
    Treatment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
}

/// Name of the snapshot treatment column `A_tau`.
pub const TREATMENT_FEATURE: &str = "treatment";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<Feature>,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn treatment_index(&self) -> Option<usize> {
        self.features
            .iter()
            .position(|f| f.kind == FeatureKind::Treatment)
    }

    /// Schema with the treatment column removed, plus the indices kept.
    pub fn without_treatment(&self) -> (FeatureSchema, Vec<usize>) {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&j| self.features[j].kind != FeatureKind::Treatment)
            .collect();
        (self.select(&keep), keep)
    }

    pub fn select(&self, indices: &[usize]) -> FeatureSchema {
        FeatureSchema {
            features: indices.iter().map(|&j| self.features[j].clone()).collect(),
        }
    }

    /// Compares against another schema by feature name, reporting what is
    /// missing from `other` and what `other` adds.
    pub fn check_matches(&self, other: &FeatureSchema) -> Result<()> {
        if self == other {
            return Ok(());
        }
        let mine: HashSet<&str> = self.names().collect();
        let theirs: HashSet<&str> = other.names().collect();
        let missing: Vec<String> = self
            .names()
            .filter(|n| !theirs.contains(n))
            .map(String::from)
            .collect();
        let extra: Vec<String> = other
            .names()
            .filter(|n| !mine.contains(n))
            .map(String::from)
            .collect();
        Err(Error::SchemaMismatch { missing, extra })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub id: String,
    pub features: Vec<f64>,
    pub treated: bool,
    /// Months from the snapshot to event or censoring.
    pub residual_time: u32,
    pub event: bool,
    pub statics: StaticCovariates,
    pub subgroups: SubgroupLabels,
}

/// Cross-section of the records at snapshot month `tau`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotCohort {
    pub tau: u32,
    pub schema: FeatureSchema,
    pub rows: Vec<CohortRow>,
    /// Subjects excluded because their risk scores were missing at `tau`.
    pub dropped_missing_risk: usize,
}

impl SnapshotCohort {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.residual_time as f64).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.event).collect()
    }

    pub fn treatments(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.treated).collect()
    }

    pub fn feature_matrix(&self) -> Array2<f64> {
        let p = self.schema.len();
        Array2::from_shape_fn((self.len(), p), |(i, j)| self.rows[i].features[j])
    }

    /// Feature matrix restricted to `columns`, for `rows` in order.
    pub fn feature_matrix_of(&self, rows: &[usize], columns: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn((rows.len(), columns.len()), |(i, j)| {
            self.rows[rows[i]].features[columns[j]]
        })
    }

    pub fn arm_indices(&self, treated: bool) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.rows[i].treated == treated)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> SnapshotCohort {
        SnapshotCohort {
            tau: self.tau,
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            dropped_missing_risk: self.dropped_missing_risk,
        }
    }

    /// Copy with treatment labels swapped, keeping the treatment feature in sync.
    pub fn with_flipped_treatment(&self) -> SnapshotCohort {
        let mut out = self.clone();
        let t = self.schema.treatment_index();
        for row in &mut out.rows {
            row.treated = !row.treated;
            if let Some(t) = t {
                row.features[t] = if row.treated { 1.0 } else { 0.0 };
            }
        }
        out
    }

    /// Checks the cohort invariants: residual times of at least one month,
    /// one feature per schema entry, and treatment agreeing with its column.
    pub fn check_invariants(&self) -> Result<()> {
        let t = self.schema.treatment_index();
        for row in &self.rows {
            if row.residual_time < 1 {
                return Err(Error::InvalidInput(format!(
                    "row {} has residual time 0",
                    row.id
                )));
            }
            if row.features.len() != self.schema.len() {
                return Err(Error::InvalidInput(format!(
                    "row {} has {} features, schema has {}",
                    row.id,
                    row.features.len(),
                    self.schema.len()
                )));
            }
            if let Some(t) = t {
                if (row.features[t] == 1.0) != row.treated {
                    return Err(Error::InvalidInput(format!(
                        "row {} treatment disagrees with its feature",
                        row.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Right-continuous step function `u -> S(u)`.
///
/// `values[k]` holds on `[grid[k], grid[k + 1])`; the last value is carried
/// forward past the end of the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl SurvivalCurve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(Error::InvalidCurve(format!(
                "grid has {} points, values {}",
                grid.len(),
                values.len()
            )));
        }
        if grid[0] != 0.0 {
            return Err(Error::InvalidCurve("grid must start at 0".into()));
        }
        if values[0] != 1.0 {
            return Err(Error::InvalidCurve(format!("S(0) = {} != 1", values[0])));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidCurve("grid not strictly increasing".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidCurve("value outside [0, 1]".into()));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidCurve("values increase".into()));
        }
        Ok(SurvivalCurve { grid, values })
    }

    /// The curve `S(u) = 1` everywhere.
    pub fn certain() -> Self {
        SurvivalCurve {
            grid: vec![0.0],
            values: vec![1.0],
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 1.0;
        }
        let k = self.grid.partition_point(|&g| g <= u);
        self.values[k - 1]
    }

    /// Left limit `S(u-)`.
    pub fn before(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 1.0;
        }
        let k = self.grid.partition_point(|&g| g < u);
        self.values[k - 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorKind {
    TLearner,
    SLearner,
    Matching { k: usize },
    UnadjustedKm,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::TLearner => f.write_str("t_learner"),
            EstimatorKind::SLearner => f.write_str("s_learner"),
            EstimatorKind::Matching { k } => write!(f, "matching_k{k}"),
            EstimatorKind::UnadjustedKm => f.write_str("unadjusted_km"),
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t_learner" => Ok(EstimatorKind::TLearner),
            "s_learner" => Ok(EstimatorKind::SLearner),
            "unadjusted_km" => Ok(EstimatorKind::UnadjustedKm),
            _ => s
                .strip_prefix("matching_k")
                .or_else(|| s.strip_prefix("matching"))
                .and_then(|k| k.trim_start_matches(['(', ':']).trim_end_matches(')').parse().ok())
                .filter(|&k: &usize| k >= 1)
                .map(|k| EstimatorKind::Matching { k })
                .ok_or_else(|| Error::Config(format!("unknown estimator {s:?}"))),
        }
    }
}

/// Per-subject ITEs and their mean, in months.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub ites: Vec<f64>,
    pub ate: f64,
    /// Standard deviation of the ATE across experiment repeats; 0 for a single run.
    pub repeat_std: f64,
    pub method: EstimatorKind,
    pub base_model: Option<String>,
}

impl EffectEstimate {
    pub fn new(ites: Vec<f64>, method: EstimatorKind, base_model: Option<String>) -> Self {
        let ate = mean(&ites);
        EffectEstimate {
            ites,
            ate,
            repeat_std: 0.0,
            method,
            base_model,
        }
    }

    /// `|ITE_i| <= horizon` and `ate == mean(ites)` to 1e-9 relative.
    pub fn check(&self, horizon: f64) -> Result<()> {
        if let Some(v) = self.ites.iter().find(|v| !(v.abs() <= horizon)) {
            return Err(Error::InvalidInput(format!(
                "ITE {v} exceeds horizon {horizon}"
            )));
        }
        let m = mean(&self.ites);
        if (m - self.ate).abs() > 1e-9 * m.abs().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "ate {} differs from mean ITE {m}",
                self.ate
            )));
        }
        Ok(())
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub(crate) fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
