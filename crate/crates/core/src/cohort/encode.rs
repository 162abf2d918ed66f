use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::snapshot::{category_levels, one_hot_name};
use crate::domain::{Feature, FeatureKind, FeatureSchema, SnapshotCohort};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

/// Everything needed to encode a cohort the way the training rows were.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    /// Levels per categorical field; the first one is the dropped reference.
    pub levels: BTreeMap<String, Vec<String>>,
    /// Mean and population standard deviation of age and the risk scores.
    pub continuous: Vec<ColumnStats>,
    /// Output columns, in order. Zero-variance columns are absent.
    pub columns: Vec<Feature>,
}

fn is_continuous(f: &Feature) -> bool {
    f.name == "age" || f.kind == FeatureKind::RiskScore
}

fn is_one_hot(f: &Feature) -> bool {
    f.kind == FeatureKind::Static && f.name != "age"
}

/// Column layout before dropping: age, indicators for every non-reference
/// level, then the cohort's risk, history and treatment columns as they are.
fn expanded_features(schema: &FeatureSchema, levels: &BTreeMap<String, Vec<String>>) -> Vec<Feature> {
    let mut out = Vec::new();
    if schema.index_of("age").is_some() {
        out.push(Feature {
            name: "age".into(),
            kind: FeatureKind::Static,
        });
    }
    for (field, lv) in levels {
        out.extend(lv.iter().skip(1).map(|l| Feature {
            name: one_hot_name(field, l),
            kind: FeatureKind::Static,
        }));
    }
    out.extend(schema.features.iter().filter(|f| !is_one_hot(f) && f.name != "age").cloned());
    out
}

fn expand_row(
    cohort: &SnapshotCohort,
    i: usize,
    levels: &BTreeMap<String, Vec<String>>,
) -> Result<Vec<f64>> {
    let row = &cohort.rows[i];
    let mut z = Vec::new();
    if let Some(j) = cohort.schema.index_of("age") {
        z.push(row.features[j]);
    }
    for (field, lv) in levels {
        let value = row.statics.categorical(field).unwrap_or_default();
        if !lv.iter().any(|l| l == value) {
            return Err(Error::UnseenCategory {
                field: field.clone(),
                value: value.to_string(),
            });
        }
        z.extend(lv.iter().skip(1).map(|l| (l == value) as u8 as f64));
    }
    z.extend(
        cohort
            .schema
            .features
            .iter()
            .zip(&row.features)
            .filter(|(f, _)| !is_one_hot(f) && f.name != "age")
            .map(|(_, &v)| v),
    );
    Ok(z)
}

fn expanded_matrix(
    cohort: &SnapshotCohort,
    levels: &BTreeMap<String, Vec<String>>,
) -> Result<Vec<Vec<f64>>> {
    (0..cohort.len()).map(|i| expand_row(cohort, i, levels)).collect()
}

impl NormalizationStats {
    /// Fits on `train`. Category levels come from `levels_from` when given,
    /// so rows of a larger target cohort can be encoded too; moments and the
    /// zero-variance screen always use `train` alone.
    pub fn fit(train: &SnapshotCohort, levels_from: Option<&SnapshotCohort>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyCohort("cannot fit normalization on no rows".into()));
        }
        let source = levels_from.unwrap_or(train);
        let levels = category_levels(source.rows.iter().map(|r| &r.statics));
        let features = expanded_features(&train.schema, &levels);
        let x = expanded_matrix(train, &levels)?;
        let n = x.len() as f64;

        let mut continuous = Vec::new();
        let mut columns = Vec::new();
        for (j, f) in features.iter().enumerate() {
            let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            if var <= 0.0 && f.kind != FeatureKind::Treatment {
                log::debug!("dropping zero-variance column {}", f.name);
                continue;
            }
            if is_continuous(f) {
                continuous.push(ColumnStats {
                    name: f.name.clone(),
                    mean,
                    std: var.sqrt(),
                });
            }
            columns.push(f.clone());
        }
        Ok(NormalizationStats {
            levels,
            continuous,
            columns,
        })
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema {
            features: self.columns.clone(),
        }
    }

    /// Encodes `cohort` with these statistics.
    pub fn transform(&self, cohort: &SnapshotCohort) -> Result<SnapshotCohort> {
        let features = expanded_features(&cohort.schema, &self.levels);
        let position: BTreeMap<&str, usize> = features
            .iter()
            .enumerate()
            .map(|(j, f)| (f.name.as_str(), j))
            .collect();
        let mut plan = Vec::with_capacity(self.columns.len());
        let mut missing = Vec::new();
        for f in &self.columns {
            match position.get(f.name.as_str()) {
                Some(&j) => {
                    let scale = self.continuous.iter().find(|c| c.name == f.name);
                    plan.push((j, scale.map(|c| (c.mean, c.std))));
                }
                None => missing.push(f.name.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::SchemaMismatch {
                missing,
                extra: Vec::new(),
            });
        }
        let x = expanded_matrix(cohort, &self.levels)?;
        let mut out = cohort.clone();
        out.schema = self.schema();
        for (row, z) in out.rows.iter_mut().zip(x) {
            row.features = plan
                .iter()
                .map(|&(j, scale)| match scale {
                    Some((m, s)) => (z[j] - m) / s,
                    None => z[j],
                })
                .collect();
        }
        Ok(out)
    }
}

/// One-hot encodes with the first level dropped and z-scores age and the risk
/// scores. Without `stats`, they are fit on `cohort` itself and returned.
pub fn encode_and_normalize(
    cohort: &SnapshotCohort,
    stats: Option<&NormalizationStats>,
) -> Result<(SnapshotCohort, NormalizationStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => NormalizationStats::fit(cohort, None)?,
    };
    Ok((stats.transform(cohort)?, stats))
}
