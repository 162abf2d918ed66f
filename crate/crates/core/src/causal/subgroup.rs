use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{mean, sample_std, EffectEstimate, Formulation, SnapshotCohort};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let bins = bins.max(1);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|b| lo + width * b as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram { edges, counts }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSummary {
    /// `all`, `formulation` or `drug_name`.
    pub label_kind: String,
    pub label: String,
    pub count: usize,
    /// Mean ITE within the subgroup (the subgroup ATE).
    pub mean_ite: f64,
    pub std_ite: f64,
    pub histogram: Histogram,
}

/// ITE distribution per medication formulation and per drug name. Labels
/// carried by no row are left out. Histograms share one set of edges.
pub fn subgroup_ite_report(
    effects: &EffectEstimate,
    cohort: &SnapshotCohort,
    bins: usize,
) -> Result<Vec<SubgroupSummary>> {
    if effects.ites.len() != cohort.len() {
        return Err(Error::InvalidInput(format!(
            "{} ITEs for a cohort of {}",
            effects.ites.len(),
            cohort.len()
        )));
    }
    if cohort.is_empty() {
        return Ok(Vec::new());
    }
    let lo = effects.ites.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = effects.ites.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut groups: BTreeMap<(u8, String), Vec<f64>> = BTreeMap::new();
    groups.insert((0, "all".into()), effects.ites.clone());
    for (row, &ite) in cohort.rows.iter().zip(&effects.ites) {
        groups
            .entry((1, row.subgroups.formulation.to_string()))
            .or_default()
            .push(ite);
        if let Some(drug) = &row.subgroups.drug_name {
            groups.entry((2, drug.clone())).or_default().push(ite);
        }
    }
    let formulation_rank = |label: &str| {
        Formulation::parse(label).map(|f| f as u8).unwrap_or(u8::MAX)
    };
    let mut out: Vec<SubgroupSummary> = groups
        .into_iter()
        .map(|((kind, label), ites)| SubgroupSummary {
            label_kind: ["all", "formulation", "drug_name"][kind as usize].to_string(),
            count: ites.len(),
            mean_ite: mean(&ites),
            std_ite: sample_std(&ites),
            histogram: Histogram::new(&ites, lo, hi, bins),
            label,
        })
        .collect();
    out.sort_by_key(|s| {
        let kind = ["all", "formulation", "drug_name"]
            .iter()
            .position(|k| *k == s.label_kind)
            .unwrap_or(3);
        let rank = if kind == 1 { formulation_rank(&s.label) } else { 0 };
        (kind, rank, s.label.clone())
    });
    Ok(out)
}
