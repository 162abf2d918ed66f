use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::SnapshotCohort;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumCounts {
    pub race: String,
    pub gender: String,
    pub education: String,
    pub treated: usize,
    pub control: usize,
}

impl StratumCounts {
    pub fn one_armed(&self) -> bool {
        self.treated == 0 || self.control == 0
    }
}

/// The checkable part of the identification assumptions: positivity within
/// every static-covariate stratum, arm sizes and event counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub n_treated: usize,
    pub n_control: usize,
    pub events_treated: usize,
    pub events_control: usize,
    /// Set when either arm is empty.
    pub positivity_violated: bool,
    pub strata: Vec<StratumCounts>,
    pub one_armed_strata: Vec<StratumCounts>,
}

pub fn assumption_checks(cohort: &SnapshotCohort) -> AssumptionReport {
    let mut strata: BTreeMap<(String, String, String), (usize, usize)> = BTreeMap::new();
    let (mut n_treated, mut n_control, mut events_treated, mut events_control) = (0, 0, 0, 0);
    for row in &cohort.rows {
        let entry = strata.entry(row.statics.stratum()).or_default();
        if row.treated {
            entry.0 += 1;
            n_treated += 1;
            events_treated += row.event as usize;
        } else {
            entry.1 += 1;
            n_control += 1;
            events_control += row.event as usize;
        }
    }
    let strata: Vec<StratumCounts> = strata
        .into_iter()
        .map(|((race, gender, education), (treated, control))| StratumCounts {
            race,
            gender,
            education,
            treated,
            control,
        })
        .collect();
    let one_armed_strata = strata.iter().filter(|s| s.one_armed()).cloned().collect();
    AssumptionReport {
        n_treated,
        n_control,
        events_treated,
        events_control,
        positivity_violated: n_treated == 0 || n_control == 0,
        strata,
        one_armed_strata,
    }
}
