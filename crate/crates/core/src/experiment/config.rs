use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::causal::MatchingConfig;
use crate::cohort::PreprocessConfig;
use crate::domain::{EstimatorKind, MAX_MONTHS};
use crate::error::{Error, Result};
use crate::survival::{ModelSpec, RsfHyperparams};
use crate::synth::DgpConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSpec {
    /// Longitudinal CSV file.
    Csv { path: PathBuf },
    Synthetic(DgpConfig),
}

/// A model family and the hyperparameter values searched for it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelGrid {
    KaplanMeier,
    CoxPh {
        #[serde(default = "default_penalizers")]
        penalizers: Vec<f64>,
    },
    RandomSurvivalForest {
        #[serde(default = "default_n_trees")]
        n_trees: Vec<usize>,
        #[serde(default = "default_min_split")]
        min_samples_split: Vec<usize>,
        #[serde(default = "default_min_leaf")]
        min_samples_leaf: Vec<usize>,
        #[serde(default)]
        features_per_split: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
}

fn default_penalizers() -> Vec<f64> {
    vec![0.0, 0.01, 0.1, 0.5]
}

fn default_n_trees() -> Vec<usize> {
    vec![100]
}

fn default_min_split() -> Vec<usize> {
    vec![10]
}

fn default_min_leaf() -> Vec<usize> {
    vec![5]
}

impl ModelGrid {
    /// Name used in tables and file names.
    pub fn name(&self) -> &'static str {
        match self {
            ModelGrid::KaplanMeier => "kaplan_meier",
            ModelGrid::CoxPh { .. } => "cox_ph",
            ModelGrid::RandomSurvivalForest { .. } => "random_survival_forest",
        }
    }

    /// The full grid of the hyperparameter table: 100/250/500 trees, splits
    /// of 5/10/20 and leaves of 2/5/10.
    pub fn full_forest_grid() -> Self {
        ModelGrid::RandomSurvivalForest {
            n_trees: vec![100, 250, 500],
            min_samples_split: vec![5, 10, 20],
            min_samples_leaf: vec![2, 5, 10],
            features_per_split: None,
            seed: 0,
        }
    }

    /// Parses `kaplan_meier`, `cox_ph` or `random_survival_forest` (also
    /// `km`, `cox`, `rsf`) into the family's default grid.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "kaplan_meier" | "km" => Ok(ModelGrid::KaplanMeier),
            "cox_ph" | "cox" => Ok(ModelGrid::CoxPh {
                penalizers: default_penalizers(),
            }),
            "random_survival_forest" | "rsf" => Ok(ModelGrid::RandomSurvivalForest {
                n_trees: default_n_trees(),
                min_samples_split: default_min_split(),
                min_samples_leaf: default_min_leaf(),
                features_per_split: None,
                seed: 0,
            }),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }

    /// Candidate specs in grid order. Forest seeds are offset by `repeat`.
    pub fn candidates(&self, repeat: usize) -> Vec<ModelSpec> {
        match self {
            ModelGrid::KaplanMeier => vec![ModelSpec::KaplanMeier],
            ModelGrid::CoxPh { penalizers } => penalizers
                .iter()
                .map(|&penalizer| ModelSpec::CoxPh { penalizer })
                .collect(),
            ModelGrid::RandomSurvivalForest {
                n_trees,
                min_samples_split,
                min_samples_leaf,
                features_per_split,
                seed,
            } => {
                let mut out = Vec::new();
                for &t in n_trees {
                    for &s in min_samples_split {
                        for &l in min_samples_leaf.iter().filter(|&&l| l <= s) {
                            out.push(ModelSpec::RandomSurvivalForest(RsfHyperparams {
                                n_trees: t,
                                min_samples_split: s,
                                min_samples_leaf: l,
                                features_per_split: *features_per_split,
                                seed: seed.wrapping_add(repeat as u64),
                                ..RsfHyperparams::default()
                            }));
                        }
                    }
                }
                out
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let candidates = self.candidates(0);
        if candidates.is_empty() {
            return Err(Error::Config(format!("model grid {} is empty", self.name())));
        }
        for c in &candidates {
            match c {
                ModelSpec::CoxPh { penalizer } if !(*penalizer >= 0.0) => {
                    return Err(Error::Config("penalizers must be >= 0".into()))
                }
                ModelSpec::RandomSurvivalForest(p) => p.validate()?,
                _ => {}
            }
        }
        Ok(())
    }
}

/// Serializes estimators by their display names (`t_learner`, `matching_k5`).
mod estimator_names {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[EstimatorKind], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|e| e.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<EstimatorKind>, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        names
            .iter()
            .map(|n| n.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

pub fn default_estimators() -> Vec<EstimatorKind> {
    let mut out = vec![EstimatorKind::TLearner, EstimatorKind::SLearner];
    out.extend(
        MatchingConfig::DEFAULT_KS
            .iter()
            .map(|&k| EstimatorKind::Matching { k }),
    );
    out.push(EstimatorKind::UnadjustedKm);
    out
}

fn default_models() -> Vec<ModelGrid> {
    vec![
        ModelGrid::from_name("cox_ph").expect("known"),
        ModelGrid::from_name("random_survival_forest").expect("known"),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub input: InputSpec,
    pub preprocess: PreprocessConfig,
    pub models: Vec<ModelGrid>,
    #[serde(with = "estimator_names")]
    pub estimators: Vec<EstimatorKind>,
    /// RMET horizon in months.
    pub horizon: u32,
    pub out_dir: PathBuf,
    pub histogram_bins: usize,
    /// Monte-Carlo draws for the oracle ATE of a synthetic input; 0 skips it.
    pub oracle_mc: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            input: InputSpec::Synthetic(DgpConfig::default()),
            preprocess: PreprocessConfig::default(),
            models: default_models(),
            estimators: default_estimators(),
            horizon: 96,
            out_dir: PathBuf::from("out"),
            histogram_bins: 20,
            oracle_mc: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("at least one estimator is required".into()));
        }
        for m in &self.models {
            m.validate()?;
        }
        if self.horizon == 0 || self.horizon > MAX_MONTHS {
            return Err(Error::Config("horizon must lie in 1..=96 months".into()));
        }
        match &self.input {
            InputSpec::Csv { path } if !path.exists() => Err(Error::Config(format!(
                "input file {} does not exist",
                path.display()
            ))),
            InputSpec::Synthetic(dgp) => dgp.validate(),
            _ => Ok(()),
        }
    }
}
