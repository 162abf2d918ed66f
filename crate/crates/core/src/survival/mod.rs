//! Survival-function estimators behind one fit/predict interface.

mod cox;
mod km;
mod rsf;

use std::fmt;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub use cox::{
    cox_partial_loglik_and_gradient, coxph_fit, coxph_fit_with, CoxFitReport, CoxModel,
    DEFAULT_GRADIENT_TOL, DEFAULT_MAX_ITER,
};
pub use km::{censoring_km_fit, km_fit};
pub use rsf::{nelson_aalen_survival, rsf_fit, LeafEstimator, RandomSurvivalForest, RsfHyperparams};

use crate::domain::{FeatureSchema, SurvivalCurve};
use crate::error::{Error, Result};

/// Which estimator to fit, with its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    KaplanMeier,
    CoxPh { penalizer: f64 },
    RandomSurvivalForest(RsfHyperparams),
}

impl ModelSpec {
    /// Short family name used in report tables.
    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::KaplanMeier => "kaplan_meier",
            ModelSpec::CoxPh { .. } => "cox_ph",
            ModelSpec::RandomSurvivalForest(_) => "random_survival_forest",
        }
    }

    /// Fits the estimator. A Cox fit that does not converge is an error here.
    pub fn fit(
        &self,
        x: ArrayView2<f64>,
        times: &[f64],
        events: &[bool],
        schema: &FeatureSchema,
    ) -> Result<FittedSurvivalModel> {
        if x.ncols() != schema.len() {
            return Err(Error::InvalidInput(format!(
                "{} feature columns for a schema of {}",
                x.ncols(),
                schema.len()
            )));
        }
        let fitted = match self {
            ModelSpec::KaplanMeier => Fitted::KaplanMeier(km_fit(times, events)?),
            ModelSpec::CoxPh { penalizer } => {
                let (model, report) = coxph_fit(x, times, events, *penalizer).map_err(|e| {
                    match e {
                        Error::Separation { feature } => Error::Separation {
                            feature: feature
                                .strip_prefix('#')
                                .and_then(|j| j.parse::<usize>().ok())
                                .and_then(|j| schema.features.get(j))
                                .map(|f| f.name.clone())
                                .unwrap_or(feature),
                        },
                        other => other,
                    }
                })?;
                if !report.converged {
                    return Err(Error::NotConverged(
                        report.diagnostic.clone().unwrap_or_default(),
                    ));
                }
                Fitted::Cox(model, report)
            }
            ModelSpec::RandomSurvivalForest(params) => {
                Fitted::Forest(rsf_fit(x, times, events, params)?)
            }
        };
        Ok(FittedSurvivalModel {
            schema: schema.clone(),
            fitted,
        })
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::KaplanMeier => f.write_str("kaplan_meier"),
            ModelSpec::CoxPh { penalizer } => write!(f, "cox_ph(penalizer={penalizer})"),
            ModelSpec::RandomSurvivalForest(p) => write!(
                f,
                "random_survival_forest(n_trees={},min_samples_split={},min_samples_leaf={})",
                p.n_trees, p.min_samples_split, p.min_samples_leaf
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Fitted {
    KaplanMeier(SurvivalCurve),
    Cox(CoxModel, CoxFitReport),
    Forest(RandomSurvivalForest),
}

/// A fitted estimator together with the feature schema it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedSurvivalModel {
    schema: FeatureSchema,
    fitted: Fitted,
}

impl FittedSurvivalModel {
    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn kind(&self) -> &'static str {
        match self.fitted {
            Fitted::KaplanMeier(_) => "kaplan_meier",
            Fitted::Cox(..) => "cox_ph",
            Fitted::Forest(_) => "random_survival_forest",
        }
    }

    pub fn cox(&self) -> Option<(&CoxModel, &CoxFitReport)> {
        match &self.fitted {
            Fitted::Cox(m, r) => Some((m, r)),
            _ => None,
        }
    }

    pub fn forest(&self) -> Option<&RandomSurvivalForest> {
        match &self.fitted {
            Fitted::Forest(f) => Some(f),
            _ => None,
        }
    }

    /// Predicted curve for a feature vector laid out in the training schema.
    pub fn predict(&self, z: &[f64]) -> Result<SurvivalCurve> {
        if z.len() != self.schema.len() {
            return Err(Error::InvalidInput(format!(
                "feature vector has {} entries, model expects {}",
                z.len(),
                self.schema.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(match &self.fitted {
            Fitted::KaplanMeier(curve) => curve.clone(),
            Fitted::Cox(model, _) => model.predict(z),
            Fitted::Forest(forest) => forest.predict(z),
        })
    }
}

/// Predicts after checking that `schema` names exactly the model's features.
pub fn predict_survival(
    model: &FittedSurvivalModel,
    schema: &FeatureSchema,
    z: &[f64],
) -> Result<SurvivalCurve> {
    model.schema.check_matches(schema)?;
    model.predict(z)
}
