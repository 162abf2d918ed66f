//! Synthetic longitudinal cohorts with known potential outcomes.
//!
//! Every generated subject is event-free through the snapshot month `tau`.
//! After `tau` the residual event time is exponential with hazard
//! `lambda0 * exp(beta_A * A_tau + beta_age * age_z + s * beta_U * sum_k U_k)`
//! where `age_z` is standardized age, `U_k` are latent standard normals and
//! `s` is the confounder strength. Treatment `A_tau` is logistic in the same
//! covariates. Times are rounded up to whole months, randomly censored, and
//! administratively censored at the horizon.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{
    Formulation, RiskScores, StaticCovariates, SubgroupLabels, SubjectRecord, MAX_MONTHS,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    pub levels: Vec<String>,
    pub probs: Vec<f64>,
}

impl CategoricalSpec {
    pub fn new(levels: &[&str], probs: &[f64]) -> Self {
        CategoricalSpec {
            levels: levels.iter().map(|s| s.to_string()).collect(),
            probs: probs.to_vec(),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.levels.is_empty()
            || self.levels.len() != self.probs.len()
            || self.probs.iter().any(|p| !(*p >= 0.0))
            || (self.probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "{name}: levels and probabilities must match and sum to 1"
            )));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut impl Rng) -> String {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (level, p) in self.levels.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return level.clone();
            }
        }
        self.levels.last().cloned().unwrap_or_default()
    }
}

/// How the five risk-score columns are filled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskScoreMode {
    /// Score `k` is the 12-month event probability driven by latent `U_k`,
    /// perturbed on the logit scale by normal noise of this sd each month.
    /// Slots beyond the latent count hold uniform noise.
    Proxy { noise: f64 },
    /// Every score is uniform noise, unrelated to the outcome.
    Noise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpConfig {
    pub n: usize,
    pub snapshot_tau: u32,
    /// Administrative censoring on the residual scale, also the RMET horizon.
    pub horizon: u32,
    pub seed: u64,
    /// Used to turn the drawn adherence into coverage days.
    pub threshold_days: u8,
    pub age_mean: f64,
    pub age_sd: f64,
    pub race: CategoricalSpec,
    pub gender: CategoricalSpec,
    pub education: CategoricalSpec,
    /// Number of latent confounders, at most 5.
    pub n_latent: usize,
    pub confounder_strength: f64,
    pub propensity_intercept: f64,
    pub propensity_age: f64,
    pub propensity_latent: f64,
    /// Monthly hazard at baseline covariates.
    pub baseline_hazard: f64,
    pub beta_treatment: f64,
    pub beta_age: f64,
    pub beta_latent: f64,
    /// Monthly rate of the independent exponential censoring; 0 disables it.
    pub censoring_rate: f64,
    pub risk_scores: RiskScoreMode,
    /// Draw pre-snapshot adherence from the treatment propensity instead of
    /// a fair coin.
    pub history_confounded: bool,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n: 2000,
            snapshot_tau: 3,
            horizon: 36,
            seed: 0,
            threshold_days: 10,
            age_mean: 40.0,
            age_sd: 12.0,
            race: CategoricalSpec::new(&["black", "other", "white"], &[0.4, 0.1, 0.5]),
            gender: CategoricalSpec::new(&["female", "male"], &[0.45, 0.55]),
            education: CategoricalSpec::new(&["college", "high-school", "none"], &[0.2, 0.5, 0.3]),
            n_latent: 2,
            confounder_strength: 1.0,
            propensity_intercept: 0.0,
            propensity_age: 0.5,
            propensity_latent: 0.5,
            baseline_hazard: 0.04,
            beta_treatment: 0.7,
            beta_age: 0.5,
            beta_latent: 0.4,
            censoring_rate: 0.005,
            risk_scores: RiskScoreMode::Proxy { noise: 0.0 },
            history_confounded: false,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n == 0 {
            return bad("n must be positive");
        }
        if self.snapshot_tau == 0 || self.horizon == 0 {
            return bad("snapshot_tau and horizon must be positive");
        }
        if self.snapshot_tau + self.horizon > MAX_MONTHS {
            return bad("snapshot_tau + horizon must not exceed 96 months");
        }
        if self.threshold_days >= 31 {
            return bad("threshold_days must be below 31");
        }
        if !(self.baseline_hazard > 0.0) || !(self.censoring_rate >= 0.0) {
            return bad("baseline hazard must be positive and censoring rate non-negative");
        }
        if !(self.age_sd > 0.0) {
            return bad("age_sd must be positive");
        }
        if self.n_latent > 5 {
            return bad("at most 5 latent confounders");
        }
        let coefs = [
            self.age_mean,
            self.confounder_strength,
            self.propensity_intercept,
            self.propensity_age,
            self.propensity_latent,
            self.beta_treatment,
            self.beta_age,
            self.beta_latent,
        ];
        if coefs.iter().any(|c| !c.is_finite()) {
            return bad("coefficients must be finite");
        }
        if let RiskScoreMode::Proxy { noise } = self.risk_scores {
            if !(noise >= 0.0) {
                return bad("proxy noise must be non-negative");
            }
        }
        self.race.validate("race")?;
        self.gender.validate("gender")?;
        self.education.validate("education")
    }

    fn age_z(&self, age: f64) -> f64 {
        (age - self.age_mean) / self.age_sd
    }

    fn latent_sum(&self, u: &[f64]) -> f64 {
        u.iter().sum::<f64>()
    }

    pub fn propensity(&self, age: f64, u: &[f64]) -> f64 {
        let eta = self.propensity_intercept
            + self.propensity_age * self.age_z(age)
            + self.confounder_strength * self.propensity_latent * self.latent_sum(u);
        1.0 / (1.0 + (-eta).exp())
    }

    /// Monthly hazard under treatment `a`.
    pub fn hazard(&self, treated: bool, age: f64, u: &[f64]) -> f64 {
        let eta = self.beta_treatment * treated as u8 as f64
            + self.beta_age * self.age_z(age)
            + self.confounder_strength * self.beta_latent * self.latent_sum(u);
        self.baseline_hazard * eta.exp()
    }
}

/// `E[min(ceil(T), M)]` for `T` exponential with rate `lambda`, i.e. the sum
/// of `exp(-lambda k)` for `k` in `0..M`.
pub fn monthly_rmet(lambda: f64, horizon: u32) -> f64 {
    -(-lambda * horizon as f64).exp_m1() / -(-lambda).exp_m1()
}

/// `E[min(T, M)]` for `T` exponential with rate `lambda`.
pub fn continuous_rmet(lambda: f64, horizon: f64) -> f64 {
    -(-lambda * horizon).exp_m1() / lambda
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub id: String,
    pub propensity: f64,
    pub treated: bool,
    /// True RMET on the monthly scale under treatment and under control.
    pub rmet_treated: f64,
    pub rmet_control: f64,
}

impl SubjectTruth {
    pub fn ite(&self) -> f64 {
        self.rmet_treated - self.rmet_control
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub records: Vec<SubjectRecord>,
    pub truth: Vec<SubjectTruth>,
}

const DRUGS: [(&str, Formulation); 5] = [
    ("aripiprazole", Formulation::Injectable),
    ("paliperidone", Formulation::Injectable),
    ("olanzapine", Formulation::NonInjectable),
    ("quetiapine", Formulation::NonInjectable),
    ("risperidone", Formulation::NonInjectable),
];

fn coverage_for(non_adherent: bool, threshold: u8, rng: &mut impl Rng) -> u8 {
    if non_adherent {
        rng.random_range(0..=threshold)
    } else {
        rng.random_range(threshold + 1..=31)
    }
}

fn risk_scores(config: &DgpConfig, u: &[f64], rng: &mut impl Rng) -> RiskScores {
    let mut out = [0.0; 5];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = match config.risk_scores {
            RiskScoreMode::Proxy { noise } if k < u.len() => {
                let rate = config.baseline_hazard
                    * (config.confounder_strength * config.beta_latent * u[k]).exp();
                let p: f64 = -(-12.0 * rate).exp_m1();
                if noise > 0.0 {
                    let eps: f64 = StandardNormal.sample(rng);
                    let logit = (p / (1.0 - p)).ln() + noise * eps;
                    1.0 / (1.0 + (-logit).exp())
                } else {
                    p
                }
            }
            _ => rng.random::<f64>(),
        };
    }
    out
}

/// Draws a dataset and the per-subject truth.
pub fn generate(config: &DgpConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let tau = config.snapshot_tau;
    let m = config.horizon;
    let width = config.n.to_string().len();
    let mut records = Vec::with_capacity(config.n);
    let mut truth = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let id = format!("syn{i:0width$}");
        let age = config.age_mean + config.age_sd * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        let u: Vec<f64> = (0..config.n_latent)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let statics = StaticCovariates {
            age,
            race: config.race.draw(&mut rng),
            gender: config.gender.draw(&mut rng),
            education: config.education.draw(&mut rng),
        };
        let drug = rng.random_range(0..DRUGS.len() + 1);
        let subgroups = match DRUGS.get(drug) {
            Some(&(name, formulation)) => SubgroupLabels {
                formulation,
                drug_name: Some(name.to_string()),
            },
            None => SubgroupLabels::default(),
        };

        let e = config.propensity(age, &u);
        let treated = rng.random_bool(e);
        let lambda = config.hazard(treated, age, &u);
        let event_time: f64 = Exp1.sample(&mut rng);
        let event_month = ((event_time / lambda).ceil() as u64).max(1);
        let censor_month = if config.censoring_rate > 0.0 {
            let c: f64 = Exp1.sample(&mut rng);
            ((c / config.censoring_rate).ceil() as u64).max(1)
        } else {
            u64::MAX
        };
        let limit = censor_month.min(m as u64);
        let (residual, event) = if event_month <= limit {
            (event_month as u32, true)
        } else {
            (limit as u32, false)
        };
        let observed_time = tau + residual;

        let history_p = if config.history_confounded { e } else { 0.5 };
        let mut adherence = Vec::with_capacity(observed_time as usize);
        for month in 1..=observed_time {
            let a = match month.cmp(&tau) {
                std::cmp::Ordering::Less => rng.random_bool(history_p),
                std::cmp::Ordering::Equal => treated,
                std::cmp::Ordering::Greater => rng.random_bool(e),
            };
            adherence.push(a as u8);
        }
        let coverage_days = adherence
            .iter()
            .map(|&a| coverage_for(a == 1, config.threshold_days, &mut rng))
            .collect();
        let risk = (0..observed_time)
            .map(|_| Some(risk_scores(config, &u, &mut rng)))
            .collect();

        truth.push(SubjectTruth {
            id: id.clone(),
            propensity: e,
            treated,
            rmet_treated: monthly_rmet(config.hazard(true, age, &u), m),
            rmet_control: monthly_rmet(config.hazard(false, age, &u), m),
        });
        records.push(SubjectRecord {
            id,
            observed_time,
            event,
            adherence,
            coverage_days,
            statics,
            risk_scores: risk,
            subgroups,
        });
    }
    Ok(SyntheticData { records, truth })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleScale {
    /// Event times rounded up to whole months, as the pipeline sees them.
    Monthly,
    Continuous,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub ate: f64,
    /// Monte-Carlo standard error of `ate`.
    pub se: f64,
    pub n_mc: usize,
}

/// Monte-Carlo ATE on the monthly scale: the mean of
/// `min(T(1), M) - min(T(0), M)` over fresh covariate draws, with both
/// potential times sharing one exponential draw.
pub fn oracle_ate(config: &DgpConfig, n_mc: usize) -> Result<OracleEstimate> {
    oracle_ate_with(config, n_mc, OracleScale::Monthly)
}

pub fn oracle_ate_with(config: &DgpConfig, n_mc: usize, scale: OracleScale) -> Result<OracleEstimate> {
    config.validate()?;
    if n_mc < 100_000 {
        return Err(Error::Config("oracle needs n_mc >= 100000".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let m = config.horizon as f64;
    let mut u = vec![0.0; config.n_latent];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_mc {
        let age = config.age_mean + config.age_sd * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        for uk in u.iter_mut() {
            *uk = StandardNormal.sample(&mut rng);
        }
        let e: f64 = Exp1.sample(&mut rng);
        let time = |a: bool| {
            let t = e / config.hazard(a, age, &u);
            match scale {
                OracleScale::Monthly => t.ceil().max(1.0).min(m),
                OracleScale::Continuous => t.min(m),
            }
        };
        let d = time(true) - time(false);
        sum += d;
        sum_sq += d * d;
    }
    let n = n_mc as f64;
    let ate = sum / n;
    let var = (sum_sq / n - ate * ate).max(0.0) * n / (n - 1.0);
    Ok(OracleEstimate {
        ate,
        se: (var / n).sqrt(),
        n_mc,
    })
}
