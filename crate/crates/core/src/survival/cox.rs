//! Cox proportional hazards with the Breslow tie approximation, a ridge
//! penalty and a Newton solver with step halving.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::km::check_samples;
use crate::domain::SurvivalCurve;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_GRADIENT_TOL: f64 = 1e-7;
/// |beta_j| * sd(x_j) beyond this is treated as divergence (hazard ratio e^20 per SD).
const DIVERGENCE_LIMIT: f64 = 20.0;
/// Information about a coefficient collapsing below this fraction of its
/// value at beta = 0 signals a likelihood maximized only at infinity.
const INFORMATION_COLLAPSE: f64 = 1e-6;
const MAX_HALVINGS: usize = 40;
/// Relative size of a Newton gain treated as floating-point noise.
const ROUNDOFF_GAIN: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoxFitReport {
    pub coefficients: Vec<f64>,
    /// Penalized partial log-likelihood at the returned coefficients.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_max_norm: f64,
    pub penalizer: f64,
    /// Log-likelihood after each accepted Newton step, starting at beta = 0.
    pub log_likelihood_trace: Vec<f64>,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub coefficients: Vec<f64>,
    /// Distinct training event times.
    pub event_times: Vec<f64>,
    /// Breslow cumulative baseline hazard at each event time.
    pub cumulative_hazard: Vec<f64>,
}

impl CoxModel {
    pub fn linear_predictor(&self, z: &[f64]) -> f64 {
        self.coefficients.iter().zip(z).map(|(b, x)| b * x).sum()
    }

    /// `exp(-H0(u))`.
    pub fn baseline_survival(&self) -> SurvivalCurve {
        self.curve_for(0.0)
    }

    pub fn predict(&self, z: &[f64]) -> SurvivalCurve {
        self.curve_for(self.linear_predictor(z))
    }

    fn curve_for(&self, eta: f64) -> SurvivalCurve {
        let risk = eta.exp();
        let mut grid = Vec::with_capacity(self.event_times.len() + 1);
        let mut values = Vec::with_capacity(self.event_times.len() + 1);
        grid.push(0.0);
        values.push(1.0);
        let mut last = 1.0_f64;
        for (&t, &h) in self.event_times.iter().zip(&self.cumulative_hazard) {
            let s = if h == 0.0 { 1.0 } else { (-h * risk).exp() };
            last = last.min(if s.is_nan() { 0.0 } else { s });
            grid.push(t);
            values.push(last);
        }
        SurvivalCurve::new(grid, values).expect("cox curve is a valid step function")
    }
}

/// Times sorted descending, grouped by tie: `(time, members)`.
fn tie_groups_desc(times: &[f64]) -> Vec<(f64, Vec<usize>)> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]).then(a.cmp(&b)));
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some((t, members)) if *t == times[i] => members.push(i),
            _ => groups.push((times[i], vec![i])),
        }
    }
    groups
}

struct Evaluation {
    value: f64,
    gradient: DVector<f64>,
    /// Negative Hessian of the penalized log-likelihood.
    information: Option<DMatrix<f64>>,
}

fn check_inputs(x: ArrayView2<f64>, times: &[f64], events: &[bool]) -> Result<()> {
    if x.nrows() != times.len() || times.len() != events.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows, {} times, {} event flags",
            x.nrows(),
            times.len(),
            events.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("features"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("times"));
    }
    Ok(())
}

fn evaluate(
    x: ArrayView2<f64>,
    groups: &[(f64, Vec<usize>)],
    events: &[bool],
    beta: &[f64],
    penalizer: f64,
    with_hessian: bool,
) -> Evaluation {
    let p = beta.len();
    let eta: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect();
    let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shift = if shift.is_finite() { shift } else { 0.0 };

    let mut s0 = 0.0;
    let mut s1 = DVector::<f64>::zeros(p);
    let mut s2 = DMatrix::<f64>::zeros(p, p);
    let mut value = 0.0;
    let mut gradient = DVector::<f64>::zeros(p);
    let mut information = DMatrix::<f64>::zeros(p, p);

    for (_, members) in groups {
        for &i in members {
            let w = (eta[i] - shift).exp();
            s0 += w;
            let row = x.row(i);
            for a in 0..p {
                s1[a] += w * row[a];
                if with_hessian {
                    for b in 0..=a {
                        s2[(a, b)] += w * row[a] * row[b];
                    }
                }
            }
        }
        let deaths = members.iter().filter(|&&i| events[i]).count();
        if deaths == 0 {
            continue;
        }
        let d = deaths as f64;
        let log_s0 = s0.ln() + shift;
        for &i in members.iter().filter(|&&i| events[i]) {
            value += eta[i];
            let row = x.row(i);
            for a in 0..p {
                gradient[a] += row[a];
            }
        }
        value -= d * log_s0;
        for a in 0..p {
            gradient[a] -= d * s1[a] / s0;
        }
        if with_hessian {
            for a in 0..p {
                for b in 0..=a {
                    let v = d * (s2[(a, b)] / s0 - s1[a] * s1[b] / (s0 * s0));
                    information[(a, b)] += v;
                }
            }
        }
    }

    let norm2: f64 = beta.iter().map(|b| b * b).sum();
    value -= 0.5 * penalizer * norm2;
    for a in 0..p {
        gradient[a] -= penalizer * beta[a];
    }
    let information = with_hessian.then(|| {
        for a in 0..p {
            information[(a, a)] += penalizer;
            for b in 0..a {
                information[(b, a)] = information[(a, b)];
            }
        }
        information
    });
    Evaluation {
        value,
        gradient,
        information,
    }
}

/// Breslow partial log-likelihood minus `penalizer / 2 * |beta|^2`, and its gradient.
pub fn cox_partial_loglik_and_gradient(
    x: ArrayView2<f64>,
    times: &[f64],
    events: &[bool],
    beta: &[f64],
    penalizer: f64,
) -> Result<(f64, Vec<f64>)> {
    check_inputs(x, times, events)?;
    if beta.len() != x.ncols() {
        return Err(Error::InvalidInput(format!(
            "{} coefficients for {} features",
            beta.len(),
            x.ncols()
        )));
    }
    if !(penalizer >= 0.0) {
        return Err(Error::InvalidInput("penalizer must be >= 0".into()));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("coefficients"));
    }
    let groups = tie_groups_desc(times);
    let ev = evaluate(x, &groups, events, beta, penalizer, false);
    Ok((ev.value, ev.gradient.iter().copied().collect()))
}

fn column_sd(x: ArrayView2<f64>, j: usize) -> f64 {
    let n = x.nrows() as f64;
    let col = x.column(j);
    let m = col.sum() / n;
    (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Fits a Cox model by Newton's method.
///
/// A fit that fails to reach the gradient tolerance within `max_iter`
/// iterations is returned with `converged = false` and a diagnostic; callers
/// decide whether to accept it.
pub fn coxph_fit(
    x: ArrayView2<f64>,
    times: &[f64],
    events: &[bool],
    penalizer: f64,
) -> Result<(CoxModel, CoxFitReport)> {
    coxph_fit_with(x, times, events, penalizer, DEFAULT_MAX_ITER, DEFAULT_GRADIENT_TOL)
}

pub fn coxph_fit_with(
    x: ArrayView2<f64>,
    times: &[f64],
    events: &[bool],
    penalizer: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(CoxModel, CoxFitReport)> {
    check_samples(times, events)?;
    check_inputs(x, times, events)?;
    if !(penalizer >= 0.0) {
        return Err(Error::InvalidInput("penalizer must be >= 0".into()));
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::NoEvents);
    }
    let p = x.ncols();
    let groups = tie_groups_desc(times);
    let mut beta = vec![0.0; p];
    let mut current = evaluate(x, &groups, events, &beta, penalizer, true);
    let initial_information: Vec<f64> = {
        let info = current.information.as_ref().expect("hessian requested");
        (0..p).map(|j| info[(j, j)]).collect()
    };
    let mut trace = vec![current.value];
    let mut iterations = 0;
    let mut converged = max_norm(&current.gradient) < tol;
    let mut diagnostic = None;

    while !converged && iterations < max_iter {
        iterations += 1;
        let info = current.information.take().expect("hessian requested");
        let Some(chol) = info.cholesky() else {
            if penalizer == 0.0 {
                return Err(Error::SingularHessian);
            }
            diagnostic = Some("information matrix not positive definite".into());
            break;
        };
        let direction = chol.solve(&current.gradient);
        // Once the predicted gain sits below the rounding noise of the
        // log-likelihood, the line search can no longer tell steps apart.
        let decrement: f64 = current.gradient.iter().zip(direction.iter()).map(|(g, d)| g * d).sum();
        if decrement.abs() <= ROUNDOFF_GAIN * current.value.abs().max(1.0) {
            let candidate: Vec<f64> = beta.iter().zip(direction.iter()).map(|(b, d)| b + d).collect();
            let ev = evaluate(x, &groups, events, &candidate, penalizer, true);
            if ev.value.is_finite() && ev.value >= current.value {
                beta = candidate;
                current = ev;
                trace.push(current.value);
            }
            converged = true;
            break;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(direction.iter())
                .map(|(b, d)| b + step * d)
                .collect();
            let ev = evaluate(x, &groups, events, &candidate, penalizer, true);
            if ev.value.is_finite() && ev.value >= current.value {
                accepted = Some((candidate, ev));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, ev)) = accepted else {
            diagnostic = Some(format!(
                "step halving failed to increase the log-likelihood at iteration {iterations}"
            ));
            break;
        };
        let stalled = ev.value == current.value
            && candidate.iter().zip(&beta).all(|(a, b)| a == b);
        beta = candidate;
        current = ev;
        trace.push(current.value);
        converged = max_norm(&current.gradient) < tol;
        if stalled && !converged {
            diagnostic = Some("Newton steps stalled above the gradient tolerance".into());
            break;
        }
    }

    if penalizer == 0.0 {
        let final_information = evaluate(x, &groups, events, &beta, penalizer, true)
            .information
            .expect("hessian requested");
        for j in 0..p {
            let collapsed = final_information[(j, j)] < INFORMATION_COLLAPSE * initial_information[j];
            if collapsed || beta[j].abs() * column_sd(x, j) > DIVERGENCE_LIMIT {
                return Err(Error::Separation {
                    feature: format!("#{j}"),
                });
            }
        }
    }
    if !converged && diagnostic.is_none() {
        diagnostic = Some(format!(
            "no convergence after {iterations} iterations (gradient max-norm {:.3e})",
            max_norm(&current.gradient)
        ));
    }
    if let Some(msg) = &diagnostic {
        log::warn!("cox fit: {msg}");
    }

    let model = CoxModel {
        coefficients: beta.clone(),
        ..breslow_baseline(x, times, events, &beta)
    };
    let report = CoxFitReport {
        coefficients: beta,
        log_likelihood: current.value,
        iterations,
        converged,
        gradient_max_norm: max_norm(&current.gradient),
        penalizer,
        log_likelihood_trace: trace,
        diagnostic,
    };
    Ok((model, report))
}

fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Breslow estimator of the cumulative baseline hazard at the distinct event times.
fn breslow_baseline(x: ArrayView2<f64>, times: &[f64], events: &[bool], beta: &[f64]) -> CoxModel {
    let groups = tie_groups_desc(times);
    let risk: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>().exp())
        .collect();
    let mut risk_sum = 0.0;
    let mut increments = Vec::new();
    for (t, members) in &groups {
        risk_sum += members.iter().map(|&i| risk[i]).sum::<f64>();
        let d = members.iter().filter(|&&i| events[i]).count();
        if d > 0 {
            increments.push((*t, d as f64 / risk_sum));
        }
    }
    increments.reverse();
    let mut h = 0.0;
    let (event_times, cumulative_hazard) = increments
        .into_iter()
        .map(|(t, dh)| {
            h += dh;
            (t, h)
        })
        .unzip();
    CoxModel {
        coefficients: beta.to_vec(),
        event_times,
        cumulative_hazard,
    }
}
