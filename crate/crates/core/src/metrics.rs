//! Evaluation of survival predictions and of binary risk scores.
//!
//! The censoring-aware metrics use inverse probability of censoring weights
//! taken from a Kaplan-Meier fit of the censoring distribution.

use serde::{Deserialize, Serialize};

use crate::domain::SurvivalCurve;
use crate::error::{Error, Result};
use crate::survival::censoring_km_fit;

fn check_lengths(curves: &[SurvivalCurve], times: &[f64], events: &[bool]) -> Result<()> {
    if curves.len() != times.len() || times.len() != events.len() {
        return Err(Error::InvalidInput(format!(
            "{} curves, {} times, {} event flags",
            curves.len(),
            times.len(),
            events.len()
        )));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("times"));
    }
    Ok(())
}

/// Time-dependent concordance (Antolini). A pair `(i, j)` is comparable when
/// `i` has an event and `T_i < T_j`; it is concordant when
/// `S_i(T_i) < S_j(T_i)`. Ties in predicted survival count one half.
pub fn concordance_td(curves: &[SurvivalCurve], times: &[f64], events: &[bool]) -> Result<f64> {
    check_lengths(curves, times, events)?;
    // half-units so the result is a single exact division
    let (mut score, mut pairs) = (0u64, 0u64);
    for i in (0..times.len()).filter(|&i| events[i]) {
        let si = curves[i].at(times[i]);
        for j in 0..times.len() {
            if times[i] < times[j] {
                let sj = curves[j].at(times[i]);
                pairs += 1;
                score += if si < sj {
                    2
                } else if si == sj {
                    1
                } else {
                    0
                };
            }
        }
    }
    if pairs == 0 {
        return Err(Error::DegenerateEvaluation("no comparable pairs".into()));
    }
    Ok(score as f64 / (2 * pairs) as f64)
}

/// IPCW Brier score at each grid time. Subjects with an event by `t` are
/// weighted `1/G(T_i-)`, subjects still at risk `1/G(t)`, and subjects
/// censored before `t` contribute nothing. The mean is over all subjects.
pub fn brier_curve(
    curves: &[SurvivalCurve],
    times: &[f64],
    events: &[bool],
    grid: &[f64],
    censor_curve: &SurvivalCurve,
) -> Result<Vec<f64>> {
    check_lengths(curves, times, events)?;
    if times.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = times.len() as f64;
    grid.iter()
        .map(|&t| {
            let g_t = censor_curve.at(t);
            let mut total = 0.0;
            for i in 0..times.len() {
                let s = curves[i].at(t);
                if times[i] > t {
                    if g_t <= 0.0 {
                        return Err(Error::CensoringSupportExhausted(t));
                    }
                    total += (1.0 - s) * (1.0 - s) / g_t;
                } else if events[i] {
                    let g = censor_curve.before(times[i]);
                    if g <= 0.0 {
                        return Err(Error::CensoringSupportExhausted(times[i]));
                    }
                    total += s * s / g;
                }
            }
            Ok(total / n)
        })
        .collect()
}

/// Trapezoidal integral of a Brier series divided by the span of its grid.
pub fn integrated_brier(bs: &[f64], grid: &[f64]) -> Result<f64> {
    if bs.len() != grid.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores on a grid of {}",
            bs.len(),
            grid.len()
        )));
    }
    if grid.len() < 2 {
        return Err(Error::DegenerateEvaluation(
            "integrated Brier score needs at least two grid points".into(),
        ));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("grid not strictly increasing".into()));
    }
    let area: f64 = grid
        .windows(2)
        .zip(bs.windows(2))
        .map(|(g, b)| (g[1] - g[0]) * (b[0] + b[1]) / 2.0)
        .sum();
    Ok(area / (grid[grid.len() - 1] - grid[0]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucSeries {
    /// Grid times that had at least one case and one control.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub mean: f64,
}

/// Cumulative/dynamic AUC with Uno's weights. At time `t` the cases are
/// subjects with an event at or before `t` and the controls those with
/// `T > t`. Each case carries weight `1/G(T_i-)`; risk is `1 - S(t)`.
pub fn auc_td(
    curves: &[SurvivalCurve],
    times: &[f64],
    events: &[bool],
    grid: &[f64],
) -> Result<AucSeries> {
    check_lengths(curves, times, events)?;
    let censor = censoring_km_fit(times, events)?;
    let mut out_times = Vec::new();
    let mut values = Vec::new();
    for &t in grid {
        let risk: Vec<f64> = curves.iter().map(|c| 1.0 - c.at(t)).collect();
        let controls: Vec<usize> = (0..times.len()).filter(|&j| times[j] > t).collect();
        let (mut num, mut den) = (0.0, 0.0);
        let mut any_case = false;
        for i in (0..times.len()).filter(|&i| events[i] && times[i] <= t) {
            any_case = true;
            let g = censor.before(times[i]);
            if g <= 0.0 {
                return Err(Error::CensoringSupportExhausted(times[i]));
            }
            let w = 1.0 / g;
            let mut half_units = 0u64;
            for &j in &controls {
                half_units += if risk[i] > risk[j] {
                    2
                } else if risk[i] == risk[j] {
                    1
                } else {
                    0
                };
            }
            num += w * (half_units as f64 / 2.0);
            den += w * controls.len() as f64;
        }
        if any_case && !controls.is_empty() {
            out_times.push(t);
            values.push(num / den);
        }
    }
    if values.is_empty() {
        return Err(Error::DegenerateEvaluation(
            "no grid time has both a case and a control".into(),
        ));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(AucSeries {
        times: out_times,
        values,
        mean,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub auc: f64,
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`,
    /// one point per distinct score, highest threshold first.
    pub points: Vec<(f64, f64)>,
}

/// ROC curve and Mann-Whitney AUC of scores in `[0, 1]` against binary
/// labels. Tied scores across classes get half credit.
pub fn roc_auc_binary(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::InvalidInput("scores must lie in [0, 1]".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateEvaluation(
            "ROC needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut half_units = 0u64;
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let (mut p, mut q) = (0u64, 0u64);
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                p += 1;
            } else {
                q += 1;
            }
            k += 1;
        }
        // positives in this group beat every negative not yet passed
        half_units += 2 * p * (n_neg - fp - q) + p * q;
        tp += p;
        fp += q;
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Ok(RocCurve {
        auc: half_units as f64 / (2 * n_pos * n_neg) as f64,
        points,
    })
}

/// Distinct event times of the evaluation set, cut off at the first time the
/// censoring survival reaches zero.
pub fn evaluation_grid(times: &[f64], events: &[bool], censor_curve: &SurvivalCurve) -> Vec<f64> {
    let mut grid: Vec<f64> = times
        .iter()
        .zip(events)
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let keep = grid.partition_point(|&t| censor_curve.at(t) > 0.0);
    grid.truncate(keep);
    grid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub c_td: f64,
    pub ibs: f64,
    pub auc_td_mean: f64,
    pub auc_td: Vec<f64>,
    pub auc_times: Vec<f64>,
    pub grid: Vec<f64>,
    pub brier: Vec<f64>,
}

/// All three survival metrics on one evaluation set.
pub fn evaluate(curves: &[SurvivalCurve], times: &[f64], events: &[bool]) -> Result<MetricReport> {
    check_lengths(curves, times, events)?;
    let censor = censoring_km_fit(times, events)?;
    let grid = evaluation_grid(times, events, &censor);
    let c_td = concordance_td(curves, times, events)?;
    let brier = brier_curve(curves, times, events, &grid, &censor)?;
    let ibs = integrated_brier(&brier, &grid)?;
    let auc = auc_td(curves, times, events, &grid)?;
    Ok(MetricReport {
        c_td,
        ibs,
        auc_td_mean: auc.mean,
        auc_td: auc.values,
        auc_times: auc.times,
        grid,
        brier,
    })
}
