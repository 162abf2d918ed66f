use crate::domain::SurvivalCurve;
use crate::error::{Error, Result};

pub(crate) fn check_samples(times: &[f64], events: &[bool]) -> Result<()> {
    if times.len() != events.len() {
        return Err(Error::InvalidInput(format!(
            "{} times but {} event flags",
            times.len(),
            events.len()
        )));
    }
    if times.is_empty() {
        return Err(Error::EmptySample);
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("times"));
    }
    if times.iter().any(|&t| t <= 0.0) {
        return Err(Error::InvalidInput("times must be positive".into()));
    }
    Ok(())
}

/// Kaplan-Meier product-limit estimate.
///
/// The returned curve has a grid point at 0 and at every distinct event
/// time; it is flat after the last one.
pub fn km_fit(times: &[f64], events: &[bool]) -> Result<SurvivalCurve> {
    check_samples(times, events)?;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut grid = vec![0.0];
    let mut values = vec![1.0];
    let mut at_risk = times.len();
    let mut surv = 1.0;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut deaths = 0;
        let mut leaving = 0;
        while i < order.len() && times[order[i]] == t {
            deaths += events[order[i]] as usize;
            leaving += 1;
            i += 1;
        }
        if deaths > 0 {
            surv *= (at_risk - deaths) as f64 / at_risk as f64;
            grid.push(t);
            values.push(surv);
        }
        at_risk -= leaving;
    }
    SurvivalCurve::new(grid, values)
}

/// Kaplan-Meier estimate of the censoring distribution `G(u)`: censorings
/// are treated as the events.
pub fn censoring_km_fit(times: &[f64], events: &[bool]) -> Result<SurvivalCurve> {
    let flipped: Vec<bool> = events.iter().map(|e| !e).collect();
    km_fit(times, &flipped)
}
