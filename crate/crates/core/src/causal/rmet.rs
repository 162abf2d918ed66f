use serde::{Deserialize, Serialize};

use crate::domain::SurvivalCurve;
use crate::error::{Error, Result};

/// Upper limit `M` of the RMET integral, in months.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonConfig {
    pub months: u32,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        HorizonConfig { months: 96 }
    }
}

impl HorizonConfig {
    pub fn new(months: u32) -> Result<Self> {
        if months < 1 {
            return Err(Error::Config("horizon must be at least one month".into()));
        }
        Ok(HorizonConfig { months })
    }

    pub fn as_f64(self) -> f64 {
        self.months as f64
    }
}

/// Restricted mean event time: the exact area under the step curve on `[0, horizon]`.
pub fn rmet(curve: &SurvivalCurve, horizon: f64) -> f64 {
    let grid = curve.grid();
    let values = curve.values();
    let mut area = 0.0;
    for k in 0..grid.len() {
        if grid[k] >= horizon {
            break;
        }
        let end = grid.get(k + 1).map_or(horizon, |&g| g.min(horizon));
        area += values[k] * (end - grid[k]);
    }
    area
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn certain_survival_fills_the_horizon() {
        assert_eq!(rmet(&SurvivalCurve::certain(), 96.0), 96.0);
        assert_eq!(rmet(&SurvivalCurve::certain(), 10.0), 10.0);
    }

    #[test]
    fn hand_step_area() {
        let c = SurvivalCurve::new(vec![0.0, 2.0, 4.0], vec![1.0, 0.5, 0.0]).unwrap();
        assert_eq!(rmet(&c, 96.0), 3.0);
        assert_eq!(rmet(&c, 3.0), 2.5);
        assert_eq!(rmet(&c, 1.0), 1.0);
    }

    #[test]
    fn horizon_must_be_positive() {
        assert!(HorizonConfig::new(0).is_err());
        assert_eq!(HorizonConfig::default().months, 96);
    }

    fn curve_strategy() -> impl Strategy<Value = SurvivalCurve> {
        prop::collection::vec((0.1f64..10.0, 0.0f64..1.0), 0..12).prop_map(|steps| {
            let mut grid = vec![0.0];
            let mut values = vec![1.0];
            for (dt, f) in steps {
                grid.push(grid.last().unwrap() + dt);
                values.push(values.last().unwrap() * f);
            }
            SurvivalCurve::new(grid, values).unwrap()
        })
    }

    proptest! {
        #[test]
        fn rmet_is_bounded_by_the_horizon(c in curve_strategy(), m in 1.0f64..120.0) {
            let r = rmet(&c, m);
            prop_assert!((0.0..=m).contains(&r));
        }

        #[test]
        fn dominating_curve_has_larger_rmet(c in curve_strategy(), m in 1.0f64..120.0, lift in 0.0f64..1.0) {
            // pointwise max(S, lift) dominates S
            let values: Vec<f64> = c.values().iter().map(|v| v.max(lift)).collect();
            let upper = SurvivalCurve::new(c.grid().to_vec(), values).unwrap();
            prop_assert!(rmet(&upper, m) >= rmet(&c, m));
        }
    }
}
