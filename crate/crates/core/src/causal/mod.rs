//! Restricted mean event time and the meta-learners built on it.

mod assumptions;
mod learners;
mod matching;
mod rmet;
mod subgroup;

pub use assumptions::{assumption_checks, AssumptionReport, StratumCounts};
pub use learners::{
    estimate, s_learner, s_learner_ate, t_learner, t_learner_ate, unadjusted_km,
    unadjusted_km_ate,
};
pub use matching::{matched_neighbors, matching_ate, matching_estimate, MatchingConfig};
pub use rmet::{rmet, HorizonConfig};
pub use subgroup::{subgroup_ite_report, Histogram, SubgroupSummary};
