//! Trace measures for the multilinear Hardy inequality
//! `||I f||_{L^2(mu)}^2 <= C ||f||_{L^2(pi)}^2`.
//!
//! Computes the best constant, the necessary charge-energy conditions, the
//! single-box sufficient test, lower bounds for the dyadic maximal constant,
//! and a randomized search for measures separating those quantities.

mod conditions;
mod hardy;
mod maximal;
mod search;

pub use conditions::{
    charge_energy_report, single_box_test, ConditionOptions, ConditionReport, SetRow,
    SingleBoxReport,
};
pub use hardy::{hardy_norm, HardyNorm};
pub use maximal::{maximal_constant_estimate, MaximalEstimate};
pub use search::{counterexample_search, Candidate, SearchConfig, GENERATORS};
