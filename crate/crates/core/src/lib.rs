//! Scenario-based ROI portfolio optimization with HHI diversification.
//!
//! Metrics are the expected ROI over equiprobable scenarios, the CVaR
//! deviation of the per-scenario ROI, and the Herfindahl–Hirschman index of
//! budget shares. The [`strategies`] module solves the mean-risk baseline and
//! the two diversification variants on top of the generic [`solver`];
//! [`frontier`] sweeps the risk weight.

pub mod metrics;
pub mod scenario;
pub mod solver;
pub mod strategies;
pub mod frontier;
