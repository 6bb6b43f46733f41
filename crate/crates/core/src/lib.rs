//! Upper-bound savings from operating a commercial or industrial load
//! flexibly against time-varying prices, emissions factors and tariffs.
//!
//! Modules, bottom up:
//! - [`signals`]: hourly price and emissions series, ingestion, month-hour profiles.
//! - [`tariff`]: retail tariffs and monthly bills.
//! - [`flexmodel`]: the flexibility envelope, schedules and feasibility checks.
//! - [`solver`]: exact schedule optimization and a brute-force reference.
//! - [`analysis`]: savings, parameter sweeps, Pareto fronts and abatement cost.

pub mod analysis;
pub mod flexmodel;
pub mod signals;
pub mod solver;
pub mod tariff;
