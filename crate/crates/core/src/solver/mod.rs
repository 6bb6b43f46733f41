//! Exact schedule optimization over a [`FlexSpec`] envelope.
//!
//! Every solver conditions on the on-count `k`: once `k` is fixed the
//! average-power reference is a constant, the on-set is the `k` cheapest
//! steps, and the power split is a continuous knapsack fill.

pub mod brute;
pub mod lagrangian;
pub mod linear;
pub mod tariff;

use std::borrow::Cow;
use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flexmodel::{
    energy_capacity, feasible, FlexSpec, ModelError, Schedule, FEASIBILITY_TOL,
};
use crate::tariff::TariffError;

pub use brute::{brute_force, MAX_BRUTE_FORCE_HORIZON};
pub use lagrangian::{solve_lagrangian, LagrangianOptions};
pub use linear::{solve_fixed_k, solve_min_uptime, BNB_NODE_LIMIT};
pub use tariff::{solve_tariff, TariffProblem, MAX_DEMAND_CHARGES};

/// Relative tolerance used when comparing objectives across on-counts.
pub const OBJECTIVE_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tariff(#[from] TariffError),
    #[error("{what} has {got} entries, horizon is {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} contains a non-finite value at step {step}")]
    NonFinite { what: &'static str, step: usize },
    #[error("on-count {k} outside 1..={horizon}")]
    InvalidOnCount { k: usize, horizon: usize },
    #[error("{0}")]
    Unsupported(&'static str),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("on-count {k}: energy capacity {ec:.6} exceeds cap {cap:.6}")]
    EcCapExceeded { k: usize, ec: f64, cap: f64 },
    #[error("branch and bound exceeded {nodes} nodes")]
    SearchLimit { nodes: usize },
    #[error("{count} active demand charges; at most {max} supported")]
    TooManyDemandCharges { count: usize, max: usize },
    #[error("tariff search needs ~{estimate:.3e} evaluations, budget is {budget:.3e}")]
    TooLarge { estimate: f64, budget: f64 },
    #[error("horizon {horizon} exceeds brute-force limit {max}")]
    HorizonTooLarge { horizon: usize, max: usize },
    #[error(
        "multiplier iteration did not converge after {} iterations (violation {:.3e})",
        .0.iterations,
        .0.max_violation
    )]
    NotConverged(Diagnostics),
}

/// Weight on emissions in a blended cost/emissions objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionsWeight {
    /// cost + w·emissions, w ≥ 0 in $/kg.
    Finite(f64),
    /// Emissions alone, with cost breaking ties.
    EmissionsOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Σ c_t·p_t·Δt for one incentive signal.
    Linear { coeffs: Vec<f64> },
    /// Cost signal plus weighted emissions signal.
    Weighted {
        cost: Vec<f64>,
        emissions: Vec<f64>,
        weight: EmissionsWeight,
    },
    /// Monthly bill plus optional weighted emissions.
    Tariff {
        problem: TariffProblem,
        emissions: Option<Vec<f64>>,
        weight: f64,
    },
}

/// Per-step coefficients of a linear objective, plus the secondary
/// coefficients that order exact ties.
pub(crate) struct LinearTerms<'a> {
    pub coeffs: Cow<'a, [f64]>,
    pub tiebreak: Option<&'a [f64]>,
}

impl LinearTerms<'_> {
    pub fn primary(&self, power: &[f64], dt: f64) -> f64 {
        dot(&self.coeffs, power) * dt
    }

    pub fn secondary(&self, power: &[f64], dt: f64) -> f64 {
        self.tiebreak.map_or(0.0, |tb| dot(tb, power) * dt)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Objective {
    pub fn linear(coeffs: Vec<f64>) -> Self {
        Objective::Linear { coeffs }
    }

    pub fn weighted(cost: Vec<f64>, emissions: Vec<f64>, weight: EmissionsWeight) -> Self {
        Objective::Weighted {
            cost,
            emissions,
            weight,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Objective::Linear { .. } => "linear",
            Objective::Weighted { .. } => "weighted",
            Objective::Tariff { .. } => "tariff",
        }
    }

    /// Checks vector lengths against the horizon and finiteness.
    pub fn validate(&self, horizon: usize) -> Result<(), SolveError> {
        let check = |what: &'static str, v: &[f64]| -> Result<(), SolveError> {
            if v.len() != horizon {
                return Err(SolveError::LengthMismatch {
                    what,
                    expected: horizon,
                    got: v.len(),
                });
            }
            match v.iter().position(|x| !x.is_finite()) {
                Some(step) => Err(SolveError::NonFinite { what, step }),
                None => Ok(()),
            }
        };
        match self {
            Objective::Linear { coeffs } => check("coefficients", coeffs),
            Objective::Weighted {
                cost,
                emissions,
                weight,
            } => {
                check("cost signal", cost)?;
                check("emissions signal", emissions)?;
                if let EmissionsWeight::Finite(w) = weight {
                    if !(w.is_finite() && *w >= 0.0) {
                        return Err(SolveError::Unsupported(
                            "emissions weight must be finite and >= 0",
                        ));
                    }
                }
                Ok(())
            }
            Objective::Tariff {
                problem,
                emissions,
                weight,
            } => {
                problem.validate(horizon)?;
                if let Some(e) = emissions {
                    check("emissions signal", e)?;
                }
                if !(weight.is_finite() && *weight >= 0.0) {
                    return Err(SolveError::Unsupported(
                        "emissions weight must be finite and >= 0",
                    ));
                }
                Ok(())
            }
        }
    }

    pub(crate) fn linear_terms(&self) -> Option<LinearTerms<'_>> {
        match self {
            Objective::Linear { coeffs } => Some(LinearTerms {
                coeffs: Cow::Borrowed(coeffs),
                tiebreak: None,
            }),
            Objective::Weighted {
                cost,
                emissions,
                weight: EmissionsWeight::Finite(w),
            } => {
                let coeffs = if *w == 0.0 {
                    Cow::Borrowed(cost.as_slice())
                } else {
                    Cow::Owned(cost.iter().zip(emissions).map(|(c, e)| c + w * e).collect())
                };
                Some(LinearTerms {
                    coeffs,
                    tiebreak: Some(emissions),
                })
            }
            Objective::Weighted {
                cost,
                emissions,
                weight: EmissionsWeight::EmissionsOnly,
            } => Some(LinearTerms {
                coeffs: Cow::Borrowed(emissions),
                tiebreak: Some(cost),
            }),
            Objective::Tariff { .. } => None,
        }
    }

    /// Objective value, cost and emissions of a power trace.
    pub fn evaluate(&self, power: &[f64], dt_hours: f64) -> Evaluation {
        match self {
            Objective::Linear { coeffs } => Evaluation {
                objective: dot(coeffs, power) * dt_hours,
                cost: None,
                emissions: None,
            },
            Objective::Weighted {
                cost,
                emissions,
                weight,
            } => {
                let c = dot(cost, power) * dt_hours;
                let e = dot(emissions, power) * dt_hours;
                let objective = match weight {
                    EmissionsWeight::Finite(w) => c + w * e,
                    EmissionsWeight::EmissionsOnly => e,
                };
                Evaluation {
                    objective,
                    cost: Some(c),
                    emissions: Some(e),
                }
            }
            Objective::Tariff {
                problem,
                emissions,
                weight,
            } => {
                let bill = problem.bill(power, dt_hours);
                let e = emissions.as_ref().map(|e| dot(e, power) * dt_hours);
                Evaluation {
                    objective: bill + weight * e.unwrap_or(0.0),
                    cost: Some(bill),
                    emissions: e,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objective: f64,
    pub cost: Option<f64>,
    pub emissions: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    FixedK,
    MinUptime,
    BranchAndBound,
    Lagrangian,
    Tariff,
    BruteForce,
}

impl fmt::Display for SolveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMode::FixedK => "fixed-k",
            SolveMode::MinUptime => "min-uptime",
            SolveMode::BranchAndBound => "branch-and-bound",
            SolveMode::Lagrangian => "lagrangian",
            SolveMode::Tariff => "tariff",
            SolveMode::BruteForce => "brute-force",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mode: SolveMode,
    /// Inner solves for exact modes; multiplier updates for the Lagrangian.
    pub iterations: usize,
    pub max_violation: f64,
    /// Winning on-count.
    pub on_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub schedule: Schedule,
    pub objective_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emissions: Option<f64>,
    pub diagnostics: Diagnostics,
}

/// Which algorithm `solve` dispatches to for linear objectives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// k-conditioned enumeration.
    #[default]
    Exact,
    /// Multiplier iteration on the power-capacity bounds.
    Lagrangian,
}

/// Solves `objective` over the on-counts admitted by `spec`.
pub fn solve(
    objective: &Objective,
    spec: &FlexSpec,
    method: Method,
) -> Result<SolveResult, SolveError> {
    match (objective, method) {
        (Objective::Tariff { .. }, Method::Exact) => solve_tariff(objective, spec),
        (Objective::Tariff { .. }, Method::Lagrangian) => Err(SolveError::Unsupported(
            "the multiplier method handles linear objectives only",
        )),
        (_, Method::Lagrangian) => solve_lagrangian(objective, spec, &LagrangianOptions::default()),
        (_, Method::Exact) => solve_min_uptime(objective, spec),
    }
}

pub(crate) fn prepare(objective: &Objective, spec: &FlexSpec) -> Result<(), SolveError> {
    spec.validate()?;
    objective.validate(spec.horizon())
}

/// Step indices sorted by (coefficient, tiebreak, step).
pub(crate) fn cost_order(coeffs: &[f64], tiebreak: Option<&[f64]>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..coeffs.len()).collect();
    order.sort_by(|&a, &b| {
        coeffs[a]
            .total_cmp(&coeffs[b])
            .then_with(|| match tiebreak {
                Some(tb) => tb[a].total_cmp(&tb[b]),
                None => Ordering::Equal,
            })
            .then(a.cmp(&b))
    });
    order
}

/// (primary, secondary) objective pair compared lexicographically with a
/// relative tolerance on each component.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Score {
    pub primary: f64,
    pub secondary: f64,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= OBJECTIVE_TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

impl Score {
    /// True when `self` is strictly better than `other`.
    pub fn beats(&self, other: &Score) -> bool {
        if close(self.primary, other.primary) {
            !close(self.secondary, other.secondary) && self.secondary < other.secondary
        } else {
            self.primary < other.primary
        }
    }
}

pub(crate) fn schedule_from_power(power: Vec<f64>, on: &[bool], dt_hours: f64) -> Schedule {
    Schedule {
        status: on.to_vec(),
        power,
        dt_hours,
    }
}

/// Energy capacity of `schedule` if it breaches the cap in `spec`.
pub(crate) fn ec_breach(schedule: &Schedule, spec: &FlexSpec) -> Result<Option<f64>, SolveError> {
    match spec.ec_cap {
        Some(cap) => {
            let ec = energy_capacity(schedule, &spec.baseline)?;
            Ok((ec > cap + FEASIBILITY_TOL).then_some(ec))
        }
        None => Ok(None),
    }
}

/// Packages a schedule with its evaluation and feasibility diagnostics.
pub(crate) fn finish(
    schedule: Schedule,
    objective: &Objective,
    spec: &FlexSpec,
    mode: SolveMode,
    iterations: usize,
    multiplier: Option<f64>,
) -> Result<SolveResult, SolveError> {
    let report = feasible(&schedule, spec)?;
    let eval = objective.evaluate(&schedule.power, schedule.dt_hours);
    let on_count = schedule.on_count();
    Ok(SolveResult {
        schedule,
        objective_value: eval.objective,
        cost: eval.cost,
        emissions: eval.emissions,
        diagnostics: Diagnostics {
            mode,
            iterations,
            max_violation: report.max_violation(),
            on_count,
            multiplier,
        },
    })
}
