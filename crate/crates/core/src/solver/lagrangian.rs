//! Multiplier iteration on the power-capacity bounds.
//!
//! The bounds ℓ ≤ p_t ≤ u on on-steps are moved into the objective with a
//! single multiplier λ, which turns each step's cost into a convex
//! three-piece function of p_t. The relaxed problem is solved exactly for
//! every admissible on-count, and λ grows with the worst bound violation of
//! the relaxed minimizer until that violation drops below tolerance.

use serde::{Deserialize, Serialize};

use crate::flexmodel::{FlexSpec, PcReference};

use super::{
    cost_order, finish, prepare, schedule_from_power, Diagnostics, LinearTerms, Objective, Score,
    SolveError, SolveMode, SolveResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangianOptions {
    /// Multiplier increment per unit violation, relative to the coefficient spread.
    pub step: f64,
    /// Step factor applied whenever the violation grows.
    pub backoff: f64,
    /// Converged once the worst relative bound violation is below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LagrangianOptions {
    fn default() -> Self {
        LagrangianOptions {
            step: 1.0,
            backoff: 0.5,
            tolerance: 1e-8,
            max_iterations: 10_000,
        }
    }
}

struct Relaxed {
    power: Vec<f64>,
    on: Vec<bool>,
    score: Score,
    violation: f64,
}

/// Segment of a step's penalized cost curve.
struct Piece {
    slope: f64,
    rank: usize,
    segment: u8,
    step: usize,
    room: f64,
}

fn relaxed_for_k(
    terms: &LinearTerms<'_>,
    order: &[usize],
    spec: &FlexSpec,
    k: usize,
    multiplier: f64,
) -> Relaxed {
    let horizon = spec.horizon();
    let target = spec.target_power_sum();
    let pc = spec.power_capacity;
    let mean = target / k as f64;
    let (lo, hi) = (mean * (1.0 - pc), mean * (1.0 + pc));
    let c = &terms.coeffs;

    let mut pieces = Vec::with_capacity(3 * k);
    for (rank, &t) in order[..k].iter().enumerate() {
        pieces.push(Piece {
            slope: c[t] - multiplier,
            rank,
            segment: 0,
            step: t,
            room: lo,
        });
        pieces.push(Piece {
            slope: c[t],
            rank,
            segment: 1,
            step: t,
            room: hi - lo,
        });
        pieces.push(Piece {
            slope: c[t] + multiplier,
            rank,
            segment: 2,
            step: t,
            room: f64::INFINITY,
        });
    }
    pieces.sort_by(|a, b| {
        a.slope
            .total_cmp(&b.slope)
            .then(a.rank.cmp(&b.rank))
            .then(a.segment.cmp(&b.segment))
    });

    let mut power = vec![0.0; horizon];
    let mut residual = target;
    for piece in &pieces {
        if residual <= 0.0 {
            break;
        }
        let add = residual.min(piece.room);
        power[piece.step] += add;
        residual -= add;
    }

    let mut on = vec![false; horizon];
    let mut penalty = 0.0;
    let mut violation = 0.0f64;
    for &t in &order[..k] {
        on[t] = true;
        let p = power[t];
        penalty += (lo - p).max(0.0) + (p - hi).max(0.0);
        violation = violation.max(((1.0 - p / mean).abs() - pc).max(0.0));
    }
    let dt = spec.dt_hours;
    Relaxed {
        score: Score {
            primary: terms.primary(&power, dt) + multiplier * penalty * dt,
            secondary: terms.secondary(&power, dt),
        },
        power,
        on,
        violation,
    }
}

fn coefficient_scale(c: &[f64]) -> f64 {
    let max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = c.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = max - min;
    if spread > 0.0 {
        return spread;
    }
    let magnitude = c.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if magnitude > 0.0 {
        magnitude
    } else {
        1.0
    }
}

/// Solves a linear objective by multiplier iteration instead of bound-exact
/// filling. Requires the average-power reference and no energy-capacity cap.
pub fn solve_lagrangian(
    objective: &Objective,
    spec: &FlexSpec,
    options: &LagrangianOptions,
) -> Result<SolveResult, SolveError> {
    prepare(objective, spec)?;
    let terms = objective.linear_terms().ok_or(SolveError::Unsupported(
        "the multiplier method handles linear objectives only",
    ))?;
    if spec.pc_reference != PcReference::Average {
        return Err(SolveError::Unsupported(
            "the multiplier method requires the average-power reference",
        ));
    }
    if spec.ec_cap.is_some() {
        return Err(SolveError::Unsupported(
            "the multiplier method does not apply an energy-capacity cap",
        ));
    }
    if !(options.step > 0.0
        && options.backoff > 0.0
        && options.backoff <= 1.0
        && options.tolerance > 0.0)
    {
        return Err(SolveError::Unsupported(
            "multiplier options must be positive with backoff in (0, 1]",
        ));
    }

    let order = cost_order(&terms.coeffs, terms.tiebreak);
    let scale = coefficient_scale(&terms.coeffs);
    let mut multiplier = 0.0;
    let mut step = options.step;
    let mut previous = f64::INFINITY;
    let mut last = None;

    for iteration in 1..=options.max_iterations {
        let mut best: Option<Relaxed> = None;
        for k in spec.admissible_on_counts() {
            let cand = relaxed_for_k(&terms, &order, spec, k, multiplier);
            if best.as_ref().is_none_or(|b| cand.score.beats(&b.score)) {
                best = Some(cand);
            }
        }
        let best = best.expect("admissible on-counts are non-empty");
        if best.violation < options.tolerance {
            let schedule = schedule_from_power(best.power, &best.on, spec.dt_hours);
            return finish(
                schedule,
                objective,
                spec,
                SolveMode::Lagrangian,
                iteration,
                Some(multiplier),
            );
        }
        if best.violation > previous {
            step *= options.backoff;
        }
        previous = best.violation;
        multiplier += step * best.violation * scale;
        last = Some((best.violation, best.on.iter().filter(|&&s| s).count()));
    }

    let (violation, on_count) = last.unwrap_or((f64::NAN, 0));
    Err(SolveError::NotConverged(Diagnostics {
        mode: SolveMode::Lagrangian,
        iterations: options.max_iterations,
        max_violation: violation,
        on_count,
        multiplier: Some(multiplier),
    }))
}
