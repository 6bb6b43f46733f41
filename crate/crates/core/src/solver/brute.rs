//! Exhaustive reference solver for small horizons.
//!
//! Every on/off vector with an admissible on-count is tried. Linear
//! objectives fill the on-set by sorting it; tariff objectives solve the
//! inner continuous problem as a linear program with explicit peak
//! variables, so no structure of the exact solvers is reused.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::flexmodel::{FlexSpec, PcReference, Schedule};

use super::{ec_breach, finish, prepare, Objective, Score, SolveError, SolveMode, SolveResult};

pub const MAX_BRUTE_FORCE_HORIZON: usize = 16;

fn step_bounds(spec: &FlexSpec, on_set: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let pc = spec.power_capacity;
    match spec.pc_reference {
        PcReference::Average => {
            let mean = spec.target_power_sum() / on_set.len() as f64;
            (
                vec![mean * (1.0 - pc); on_set.len()],
                vec![mean * (1.0 + pc); on_set.len()],
            )
        }
        PcReference::Baseline => (
            on_set
                .iter()
                .map(|&t| spec.baseline[t] * (1.0 - pc))
                .collect(),
            on_set
                .iter()
                .map(|&t| spec.baseline[t] * (1.0 + pc))
                .collect(),
        ),
    }
}

/// Cheapest split of the energy over `on_set` for per-step prices `price`.
fn sorted_fill(price: &[f64], spec: &FlexSpec, on_set: &[usize]) -> Option<Vec<f64>> {
    let target = spec.target_power_sum();
    let (lower, upper) = step_bounds(spec, on_set);
    let floor: f64 = lower.iter().sum();
    let ceiling: f64 = upper.iter().sum();
    let slack = 1e-12 * target;
    if floor > target + slack || ceiling < target - slack {
        return None;
    }
    let mut slots: Vec<(f64, usize)> = (0..on_set.len()).map(|i| (price[on_set[i]], i)).collect();
    slots.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut power = vec![0.0; spec.horizon()];
    for (i, &t) in on_set.iter().enumerate() {
        power[t] = lower[i];
    }
    let mut left = target - floor;
    for &(_, i) in &slots {
        let take = left.min(upper[i] - lower[i]).max(0.0);
        power[on_set[i]] += take;
        left -= take;
    }
    Some(power)
}

/// Inner linear program: on-step powers within bounds, one peak variable per
/// demand charge bounded below by every on-step power in its window.
fn tariff_fill(objective: &Objective, spec: &FlexSpec, on_set: &[usize]) -> Option<Vec<f64>> {
    let Objective::Tariff {
        problem,
        emissions,
        weight,
    } = objective
    else {
        return None;
    };
    let target = spec.target_power_sum();
    let (lower, upper) = step_bounds(spec, on_set);
    let slack = 1e-12 * target;
    if lower.iter().sum::<f64>() > target + slack || upper.iter().sum::<f64>() < target - slack {
        return None;
    }
    let dt = spec.dt_hours;
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = on_set
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let rate = problem.energy_rates[t] + emissions.as_ref().map_or(0.0, |e| weight * e[t]);
            lp.add_var(rate * dt, (lower[i], upper[i]))
        })
        .collect();
    for term in &problem.demand {
        let inside: Vec<_> = on_set
            .iter()
            .zip(&vars)
            .filter(|(&t, _)| term.window[t])
            .map(|(_, &v)| v)
            .collect();
        if inside.is_empty() {
            continue;
        }
        let peak = lp.add_var(term.rate, (0.0, f64::INFINITY));
        for v in inside {
            lp.add_constraint([(v, 1.0), (peak, -1.0)], ComparisonOp::Le, 0.0);
        }
    }
    let total: Vec<_> = vars.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint(total.as_slice(), ComparisonOp::Eq, target);
    let solution = lp.solve().ok()?.into_solution().ok()?;
    let mut power = vec![0.0; spec.horizon()];
    for (&t, &v) in on_set.iter().zip(&vars) {
        power[t] = solution.var_value(v).max(0.0);
    }
    Some(power)
}

/// Global optimum by enumeration of all on/off vectors; horizons up to
/// [`MAX_BRUTE_FORCE_HORIZON`].
pub fn brute_force(objective: &Objective, spec: &FlexSpec) -> Result<SolveResult, SolveError> {
    prepare(objective, spec)?;
    let horizon = spec.horizon();
    if horizon > MAX_BRUTE_FORCE_HORIZON {
        return Err(SolveError::HorizonTooLarge {
            horizon,
            max: MAX_BRUTE_FORCE_HORIZON,
        });
    }
    let admissible = spec.admissible_on_counts();
    let price: Option<Vec<f64>> = objective.linear_terms().map(|t| t.coeffs.into_owned());
    let mut best: Option<(Score, Schedule)> = None;
    let mut tried = 0;
    for bits in 1u32..(1u32 << horizon) {
        if !admissible.contains(&(bits.count_ones() as usize)) {
            continue;
        }
        let on_set: Vec<usize> = (0..horizon).filter(|t| bits & (1 << t) != 0).collect();
        tried += 1;
        let power = match &price {
            Some(p) => sorted_fill(p, spec, &on_set),
            None => tariff_fill(objective, spec, &on_set),
        };
        let Some(power) = power else { continue };
        let status = (0..horizon).map(|t| bits & (1 << t) != 0).collect();
        let schedule = Schedule {
            status,
            power,
            dt_hours: spec.dt_hours,
        };
        if ec_breach(&schedule, spec)?.is_some() {
            continue;
        }
        let eval = objective.evaluate(&schedule.power, spec.dt_hours);
        let score = Score {
            primary: eval.objective,
            secondary: 0.0,
        };
        if best.as_ref().is_none_or(|(b, _)| score.beats(b)) {
            best = Some((score, schedule));
        }
    }
    let (_, schedule) = best.ok_or_else(|| {
        SolveError::Infeasible("no on/off vector admits a feasible schedule".into())
    })?;
    finish(
        schedule,
        objective,
        spec,
        SolveMode::BruteForce,
        tried,
        None,
    )
}
