//! Linear objectives: fixed on-count fill and enumeration over on-counts.

use crate::flexmodel::{FlexSpec, PcReference};

use super::{
    cost_order, ec_breach, finish, prepare, schedule_from_power, LinearTerms, Objective, Score,
    SolveError, SolveMode, SolveResult,
};

/// Node budget for the per-step-bound branch and bound.
pub const BNB_NODE_LIMIT: usize = 200_000;

/// Slack allowed when checking Σℓ ≤ E ≤ Σu, relative to E.
const ENERGY_SLACK: f64 = 1e-12;

pub(crate) struct Candidate {
    pub power: Vec<f64>,
    pub on: Vec<bool>,
    pub score: Score,
}

/// Per-step bounds on on-steps for a given on-count.
enum Bounds {
    /// Same [lo, hi] on every on-step.
    Uniform { lo: f64, hi: f64 },
    /// [(1−pc)b_t, (1+pc)b_t].
    PerStep,
}

fn bounds(spec: &FlexSpec, k: usize) -> Bounds {
    let pc = spec.power_capacity;
    match spec.pc_reference {
        PcReference::Average => {
            let m = spec.target_power_sum() / k as f64;
            Bounds::Uniform {
                lo: m * (1.0 - pc),
                hi: m * (1.0 + pc),
            }
        }
        PcReference::Baseline => {
            let b0 = spec.baseline[0];
            if spec.baseline.iter().all(|&b| b == b0) {
                Bounds::Uniform {
                    lo: b0 * (1.0 - pc),
                    hi: b0 * (1.0 + pc),
                }
            } else {
                Bounds::PerStep
            }
        }
    }
}

/// Sets every member of `on_set` to `lo`, then raises members in the given
/// order up to `hi` until Σp reaches `target`.
pub(crate) fn uniform_fill(
    on_set: &[usize],
    lo: f64,
    hi: f64,
    target: f64,
    horizon: usize,
) -> Vec<f64> {
    let mut power = vec![0.0; horizon];
    for &t in on_set {
        power[t] = lo;
    }
    let mut residual = target - on_set.len() as f64 * lo;
    let mut last = None;
    for &t in on_set {
        if residual <= 0.0 {
            break;
        }
        let add = residual.min(hi - lo);
        power[t] += add;
        residual -= add;
        last = Some(t);
    }
    if residual > 0.0 {
        if let Some(t) = last {
            power[t] += residual;
        }
    }
    power
}

fn mask(on_set: &[usize], horizon: usize) -> Vec<bool> {
    let mut on = vec![false; horizon];
    for &t in on_set {
        on[t] = true;
    }
    on
}

fn score(terms: &LinearTerms<'_>, power: &[f64], dt: f64) -> Score {
    Score {
        primary: terms.primary(power, dt),
        secondary: terms.secondary(power, dt),
    }
}

/// Optimal schedule with exactly `k` on-steps, or `None` when no on-set of
/// that size can absorb the required energy.
pub(crate) fn candidate(
    terms: &LinearTerms<'_>,
    order: &[usize],
    spec: &FlexSpec,
    k: usize,
) -> Result<Option<Candidate>, SolveError> {
    let horizon = spec.horizon();
    let target = spec.target_power_sum();
    match bounds(spec, k) {
        Bounds::Uniform { lo, hi } => {
            let slack = ENERGY_SLACK * target;
            if k as f64 * lo > target + slack || (k as f64) * hi < target - slack {
                return Ok(None);
            }
            let on_set = &order[..k];
            let power = uniform_fill(on_set, lo, hi, target, horizon);
            let score = score(terms, &power, spec.dt_hours);
            Ok(Some(Candidate {
                power,
                on: mask(on_set, horizon),
                score,
            }))
        }
        Bounds::PerStep => {
            let mut search = PerStepSearch::new(terms, order, spec, k);
            search.run()?;
            Ok(search.best.take().map(|(_, on_set)| {
                let power = search.fill(&on_set);
                let score = score(terms, &power, spec.dt_hours);
                Candidate {
                    power,
                    on: mask(&on_set, horizon),
                    score,
                }
            }))
        }
    }
}

/// Depth-first branch and bound over on-sets in cost order when bounds
/// differ per step. The bound relaxes undecided steps to [0, u_t].
struct PerStepSearch<'a> {
    coeffs: &'a [f64],
    order: &'a [usize],
    lower: Vec<f64>,
    upper: Vec<f64>,
    target: f64,
    k: usize,
    nodes: usize,
    best: Option<(f64, Vec<usize>)>,
}

impl<'a> PerStepSearch<'a> {
    fn new(terms: &'a LinearTerms<'a>, order: &'a [usize], spec: &FlexSpec, k: usize) -> Self {
        let pc = spec.power_capacity;
        PerStepSearch {
            coeffs: &terms.coeffs,
            order,
            lower: spec.baseline.iter().map(|b| b * (1.0 - pc)).collect(),
            upper: spec.baseline.iter().map(|b| b * (1.0 + pc)).collect(),
            target: spec.target_power_sum(),
            k,
            nodes: 0,
            best: None,
        }
    }

    fn run(&mut self) -> Result<(), SolveError> {
        let mut chosen = Vec::with_capacity(self.k);
        self.descend(0, &mut chosen)
    }

    /// Cheapest fill of `chosen` (in [ℓ,u]) plus `order[from..]` (in [0,u]).
    fn bound(&self, chosen: &[usize], from: usize) -> Option<f64> {
        let slack = ENERGY_SLACK * self.target;
        let mut cost = 0.0;
        let mut residual = self.target;
        for &t in chosen {
            cost += self.coeffs[t] * self.lower[t];
            residual -= self.lower[t];
        }
        if residual < -slack {
            return None;
        }
        let extra = chosen
            .iter()
            .map(|&t| (t, self.upper[t] - self.lower[t]))
            .chain(self.order[from..].iter().map(|&t| (t, self.upper[t])));
        for (t, room) in extra {
            if residual <= 0.0 {
                break;
            }
            let add = residual.min(room);
            cost += self.coeffs[t] * add;
            residual -= add;
        }
        (residual <= slack).then_some(cost)
    }

    fn descend(&mut self, from: usize, chosen: &mut Vec<usize>) -> Result<(), SolveError> {
        self.nodes += 1;
        if self.nodes > BNB_NODE_LIMIT {
            return Err(SolveError::SearchLimit {
                nodes: BNB_NODE_LIMIT,
            });
        }
        let n = self.order.len();
        let complete = chosen.len() == self.k;
        if !complete && chosen.len() + (n - from) < self.k {
            return Ok(());
        }
        let Some(bound) = self.bound(chosen, if complete { n } else { from }) else {
            return Ok(());
        };
        if let Some((best, _)) = &self.best {
            let tol = super::OBJECTIVE_TIE_TOL * best.abs().max(1.0);
            if bound >= best - tol {
                return Ok(());
            }
        }
        if complete {
            self.best = Some((bound, chosen.clone()));
            return Ok(());
        }
        chosen.push(self.order[from]);
        self.descend(from + 1, chosen)?;
        chosen.pop();
        self.descend(from + 1, chosen)
    }

    fn fill(&self, on_set: &[usize]) -> Vec<f64> {
        let mut power = vec![0.0; self.lower.len()];
        let mut residual = self.target;
        for &t in on_set {
            power[t] = self.lower[t];
            residual -= self.lower[t];
        }
        let mut last = None;
        for &t in on_set {
            if residual <= 0.0 {
                break;
            }
            let add = residual.min(self.upper[t] - self.lower[t]);
            power[t] += add;
            residual -= add;
            last = Some(t);
        }
        if residual > 0.0 {
            if let Some(t) = last {
                power[t] += residual;
            }
        }
        power
    }
}

fn linear_terms(objective: &Objective) -> Result<LinearTerms<'_>, SolveError> {
    objective.linear_terms().ok_or(SolveError::Unsupported(
        "tariff objectives are solved by solve_tariff",
    ))
}

fn mode_for(spec: &FlexSpec, k: usize) -> SolveMode {
    match bounds(spec, k) {
        Bounds::Uniform { .. } => SolveMode::FixedK,
        Bounds::PerStep => SolveMode::BranchAndBound,
    }
}

/// Optimal schedule with exactly `k` on-steps.
pub fn solve_fixed_k(
    objective: &Objective,
    spec: &FlexSpec,
    k: usize,
) -> Result<SolveResult, SolveError> {
    prepare(objective, spec)?;
    let horizon = spec.horizon();
    if k == 0 || k > horizon {
        return Err(SolveError::InvalidOnCount { k, horizon });
    }
    let terms = linear_terms(objective)?;
    let order = cost_order(&terms.coeffs, terms.tiebreak);
    let best = candidate(&terms, &order, spec, k)?.ok_or_else(|| {
        SolveError::Infeasible(format!(
            "no {k} on-steps can absorb {:.6} MWh within per-step bounds",
            spec.flexible_energy()
        ))
    })?;
    let schedule = schedule_from_power(best.power, &best.on, spec.dt_hours);
    if let Some(ec) = ec_breach(&schedule, spec)? {
        return Err(SolveError::EcCapExceeded {
            k,
            ec,
            cap: spec.ec_cap.unwrap_or_default(),
        });
    }
    finish(schedule, objective, spec, mode_for(spec, k), 1, None)
}

/// Best schedule over every admissible on-count. On-counts whose optimum
/// breaches the energy-capacity cap are skipped; ties keep the smaller count.
pub fn solve_min_uptime(objective: &Objective, spec: &FlexSpec) -> Result<SolveResult, SolveError> {
    prepare(objective, spec)?;
    let terms = linear_terms(objective)?;
    let order = cost_order(&terms.coeffs, terms.tiebreak);
    let mut best: Option<(usize, Candidate)> = None;
    let mut iterations = 0;
    for k in spec.admissible_on_counts() {
        iterations += 1;
        let Some(cand) = candidate(&terms, &order, spec, k)? else {
            continue;
        };
        let schedule = schedule_from_power(cand.power.clone(), &cand.on, spec.dt_hours);
        if ec_breach(&schedule, spec)?.is_some() {
            continue;
        }
        if best
            .as_ref()
            .is_none_or(|(_, b)| cand.score.beats(&b.score))
        {
            best = Some((k, cand));
        }
    }
    let (k, best) = best.ok_or_else(|| {
        SolveError::Infeasible("no admissible on-count yields a feasible schedule".into())
    })?;
    let schedule = schedule_from_power(best.power, &best.on, spec.dt_hours);
    let mode = match mode_for(spec, k) {
        SolveMode::FixedK => SolveMode::MinUptime,
        other => other,
    };
    finish(schedule, objective, spec, mode, iterations, None)
}
