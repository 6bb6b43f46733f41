//! Tariff objectives: time-varying energy rates plus windowed demand charges.
//!
//! For a fixed on-count every on-step shares the bounds [lo, hi]. Steps are
//! grouped into classes by which demand windows contain them; within a class
//! only the cheapest members are ever chosen. For each split of the on-count
//! across classes, each demand charge's peak is either pinned at `lo`, left
//! at `hi`, or tied to one shared level `v` in between. The bill is convex
//! and piecewise linear in `v` with breakpoints where the cost-ordered fill
//! saturates a prefix, so evaluating those breakpoints is exact.

use rayon::prelude::*;

use crate::flexmodel::{FlexSpec, PcReference};
use crate::tariff::{BillingMonth, Tariff};

use super::linear::uniform_fill;
use super::{
    cost_order, dot, ec_breach, finish, prepare, schedule_from_power, Objective, Score, SolveError,
    SolveMode, SolveResult,
};

pub const MAX_DEMAND_CHARGES: usize = 3;

/// Upper bound on inner evaluations before the search is refused.
pub const TARIFF_SEARCH_BUDGET: f64 = 5e9;

#[derive(Debug, Clone, PartialEq)]
pub struct DemandTerm {
    /// $/MW on the peak inside the window.
    pub rate: f64,
    pub window: Vec<bool>,
}

/// A tariff laid out on a concrete horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TariffProblem {
    /// $/MWh per step.
    pub energy_rates: Vec<f64>,
    pub demand: Vec<DemandTerm>,
    pub fixed_charge: f64,
}

impl TariffProblem {
    pub fn new(energy_rates: Vec<f64>, demand: Vec<DemandTerm>, fixed_charge: f64) -> Self {
        TariffProblem {
            energy_rates,
            demand,
            fixed_charge,
        }
    }

    pub fn from_tariff(tariff: &Tariff, calendar: BillingMonth) -> Self {
        let demand = tariff
            .demand_charges
            .iter()
            .zip(tariff.demand_windows(calendar))
            .map(|(c, window)| DemandTerm {
                rate: c.rate,
                window,
            })
            .collect();
        TariffProblem {
            energy_rates: tariff.marginal_energy_rates(calendar),
            demand,
            fixed_charge: tariff.fixed_charge,
        }
    }

    pub fn horizon(&self) -> usize {
        self.energy_rates.len()
    }

    pub fn validate(&self, horizon: usize) -> Result<(), SolveError> {
        if self.energy_rates.len() != horizon {
            return Err(SolveError::LengthMismatch {
                what: "energy rates",
                expected: horizon,
                got: self.energy_rates.len(),
            });
        }
        if let Some(step) = self.energy_rates.iter().position(|r| !r.is_finite()) {
            return Err(SolveError::NonFinite {
                what: "energy rates",
                step,
            });
        }
        for d in &self.demand {
            if d.window.len() != horizon {
                return Err(SolveError::LengthMismatch {
                    what: "demand window",
                    expected: horizon,
                    got: d.window.len(),
                });
            }
            if !(d.rate.is_finite() && d.rate >= 0.0) {
                return Err(SolveError::Unsupported(
                    "demand rates must be finite and >= 0",
                ));
            }
        }
        if !self.fixed_charge.is_finite() {
            return Err(SolveError::Unsupported("fixed charge must be finite"));
        }
        Ok(())
    }

    /// Total bill for a power trace.
    pub fn bill(&self, power: &[f64], dt_hours: f64) -> f64 {
        let energy = dot(&self.energy_rates, power) * dt_hours;
        let demand: f64 = self
            .demand
            .iter()
            .map(|d| {
                let peak = power
                    .iter()
                    .zip(&d.window)
                    .filter(|(_, &inside)| inside)
                    .map(|(&p, _)| p)
                    .fold(0.0, f64::max);
                d.rate * peak
            })
            .sum();
        energy + demand + self.fixed_charge
    }

    /// Demand charges that can be non-zero on this horizon.
    pub fn active_charges(&self) -> Vec<usize> {
        (0..self.demand.len())
            .filter(|&j| self.demand[j].rate > 0.0 && self.demand[j].window.iter().any(|&w| w))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cap {
    Floor,
    Level,
    Free,
}

/// Steps sharing one set of active demand windows, in cost order.
struct Class {
    /// Bit j set when active charge j covers the class.
    charges: u8,
    members: Vec<usize>,
}

struct Layout {
    coeffs: Vec<f64>,
    order: Vec<usize>,
    /// Class index and rank within the class, per step.
    class_of: Vec<(usize, usize)>,
    classes: Vec<Class>,
    rates: Vec<f64>,
}

impl Layout {
    fn new(
        coeffs: Vec<f64>,
        tiebreak: Option<&[f64]>,
        problem: &TariffProblem,
        active: &[usize],
    ) -> Self {
        let order = cost_order(&coeffs, tiebreak);
        let mut classes: Vec<Class> = Vec::new();
        let mut class_of = vec![(0, 0); coeffs.len()];
        for &t in &order {
            let mut mask = 0u8;
            for (bit, &j) in active.iter().enumerate() {
                if problem.demand[j].window[t] {
                    mask |= 1 << bit;
                }
            }
            let idx = match classes.iter().position(|c| c.charges == mask) {
                Some(i) => i,
                None => {
                    classes.push(Class {
                        charges: mask,
                        members: Vec::new(),
                    });
                    classes.len() - 1
                }
            };
            class_of[t] = (idx, classes[idx].members.len());
            classes[idx].members.push(t);
        }
        let rates = active.iter().map(|&j| problem.demand[j].rate).collect();
        Layout {
            coeffs,
            order,
            class_of,
            classes,
            rates,
        }
    }

    /// Number of ways to split `k` across classes, capped at each class size.
    fn splits(&self, k: usize) -> f64 {
        let mut ways = vec![0.0f64; k + 1];
        ways[0] = 1.0;
        for class in &self.classes {
            let mut next = vec![0.0; k + 1];
            for (have, &w) in ways.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for take in 0..=class.members.len().min(k - have) {
                    next[have + take] += w;
                }
            }
            ways = next;
        }
        ways[k]
    }
}

/// Best split found for one on-count.
#[derive(Clone)]
struct Choice {
    value: f64,
    counts: Vec<usize>,
    caps: Vec<Cap>,
    level: f64,
}

struct Search<'a> {
    layout: &'a Layout,
    lo: f64,
    hi: f64,
    residual: f64,
    k: usize,
    patterns: Vec<Vec<Cap>>,
    best: Option<Choice>,
    on_set: Vec<usize>,
}

fn all_patterns(n: usize) -> Vec<Vec<Cap>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                [Cap::Floor, Cap::Level, Cap::Free]
                    .into_iter()
                    .map(move |c| {
                        let mut q = p.clone();
                        q.push(c);
                        q
                    })
            })
            .collect();
    }
    out
}

fn class_cap(charges: u8, caps: &[Cap]) -> Cap {
    let covering = caps
        .iter()
        .enumerate()
        .filter(|(j, _)| charges & (1 << j) != 0);
    let mut cap = Cap::Free;
    for (_, &c) in covering {
        match c {
            Cap::Floor => return Cap::Floor,
            Cap::Level => cap = Cap::Level,
            Cap::Free => {}
        }
    }
    cap
}

impl Search<'_> {
    fn enumerate(&mut self, class: usize, remaining: usize, counts: &mut Vec<usize>) {
        if class == self.layout.classes.len() {
            if remaining == 0 {
                self.evaluate(counts);
            }
            return;
        }
        let tail: usize = self.layout.classes[class + 1..]
            .iter()
            .map(|c| c.members.len())
            .sum();
        let size = self.layout.classes[class].members.len();
        let min_take = remaining.saturating_sub(tail);
        for take in min_take..=size.min(remaining) {
            counts.push(take);
            self.enumerate(class + 1, remaining - take, counts);
            counts.pop();
        }
    }

    fn consider(&mut self, value: f64, counts: &[usize], caps: &[Cap], level: f64) {
        let better = match &self.best {
            None => true,
            Some(b) => value < b.value - super::OBJECTIVE_TIE_TOL * b.value.abs().max(1.0),
        };
        if better {
            self.best = Some(Choice {
                value,
                counts: counts.to_vec(),
                caps: caps.to_vec(),
                level,
            });
        }
    }

    fn evaluate(&mut self, counts: &[usize]) {
        let layout = self.layout;
        self.on_set.clear();
        for &t in &layout.order {
            let (class, rank) = layout.class_of[t];
            if rank < counts[class] {
                self.on_set.push(t);
                if self.on_set.len() == self.k {
                    break;
                }
            }
        }
        let charges = layout.rates.len();
        let mut present = 0u8;
        for (class, &n) in layout.classes.iter().zip(counts) {
            if n > 0 {
                present |= class.charges;
            }
        }
        let (lo, hi, residual) = (self.lo, self.hi, self.residual);
        let room = hi - lo;
        let base: f64 = self.on_set.iter().map(|&t| layout.coeffs[t]).sum::<f64>() * lo;
        let patterns = std::mem::take(&mut self.patterns);
        let mut caps_by_class = vec![Cap::Free; layout.classes.len()];
        for caps in &patterns {
            // absent charges are fixed to Free so each pattern is visited once
            if (0..charges).any(|j| present & (1 << j) == 0 && caps[j] != Cap::Free) {
                continue;
            }
            let mut demand_fixed = 0.0;
            let mut level_rate = 0.0;
            for j in (0..charges).filter(|&j| present & (1 << j) != 0) {
                match caps[j] {
                    Cap::Floor => demand_fixed += layout.rates[j] * lo,
                    Cap::Free => demand_fixed += layout.rates[j] * hi,
                    Cap::Level => level_rate += layout.rates[j],
                }
            }
            for (slot, class) in caps_by_class.iter_mut().zip(&layout.classes) {
                *slot = class_cap(class.charges, caps);
            }
            let has_level = caps.contains(&Cap::Level);

            if !has_level {
                let mut left = residual;
                let mut energy = base;
                for &t in &self.on_set {
                    if left <= 0.0 {
                        break;
                    }
                    if caps_by_class[layout.class_of[t].0] == Cap::Free {
                        let add = left.min(room);
                        energy += layout.coeffs[t] * add;
                        left -= add;
                    }
                }
                if left <= 1e-12 * residual.max(1.0) {
                    self.consider(energy + demand_fixed, counts, caps, hi);
                }
                continue;
            }

            // breakpoints: the level at which the first i on-steps absorb the residual exactly
            let (mut level_count, mut free_room) = (0.0f64, 0.0f64);
            let (mut level_coeffs, mut free_cost) = (0.0f64, 0.0f64);
            let mut best_here: Option<(f64, f64)> = None;
            for &t in &self.on_set {
                let c = layout.coeffs[t];
                match caps_by_class[layout.class_of[t].0] {
                    Cap::Level => {
                        level_count += 1.0;
                        level_coeffs += c;
                    }
                    Cap::Free => {
                        free_room += room;
                        free_cost += c * room;
                    }
                    Cap::Floor => continue,
                }
                if level_count == 0.0 {
                    continue;
                }
                let v = lo + (residual - free_room) / level_count;
                if !(v >= lo && v <= hi) {
                    continue;
                }
                let value =
                    base + level_coeffs * (v - lo) + free_cost + demand_fixed + level_rate * v;
                if best_here.is_none_or(|(b, _)| value < b) {
                    best_here = Some((value, v));
                }
            }
            if let Some((value, v)) = best_here {
                self.consider(value, counts, caps, v);
            }
        }
        self.patterns = patterns;
    }
}

/// Steps of the winning choice and their power.
fn rebuild(
    layout: &Layout,
    k: usize,
    choice: &Choice,
    lo: f64,
    hi: f64,
    target: f64,
    horizon: usize,
) -> (Vec<usize>, Vec<f64>) {
    let mut on_set = Vec::with_capacity(k);
    for &t in &layout.order {
        let (class, rank) = layout.class_of[t];
        if rank < choice.counts[class] {
            on_set.push(t);
            if on_set.len() == k {
                break;
            }
        }
    }
    let classes_cap: Vec<f64> = layout
        .classes
        .iter()
        .map(|c| match class_cap(c.charges, &choice.caps) {
            Cap::Floor => lo,
            Cap::Level => choice.level,
            Cap::Free => hi,
        })
        .collect();
    let mut power = vec![0.0; horizon];
    for &t in &on_set {
        power[t] = lo;
    }
    let mut residual = target - k as f64 * lo;
    let mut last = None;
    for &t in &on_set {
        if residual <= 0.0 {
            break;
        }
        let add = residual
            .min(classes_cap[layout.class_of[t].0] - lo)
            .max(0.0);
        if add > 0.0 {
            power[t] += add;
            residual -= add;
            last = Some(t);
        }
    }
    if residual > 0.0 {
        if let Some(t) = last.or(on_set.last().copied()) {
            power[t] += residual;
        }
    }
    (on_set, power)
}

struct PerK {
    score: Score,
    power: Vec<f64>,
    on: Vec<bool>,
}

/// Minimizes bill + weight·emissions over the admissible on-counts.
///
/// Needs the average-power reference or a constant baseline, and at most
/// [`MAX_DEMAND_CHARGES`] demand charges that can bind on the horizon.
pub fn solve_tariff(objective: &Objective, spec: &FlexSpec) -> Result<SolveResult, SolveError> {
    prepare(objective, spec)?;
    let Objective::Tariff {
        problem,
        emissions,
        weight,
    } = objective
    else {
        return Err(SolveError::Unsupported(
            "solve_tariff needs a tariff objective",
        ));
    };
    let uniform_baseline = spec.baseline.iter().all(|&b| b == spec.baseline[0]);
    if spec.pc_reference == PcReference::Baseline && !uniform_baseline {
        return Err(SolveError::Unsupported(
            "tariff objectives with the baseline reference need a constant baseline",
        ));
    }
    let active = problem.active_charges();
    if active.len() > MAX_DEMAND_CHARGES {
        return Err(SolveError::TooManyDemandCharges {
            count: active.len(),
            max: MAX_DEMAND_CHARGES,
        });
    }

    let dt = spec.dt_hours;
    let coeffs: Vec<f64> = match emissions {
        Some(e) => problem
            .energy_rates
            .iter()
            .zip(e)
            .map(|(r, e)| (r + weight * e) * dt)
            .collect(),
        None => problem.energy_rates.iter().map(|r| r * dt).collect(),
    };
    let layout = Layout::new(coeffs, emissions.as_deref(), problem, &active);
    let patterns = all_patterns(active.len());

    let counts: Vec<usize> = spec.admissible_on_counts().collect();
    let estimate: f64 = counts
        .iter()
        .map(|&k| layout.splits(k) * (spec.horizon() as f64 + patterns.len() as f64 * k as f64))
        .sum();
    if estimate > TARIFF_SEARCH_BUDGET {
        return Err(SolveError::TooLarge {
            estimate,
            budget: TARIFF_SEARCH_BUDGET,
        });
    }

    let target = spec.target_power_sum();
    let pc = spec.power_capacity;
    let horizon = spec.horizon();
    let per_k: Vec<Result<Option<PerK>, SolveError>> = counts
        .par_iter()
        .map(|&k| {
            let (lo, hi) = match spec.pc_reference {
                PcReference::Average => {
                    let m = target / k as f64;
                    (m * (1.0 - pc), m * (1.0 + pc))
                }
                PcReference::Baseline => {
                    (spec.baseline[0] * (1.0 - pc), spec.baseline[0] * (1.0 + pc))
                }
            };
            let slack = 1e-12 * target;
            if k as f64 * lo > target + slack || (k as f64) * hi < target - slack {
                return Ok(None);
            }
            let residual = (target - k as f64 * lo).max(0.0);
            let mut search = Search {
                layout: &layout,
                lo,
                hi,
                residual,
                k,
                patterns: patterns.clone(),
                best: None,
                on_set: Vec::with_capacity(k),
            };
            let mut scratch = Vec::with_capacity(layout.classes.len());
            search.enumerate(0, k, &mut scratch);
            let Some(choice) = search.best else {
                return Ok(None);
            };
            let (on_set, power) = if active.is_empty() {
                let on_set = layout.order[..k].to_vec();
                let power = uniform_fill(&on_set, lo, hi, target, horizon);
                (on_set, power)
            } else {
                rebuild(&layout, k, &choice, lo, hi, target, horizon)
            };
            let mut on = vec![false; horizon];
            for &t in &on_set {
                on[t] = true;
            }
            let schedule = schedule_from_power(power, &on, dt);
            if ec_breach(&schedule, spec)?.is_some() {
                return Ok(None);
            }
            let eval = objective.evaluate(&schedule.power, dt);
            Ok(Some(PerK {
                score: Score {
                    primary: eval.objective,
                    secondary: eval.emissions.unwrap_or(0.0),
                },
                power: schedule.power,
                on,
            }))
        })
        .collect();

    let mut best: Option<PerK> = None;
    for result in per_k {
        if let Some(cand) = result? {
            if best.as_ref().is_none_or(|b| cand.score.beats(&b.score)) {
                best = Some(cand);
            }
        }
    }
    let best = best.ok_or_else(|| {
        SolveError::Infeasible("no admissible on-count yields a feasible schedule".into())
    })?;
    let schedule = schedule_from_power(best.power, &best.on, dt);
    finish(
        schedule,
        objective,
        spec,
        SolveMode::Tariff,
        counts.len(),
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flexmodel::UptimeMode;

    fn problem(rates: Vec<f64>, demand: Vec<DemandTerm>) -> Objective {
        Objective::Tariff {
            problem: TariffProblem::new(rates, demand, 0.0),
            emissions: None,
            weight: 0.0,
        }
    }

    #[test]
    fn flat_rate_without_demand_costs_rate_times_energy() {
        let spec = FlexSpec::flat(24, 1.0)
            .with_uptime(0.25, UptimeMode::Minimum)
            .with_power_capacity(1.0, PcReference::Average);
        let r = solve_tariff(&problem(vec![100.0; 24], vec![]), &spec).unwrap();
        assert!((r.objective_value - 2400.0).abs() < 1e-9);
    }

    #[test]
    fn demand_charge_favours_flat_operation() {
        let spec = FlexSpec::flat(24, 1.0)
            .with_uptime(1.0 / 24.0, UptimeMode::Free)
            .with_power_capacity(1.0, PcReference::Average);
        let obj = problem(
            vec![100.0; 24],
            vec![DemandTerm {
                rate: 10_000.0,
                window: vec![true; 24],
            }],
        );
        let r = solve_tariff(&obj, &spec).unwrap();
        assert!((r.objective_value - (2400.0 + 10_000.0)).abs() < 1e-6);
        assert!((r.schedule.peak() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tou_concentrates_off_peak() {
        let rates: Vec<f64> = (0..24)
            .map(|h| if (16..21).contains(&h) { 200.0 } else { 80.0 })
            .collect();
        let spec = FlexSpec::flat(24, 1.0)
            .with_uptime(1.0 / 24.0, UptimeMode::Free)
            .with_power_capacity(1.0, PcReference::Average);
        let r = solve_tariff(&problem(rates, vec![]), &spec).unwrap();
        assert!((r.objective_value - 80.0 * 24.0).abs() < 1e-9);
        assert!((16..21).all(|h| r.schedule.power[h] == 0.0));
    }

    #[test]
    fn level_cap_beats_both_extremes() {
        // window steps 0 and 1 interleave in cost order with steps 2 and 3
        let rates = vec![10.0, 60.0, 20.0, 70.0];
        let window = vec![true, true, false, false];
        let spec = FlexSpec::flat(4, 1.0)
            .with_uptime(1.0, UptimeMode::Exact)
            .with_power_capacity(1.0, PcReference::Average);
        let obj = problem(rates, vec![DemandTerm { rate: 60.0, window }]);
        let r = solve_tariff(&obj, &spec).unwrap();
        // cap 0 → 180, cap 2 → 180, cap 1 → 170
        assert!((r.objective_value - 170.0).abs() < 1e-9);
        let expected = [1.0, 1.0, 2.0, 0.0];
        for (p, e) in r.schedule.power.iter().zip(expected) {
            assert!((p - e).abs() < 1e-9);
        }
    }

    #[test]
    fn too_many_charges() {
        let d = DemandTerm {
            rate: 1.0,
            window: vec![true; 4],
        };
        let spec = FlexSpec::flat(4, 1.0);
        assert!(matches!(
            solve_tariff(
                &problem(vec![1.0; 4], vec![d.clone(), d.clone(), d.clone(), d]),
                &spec
            ),
            Err(SolveError::TooManyDemandCharges { count: 4, .. })
        ));
    }
}
