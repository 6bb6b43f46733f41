//! Savings, parameter sweeps, cost/emissions trade-offs and abatement cost.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flexmodel::{energy_capacity, FlexSpec, ModelError, Schedule, UptimeMode};
use crate::signals::{HourlyProfile, SignalKind};
use crate::solver::{solve, EmissionsWeight, Method, Objective, SolveError, TariffProblem};

pub const KG_PER_TON: f64 = 1000.0;

/// Baselines closer to zero than this make percentage savings undefined.
pub const MIN_SAVINGS_BASELINE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("savings undefined for baseline {baseline}")]
    UndefinedSavings { baseline: f64 },
    #[error("{0} grid is empty")]
    EmptyGrid(&'static str),
    #[error("grid point uptime={uptime}, power_capacity={power_capacity}: {source}")]
    AtGridPoint {
        uptime: f64,
        power_capacity: f64,
        #[source]
        source: Box<AnalysisError>,
    },
    #[error("weight {weight}: {source}")]
    AtWeight {
        weight: String,
        #[source]
        source: SolveError,
    },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
    #[error("front has no points")]
    EmptyFront,
    #[error("invalid benchmark {name} = {value}")]
    InvalidBenchmark { name: &'static str, value: f64 },
    #[error("invalid search bounds: {0}")]
    InvalidSearch(&'static str),
}

/// Percent improvement of `flexible` over `baseline`; positive is better.
pub fn savings(baseline: f64, flexible: f64) -> Result<f64, AnalysisError> {
    if baseline.abs() <= MIN_SAVINGS_BASELINE || baseline.is_nan() {
        return Err(AnalysisError::UndefinedSavings { baseline });
    }
    Ok(100.0 * (baseline - flexible) / baseline)
}

/// Signal the load responds to.
#[derive(Debug, Clone, PartialEq)]
pub enum Incentive {
    /// Per-step price or emissions factor.
    Signal { kind: SignalKind, values: Vec<f64> },
    /// Retail tariff laid out on the horizon.
    Tariff(TariffProblem),
}

impl Incentive {
    pub fn label(&self) -> String {
        match self {
            Incentive::Signal { kind, .. } => kind.to_string(),
            Incentive::Tariff(_) => "tariff".into(),
        }
    }

    pub fn objective(&self) -> Objective {
        match self {
            Incentive::Signal { values, .. } => Objective::linear(values.clone()),
            Incentive::Tariff(problem) => Objective::Tariff {
                problem: problem.clone(),
                emissions: None,
                weight: 0.0,
            },
        }
    }
}

/// Baseline and optimized values of one incentive under one envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsOutcome {
    pub baseline: f64,
    pub flexible: f64,
    pub savings_pct: f64,
    pub on_count: usize,
    pub energy_capacity: f64,
    pub schedule: Schedule,
}

/// Solves `incentive` under `spec` and compares against the baseline schedule.
pub fn evaluate_savings(
    incentive: &Incentive,
    spec: &FlexSpec,
    method: Method,
) -> Result<SavingsOutcome, AnalysisError> {
    let objective = incentive.objective();
    spec.validate()?;
    objective.validate(spec.horizon())?;
    let baseline = objective.evaluate(&spec.baseline, spec.dt_hours).objective;
    let result = solve(&objective, spec, method)?;
    let energy_capacity = energy_capacity(&result.schedule, &spec.baseline)?;
    Ok(SavingsOutcome {
        baseline,
        flexible: result.objective_value,
        savings_pct: savings(baseline, result.objective_value)?,
        on_count: result.diagnostics.on_count,
        energy_capacity,
        schedule: result.schedule,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMetadata {
    pub incentive: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub month: Option<u32>,
    pub rte: f64,
    pub ec_cap: Option<f64>,
    pub uptime_mode: UptimeMode,
}

/// Savings over an uptime × power-capacity grid. `savings_pct[i][j]` is at
/// `uptimes[i]`, `power_capacities[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsSurface {
    pub uptimes: Vec<f64>,
    pub power_capacities: Vec<f64>,
    pub savings_pct: Vec<Vec<f64>>,
    pub energy_capacity: Vec<Vec<f64>>,
    pub on_counts: Vec<Vec<usize>>,
    pub metadata: SurfaceMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub incentive: String,
    pub uptime: f64,
    pub power_capacity: f64,
    pub savings_pct: f64,
    pub energy_capacity: f64,
    pub on_count: usize,
}

impl SavingsSurface {
    /// Long format, uptime-major.
    pub fn rows(&self) -> Vec<SurfaceRow> {
        let mut rows = Vec::with_capacity(self.uptimes.len() * self.power_capacities.len());
        for (i, &uptime) in self.uptimes.iter().enumerate() {
            for (j, &power_capacity) in self.power_capacities.iter().enumerate() {
                rows.push(SurfaceRow {
                    incentive: self.metadata.incentive.clone(),
                    uptime,
                    power_capacity,
                    savings_pct: self.savings_pct[i][j],
                    energy_capacity: self.energy_capacity[i][j],
                    on_count: self.on_counts[i][j],
                });
            }
        }
        rows
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        write_rows(writer, &self.rows())
    }
}

pub(crate) fn write_rows<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// One solve per (uptime, power capacity) pair, keeping the template's
/// uptime mode, reference, RTE and EC cap. Results are ordered by grid index.
pub fn sweep_surface(
    incentive: &Incentive,
    template: &FlexSpec,
    uptimes: &[f64],
    power_capacities: &[f64],
    method: Method,
) -> Result<SavingsSurface, AnalysisError> {
    if uptimes.is_empty() {
        return Err(AnalysisError::EmptyGrid("uptime"));
    }
    if power_capacities.is_empty() {
        return Err(AnalysisError::EmptyGrid("power capacity"));
    }
    let cells: Vec<(f64, f64)> = uptimes
        .iter()
        .flat_map(|&u| power_capacities.iter().map(move |&pc| (u, pc)))
        .collect();
    let outcomes: Vec<Result<SavingsOutcome, AnalysisError>> = cells
        .par_iter()
        .map(|&(uptime, power_capacity)| {
            let spec = template
                .clone()
                .with_uptime(uptime, template.uptime_mode)
                .with_power_capacity(power_capacity, template.pc_reference);
            evaluate_savings(incentive, &spec, method).map_err(|e| AnalysisError::AtGridPoint {
                uptime,
                power_capacity,
                source: Box::new(e),
            })
        })
        .collect();

    let width = power_capacities.len();
    let mut savings_pct = vec![vec![0.0; width]; uptimes.len()];
    let mut ec = vec![vec![0.0; width]; uptimes.len()];
    let mut on_counts = vec![vec![0; width]; uptimes.len()];
    for (idx, outcome) in outcomes.into_iter().enumerate() {
        let outcome = outcome?;
        let (i, j) = (idx / width, idx % width);
        savings_pct[i][j] = outcome.savings_pct;
        ec[i][j] = outcome.energy_capacity;
        on_counts[i][j] = outcome.on_count;
    }
    Ok(SavingsSurface {
        uptimes: uptimes.to_vec(),
        power_capacities: power_capacities.to_vec(),
        savings_pct,
        energy_capacity: ec,
        on_counts,
        metadata: SurfaceMetadata {
            incentive: incentive.label(),
            region: None,
            month: None,
            rte: template.rte,
            ec_cap: template.ec_cap,
            uptime_mode: template.uptime_mode,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtePoint {
    pub rte: f64,
    pub savings_pct: f64,
    pub energy_capacity: f64,
}

/// Savings and realized energy capacity as the round-trip efficiency varies.
pub fn rte_sweep(
    incentive: &Incentive,
    template: &FlexSpec,
    rtes: &[f64],
    method: Method,
) -> Result<Vec<RtePoint>, AnalysisError> {
    if rtes.is_empty() {
        return Err(AnalysisError::EmptyGrid("rte"));
    }
    rtes.par_iter()
        .map(|&rte| {
            let outcome = evaluate_savings(incentive, &template.clone().with_rte(rte), method)?;
            Ok(RtePoint {
                rte,
                savings_pct: outcome.savings_pct,
                energy_capacity: outcome.energy_capacity,
            })
        })
        .collect()
}

/// Cost side of a cost/emissions trade-off.
#[derive(Debug, Clone, PartialEq)]
pub enum CostSignal {
    /// Per-step price, $/MWh.
    Price(Vec<f64>),
    Tariff(TariffProblem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    /// Emissions weight in $/kg; `None` for the emissions-only solve.
    pub weight: Option<f64>,
    pub cost: f64,
    pub emissions: f64,
    pub schedule: Schedule,
}

/// Mutually non-dominated points sorted by emissions descending, so the
/// first point is cost-optimal and the last is emissions-optimal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub points: Vec<ParetoPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub weight: Option<f64>,
    pub cost: f64,
    pub emissions: f64,
    pub on_count: usize,
}

impl ParetoFront {
    pub fn cost_optimal(&self) -> Option<&ParetoPoint> {
        self.points.first()
    }

    pub fn emissions_optimal(&self) -> Option<&ParetoPoint> {
        self.points.last()
    }

    pub fn rows(&self) -> Vec<ParetoRow> {
        self.points
            .iter()
            .map(|p| ParetoRow {
                weight: p.weight,
                cost: p.cost,
                emissions: p.emissions,
                on_count: p.schedule.on_count(),
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        write_rows(writer, &self.rows())
    }
}

/// 25 weights log-spaced over [1e-3, 1e3] $/kg.
pub fn default_weights() -> Vec<f64> {
    (0..25)
        .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 24.0))
        .collect()
}

fn weighted_objective(cost: &CostSignal, emissions: &[f64], weight: Option<f64>) -> Objective {
    match (cost, weight) {
        (CostSignal::Price(price), Some(w)) => Objective::weighted(
            price.clone(),
            emissions.to_vec(),
            EmissionsWeight::Finite(w),
        ),
        (CostSignal::Price(price), None) => Objective::weighted(
            price.clone(),
            emissions.to_vec(),
            EmissionsWeight::EmissionsOnly,
        ),
        (CostSignal::Tariff(problem), Some(w)) => Objective::Tariff {
            problem: problem.clone(),
            emissions: Some(emissions.to_vec()),
            weight: w,
        },
        // energy rates break ties among emissions-optimal schedules
        (CostSignal::Tariff(problem), None) => Objective::weighted(
            problem.energy_rates.clone(),
            emissions.to_vec(),
            EmissionsWeight::EmissionsOnly,
        ),
    }
}

fn tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Solves cost + λ·emissions for λ = 0, each of `weights`, and the
/// emissions-only limit, then prunes dominated and duplicate points.
pub fn pareto_front(
    cost: &CostSignal,
    emissions: &[f64],
    spec: &FlexSpec,
    weights: &[f64],
    method: Method,
) -> Result<ParetoFront, AnalysisError> {
    let mut schedule_weights: Vec<Option<f64>> = vec![Some(0.0)];
    schedule_weights.extend(weights.iter().filter(|&&w| w > 0.0).map(|&w| Some(w)));
    schedule_weights.push(None);

    let solved: Vec<Result<ParetoPoint, AnalysisError>> = schedule_weights
        .par_iter()
        .map(|&weight| {
            let objective = weighted_objective(cost, emissions, weight);
            let result =
                solve(&objective, spec, method).map_err(|source| AnalysisError::AtWeight {
                    weight: weight.map_or("emissions-only".into(), |w| w.to_string()),
                    source,
                })?;
            let power = &result.schedule.power;
            let cost_value = match cost {
                CostSignal::Price(price) => {
                    Objective::linear(price.clone())
                        .evaluate(power, spec.dt_hours)
                        .objective
                }
                CostSignal::Tariff(problem) => problem.bill(power, spec.dt_hours),
            };
            let emissions_value = Objective::linear(emissions.to_vec())
                .evaluate(power, spec.dt_hours)
                .objective;
            Ok(ParetoPoint {
                weight,
                cost: cost_value,
                emissions: emissions_value,
                schedule: result.schedule,
            })
        })
        .collect();
    let solved: Vec<ParetoPoint> = solved.into_iter().collect::<Result<_, _>>()?;

    let mut kept: Vec<ParetoPoint> = Vec::new();
    for (i, p) in solved.iter().enumerate() {
        let dominated = solved.iter().enumerate().any(|(j, q)| {
            if i == j {
                return false;
            }
            let no_worse = (q.cost < p.cost || tie(q.cost, p.cost))
                && (q.emissions < p.emissions || tie(q.emissions, p.emissions));
            let same = tie(q.cost, p.cost) && tie(q.emissions, p.emissions);
            no_worse && (!same || j < i)
        });
        if !dominated {
            kept.push(p.clone());
        }
    }
    kept.sort_by(|a, b| {
        b.emissions
            .total_cmp(&a.emissions)
            .then(a.cost.total_cmp(&b.cost))
    });
    Ok(ParetoFront { points: kept })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbatementResult {
    /// $/ton CO2.
    pub cost_per_ton: f64,
    pub fraction_abated: f64,
    /// Index of the first front point at or beyond the target reduction.
    pub anchor: usize,
    pub cost_increase: f64,
    /// kg.
    pub emissions_reduction: f64,
    /// Cost- and emissions-optimal operation coincide.
    pub no_tradeoff: bool,
}

/// Negative average slope of the front between the cost-optimal point and
/// the point achieving `fraction` of the largest emissions reduction, in
/// $/ton. Intermediate targets interpolate linearly between front points.
pub fn abatement_cost(
    front: &ParetoFront,
    fraction: f64,
) -> Result<AbatementResult, AnalysisError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(AnalysisError::InvalidFraction(fraction));
    }
    let first = front.points.first().ok_or(AnalysisError::EmptyFront)?;
    let last = front.points.last().expect("non-empty");
    let (c_star, e_star) = (first.cost, first.emissions);
    let span = e_star - last.emissions;
    if front.points.len() < 2 || tie(e_star, last.emissions) || span <= 0.0 {
        return Ok(AbatementResult {
            cost_per_ton: 0.0,
            fraction_abated: fraction,
            anchor: 0,
            cost_increase: 0.0,
            emissions_reduction: 0.0,
            no_tradeoff: true,
        });
    }
    let target = e_star - fraction * span;
    let mut anchor = front.points.len() - 1;
    let mut cost_at = last.cost;
    for i in 1..front.points.len() {
        let (a, b) = (&front.points[i - 1], &front.points[i]);
        if b.emissions <= target {
            let t = if a.emissions > b.emissions {
                (a.emissions - target) / (a.emissions - b.emissions)
            } else {
                1.0
            };
            cost_at = a.cost + t * (b.cost - a.cost);
            anchor = i;
            break;
        }
    }
    let cost_increase = cost_at - c_star;
    let emissions_reduction = e_star - target;
    Ok(AbatementResult {
        cost_per_ton: -(cost_increase) / (target - e_star) * KG_PER_TON,
        fraction_abated: fraction,
        anchor,
        cost_increase,
        emissions_reduction,
        no_tradeoff: false,
    })
}

/// Reference prices for carbon abatement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Benchmarks {
    /// Social cost of carbon, $/ton.
    pub scc: f64,
    /// Renewable energy credit prices, $/MWh.
    pub rec_price_min: f64,
    pub rec_price_max: f64,
}

impl Default for Benchmarks {
    fn default() -> Self {
        Benchmarks {
            scc: 140.0,
            rec_price_min: 1.0,
            rec_price_max: 20.0,
        }
    }
}

impl Benchmarks {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        for (name, value) in [
            ("scc", self.scc),
            ("rec_price_min", self.rec_price_min),
            ("rec_price_max", self.rec_price_max),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(AnalysisError::InvalidBenchmark { name, value });
            }
        }
        if self.rec_price_min > self.rec_price_max {
            return Err(AnalysisError::InvalidBenchmark {
                name: "rec_price_min",
                value: self.rec_price_min,
            });
        }
        Ok(())
    }

    /// REC prices converted to $/ton at the profile's mean emissions factor.
    pub fn rec_per_ton_range(&self, profile: &HourlyProfile) -> Option<(f64, f64)> {
        self.rec_per_ton_at(profile.mean())
    }

    /// REC prices converted to $/ton at an emissions factor of
    /// `factor` kg/MWh; `None` unless the factor is positive.
    pub fn rec_per_ton_at(&self, factor: f64) -> Option<(f64, f64)> {
        (factor > 0.0).then(|| {
            (
                self.rec_price_min * KG_PER_TON / factor,
                self.rec_price_max * KG_PER_TON / factor,
            )
        })
    }
}

/// $/ton a REC at `rec_price` $/MWh buys in each hour of `profile`
/// (kg/MWh). Hours with a zero factor are `None`.
pub fn rec_equivalent(
    rec_price: f64,
    profile: &HourlyProfile,
) -> Result<Vec<Option<f64>>, AnalysisError> {
    if !(rec_price >= 0.0 && rec_price.is_finite()) {
        return Err(AnalysisError::InvalidBenchmark {
            name: "rec_price",
            value: rec_price,
        });
    }
    Ok(profile
        .values
        .iter()
        .map(|&ef| (ef > 0.0).then(|| rec_price * KG_PER_TON / ef))
        .collect())
}

/// Lowest η explored by [`min_viable_rte`].
pub const MIN_RTE_SEARCH: f64 = 1e-3;

/// Smallest round-trip efficiency at which flexible operation still beats
/// the baseline, to within `tolerance`. Returns 1.0 when there is no benefit
/// even at η = 1, and [`MIN_RTE_SEARCH`] when savings stay positive there.
pub fn min_viable_rte(
    incentive: &Incentive,
    spec: &FlexSpec,
    tolerance: f64,
    method: Method,
) -> Result<f64, AnalysisError> {
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(AnalysisError::InvalidSearch("tolerance must lie in (0, 1)"));
    }
    let at = |rte: f64| {
        evaluate_savings(incentive, &spec.clone().with_rte(rte), method).map(|o| o.savings_pct)
    };
    if at(1.0)? <= 0.0 {
        return Ok(1.0);
    }
    if at(MIN_RTE_SEARCH)? > 0.0 {
        return Ok(MIN_RTE_SEARCH);
    }
    let (mut lo, mut hi) = (MIN_RTE_SEARCH, 1.0);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if at(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
