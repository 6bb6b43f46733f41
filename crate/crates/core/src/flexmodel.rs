//! Flexibility envelope of a load, schedules, and ex-post metrics.

use std::fmt;
use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for every feasibility check, in the constraint's own
/// units (fractions for uptime/PC/EC, MWh for the energy balance).
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("length mismatch: schedule has {schedule} steps, baseline has {baseline}")]
    LengthMismatch { schedule: usize, baseline: usize },
    #[error("schedule step {schedule} h does not match spec step {spec} h")]
    StepMismatch { schedule: f64, spec: f64 },
    #[error("baseline energy is zero")]
    ZeroBaseline,
    #[error("schedule has no on-steps")]
    NoOnSteps,
    #[error("empty schedule")]
    Empty,
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("step {step}: {reason}")]
    InvalidStep { step: usize, reason: &'static str },
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UptimeMode {
    /// Exactly `round(u·T)` on-steps.
    Exact,
    /// At least `ceil(u·T)` on-steps; the count itself is optimized.
    Minimum,
    /// Any on-count from 1 to T.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcReference {
    /// Deviation measured from the mean power of the on-steps.
    Average,
    /// Deviation measured from the baseline power of the same step.
    Baseline,
}

macro_rules! str_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok($ty::$variant),)+
                    other => Err(format!(
                        "unknown {} `{}` (expected one of: {})",
                        stringify!($ty),
                        other,
                        [$($name),+].join(", ")
                    )),
                }
            }
        }
    };
}

str_enum!(UptimeMode { Exact => "exact", Minimum => "minimum", Free => "free" });
str_enum!(PcReference { Average => "average", Baseline => "baseline" });

/// Flexibility envelope: uptime, power capacity, round-trip efficiency and an
/// optional energy-capacity cap, all relative to a baseline profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlexSpec {
    pub uptime: f64,
    pub uptime_mode: UptimeMode,
    pub power_capacity: f64,
    pub pc_reference: PcReference,
    pub rte: f64,
    #[serde(default)]
    pub ec_cap: Option<f64>,
    pub baseline: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt_hours: f64,
}

fn default_dt() -> f64 {
    1.0
}

impl FlexSpec {
    /// Fully rigid envelope (uptime 1 exact, PC 0, RTE 1) around `baseline`.
    pub fn rigid(baseline: Vec<f64>) -> Self {
        FlexSpec {
            uptime: 1.0,
            uptime_mode: UptimeMode::Exact,
            power_capacity: 0.0,
            pc_reference: PcReference::Average,
            rte: 1.0,
            ec_cap: None,
            baseline,
            dt_hours: 1.0,
        }
    }

    /// Rigid envelope around a constant `mw` load for `steps` hours.
    pub fn flat(steps: usize, mw: f64) -> Self {
        Self::rigid(vec![mw; steps])
    }

    pub fn with_uptime(mut self, uptime: f64, mode: UptimeMode) -> Self {
        self.uptime = uptime;
        self.uptime_mode = mode;
        self
    }

    pub fn with_power_capacity(mut self, pc: f64, reference: PcReference) -> Self {
        self.power_capacity = pc;
        self.pc_reference = reference;
        self
    }

    pub fn with_rte(mut self, rte: f64) -> Self {
        self.rte = rte;
        self
    }

    pub fn with_ec_cap(mut self, cap: Option<f64>) -> Self {
        self.ec_cap = cap;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |name, value, reason| {
            Err(ModelError::InvalidParameter {
                name,
                value,
                reason,
            })
        };
        if !(self.uptime > 0.0 && self.uptime <= 1.0) {
            return bad("uptime", self.uptime, "must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.power_capacity) {
            return bad("power_capacity", self.power_capacity, "must lie in [0, 1]");
        }
        if !(self.rte > 0.0 && self.rte <= 1.0) {
            return bad("rte", self.rte, "must lie in (0, 1]");
        }
        if let Some(cap) = self.ec_cap {
            if !(0.0..=1.0).contains(&cap) {
                return bad("ec_cap", cap, "must lie in [0, 1]");
            }
        }
        if !(self.dt_hours > 0.0 && self.dt_hours.is_finite()) {
            return bad("dt_hours", self.dt_hours, "must be positive");
        }
        if self.baseline.is_empty() {
            return Err(ModelError::Empty);
        }
        for (step, &b) in self.baseline.iter().enumerate() {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(ModelError::InvalidStep {
                    step,
                    reason: "baseline must be finite and non-negative",
                });
            }
        }
        if self.baseline_energy() <= 0.0 {
            return Err(ModelError::ZeroBaseline);
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.baseline.len()
    }

    /// Σ p_base·Δt, MWh.
    pub fn baseline_energy(&self) -> f64 {
        self.baseline.iter().sum::<f64>() * self.dt_hours
    }

    /// Energy the flexible system must consume, Σ p_base·Δt / η.
    pub fn flexible_energy(&self) -> f64 {
        self.baseline_energy() / self.rte
    }

    /// Required Σ p over the horizon (MW summed over steps).
    pub fn target_power_sum(&self) -> f64 {
        self.baseline.iter().sum::<f64>() / self.rte
    }

    /// On-count for exact mode: `round(u·T)`, at least 1.
    pub fn exact_on_count(&self) -> usize {
        ((self.uptime * self.horizon() as f64).round() as usize).clamp(1, self.horizon())
    }

    /// Smallest on-count allowed in minimum mode: `ceil(u·T)`.
    pub fn minimum_on_count(&self) -> usize {
        ((self.uptime * self.horizon() as f64 - 1e-9).ceil() as usize).clamp(1, self.horizon())
    }

    /// On-counts the optimizer may choose from.
    pub fn admissible_on_counts(&self) -> RangeInclusive<usize> {
        let t = self.horizon();
        match self.uptime_mode {
            UptimeMode::Exact => {
                let k = self.exact_on_count();
                k..=k
            }
            UptimeMode::Minimum => self.minimum_on_count()..=t,
            UptimeMode::Free => 1..=t,
        }
    }

    /// Schedule that follows the baseline exactly.
    pub fn baseline_schedule(&self) -> Schedule {
        Schedule {
            status: self.baseline.iter().map(|&b| b > 0.0).collect(),
            power: self.baseline.clone(),
            dt_hours: self.dt_hours,
        }
    }
}

/// Per-step on/off status and net power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub status: Vec<bool>,
    pub power: Vec<f64>,
    pub dt_hours: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleRow {
    step: usize,
    status: u8,
    power_mw: f64,
}

impl Schedule {
    pub fn new(status: Vec<bool>, power: Vec<f64>, dt_hours: f64) -> Result<Self, ModelError> {
        let schedule = Schedule {
            status,
            power,
            dt_hours,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// Status is on wherever power is positive.
    pub fn from_power(power: Vec<f64>, dt_hours: f64) -> Result<Self, ModelError> {
        let status = power.iter().map(|&p| p > 0.0).collect();
        Self::new(status, power, dt_hours)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.status.len() != self.power.len() {
            return Err(ModelError::LengthMismatch {
                schedule: self.status.len(),
                baseline: self.power.len(),
            });
        }
        if !(self.dt_hours > 0.0 && self.dt_hours.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "dt_hours",
                value: self.dt_hours,
                reason: "must be positive",
            });
        }
        for (step, (&on, &p)) in self.status.iter().zip(&self.power).enumerate() {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(ModelError::InvalidStep {
                    step,
                    reason: "power must be finite and non-negative",
                });
            }
            if !on && p != 0.0 {
                return Err(ModelError::InvalidStep {
                    step,
                    reason: "power must be zero while off",
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn on_count(&self) -> usize {
        self.status.iter().filter(|&&s| s).count()
    }

    /// Σ p·Δt, MWh.
    pub fn energy(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.dt_hours
    }

    /// Σ coeff·p·Δt, summed in step order.
    pub fn dot(&self, coeffs: &[f64]) -> f64 {
        debug_assert_eq!(coeffs.len(), self.power.len());
        self.power
            .iter()
            .zip(coeffs)
            .map(|(p, c)| p * c)
            .sum::<f64>()
            * self.dt_hours
    }

    pub fn peak(&self) -> f64 {
        self.power.iter().copied().fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(writer);
        for (step, (&on, &p)) in self.status.iter().zip(&self.power).enumerate() {
            out.serialize(ScheduleRow {
                step,
                status: on as u8,
                power_mw: p,
            })?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, dt_hours: f64) -> Result<Self, ModelError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut status = Vec::new();
        let mut power = Vec::new();
        for (i, row) in rdr.deserialize::<ScheduleRow>().enumerate() {
            let row = row.map_err(|e| ModelError::Csv(e.to_string()))?;
            if row.step != i {
                return Err(ModelError::Csv(format!("row {i} has step {}", row.step)));
            }
            status.push(row.status != 0);
            power.push(row.power_mw);
        }
        Self::new(status, power, dt_hours)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintId {
    Uptime,
    PowerCapacity,
    Rte,
    Ec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintId,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn max_violation(&self) -> f64 {
        self.violations
            .iter()
            .map(|v| v.magnitude)
            .fold(0.0, f64::max)
    }
}

fn check_lengths(schedule: &Schedule, spec: &FlexSpec) -> Result<(), ModelError> {
    if schedule.len() != spec.horizon() {
        return Err(ModelError::LengthMismatch {
            schedule: schedule.len(),
            baseline: spec.horizon(),
        });
    }
    if schedule.dt_hours != spec.dt_hours {
        return Err(ModelError::StepMismatch {
            schedule: schedule.dt_hours,
            spec: spec.dt_hours,
        });
    }
    Ok(())
}

/// Largest deviation beyond what PC allows, over the on-steps.
fn pc_excess(schedule: &Schedule, spec: &FlexSpec) -> f64 {
    let k = schedule.on_count();
    if k == 0 {
        return 0.0;
    }
    let avg = schedule.power.iter().sum::<f64>() / k as f64;
    let mut worst = 0.0f64;
    for t in (0..schedule.len()).filter(|&t| schedule.status[t]) {
        let p = schedule.power[t];
        let reference = match spec.pc_reference {
            PcReference::Average => avg,
            PcReference::Baseline => spec.baseline[t],
        };
        let excess = if reference > 0.0 {
            (1.0 - p / reference).abs() - spec.power_capacity
        } else {
            // zero reference only admits zero power
            p
        };
        worst = worst.max(excess);
    }
    worst
}

/// Checks a schedule against the uptime, power-capacity, energy-balance and
/// energy-capacity constraints of `spec`.
pub fn feasible(schedule: &Schedule, spec: &FlexSpec) -> Result<FeasibilityReport, ModelError> {
    check_lengths(schedule, spec)?;
    schedule.validate()?;
    let t = schedule.len() as f64;
    let k = schedule.on_count();
    let mut violations = Vec::new();
    let mut flag = |constraint, magnitude: f64| {
        if magnitude > FEASIBILITY_TOL {
            violations.push(Violation {
                constraint,
                magnitude,
            });
        }
    };

    let uptime_gap = if k == 0 {
        1.0 / t
    } else {
        match spec.uptime_mode {
            UptimeMode::Exact => (k as f64 - spec.exact_on_count() as f64).abs() / t,
            UptimeMode::Minimum => (spec.minimum_on_count() as f64 - k as f64).max(0.0) / t,
            UptimeMode::Free => 0.0,
        }
    };
    flag(ConstraintId::Uptime, uptime_gap);
    flag(ConstraintId::PowerCapacity, pc_excess(schedule, spec));

    let balance = spec.baseline_energy() - spec.rte * schedule.energy();
    flag(ConstraintId::Rte, balance.abs());

    if let Some(cap) = spec.ec_cap {
        let ec = energy_capacity(schedule, &spec.baseline)?;
        flag(ConstraintId::Ec, ec - cap);
    }

    Ok(FeasibilityReport {
        feasible: violations.is_empty(),
        violations,
    })
}

/// Fraction of baseline energy not consumed during steps at or below
/// baseline: Σ_{p_t ≤ b_t} (b_t − p_t)Δt / Σ b_t Δt.
pub fn energy_capacity(schedule: &Schedule, baseline: &[f64]) -> Result<f64, ModelError> {
    if schedule.len() != baseline.len() {
        return Err(ModelError::LengthMismatch {
            schedule: schedule.len(),
            baseline: baseline.len(),
        });
    }
    let total: f64 = baseline.iter().sum::<f64>() * schedule.dt_hours;
    if total <= 0.0 {
        return Err(ModelError::ZeroBaseline);
    }
    let deficit: f64 = schedule
        .power
        .iter()
        .zip(baseline)
        .filter(|(p, b)| p <= b)
        .map(|(p, b)| b - p)
        .sum::<f64>()
        * schedule.dt_hours;
    Ok(deficit / total)
}

/// Σ s_t / T.
pub fn realized_uptime(schedule: &Schedule) -> Result<f64, ModelError> {
    if schedule.is_empty() {
        return Err(ModelError::Empty);
    }
    Ok(schedule.on_count() as f64 / schedule.len() as f64)
}

/// Largest |1 − p_t / ref_t| over the on-steps.
pub fn realized_power_capacity(schedule: &Schedule, spec: &FlexSpec) -> Result<f64, ModelError> {
    if schedule.is_empty() {
        return Err(ModelError::Empty);
    }
    let k = schedule.on_count();
    if k == 0 {
        return Err(ModelError::NoOnSteps);
    }
    check_lengths(schedule, spec)?;
    let avg = schedule.power.iter().sum::<f64>() / k as f64;
    let mut worst = 0.0f64;
    for t in (0..schedule.len()).filter(|&t| schedule.status[t]) {
        let reference = match spec.pc_reference {
            PcReference::Average => avg,
            PcReference::Baseline => spec.baseline[t],
        };
        if reference > 0.0 {
            worst = worst.max((1.0 - schedule.power[t] / reference).abs());
        } else if schedule.power[t] > 0.0 {
            worst = f64::INFINITY;
        }
    }
    Ok(worst)
}
