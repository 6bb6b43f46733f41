//! Retail tariffs: time-of-use energy charges, windowed demand charges and a
//! fixed charge, billed over one calendar month at hourly resolution.
//!
//! Tariff hours, weekdays and months are local clock time. Step `t` of a
//! billing month is hour `t % 24` of day `t / 24 + 1`.

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flexmodel::Schedule;
use crate::signals::days_in_month;

#[derive(Debug, Error)]
pub enum TariffError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{field} value {value} out of range")]
    OutOfRange { field: &'static str, value: u32 },
    #[error("{charge}: empty {field} list")]
    EmptyApplicability { charge: String, field: &'static str },
    #[error("{what} rate {rate} is not finite")]
    NonFiniteRate { what: String, rate: f64 },
    #[error("demand charge {index} has negative rate {rate}")]
    NegativeDemandRate { index: usize, rate: f64 },
    #[error("uncovered hours: month {month}, weekday {weekday}, hour {hour} has no energy charge")]
    UncoveredHours { month: u32, weekday: u32, hour: u32 },
    #[error(
        "overlapping energy periods: month {month}, weekday {weekday}, hour {hour} has {count} energy charges"
    )]
    Overlap {
        month: u32,
        weekday: u32,
        hour: u32,
        count: usize,
    },
    #[error("invalid billing month {year}-{month}")]
    BadCalendar { year: i32, month: u32 },
    #[error(
        "schedule has {schedule} steps of {dt} h; billing month needs {expected} hourly steps"
    )]
    HorizonMismatch {
        schedule: usize,
        dt: f64,
        expected: usize,
    },
}

/// Calendar month being billed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BillingMonth {
    pub year: i32,
    pub month: u32,
}

/// Local calendar position of one hourly step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepCalendar {
    pub hour: u32,
    /// Monday = 0.
    pub weekday: u32,
    pub month: u32,
}

impl BillingMonth {
    pub fn new(year: i32, month: u32) -> Result<Self, TariffError> {
        if NaiveDate::from_ymd_opt(year, month, 1).is_none() {
            return Err(TariffError::BadCalendar { year, month });
        }
        Ok(BillingMonth { year, month })
    }

    pub fn days(&self) -> u32 {
        days_in_month(self.year, self.month)
    }

    pub fn hours(&self) -> usize {
        self.days() as usize * 24
    }

    pub fn step(&self, t: usize) -> StepCalendar {
        let first = NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("validated month");
        let day = first + Duration::days((t / 24) as i64);
        StepCalendar {
            hour: (t % 24) as u32,
            weekday: day.weekday().num_days_from_monday(),
            month: day.month(),
        }
    }

    pub fn steps(&self) -> impl Iterator<Item = StepCalendar> + '_ {
        (0..self.hours()).map(|t| self.step(t))
    }
}

/// Hour-of-day × weekday × month set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Applicability {
    hours: [bool; 24],
    weekdays: [bool; 7],
    months: [bool; 12],
}

impl Applicability {
    pub fn always() -> Self {
        Applicability {
            hours: [true; 24],
            weekdays: [true; 7],
            months: [true; 12],
        }
    }

    pub fn new(hours: &[u32], weekdays: &[u32], months: &[u32]) -> Result<Self, TariffError> {
        let mut a = Applicability {
            hours: [false; 24],
            weekdays: [false; 7],
            months: [false; 12],
        };
        for &h in hours {
            *a.hours.get_mut(h as usize).ok_or(TariffError::OutOfRange {
                field: "hour",
                value: h,
            })? = true;
        }
        for &d in weekdays {
            *a.weekdays
                .get_mut(d as usize)
                .ok_or(TariffError::OutOfRange {
                    field: "weekday",
                    value: d,
                })? = true;
        }
        for &m in months {
            if m == 0 {
                return Err(TariffError::OutOfRange {
                    field: "month",
                    value: m,
                });
            }
            *a.months
                .get_mut(m as usize - 1)
                .ok_or(TariffError::OutOfRange {
                    field: "month",
                    value: m,
                })? = true;
        }
        Ok(a)
    }

    /// Hours `start..end` (end exclusive) on every day.
    pub fn hour_range(start: u32, end: u32) -> Self {
        let hours: Vec<u32> = (start..end).collect();
        let mut a = Self::always();
        a.hours = [false; 24];
        for h in hours {
            a.hours[h as usize] = true;
        }
        a
    }

    pub fn contains(&self, at: StepCalendar) -> bool {
        self.hours[at.hour as usize]
            && self.weekdays[at.weekday as usize]
            && self.months[at.month as usize - 1]
    }

    fn lists(&self) -> (Vec<u32>, Vec<u32>, Vec<u32>) {
        let pick = |flags: &[bool], offset: u32| {
            flags
                .iter()
                .enumerate()
                .filter(|(_, &on)| on)
                .map(|(i, _)| i as u32 + offset)
                .collect::<Vec<_>>()
        };
        (
            pick(&self.hours, 0),
            pick(&self.weekdays, 0),
            pick(&self.months, 1),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyCharge {
    /// $/MWh.
    pub rate: f64,
    pub applicability: Applicability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandCharge {
    /// $/MW per billing period.
    pub rate: f64,
    pub window: Applicability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tariff {
    pub name: String,
    pub fixed_charge: f64,
    pub energy_charges: Vec<EnergyCharge>,
    pub demand_charges: Vec<DemandCharge>,
}

/// JSON layout of a charge: rate plus hour/weekday/month lists. A missing
/// list means "all".
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChargeDoc {
    rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hours: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weekdays: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    months: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TariffDoc {
    name: String,
    #[serde(default)]
    fixed_charge: f64,
    energy_charges: Vec<ChargeDoc>,
    #[serde(default)]
    demand_charges: Vec<ChargeDoc>,
}

impl ChargeDoc {
    fn applicability(&self, charge: String) -> Result<Applicability, TariffError> {
        let all_hours: Vec<u32> = (0..24).collect();
        let all_days: Vec<u32> = (0..7).collect();
        let all_months: Vec<u32> = (1..=12).collect();
        let pick = |list: &Option<Vec<u32>>, all: &Vec<u32>, field| match list {
            Some(v) if v.is_empty() => Err(TariffError::EmptyApplicability {
                charge: charge.clone(),
                field,
            }),
            Some(v) => Ok(v.clone()),
            None => Ok(all.clone()),
        };
        Applicability::new(
            &pick(&self.hours, &all_hours, "hours")?,
            &pick(&self.weekdays, &all_days, "weekdays")?,
            &pick(&self.months, &all_months, "months")?,
        )
    }

    fn from_parts(rate: f64, a: &Applicability) -> Self {
        let (hours, weekdays, months) = a.lists();
        ChargeDoc {
            rate,
            hours: Some(hours),
            weekdays: Some(weekdays),
            months: Some(months),
        }
    }
}

/// Parses and validates a tariff JSON document.
pub fn parse_tariff(document: &[u8]) -> Result<Tariff, TariffError> {
    let doc: TariffDoc = serde_json::from_slice(document)?;
    let mut energy_charges = Vec::with_capacity(doc.energy_charges.len());
    for (i, c) in doc.energy_charges.iter().enumerate() {
        energy_charges.push(EnergyCharge {
            rate: c.rate,
            applicability: c.applicability(format!("energy charge {i}"))?,
        });
    }
    let mut demand_charges = Vec::with_capacity(doc.demand_charges.len());
    for (i, c) in doc.demand_charges.iter().enumerate() {
        demand_charges.push(DemandCharge {
            rate: c.rate,
            window: c.applicability(format!("demand charge {i}"))?,
        });
    }
    let tariff = Tariff {
        name: doc.name,
        fixed_charge: doc.fixed_charge,
        energy_charges,
        demand_charges,
    };
    tariff.validate()?;
    Ok(tariff)
}

/// Itemized bill for one month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillBreakdown {
    pub energy_cost: f64,
    pub demand_costs: Vec<f64>,
    pub fixed_cost: f64,
    pub total: f64,
}

impl Tariff {
    /// Checks rates and that every (month, weekday, hour) cell of the year is
    /// covered by exactly one energy charge.
    pub fn validate(&self) -> Result<(), TariffError> {
        if !self.fixed_charge.is_finite() {
            return Err(TariffError::NonFiniteRate {
                what: "fixed charge".into(),
                rate: self.fixed_charge,
            });
        }
        for (i, c) in self.energy_charges.iter().enumerate() {
            if !c.rate.is_finite() {
                return Err(TariffError::NonFiniteRate {
                    what: format!("energy charge {i}"),
                    rate: c.rate,
                });
            }
        }
        for (index, c) in self.demand_charges.iter().enumerate() {
            if !c.rate.is_finite() {
                return Err(TariffError::NonFiniteRate {
                    what: format!("demand charge {index}"),
                    rate: c.rate,
                });
            }
            if c.rate < 0.0 {
                return Err(TariffError::NegativeDemandRate {
                    index,
                    rate: c.rate,
                });
            }
        }
        for month in 1..=12 {
            for weekday in 0..7 {
                for hour in 0..24 {
                    let at = StepCalendar {
                        hour,
                        weekday,
                        month,
                    };
                    let count = self
                        .energy_charges
                        .iter()
                        .filter(|c| c.applicability.contains(at))
                        .count();
                    match count {
                        0 => {
                            return Err(TariffError::UncoveredHours {
                                month,
                                weekday,
                                hour,
                            })
                        }
                        1 => {}
                        _ => {
                            return Err(TariffError::Overlap {
                                month,
                                weekday,
                                hour,
                                count,
                            })
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = TariffDoc {
            name: self.name.clone(),
            fixed_charge: self.fixed_charge,
            energy_charges: self
                .energy_charges
                .iter()
                .map(|c| ChargeDoc::from_parts(c.rate, &c.applicability))
                .collect(),
            demand_charges: self
                .demand_charges
                .iter()
                .map(|c| ChargeDoc::from_parts(c.rate, &c.window))
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("tariff serializes")
    }

    fn rate_at(&self, at: StepCalendar) -> f64 {
        self.energy_charges
            .iter()
            .find(|c| c.applicability.contains(at))
            .map(|c| c.rate)
            .expect("validated coverage")
    }

    /// Energy rate ($/MWh) of every hourly step in the month.
    pub fn marginal_energy_rates(&self, calendar: BillingMonth) -> Vec<f64> {
        calendar.steps().map(|at| self.rate_at(at)).collect()
    }

    /// Per demand charge, which steps of the month fall inside its window.
    pub fn demand_windows(&self, calendar: BillingMonth) -> Vec<Vec<bool>> {
        self.demand_charges
            .iter()
            .map(|c| calendar.steps().map(|at| c.window.contains(at)).collect())
            .collect()
    }

    /// Bills an hourly power trace (MW) for the month.
    pub fn bill_power(
        &self,
        power: &[f64],
        calendar: BillingMonth,
    ) -> Result<BillBreakdown, TariffError> {
        if power.len() != calendar.hours() {
            return Err(TariffError::HorizonMismatch {
                schedule: power.len(),
                dt: 1.0,
                expected: calendar.hours(),
            });
        }
        let rates = self.marginal_energy_rates(calendar);
        let energy_cost: f64 = power.iter().zip(&rates).map(|(p, r)| p * r).sum();
        let demand_costs: Vec<f64> = self
            .demand_charges
            .iter()
            .zip(self.demand_windows(calendar))
            .map(|(charge, window)| {
                let peak = power
                    .iter()
                    .zip(&window)
                    .filter(|(_, &inside)| inside)
                    .map(|(&p, _)| p)
                    .fold(0.0, f64::max);
                charge.rate * peak
            })
            .collect();
        let total = energy_cost + demand_costs.iter().sum::<f64>() + self.fixed_charge;
        Ok(BillBreakdown {
            energy_cost,
            demand_costs,
            fixed_cost: self.fixed_charge,
            total,
        })
    }

    pub fn bill(
        &self,
        schedule: &Schedule,
        calendar: BillingMonth,
    ) -> Result<BillBreakdown, TariffError> {
        if schedule.dt_hours != 1.0 {
            return Err(TariffError::HorizonMismatch {
                schedule: schedule.len(),
                dt: schedule.dt_hours,
                expected: calendar.hours(),
            });
        }
        self.bill_power(&schedule.power, calendar)
    }
}
