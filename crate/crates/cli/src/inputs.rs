//! Turns file arguments into horizons, incentives and envelopes.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use chrono::{Datelike, TimeZone, Utc};

use flexbound::analysis::{CostSignal, Incentive};
use flexbound::flexmodel::FlexSpec;
use flexbound::signals::{
    load_signal, month_hour_average, SignalFormat, SignalKind, SignalSeries, Units,
};
use flexbound::tariff::{parse_tariff, BillingMonth, Tariff};

use crate::args::{SourceArgs, SpecArgs, TradeoffArgs, YearMonth};
use crate::CliError;

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })
}

fn format_of(path: &Path) -> SignalFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("json") => SignalFormat::Json,
        _ => SignalFormat::Csv,
    }
}

pub fn load_series(
    path: &Path,
    kind: SignalKind,
    units: Units,
    region: &str,
) -> Result<SignalSeries, CliError> {
    let loaded =
        load_signal(open(path)?, format_of(path), kind, units, region).map_err(|source| {
            CliError::Signal {
                path: path.to_path_buf(),
                source,
            }
        })?;
    Ok(loaded.series)
}

pub fn load_tariff(path: &Path) -> Result<Tariff, CliError> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_tariff(&bytes).map_err(|source| CliError::Tariff {
        path: path.to_path_buf(),
        source,
    })
}

pub fn billing_month(month: YearMonth) -> Result<BillingMonth, CliError> {
    Ok(BillingMonth::new(month.year, month.month)?)
}

/// Values of the local calendar month, which must be covered hour by hour.
fn month_slice(
    series: &SignalSeries,
    month: YearMonth,
    path: &Path,
) -> Result<SignalSeries, CliError> {
    let indices: Vec<usize> = (0..series.len())
        .filter(|&i| {
            let local = series.local_time(i);
            local.year() == month.year && local.month() == month.month
        })
        .collect();
    if indices.is_empty() || !series.covers_month(month.year, month.month) {
        return Err(CliError::Usage(format!(
            "{} does not cover every local hour of {month}",
            path.display()
        )));
    }
    let values = indices.iter().map(|&i| series.values[i]).collect();
    let start = series.timestamp(indices[0]);
    SignalSeries::new(
        series.kind,
        series.region.clone(),
        series.units,
        start,
        values,
    )
    .map_err(|source| CliError::Signal {
        path: path.to_path_buf(),
        source,
    })
}

/// Horizon values of a signal after the month and average-day selection.
pub fn select(
    series: &SignalSeries,
    source: &SourceArgs,
    path: &Path,
) -> Result<Vec<f64>, CliError> {
    match source.month {
        None if source.average_day => Err(CliError::Usage("--average-day needs --month".into())),
        None => Ok(series.values.clone()),
        Some(month) => {
            let slice = month_slice(series, month, path)?;
            if source.average_day {
                let profile =
                    month_hour_average(&slice, month.month).map_err(|source| CliError::Signal {
                        path: path.to_path_buf(),
                        source,
                    })?;
                Ok(profile.values)
            } else {
                Ok(slice.values)
            }
        }
    }
}

pub fn signal_values(
    path: &Path,
    kind: SignalKind,
    source: &SourceArgs,
) -> Result<Vec<f64>, CliError> {
    let series = load_series(path, kind, kind.default_units(), &source.region)?;
    select(&series, source, path)
}

/// Tariff laid out on the month named by `--month`.
pub fn tariff_problem(
    path: &Path,
    source: &SourceArgs,
) -> Result<(Tariff, BillingMonth), CliError> {
    let month = source.month.ok_or_else(|| {
        CliError::Usage("--tariff needs --month to fix the billing period".into())
    })?;
    if source.average_day {
        return Err(CliError::Usage(
            "--average-day applies to signals, not tariffs".into(),
        ));
    }
    Ok((load_tariff(path)?, billing_month(month)?))
}

pub fn incentive(source: &SourceArgs) -> Result<Incentive, CliError> {
    match (&source.signal, &source.tariff) {
        (Some(_), Some(_)) => Err(CliError::Usage(
            "give either --signal or --tariff, not both".into(),
        )),
        (None, None) => Err(CliError::Usage(
            "one of --signal or --tariff is required".into(),
        )),
        (Some(path), None) => Ok(Incentive::Signal {
            kind: source.kind,
            values: signal_values(path, source.kind, source)?,
        }),
        (None, Some(path)) => {
            let (tariff, month) = tariff_problem(path, source)?;
            Ok(Incentive::Tariff(
                flexbound::solver::TariffProblem::from_tariff(&tariff, month),
            ))
        }
    }
}

pub fn incentive_horizon(incentive: &Incentive) -> usize {
    match incentive {
        Incentive::Signal { values, .. } => values.len(),
        Incentive::Tariff(problem) => problem.horizon(),
    }
}

/// Price side of a trade-off: `--cost`, else `--signal`, else `--tariff`.
pub fn cost_signal(source: &SourceArgs, tradeoff: &TradeoffArgs) -> Result<CostSignal, CliError> {
    let price_path = tradeoff.cost.as_ref().or(source.signal.as_ref());
    match (price_path, &source.tariff) {
        (Some(_), Some(_)) => Err(CliError::Usage(
            "give either a price signal or --tariff, not both".into(),
        )),
        (None, None) => Err(CliError::Usage(
            "one of --cost or --tariff is required".into(),
        )),
        (Some(path), None) => Ok(CostSignal::Price(signal_values(
            path,
            SignalKind::DamPrice,
            source,
        )?)),
        (None, Some(path)) => {
            let (tariff, month) = tariff_problem(path, source)?;
            Ok(CostSignal::Tariff(
                flexbound::solver::TariffProblem::from_tariff(&tariff, month),
            ))
        }
    }
}

pub fn emissions_values(
    path: &Path,
    kind: SignalKind,
    source: &SourceArgs,
    horizon: usize,
) -> Result<Vec<f64>, CliError> {
    if !kind.is_emissions() {
        return Err(CliError::Usage(format!(
            "--emissions-kind must be mef or aef, not {kind}"
        )));
    }
    let values = signal_values(path, kind, source)?;
    if values.len() != horizon {
        return Err(CliError::Usage(format!(
            "{} gives {} steps but the horizon has {horizon}",
            path.display(),
            values.len()
        )));
    }
    Ok(values)
}

/// Baseline load over `horizon` steps: the `--baseline` file (taken whole
/// when its length matches, else through the month selection) or a flat
/// `--baseline-mw` load.
pub fn baseline(source: &SourceArgs, horizon: usize) -> Result<Vec<f64>, CliError> {
    let Some(path) = &source.baseline else {
        return Ok(vec![source.baseline_mw; horizon]);
    };
    let series = load_series(path, SignalKind::Generic, Units::Megawatts, &source.region)?;
    let values = if series.len() == horizon {
        series.values
    } else {
        select(&series, source, path)?
    };
    if values.len() != horizon {
        return Err(CliError::Usage(format!(
            "baseline {} gives {} steps but the horizon has {horizon}",
            path.display(),
            values.len()
        )));
    }
    Ok(values)
}

pub fn flex_spec(args: &SpecArgs, baseline: Vec<f64>) -> Result<FlexSpec, CliError> {
    let spec = FlexSpec::rigid(baseline)
        .with_uptime(args.uptime, args.uptime_mode)
        .with_power_capacity(args.power_capacity, args.pc_reference)
        .with_rte(args.rte)
        .with_ec_cap(args.ec_cap);
    spec.validate()?;
    Ok(spec)
}

/// Constant hourly load starting at local midnight of `first_day`.
pub fn flat_series(
    first_day: chrono::NaiveDate,
    steps: usize,
    mw: f64,
    region: &str,
) -> Result<SignalSeries, CliError> {
    if steps == 0 {
        return Err(CliError::Usage("--steps must be positive".into()));
    }
    if !(mw.is_finite() && mw >= 0.0) {
        return Err(CliError::Usage(format!(
            "--mw must be finite and non-negative, got {mw}"
        )));
    }
    let offset =
        chrono::Duration::hours(flexbound::signals::region_utc_offset_hours(region) as i64);
    let local = first_day.and_hms_opt(0, 0, 0).expect("midnight exists");
    let start = Utc.from_utc_datetime(&(local - offset));
    SignalSeries::new(
        SignalKind::Generic,
        region,
        Units::Megawatts,
        start,
        vec![mw; steps],
    )
    .map_err(|source| CliError::Signal {
        path: "baseline".into(),
        source,
    })
}
