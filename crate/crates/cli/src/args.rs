//! Flag definitions shared by the subcommands.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use flexbound::flexmodel::{PcReference, UptimeMode};
use flexbound::signals::SignalKind;
use flexbound::solver::Method;

#[derive(Debug, Parser)]
#[command(
    name = "flexbound",
    version,
    about = "Value of load flexibility under prices, emissions signals and tariffs"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// JSON file of option defaults, keyed by flag name
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize one schedule and compare it with the baseline
    Solve(SolveArgs),
    /// Savings over an uptime × power-capacity grid
    Sweep(SweepArgs),
    /// Cost/emissions trade-off front
    Pareto(ParetoArgs),
    /// Abatement cost at fractions of the largest emissions reduction
    Abatement(AbatementArgs),
    /// Lowest round-trip efficiency that still yields savings
    RteThreshold(RteArgs),
    /// Bill a schedule or the baseline under a tariff
    Bill(BillArgs),
    /// Write a constant baseline load profile
    Baseline(BaselineArgs),
}

/// Comma-separated list of numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberList(pub Vec<f64>);

impl FromStr for NumberList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let values = s
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(format!("`{v}` is not a finite number")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err("list is empty".into());
        }
        Ok(NumberList(values))
    }
}

/// Calendar month written `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("`{s}` is not a YYYY-MM month");
        let (year, month) = s.trim().split_once('-').ok_or_else(bad)?;
        let year: i32 = year.parse().map_err(|_| bad())?;
        let month: u32 = month.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(YearMonth { year, month })
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Exact,
    Lagrangian,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Exact => Method::Exact,
            MethodArg::Lagrangian => Method::Lagrangian,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Hourly incentive signal (timestamp,value CSV or series JSON)
    #[arg(long, value_name = "FILE")]
    pub signal: Option<PathBuf>,
    /// Kind of --signal: dam, mef, aef or generic
    #[arg(long, default_value = "dam")]
    pub kind: SignalKind,
    /// Retail tariff JSON; needs --month
    #[arg(long, value_name = "FILE")]
    pub tariff: Option<PathBuf>,
    /// Region label fixing local time (CAISO, ERCOT, UTC-5, ...)
    #[arg(long, default_value = "UTC")]
    pub region: String,
    /// Restrict the horizon to one local calendar month
    #[arg(long, value_name = "YYYY-MM")]
    pub month: Option<YearMonth>,
    /// Replace the month by its 24-hour average day
    #[arg(long)]
    pub average_day: bool,
    /// Baseline load in MW as a timestamp,value CSV; defaults to a flat load
    #[arg(long, value_name = "FILE")]
    pub baseline: Option<PathBuf>,
    /// Level of the flat baseline, MW
    #[arg(long, default_value_t = 1.0)]
    pub baseline_mw: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    /// Uptime fraction
    #[arg(long, default_value_t = 1.0)]
    pub uptime: f64,
    /// exact, minimum or free
    #[arg(long, default_value = "exact")]
    pub uptime_mode: UptimeMode,
    /// Power capacity: allowed fractional deviation of on-step power
    #[arg(long = "pc", default_value_t = 0.0)]
    pub power_capacity: f64,
    /// average or baseline
    #[arg(long, default_value = "average")]
    pub pc_reference: PcReference,
    /// Round-trip efficiency in (0, 1]
    #[arg(long, default_value_t = 1.0)]
    pub rte: f64,
    /// Upper bound on realized energy capacity
    #[arg(long)]
    pub ec_cap: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
    pub method: MethodArg,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output directory, created if missing
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Emissions signal used to report the schedule's emissions
    #[arg(long, value_name = "FILE")]
    pub emissions: Option<PathBuf>,
    /// Kind of --emissions: mef or aef
    #[arg(long, default_value = "mef")]
    pub emissions_kind: SignalKind,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Uptime grid
    #[arg(long, default_value = "0.25,0.5,0.75,1")]
    pub u_grid: NumberList,
    /// Power-capacity grid
    #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
    pub pc_grid: NumberList,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TradeoffArgs {
    /// Price signal in $/MWh; --tariff may be given instead
    #[arg(long, value_name = "FILE")]
    pub cost: Option<PathBuf>,
    /// Emissions signal in kg/MWh
    #[arg(long, value_name = "FILE")]
    pub emissions: PathBuf,
    /// Kind of --emissions: mef or aef
    #[arg(long, default_value = "mef")]
    pub emissions_kind: SignalKind,
    /// Emissions weights in $/kg; defaults to 25 log-spaced values in [1e-3, 1e3]
    #[arg(long)]
    pub weights: Option<NumberList>,
}

#[derive(Debug, Clone, Args)]
pub struct ParetoArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub tradeoff: TradeoffArgs,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AbatementArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub tradeoff: TradeoffArgs,
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Fractions of the largest emissions reduction
    #[arg(long, default_value = "0.5,1")]
    pub fraction: NumberList,
    /// Social cost of carbon, $/ton
    #[arg(long, default_value_t = 140.0)]
    pub scc: f64,
    /// Lowest renewable energy credit price, $/MWh
    #[arg(long, default_value_t = 1.0)]
    pub rec_min: f64,
    /// Highest renewable energy credit price, $/MWh
    #[arg(long, default_value_t = 20.0)]
    pub rec_max: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RteArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Bisection tolerance on the efficiency
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Efficiencies at which to also report savings
    #[arg(long)]
    pub rte_grid: Option<NumberList>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BillArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Schedule CSV (step,status,power_mw) to bill instead of the baseline
    #[arg(long, value_name = "FILE")]
    pub schedule: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    /// Number of hourly steps; defaults to the hours of --month, else 24
    #[arg(long)]
    pub steps: Option<usize>,
    /// Load level, MW
    #[arg(long, default_value_t = 1.0)]
    pub mw: f64,
    /// First local day, YYYY-MM-DD; defaults to the first of --month
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub start: Option<chrono::NaiveDate>,
    #[arg(long, value_name = "YYYY-MM")]
    pub month: Option<YearMonth>,
    #[arg(long, default_value = "UTC")]
    pub region: String,
    #[command(flatten)]
    pub output: OutputArgs,
}
