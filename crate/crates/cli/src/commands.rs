//! Subcommand bodies.

use std::io::Write;

use chrono::NaiveDate;
use serde::Serialize;

use flexbound::analysis::{
    abatement_cost, default_weights, min_viable_rte, pareto_front, rte_sweep, savings,
    sweep_surface, Benchmarks, CostSignal, Incentive, ParetoFront, ParetoRow, RtePoint,
};
use flexbound::flexmodel::{
    energy_capacity, realized_power_capacity, realized_uptime, FlexSpec, Schedule,
};
use flexbound::solver::{solve, Diagnostics, Method, Objective};
use flexbound::tariff::BillBreakdown;

use crate::args::{
    AbatementArgs, BaselineArgs, BillArgs, Command, OutputArgs, ParetoArgs, RteArgs, SolveArgs,
    SourceArgs, SweepArgs, TradeoffArgs,
};
use crate::inputs;
use crate::report::{fmt2, print_table, print_written, OutputDir};
use crate::{Cli, CliError};

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Solve(args) => run_solve(args, out),
        Command::Sweep(args) => run_sweep(args, out),
        Command::Pareto(args) => run_pareto(args, out),
        Command::Abatement(args) => run_abatement(args, out),
        Command::RteThreshold(args) => run_rte_threshold(args, out),
        Command::Bill(args) => run_bill(args, out),
        Command::Baseline(args) => run_baseline(args, out),
    }
}

fn output_dir(args: &OutputArgs) -> Result<OutputDir, CliError> {
    OutputDir::create(&args.out, args.format)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Serialize)]
struct Totals {
    objective: f64,
    /// $.
    cost: Option<f64>,
    /// kg CO2.
    emissions: Option<f64>,
    energy_mwh: f64,
}

fn totals(
    incentive: &Incentive,
    objective: &Objective,
    emissions: Option<&[f64]>,
    power: &[f64],
    dt: f64,
) -> Totals {
    let eval = objective.evaluate(power, dt);
    let (cost, direct_emissions) = match incentive {
        Incentive::Signal { kind, .. } if kind.is_emissions() => (None, Some(eval.objective)),
        Incentive::Signal { .. } => (Some(eval.objective), None),
        Incentive::Tariff(_) => (eval.cost, None),
    };
    Totals {
        objective: eval.objective,
        cost,
        emissions: direct_emissions.or_else(|| emissions.map(|e| dot(e, power) * dt)),
        energy_mwh: power.iter().sum::<f64>() * dt,
    }
}

#[derive(Debug, Serialize)]
struct Realized {
    uptime: f64,
    power_capacity: f64,
    energy_capacity: f64,
    on_count: usize,
}

#[derive(Debug, Serialize)]
struct SolveReport<'a> {
    incentive: String,
    horizon: usize,
    method: Method,
    spec: &'a FlexSpec,
    baseline: Totals,
    flexible: Totals,
    /// Absent when the baseline objective is zero.
    savings_pct: Option<f64>,
    realized: Realized,
    diagnostics: &'a Diagnostics,
    schedule: &'a Schedule,
}

fn run_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let incentive = inputs::incentive(&args.source)?;
    let horizon = inputs::incentive_horizon(&incentive);
    let spec = inputs::flex_spec(&args.spec, inputs::baseline(&args.source, horizon)?)?;
    let emissions = args
        .emissions
        .as_ref()
        .map(|path| inputs::emissions_values(path, args.emissions_kind, &args.source, horizon))
        .transpose()?;
    let method = Method::from(args.spec.method);
    let objective = incentive.objective();
    let result = solve(&objective, &spec, method)?;
    let dt = spec.dt_hours;
    let baseline = totals(
        &incentive,
        &objective,
        emissions.as_deref(),
        &spec.baseline,
        dt,
    );
    let flexible = totals(
        &incentive,
        &objective,
        emissions.as_deref(),
        &result.schedule.power,
        dt,
    );
    let realized = Realized {
        uptime: realized_uptime(&result.schedule)?,
        power_capacity: realized_power_capacity(&result.schedule, &spec)?,
        energy_capacity: energy_capacity(&result.schedule, &spec.baseline)?,
        on_count: result.schedule.on_count(),
    };
    let report = SolveReport {
        incentive: incentive.label(),
        horizon,
        method,
        spec: &spec,
        savings_pct: savings(baseline.objective, flexible.objective).ok(),
        baseline,
        flexible,
        realized,
        diagnostics: &result.diagnostics,
        schedule: &result.schedule,
    };

    let mut dir = output_dir(&args.output)?;
    dir.json("result.json", &report)?;
    if dir.format == crate::args::OutputFormat::Csv {
        dir.raw("schedule.csv", |w| Ok(result.schedule.write_csv(w)?))?;
    }

    writeln!(
        out,
        "{} over {} steps, {} solver",
        report.incentive, horizon, report.diagnostics.mode
    )?;
    let pair = |label: &str, f: fn(&Totals) -> Option<f64>| {
        vec![
            label.to_string(),
            fmt2(f(&report.baseline)),
            fmt2(f(&report.flexible)),
        ]
    };
    let single = |label: &str, v: Option<f64>| vec![label.to_string(), String::new(), fmt2(v)];
    let rows = vec![
        pair("objective", |t| Some(t.objective)),
        pair("cost ($)", |t| t.cost),
        pair("emissions (kg)", |t| t.emissions),
        pair("energy (MWh)", |t| Some(t.energy_mwh)),
        single("savings (%)", report.savings_pct),
        single("realized uptime", Some(report.realized.uptime)),
        single(
            "realized power capacity",
            Some(report.realized.power_capacity),
        ),
        single("energy capacity", Some(report.realized.energy_capacity)),
    ];
    print_table(out, &["", "baseline", "flexible"], &rows)?;
    print_written(out, &dir)?;
    Ok(())
}

fn run_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let incentive = inputs::incentive(&args.source)?;
    let horizon = inputs::incentive_horizon(&incentive);
    let template = inputs::flex_spec(&args.spec, inputs::baseline(&args.source, horizon)?)?;
    let mut surface = sweep_surface(
        &incentive,
        &template,
        &args.u_grid.0,
        &args.pc_grid.0,
        args.spec.method.into(),
    )?;
    if args.source.signal.is_some() {
        surface.metadata.region = Some(args.source.region.clone());
    }
    surface.metadata.month = args.source.month.map(|m| m.month);

    let mut dir = output_dir(&args.output)?;
    dir.table("surface", &surface, &surface.rows())?;

    writeln!(
        out,
        "savings (%) for {} over {horizon} steps, {} uptime",
        surface.metadata.incentive, template.uptime_mode
    )?;
    let mut header = vec!["uptime \\ pc".to_string()];
    header.extend(surface.power_capacities.iter().map(|pc| format!("{pc}")));
    let rows: Vec<Vec<String>> = surface
        .uptimes
        .iter()
        .zip(&surface.savings_pct)
        .map(|(u, row)| {
            let mut cells = vec![format!("{u}")];
            cells.extend(row.iter().map(|&s| fmt2(Some(s))));
            cells
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    print_table(out, &header, &rows)?;
    print_written(out, &dir)?;
    Ok(())
}

/// Front for the cost side of `source`/`tradeoff` and the horizon emissions
/// factors.
fn build_front(
    source: &SourceArgs,
    tradeoff: &TradeoffArgs,
    spec_args: &crate::args::SpecArgs,
) -> Result<(ParetoFront, Vec<f64>), CliError> {
    let cost = inputs::cost_signal(source, tradeoff)?;
    let horizon = match &cost {
        CostSignal::Price(values) => values.len(),
        CostSignal::Tariff(problem) => problem.horizon(),
    };
    let emissions = inputs::emissions_values(
        &tradeoff.emissions,
        tradeoff.emissions_kind,
        source,
        horizon,
    )?;
    let spec = inputs::flex_spec(spec_args, inputs::baseline(source, horizon)?)?;
    let weights = tradeoff
        .weights
        .as_ref()
        .map(|w| w.0.clone())
        .unwrap_or_else(default_weights);
    let front = pareto_front(&cost, &emissions, &spec, &weights, spec_args.method.into())?;
    Ok((front, emissions))
}

fn print_front(out: &mut dyn Write, rows: &[ParetoRow]) -> std::io::Result<()> {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.weight
                    .map_or_else(|| "emissions only".into(), |w| format!("{w:.4}")),
                fmt2(Some(r.cost)),
                fmt2(Some(r.emissions)),
                r.on_count.to_string(),
            ]
        })
        .collect();
    print_table(
        out,
        &["weight ($/kg)", "cost ($)", "emissions (kg)", "on-steps"],
        &cells,
    )
}

fn run_pareto(args: &ParetoArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (front, _) = build_front(&args.source, &args.tradeoff, &args.spec)?;
    let rows = front.rows();
    let mut dir = output_dir(&args.output)?;
    dir.table("pareto", &front, &rows)?;
    writeln!(out, "{} non-dominated points", rows.len())?;
    print_front(out, &rows)?;
    print_written(out, &dir)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct AbatementRow {
    fraction: f64,
    /// $/ton CO2.
    cost_per_ton: f64,
    cost_increase: f64,
    emissions_reduction_kg: f64,
    no_tradeoff: bool,
    scc: f64,
    rec_price_min: f64,
    rec_price_max: f64,
    rec_per_ton_min: Option<f64>,
    rec_per_ton_max: Option<f64>,
}

#[derive(Debug, Serialize)]
struct AbatementReport {
    benchmarks: Benchmarks,
    /// kg/MWh over the horizon.
    mean_emissions_factor: f64,
    rows: Vec<AbatementRow>,
    front: Vec<ParetoRow>,
}

fn run_abatement(args: &AbatementArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let benchmarks = Benchmarks {
        scc: args.scc,
        rec_price_min: args.rec_min,
        rec_price_max: args.rec_max,
    };
    benchmarks.validate()?;
    let (front, emissions) = build_front(&args.source, &args.tradeoff, &args.spec)?;
    let mean_factor = emissions.iter().sum::<f64>() / emissions.len() as f64;
    let rec = benchmarks.rec_per_ton_at(mean_factor);
    let rows = args
        .fraction
        .0
        .iter()
        .map(|&fraction| {
            let r = abatement_cost(&front, fraction)?;
            Ok(AbatementRow {
                fraction,
                cost_per_ton: r.cost_per_ton,
                cost_increase: r.cost_increase,
                emissions_reduction_kg: r.emissions_reduction,
                no_tradeoff: r.no_tradeoff,
                scc: benchmarks.scc,
                rec_price_min: benchmarks.rec_price_min,
                rec_price_max: benchmarks.rec_price_max,
                rec_per_ton_min: rec.map(|r| r.0),
                rec_per_ton_max: rec.map(|r| r.1),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = AbatementReport {
        benchmarks,
        mean_emissions_factor: mean_factor,
        rows,
        front: front.rows(),
    };

    let mut dir = output_dir(&args.output)?;
    dir.table("abatement", &report, &report.rows)?;
    if dir.format == crate::args::OutputFormat::Csv {
        dir.csv_rows("pareto.csv", &report.front)?;
    }

    let cells: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                format!("{}", r.fraction),
                fmt2(Some(r.cost_per_ton)),
                fmt2(Some(r.cost_increase)),
                fmt2(Some(r.emissions_reduction_kg)),
            ]
        })
        .collect();
    print_table(
        out,
        &[
            "fraction abated",
            "cost ($/ton)",
            "cost increase ($)",
            "reduction (kg)",
        ],
        &cells,
    )?;
    if report.rows.iter().any(|r| r.no_tradeoff) {
        writeln!(out, "cost-optimal operation is already emissions-optimal")?;
    }
    writeln!(out, "social cost of carbon: {:.2} $/ton", benchmarks.scc)?;
    write!(
        out,
        "renewable energy credits: {:.2} to {:.2} $/MWh",
        benchmarks.rec_price_min, benchmarks.rec_price_max
    )?;
    match rec {
        Some((lo, hi)) => writeln!(
            out,
            " ({lo:.2} to {hi:.2} $/ton at {mean_factor:.2} kg/MWh)"
        )?,
        None => writeln!(out)?,
    }
    print_written(out, &dir)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct RteReport {
    incentive: String,
    min_viable_rte: f64,
    tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<Vec<RtePoint>>,
}

#[derive(Debug, Serialize)]
struct RteRow<'a> {
    incentive: &'a str,
    min_viable_rte: f64,
    tolerance: f64,
}

fn run_rte_threshold(args: &RteArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let incentive = inputs::incentive(&args.source)?;
    let horizon = inputs::incentive_horizon(&incentive);
    let spec = inputs::flex_spec(&args.spec, inputs::baseline(&args.source, horizon)?)?;
    let method: Method = args.spec.method.into();
    let threshold = min_viable_rte(&incentive, &spec, args.tolerance, method)?;
    let sweep = args
        .rte_grid
        .as_ref()
        .map(|grid| rte_sweep(&incentive, &spec, &grid.0, method))
        .transpose()?;
    let report = RteReport {
        incentive: incentive.label(),
        min_viable_rte: threshold,
        tolerance: args.tolerance,
        sweep,
    };

    let mut dir = output_dir(&args.output)?;
    let row = RteRow {
        incentive: &report.incentive,
        min_viable_rte: threshold,
        tolerance: args.tolerance,
    };
    dir.table("rte_threshold", &report, &[row])?;
    if let (crate::args::OutputFormat::Csv, Some(points)) = (dir.format, &report.sweep) {
        dir.csv_rows("rte_sweep.csv", points)?;
    }

    writeln!(
        out,
        "minimum viable round-trip efficiency for {}: {threshold:.4} (tolerance {})",
        report.incentive, args.tolerance
    )?;
    if let Some(points) = &report.sweep {
        let cells: Vec<Vec<String>> = points
            .iter()
            .map(|p| {
                vec![
                    format!("{}", p.rte),
                    fmt2(Some(p.savings_pct)),
                    fmt2(Some(p.energy_capacity)),
                ]
            })
            .collect();
        print_table(out, &["rte", "savings (%)", "energy capacity"], &cells)?;
    }
    print_written(out, &dir)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct BillReport {
    tariff: String,
    month: String,
    energy_mwh: f64,
    peak_mw: f64,
    bill: BillBreakdown,
}

#[derive(Debug, Serialize)]
struct BillRow {
    component: String,
    amount: f64,
}

fn run_bill(args: &BillArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let path = args
        .source
        .tariff
        .as_ref()
        .ok_or_else(|| CliError::Usage("bill needs --tariff".into()))?;
    let (tariff, month) = inputs::tariff_problem(path, &args.source)?;
    let power = match &args.schedule {
        Some(schedule_path) => {
            let file = std::fs::File::open(schedule_path).map_err(|source| CliError::Read {
                path: schedule_path.clone(),
                source,
            })?;
            Schedule::read_csv(file, 1.0)
                .map_err(|source| CliError::Schedule {
                    path: schedule_path.clone(),
                    source,
                })?
                .power
        }
        None => inputs::baseline(&args.source, month.hours())?,
    };
    let bill = tariff.bill_power(&power, month)?;
    let report = BillReport {
        tariff: tariff.name.clone(),
        month: args.source.month.map(|m| m.to_string()).unwrap_or_default(),
        energy_mwh: power.iter().sum(),
        peak_mw: power.iter().copied().fold(0.0, f64::max),
        bill,
    };
    let mut rows = vec![BillRow {
        component: "energy".into(),
        amount: report.bill.energy_cost,
    }];
    rows.extend(
        report
            .bill
            .demand_costs
            .iter()
            .enumerate()
            .map(|(i, &amount)| BillRow {
                component: format!("demand_{}", i + 1),
                amount,
            }),
    );
    rows.push(BillRow {
        component: "fixed".into(),
        amount: report.bill.fixed_cost,
    });
    rows.push(BillRow {
        component: "total".into(),
        amount: report.bill.total,
    });

    let mut dir = output_dir(&args.output)?;
    dir.table("bill", &report, &rows)?;
    writeln!(
        out,
        "{} for {}: {:.2} MWh, peak {:.2} MW",
        report.tariff, report.month, report.energy_mwh, report.peak_mw
    )?;
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.component.clone(), fmt2(Some(r.amount))])
        .collect();
    print_table(out, &["component", "amount ($)"], &cells)?;
    print_written(out, &dir)?;
    Ok(())
}

fn run_baseline(args: &BaselineArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let month_start = args
        .month
        .map(|m| NaiveDate::from_ymd_opt(m.year, m.month, 1).expect("validated month"));
    let first_day = args
        .start
        .or(month_start)
        .unwrap_or_else(|| NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date"));
    let steps = match (args.steps, args.month) {
        (Some(steps), _) => steps,
        (None, Some(m)) => inputs::billing_month(m)?.hours(),
        (None, None) => 24,
    };
    let series = inputs::flat_series(first_day, steps, args.mw, &args.region)?;
    let mut dir = output_dir(&args.output)?;
    match dir.format {
        crate::args::OutputFormat::Csv => dir.raw("baseline.csv", |w| {
            series.write_csv(w).map_err(|source| CliError::Signal {
                path: "baseline.csv".into(),
                source,
            })
        })?,
        crate::args::OutputFormat::Json => dir.raw("baseline.json", |w| {
            let text = series.to_json().map_err(|source| CliError::Signal {
                path: "baseline.json".into(),
                source,
            })?;
            writeln!(w, "{text}")?;
            Ok(())
        })?,
    }
    writeln!(
        out,
        "{steps} steps at {:.2} MW from {first_day}: {:.2} MWh",
        args.mw,
        series.values.iter().sum::<f64>()
    )?;
    print_written(out, &dir)?;
    Ok(())
}
