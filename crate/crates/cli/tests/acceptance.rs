//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the console.

use std::cell::Cell;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use flexbound::analysis::{
    abatement_cost, evaluate_savings, min_viable_rte, pareto_front, savings, CostSignal, Incentive,
};
use flexbound::flexmodel::{feasible, FlexSpec, PcReference, Schedule, UptimeMode};
use flexbound::signals::SignalKind;
use flexbound::solver::{
    brute_force, solve, solve_lagrangian, solve_tariff, LagrangianOptions, Method, Objective,
    SolveError, TariffProblem,
};
use flexbound::tariff::{parse_tariff, BillingMonth};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

thread_local! {
    static WORST_ENERGY_ERROR: Cell<f64> = const { Cell::new(0.0) };
    static SCHEDULES_CHECKED: Cell<usize> = const { Cell::new(0) };
}

/// Records the relative energy balance error of an emitted schedule.
fn track(schedule: &Schedule, spec: &FlexSpec) {
    let target = spec.flexible_energy();
    let err = (schedule.energy() - target).abs() / target.abs().max(f64::MIN_POSITIVE);
    WORST_ENERGY_ERROR.with(|w| w.set(w.get().max(err)));
    SCHEDULES_CHECKED.with(|n| n.set(n.get() + 1));
}

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn price(values: Vec<f64>) -> Incentive {
    Incentive::Signal {
        kind: SignalKind::DamPrice,
        values,
    }
}

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let pcs = [0.0, 0.25, 0.5, 1.0];
    let rtes = [0.65, 0.85, 1.0];
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let horizon = rng.random_range(1..=10);
        let baseline: Vec<f64> = if rng.random_bool(0.5) {
            vec![rng.random_range(0.5..3.0); horizon]
        } else {
            (0..horizon).map(|_| rng.random_range(0.2..3.0)).collect()
        };
        let mode = if i % 2 == 0 {
            UptimeMode::Exact
        } else {
            UptimeMode::Minimum
        };
        let spec = FlexSpec::rigid(baseline)
            .with_uptime(rng.random_range(1..=horizon) as f64 / horizon as f64, mode)
            .with_power_capacity(pcs[rng.random_range(0..4)], PcReference::Average)
            .with_rte(rtes[rng.random_range(0..3)]);
        let coeffs: Vec<f64> = (0..horizon)
            .map(|_| rng.random_range(-50.0..150.0))
            .collect();
        let objective = Objective::linear(coeffs);
        let fast =
            solve(&objective, &spec, Method::Exact).map_err(|e| format!("instance {i}: {e}"))?;
        let oracle =
            brute_force(&objective, &spec).map_err(|e| format!("instance {i} oracle: {e}"))?;
        track(&fast.schedule, &spec);
        track(&oracle.schedule, &spec);
        let scale = fast
            .objective_value
            .abs()
            .max(oracle.objective_value.abs())
            .max(1.0);
        worst = worst.max((fast.objective_value - oracle.objective_value).abs() / scale);
        if !rel_close(fast.objective_value, oracle.objective_value, 1e-9) {
            return Err(format!(
                "instance {i}: solver {} vs oracle {}",
                fast.objective_value, oracle.objective_value
            ));
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    if elapsed >= 60.0 {
        return Err(format!("1000 instances took {elapsed:.1} s"));
    }
    Ok(format!(
        "1000 instances, worst relative gap {worst:.1e}, {elapsed:.2} s"
    ))
}

fn shipped_incentives() -> Result<Vec<(String, Incentive)>, String> {
    use flexbound::signals::{load_signal, SignalFormat};
    let mut out = Vec::new();
    for (name, kind) in [
        ("dam_2023-07.csv", SignalKind::DamPrice),
        ("mef_2023-07.csv", SignalKind::Mef),
        ("aef_2023-07.csv", SignalKind::Aef),
    ] {
        let file =
            std::fs::File::open(data_dir().join(name)).map_err(|e| format!("{name}: {e}"))?;
        let series = load_signal(file, SignalFormat::Csv, kind, kind.default_units(), "CAISO")
            .map_err(|e| format!("{name}: {e}"))?
            .series;
        out.push((
            name.to_string(),
            Incentive::Signal {
                kind,
                values: series.values,
            },
        ));
    }
    for name in ["tariff_tou_demand.json", "tariff_flat.json"] {
        let bytes = std::fs::read(data_dir().join(name)).map_err(|e| format!("{name}: {e}"))?;
        let tariff = parse_tariff(&bytes).map_err(|e| format!("{name}: {e}"))?;
        let month = BillingMonth::new(2023, 7).map_err(|e| e.to_string())?;
        out.push((
            name.to_string(),
            Incentive::Tariff(TariffProblem::from_tariff(&tariff, month)),
        ));
    }
    out.push(("toy [10, -5, 20]".into(), price(vec![10.0, -5.0, 20.0])));
    Ok(out)
}

fn horizon_of(incentive: &Incentive) -> usize {
    match incentive {
        Incentive::Signal { values, .. } => values.len(),
        Incentive::Tariff(p) => p.horizon(),
    }
}

fn zero_flexibility() -> Outcome {
    let incentives = shipped_incentives()?;
    let mut worst = 0.0f64;
    for (name, incentive) in &incentives {
        for baseline_mw in [1.0, 2.7] {
            let spec = FlexSpec::flat(horizon_of(incentive), baseline_mw);
            let outcome = evaluate_savings(incentive, &spec, Method::Exact)
                .map_err(|e| format!("{name}: {e}"))?;
            track(&outcome.schedule, &spec);
            worst = worst.max(outcome.savings_pct.abs());
            if outcome.savings_pct.abs() > 1e-12 {
                return Err(format!(
                    "{name}: savings {} % at zero flexibility",
                    outcome.savings_pct
                ));
            }
        }
    }
    Ok(format!(
        "{} incentives, largest |savings| {worst:.1e} %",
        incentives.len()
    ))
}

fn lagrangian_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3000);
    let (mut converged, mut skipped) = (0, 0);
    let mut worst_violation = 0.0f64;
    for i in 0..300 {
        let horizon = rng.random_range(2..=12);
        let baseline: Vec<f64> = (0..horizon).map(|_| rng.random_range(0.5..2.0)).collect();
        let mode = [UptimeMode::Exact, UptimeMode::Minimum, UptimeMode::Free][i % 3];
        let spec = FlexSpec::rigid(baseline)
            .with_uptime(rng.random_range(1..=horizon) as f64 / horizon as f64, mode)
            .with_power_capacity(
                [0.0, 0.25, 0.5, 1.0][rng.random_range(0..4)],
                PcReference::Average,
            )
            .with_rte([0.65, 0.85, 1.0][rng.random_range(0..3)]);
        let objective = Objective::linear(
            (0..horizon)
                .map(|_| rng.random_range(-50.0..150.0))
                .collect(),
        );
        let relaxed = match solve_lagrangian(&objective, &spec, &LagrangianOptions::default()) {
            Ok(r) => r,
            Err(SolveError::NotConverged(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(format!("instance {i}: {e}")),
        };
        converged += 1;
        track(&relaxed.schedule, &spec);
        let exact =
            solve(&objective, &spec, Method::Exact).map_err(|e| format!("instance {i}: {e}"))?;
        worst_violation = worst_violation.max(relaxed.diagnostics.max_violation);
        if relaxed.diagnostics.max_violation >= 1e-8 {
            return Err(format!(
                "instance {i}: violation {}",
                relaxed.diagnostics.max_violation
            ));
        }
        if !rel_close(relaxed.objective_value, exact.objective_value, 1e-6) {
            return Err(format!(
                "instance {i}: multiplier {} vs enumeration {}",
                relaxed.objective_value, exact.objective_value
            ));
        }
    }
    if converged == 0 {
        return Err("no instance converged".into());
    }
    Ok(format!(
        "{converged} converged, {skipped} did not, worst violation {worst_violation:.1e}"
    ))
}

/// One weekday of the shipped tariff; demand rates carry the day's share of
/// the monthly charge.
fn tariff_day() -> Result<TariffProblem, String> {
    let bytes =
        std::fs::read(data_dir().join("tariff_tou_demand.json")).map_err(|e| e.to_string())?;
    let tariff = parse_tariff(&bytes).map_err(|e| e.to_string())?;
    let month = BillingMonth::new(2023, 7).map_err(|e| e.to_string())?;
    let full = TariffProblem::from_tariff(&tariff, month);
    // 2023-07-03 is a Monday
    let day = 48..72;
    let share = 1.0 / month.days() as f64;
    let demand = full
        .demand
        .iter()
        .map(|d| flexbound::solver::tariff::DemandTerm {
            rate: d.rate * share,
            window: d.window[day.clone()].to_vec(),
        })
        .collect();
    Ok(TariffProblem::new(
        full.energy_rates[day].to_vec(),
        demand,
        0.0,
    ))
}

fn demand_charge_tension() -> Outcome {
    let started = Instant::now();
    let problem = tariff_day()?;
    let objective = Objective::Tariff {
        problem: problem.clone(),
        emissions: None,
        weight: 0.0,
    };
    let mut curve = Vec::new();
    for k in 1..=24 {
        let spec = FlexSpec::flat(24, 1.0)
            .with_uptime(k as f64 / 24.0, UptimeMode::Exact)
            .with_power_capacity(0.5, PcReference::Average);
        let base = problem.bill(&spec.baseline, 1.0);
        let result = solve_tariff(&objective, &spec).map_err(|e| format!("k={k}: {e}"))?;
        track(&result.schedule, &spec);
        curve.push(savings(base, result.objective_value).map_err(|e| e.to_string())?);
    }
    let elapsed = started.elapsed().as_secs_f64();
    let (best_index, best) =
        curve
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, s)| if s > acc.1 { (i, s) } else { acc },
            );
    let best_k = best_index + 1;
    let interior = best_k > 1 && best_k < 24;
    let rises = curve.windows(2).any(|w| w[1] > w[0]);
    let falls = curve.windows(2).any(|w| w[1] < w[0]);
    let concentrated_worse = curve[0] < best;
    let summary = format!(
        "peak {best:.2} % at k={best_k}, k=1 {:.2} %, k=24 {:.2} %, {elapsed:.3} s",
        curve[0], curve[23]
    );
    if interior && rises && falls && concentrated_worse && elapsed < 5.0 {
        Ok(summary)
    } else {
        Err(format!("{summary}; curve {curve:.2?}"))
    }
}

fn savings_above_hundred() -> Outcome {
    let c = vec![10.0, -5.0, 20.0];
    let spec = FlexSpec::flat(3, 1.0)
        .with_uptime(1.0 / 3.0, UptimeMode::Free)
        .with_power_capacity(1.0, PcReference::Average);
    let objective = Objective::linear(c.clone());
    let fast = solve(&objective, &spec, Method::Exact).map_err(|e| e.to_string())?;
    let oracle = brute_force(&objective, &spec).map_err(|e| e.to_string())?;
    track(&fast.schedule, &spec);
    let outcome = evaluate_savings(&price(c), &spec, Method::Exact).map_err(|e| e.to_string())?;
    if !rel_close(fast.objective_value, oracle.objective_value, 1e-9) {
        return Err(format!(
            "solver {} vs oracle {}",
            fast.objective_value, oracle.objective_value
        ));
    }
    if outcome.savings_pct > 100.0 {
        Ok(format!(
            "savings {:.1} % (oracle objective {})",
            outcome.savings_pct, oracle.objective_value
        ))
    } else {
        Err(format!("savings {} %", outcome.savings_pct))
    }
}

fn abatement_arithmetic() -> Outcome {
    let spec = FlexSpec::flat(2, 1.0).with_uptime(0.5, UptimeMode::Exact);
    let anti = pareto_front(
        &CostSignal::Price(vec![10.0, 30.0]),
        &[30.0, 10.0],
        &spec,
        &[0.5],
        Method::Exact,
    )
    .map_err(|e| e.to_string())?;
    for p in &anti.points {
        track(&p.schedule, &spec);
    }
    let full = abatement_cost(&anti, 1.0).map_err(|e| e.to_string())?;
    let aligned = pareto_front(
        &CostSignal::Price(vec![10.0, 30.0]),
        &[10.0, 30.0],
        &spec,
        &[0.5],
        Method::Exact,
    )
    .map_err(|e| e.to_string())?;
    let flat = abatement_cost(&aligned, 1.0).map_err(|e| e.to_string())?;
    if full.cost_per_ton == 1000.0 && flat.cost_per_ton == 0.0 && flat.no_tradeoff {
        Ok("anti-aligned 1000 $/ton, aligned 0 $/ton".into())
    } else {
        Err(format!(
            "anti-aligned {} $/ton, aligned {} $/ton",
            full.cost_per_ton, flat.cost_per_ton
        ))
    }
}

fn rte_threshold() -> Outcome {
    let spec = FlexSpec::flat(2, 1.0).with_uptime(0.5, UptimeMode::Exact);
    let threshold = min_viable_rte(&price(vec![10.0, 30.0]), &spec, 1e-5, Method::Exact)
        .map_err(|e| e.to_string())?;
    if (threshold - 0.5).abs() <= 1e-4 {
        Ok(format!("threshold {threshold:.6}"))
    } else {
        Err(format!("threshold {threshold}"))
    }
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["flexbound"];
    argv.extend_from_slice(args);
    let code = flexbound_cli::run_from_args(argv, &mut out, &mut err);
    if code != 0 {
        return Err(format!(
            "{args:?} exited {code}: {}",
            String::from_utf8_lossy(&err)
        ));
    }
    Ok(String::from_utf8_lossy(&out).into_owned())
}

fn write_toy(dir: &Path, name: &str, values: &[f64]) -> Result<String, String> {
    let mut text = String::from("timestamp,value\n");
    for (i, v) in values.iter().enumerate() {
        text.push_str(&format!("2023-07-01T{i:02}:00:00Z,{v}\n"));
    }
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| e.to_string())?;
    Ok(path.to_string_lossy().into_owned())
}

fn benchmarks_reported() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cost = write_toy(dir.path(), "cost.csv", &[10.0, 30.0])?;
    let mef = write_toy(dir.path(), "mef.csv", &[30.0, 10.0])?;
    let out_dir = dir.path().join("report");
    let out = out_dir.to_string_lossy().into_owned();
    let stdout = run_cli(&[
        "abatement",
        "--cost",
        &cost,
        "--emissions",
        &mef,
        "--uptime",
        "0.5",
        "--out",
        &out,
        "--format",
        "json",
    ])?;
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("abatement.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let b = &report["benchmarks"];
    let configured = b["scc"] == 140.0 && b["rec_price_min"] == 1.0 && b["rec_price_max"] == 20.0;
    let rows_carry = report["rows"].as_array().is_some_and(|rows| {
        rows.iter()
            .all(|r| r["scc"] == 140.0 && r["rec_price_max"] == 20.0)
    });
    let printed = stdout.contains("social cost of carbon: 140.00 $/ton")
        && stdout.contains("renewable energy credits: 1.00 to 20.00 $/MWh");
    if configured && rows_carry && printed {
        Ok("SCC 140 $/ton and REC 1 to 20 $/MWh in file and summary".into())
    } else {
        Err(format!("report {report} / stdout {stdout}"))
    }
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = data_dir();
    let d = |name: &str| data.join(name).to_string_lossy().into_owned();
    let o = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let month = ["--region", "CAISO", "--month", "2023-07"];
    let grid = ["--u-grid", "0.25,0.5,0.75,1", "--pc-grid", "0,0.5,1"];

    let mut files = Vec::new();
    for (tag, signal, kind) in [
        ("dam", "dam_2023-07.csv", "dam"),
        ("mef", "mef_2023-07.csv", "mef"),
        ("aef", "aef_2023-07.csv", "aef"),
    ] {
        let out = o(&format!("surface_{tag}"));
        let signal = d(signal);
        let mut args = vec![
            "sweep",
            "--signal",
            &signal,
            "--kind",
            kind,
            "--average-day",
            "--out",
            &out,
        ];
        args.extend_from_slice(&month);
        args.extend_from_slice(&grid);
        run_cli(&args)?;
        files.push((PathBuf::from(&out).join("surface.csv"), 12));
    }
    let tariff = d("tariff_tou_demand.json");
    let out = o("surface_tariff");
    let mut args = vec!["sweep", "--tariff", &tariff, "--out", &out];
    args.extend_from_slice(&month);
    args.extend_from_slice(&grid);
    run_cli(&args)?;
    files.push((PathBuf::from(&out).join("surface.csv"), 12));

    let (dam, mef) = (d("dam_2023-07.csv"), d("mef_2023-07.csv"));
    let out = o("abatement");
    let mut args = vec![
        "abatement",
        "--cost",
        &dam,
        "--emissions",
        &mef,
        "--uptime",
        "0.5",
        "--pc",
        "0.5",
        "--out",
        &out,
    ];
    args.extend_from_slice(&month);
    run_cli(&args)?;
    files.push((PathBuf::from(&out).join("abatement.csv"), 2));

    for (path, rows) in &files {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let found = text.lines().count().saturating_sub(1);
        if found != *rows {
            return Err(format!("{}: {found} rows, expected {rows}", path.display()));
        }
    }
    let front = std::fs::read_to_string(PathBuf::from(&out).join("pareto.csv"))
        .map_err(|e| e.to_string())?;
    if front.lines().count() < 3 {
        return Err("front has fewer than two points".into());
    }
    Ok(format!(
        "surfaces, front and abatement table written from synthetic data ({} front points); regional magnitudes need the original market datasets and are not reproduced",
        front.lines().count() - 1
    ))
}

fn energy_conservation() -> Outcome {
    let worst = WORST_ENERGY_ERROR.with(Cell::get);
    let count = SCHEDULES_CHECKED.with(Cell::get);
    if count > 0 && worst <= 1e-9 {
        Ok(format!(
            "{count} schedules, worst relative imbalance {worst:.1e}"
        ))
    } else {
        Err(format!(
            "{count} schedules, worst relative imbalance {worst:.1e}"
        ))
    }
}

/// Adds a minimum-uptime tariff schedule to the tally and checks it against
/// the envelope.
fn spot_check_feasibility() -> Result<(), String> {
    let problem = tariff_day()?;
    let spec = FlexSpec::flat(24, 1.0)
        .with_uptime(0.5, UptimeMode::Minimum)
        .with_power_capacity(1.0, PcReference::Average);
    let objective = Objective::Tariff {
        problem,
        emissions: None,
        weight: 0.0,
    };
    let result = solve_tariff(&objective, &spec).map_err(|e| e.to_string())?;
    track(&result.schedule, &spec);
    let report = feasible(&result.schedule, &spec).map_err(|e| e.to_string())?;
    if report.feasible {
        Ok(())
    } else {
        Err(format!("{report:?}"))
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("zero flexibility gives zero savings", zero_flexibility),
        ("multiplier method fidelity", lagrangian_fidelity),
        ("demand-charge tension over uptime", demand_charge_tension),
        (
            "savings above 100% with negative prices",
            savings_above_hundred,
        ),
        ("abatement cost arithmetic", abatement_arithmetic),
        ("round-trip efficiency threshold", rte_threshold),
        ("benchmarks in abatement report", benchmarks_reported),
        ("end-to-end run on shipped data", end_to_end),
        ("energy conservation", || {
            spot_check_feasibility().and_then(|_| energy_conservation())
        }),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
