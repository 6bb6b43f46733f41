//! Invariants checked over generated inputs.

use chrono::{TimeZone, Utc};
use flexbound::analysis::{
    default_weights, pareto_front, savings, sweep_surface, CostSignal, Incentive,
};
use flexbound::flexmodel::{
    energy_capacity, feasible, FlexSpec, PcReference, Schedule, UptimeMode,
};
use flexbound::signals::{
    load_signal, month_hour_average, SignalFormat, SignalKind, SignalSeries, Units,
};
use flexbound::solver::tariff::DemandTerm;
use flexbound::solver::{solve, solve_fixed_k, Method, Objective, TariffProblem};
use flexbound::tariff::{parse_tariff, Applicability, BillingMonth, DemandCharge};
use proptest::prelude::*;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn coeffs(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..150.0f64, len)
}

prop_compose! {
    fn instance()(horizon in 1usize..=24)
        (c in coeffs(horizon),
         baseline in prop::collection::vec(0.1..4.0f64, horizon),
         on in 1..=horizon,
         mode in prop_oneof![Just(UptimeMode::Exact), Just(UptimeMode::Minimum), Just(UptimeMode::Free)],
         pc in 0.0..=1.0f64,
         rte in 0.5..=1.0f64,
         horizon in Just(horizon))
        -> (Vec<f64>, FlexSpec)
    {
        let spec = FlexSpec::rigid(baseline)
            .with_uptime(on as f64 / horizon as f64, mode)
            .with_power_capacity(pc, PcReference::Average)
            .with_rte(rte);
        (c, spec)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn solver_output_is_feasible_and_conserves_energy((c, spec) in instance()) {
        let r = solve(&Objective::linear(c), &spec, Method::Exact).unwrap();
        let report = feasible(&r.schedule, &spec).unwrap();
        prop_assert!(report.feasible, "{:?}", report);
        let expected = spec.baseline_energy() / spec.rte;
        prop_assert!(close(r.schedule.energy(), expected, 1e-9));
        prop_assert!(r.diagnostics.max_violation <= 1e-8);
    }

    #[test]
    fn objective_non_increasing_in_power_capacity((c, spec) in instance(), extra in 0.0..=1.0f64) {
        let uptime = spec.uptime;
        let spec = spec.with_uptime(uptime, UptimeMode::Minimum);
        let wider = spec.clone().with_power_capacity((spec.power_capacity + extra).min(1.0), PcReference::Average);
        let obj = Objective::linear(c);
        let a = solve(&obj, &spec, Method::Exact).unwrap().objective_value;
        let b = solve(&obj, &wider, Method::Exact).unwrap().objective_value;
        prop_assert!(b <= a + 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn objective_non_increasing_as_on_counts_widen((c, spec) in instance()) {
        let narrow = spec.clone().with_uptime(spec.uptime, UptimeMode::Minimum);
        let wide = spec.clone().with_uptime(spec.uptime, UptimeMode::Free);
        let obj = Objective::linear(c);
        let a = solve(&obj, &narrow, Method::Exact).unwrap().objective_value;
        let b = solve(&obj, &wide, Method::Exact).unwrap().objective_value;
        prop_assert!(b <= a + 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn scaling_equivariance((c, spec) in instance(), alpha in 0.01..100.0f64) {
        let base = solve(&Objective::linear(c.clone()), &spec, Method::Exact).unwrap();
        let scaled_c: Vec<f64> = c.iter().map(|x| alpha * x).collect();
        let scaled = solve(&Objective::linear(scaled_c.clone()), &spec, Method::Exact).unwrap();
        prop_assert!(close(scaled.objective_value, alpha * base.objective_value, 1e-9));
        // the original optimum stays optimal under the scaled objective
        let reused = base.schedule.dot(&scaled_c);
        prop_assert!(close(reused, scaled.objective_value, 1e-9));
    }

    #[test]
    fn shift_equivariance((c, spec) in instance(), beta in -100.0..100.0f64) {
        let base = solve(&Objective::linear(c.clone()), &spec, Method::Exact).unwrap();
        let shifted_c: Vec<f64> = c.iter().map(|x| x + beta).collect();
        let shifted = solve(&Objective::linear(shifted_c.clone()), &spec, Method::Exact).unwrap();
        let energy = spec.flexible_energy();
        prop_assert!(close(shifted.objective_value, base.objective_value + beta * energy, 1e-9));
        prop_assert!(close(base.schedule.dot(&shifted_c), shifted.objective_value, 1e-9));
    }

    #[test]
    fn savings_scale_invariant(base in 1.0..1e6f64, flex in -1e6..1e6f64, alpha in 0.001..1000.0f64) {
        let a = savings(base, flex).unwrap();
        let b = savings(alpha * base, alpha * flex).unwrap();
        prop_assert!(close(a, b, 1e-9));
    }

    #[test]
    fn pareto_points_are_mutually_non_dominated(
        horizon in 2usize..=12,
        seed in prop::collection::vec((0.0..100.0f64, 100.0..900.0f64), 12),
        on in 1usize..=12,
        pc in 0.0..=1.0f64,
    ) {
        let price: Vec<f64> = seed[..horizon].iter().map(|p| p.0).collect();
        let emissions: Vec<f64> = seed[..horizon].iter().map(|p| p.1).collect();
        let spec = FlexSpec::flat(horizon, 1.0)
            .with_uptime(on.min(horizon) as f64 / horizon as f64, UptimeMode::Minimum)
            .with_power_capacity(pc, PcReference::Average);
        let front = pareto_front(&CostSignal::Price(price), &emissions, &spec, &default_weights(), Method::Exact).unwrap();
        let pts = &front.points;
        prop_assert!(!pts.is_empty());
        for w in pts.windows(2) {
            prop_assert!(w[0].emissions > w[1].emissions);
            prop_assert!(w[0].cost < w[1].cost);
        }
    }

    #[test]
    fn surface_non_decreasing_in_power_capacity(c in coeffs(8), k in 1usize..=8) {
        let template = FlexSpec::flat(8, 1.0).with_uptime(k as f64 / 8.0, UptimeMode::Exact);
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        let incentive = Incentive::Signal { kind: SignalKind::DamPrice, values: c.iter().map(|x| x + 60.0).collect() };
        let s = sweep_surface(&incentive, &template, &[k as f64 / 8.0], &grid, Method::Exact).unwrap();
        for w in s.savings_pct[0].windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn savings_non_decreasing_in_rte(c in prop::collection::vec(0.0..150.0f64, 6), r1 in 0.3..=1.0f64, r2 in 0.3..=1.0f64) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let spec = FlexSpec::flat(6, 1.0).with_uptime(1.0 / 6.0, UptimeMode::Minimum).with_power_capacity(0.5, PcReference::Average);
        let obj = Objective::linear(c.clone());
        let base = obj.evaluate(&spec.baseline, 1.0).objective;
        prop_assume!(base > 1e-6);
        let at = |rte: f64| savings(base, solve(&obj, &spec.clone().with_rte(rte), Method::Exact).unwrap().objective_value).unwrap();
        prop_assert!(at(hi) >= at(lo) - 1e-9);
    }

    #[test]
    fn energy_capacity_in_unit_interval(power in prop::collection::vec(0.0..3.0f64, 1..24)) {
        let horizon = power.len();
        let total: f64 = power.iter().sum();
        prop_assume!(total > 0.0);
        // baseline with the same energy, so the energy balance holds at η = 1
        let baseline = vec![total / horizon as f64; horizon];
        let schedule = Schedule::from_power(power, 1.0).unwrap();
        let ec = energy_capacity(&schedule, &baseline).unwrap();
        prop_assert!((0.0..=1.0).contains(&ec));
    }

    #[test]
    fn single_step_schedule_feasible_in_free_mode(horizon in 1usize..24, at in 0usize..24, pc in 0.0..=1.0f64) {
        let at = at % horizon;
        let spec = FlexSpec::flat(horizon, 1.0).with_uptime(1.0 / horizon as f64, UptimeMode::Free).with_power_capacity(pc, PcReference::Average);
        let mut power = vec![0.0; horizon];
        power[at] = horizon as f64;
        let schedule = Schedule::from_power(power, 1.0).unwrap();
        prop_assert!(feasible(&schedule, &spec).unwrap().feasible);
    }

    #[test]
    fn fixed_k_objective_matches_schedule(c in coeffs(10), k in 1usize..=10, pc in 0.0..=1.0f64) {
        let spec = FlexSpec::flat(10, 1.5).with_power_capacity(pc, PcReference::Average);
        let r = solve_fixed_k(&Objective::linear(c.clone()), &spec, k).unwrap();
        prop_assert!(close(r.objective_value, r.schedule.dot(&c), 1e-9));
        prop_assert_eq!(r.schedule.on_count(), k);
    }
}

fn july_series(values: Vec<f64>) -> SignalSeries {
    SignalSeries::new(
        SignalKind::Mef,
        "CAISO",
        Units::KgCo2PerMwh,
        Utc.with_ymd_and_hms(2023, 7, 1, 8, 0, 0).unwrap(),
        values,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_round_trip_is_bit_exact(values in prop::collection::vec(0.0..2000.0f64, 1..100)) {
        let series = july_series(values);
        let mut buf = Vec::new();
        series.write_csv(&mut buf).unwrap();
        let loaded = load_signal(buf.as_slice(), SignalFormat::Csv, SignalKind::Mef, Units::KgCo2PerMwh, "CAISO").unwrap();
        prop_assert_eq!(&loaded.series.values, &series.values);
        prop_assert_eq!(loaded.series.start, series.start);
        prop_assert!(loaded.interpolated.is_empty());
    }

    #[test]
    fn month_hour_average_idempotent_and_mean_preserving(values in prop::collection::vec(0.0..900.0f64, 744)) {
        let series = july_series(values.clone());
        let profile = month_hour_average(&series, 7).unwrap();
        let broadcast = july_series(profile.broadcast(31));
        let again = month_hour_average(&broadcast, 7).unwrap();
        for (a, b) in profile.values.iter().zip(&again.values) {
            prop_assert!(close(*a, *b, 1e-12));
        }
        let mean = values.iter().sum::<f64>() / 744.0;
        prop_assert!(close(profile.mean(), mean, 1e-12));
    }

    #[test]
    fn bill_is_homogeneous_and_decomposes(power in prop::collection::vec(0.0..5.0f64, 744), extra_rate in 0.0..20_000.0f64) {
        let doc = r#"{"name":"t","fixed_charge":0,
            "energy_charges":[{"rate":200,"hours":[16,17,18,19,20]},
                              {"rate":80,"hours":[0,1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,21,22,23]}],
            "demand_charges":[{"rate":10000,"hours":[16,17,18,19,20],"weekdays":[0,1,2,3,4]}]}"#;
        let tariff = parse_tariff(doc.as_bytes()).unwrap();
        let july = BillingMonth::new(2023, 7).unwrap();
        let one = tariff.bill_power(&power, july).unwrap();
        let doubled: Vec<f64> = power.iter().map(|p| 2.0 * p).collect();
        let two = tariff.bill_power(&doubled, july).unwrap();
        prop_assert!(close(two.energy_cost, 2.0 * one.energy_cost, 1e-12));
        prop_assert!(close(two.demand_costs[0], 2.0 * one.demand_costs[0], 1e-12));

        let rates = tariff.marginal_energy_rates(july);
        let energy: f64 = rates.iter().zip(&power).map(|(r, p)| r * p).sum();
        prop_assert!(close(one.total, energy + one.demand_costs.iter().sum::<f64>() + one.fixed_cost, 1e-12));

        let problem = TariffProblem::from_tariff(&tariff, july);
        prop_assert!(close(problem.bill(&power, 1.0), one.total, 1e-12));

        let mut more = tariff.clone();
        more.demand_charges.push(DemandCharge { rate: extra_rate, window: Applicability::always() });
        prop_assert!(more.bill_power(&power, july).unwrap().total >= one.total);
    }

    #[test]
    fn tariff_solution_never_above_flat_operation(rates in prop::collection::vec(20.0..300.0f64, 24), demand in 0.0..500.0f64, k in 1usize..=24) {
        let problem = TariffProblem::new(rates, vec![DemandTerm { rate: demand, window: vec![true; 24] }], 0.0);
        let spec = FlexSpec::flat(24, 1.0).with_uptime(k as f64 / 24.0, UptimeMode::Minimum).with_power_capacity(1.0, PcReference::Average);
        let obj = Objective::Tariff { problem: problem.clone(), emissions: None, weight: 0.0 };
        let r = solve(&obj, &spec, Method::Exact).unwrap();
        // minimum mode always admits running flat on every step
        prop_assert!(r.objective_value <= problem.bill(&spec.baseline, 1.0) + 1e-9);
        prop_assert!(feasible(&r.schedule, &spec).unwrap().feasible);
    }
}
