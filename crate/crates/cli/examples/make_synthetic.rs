//! Writes the synthetic inputs shipped under `data/`.
//!
//! Usage: `cargo run -p flexbound-cli --example make_synthetic -- [DIR]`
//!
//! Every series is drawn from a fixed seed, so reruns are byte-identical.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use chrono::{TimeZone, Utc};
use flexbound::signals::{region_utc_offset_hours, SignalKind, SignalSeries};
use flexbound::tariff::parse_tariff;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const REGION: &str = "CAISO";
const SEED: u64 = 2023;

/// Hourly series over local July 2023 plus one day of margin on each side.
fn july(kind: SignalKind, value_at: impl Fn(usize, u32) -> f64) -> SignalSeries {
    let offset = region_utc_offset_hours(REGION) as i64;
    let start =
        Utc.with_ymd_and_hms(2023, 6, 30, 0, 0, 0).unwrap() - chrono::Duration::hours(offset);
    let hours = 33 * 24;
    let values = (0..hours).map(|i| value_at(i, (i % 24) as u32)).collect();
    SignalSeries::new(kind, REGION, kind.default_units(), start, values).expect("finite values")
}

fn write_series(dir: &Path, name: &str, series: &SignalSeries) {
    let file = File::create(dir.join(name)).expect("create output");
    series
        .write_csv(BufWriter::new(file))
        .expect("write series");
}

fn bump(hour: u32, center: f64, width: f64) -> f64 {
    let d = hour as f64 - center;
    (-(d * d) / (2.0 * width * width)).exp()
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "data".into());
    let dir = Path::new(&dir);
    fs::create_dir_all(dir).expect("create data dir");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    // toy day: one cheap overnight trough, one evening peak
    let toy: Vec<f64> = (0..24u32)
        .map(|h| {
            round2(
                40.0 + 25.0 * (2.0 * PI * (h as f64 - 12.0) / 24.0).sin()
                    + 30.0 * bump(h, 19.0, 1.5),
            )
        })
        .collect();
    let toy_start = Utc.with_ymd_and_hms(2023, 7, 1, 0, 0, 0).unwrap();
    let toy = SignalSeries::new(
        SignalKind::DamPrice,
        "UTC",
        SignalKind::DamPrice.default_units(),
        toy_start,
        toy,
    )
    .expect("finite values");
    write_series(dir, "toy_prices.csv", &toy);

    // day-ahead prices with a midday solar trough that goes negative
    let noise: Vec<f64> = (0..33 * 24).map(|_| rng.random_range(-6.0..6.0)).collect();
    let day_scale: Vec<f64> = (0..33).map(|_| rng.random_range(0.8..1.25)).collect();
    let dam = july(SignalKind::DamPrice, |i, h| {
        let base = 48.0 - 60.0 * bump(h, 12.5, 2.0) + 95.0 * bump(h, 19.5, 1.6);
        round2(base * day_scale[i / 24] + noise[i])
    });
    write_series(dir, "dam_2023-07.csv", &dam);

    // marginal emissions: coal-heavy nights, gas peakers in the evening
    let mef_noise: Vec<f64> = (0..33 * 24)
        .map(|_| rng.random_range(-25.0..25.0))
        .collect();
    let mef = july(SignalKind::Mef, |i, h| {
        let base = 520.0 + 260.0 * bump(h, 3.0, 3.0)
            - 180.0 * bump(h, 12.5, 2.5)
            - 60.0 * bump(h, 19.5, 1.5);
        round2((base + mef_noise[i]).max(0.0))
    });
    write_series(dir, "mef_2023-07.csv", &mef);

    // average emissions: solar lowers the midday mix
    let aef = july(SignalKind::Aef, |i, h| {
        let base = 260.0 - 110.0 * bump(h, 12.5, 2.5) + 40.0 * bump(h, 20.0, 2.0);
        round2(base + 0.4 * mef_noise[i])
    });
    write_series(dir, "aef_2023-07.csv", &aef);

    let summer = [6, 7, 8, 9];
    let winter = [1, 2, 3, 4, 5, 10, 11, 12];
    let peak_hours: Vec<u32> = (16..21).collect();
    let other_hours: Vec<u32> = (0..16).chain(21..24).collect();
    let tou = json!({
        "name": "synthetic TOU with monthly and on-peak demand charges",
        "fixed_charge": 500.0,
        "energy_charges": [
            { "rate": 210.0, "hours": peak_hours, "weekdays": [0, 1, 2, 3, 4], "months": summer },
            { "rate": 120.0, "hours": peak_hours, "weekdays": [5, 6], "months": summer },
            { "rate": 90.0, "hours": other_hours, "months": summer },
            { "rate": 150.0, "hours": peak_hours, "months": winter },
            { "rate": 85.0, "hours": other_hours, "months": winter }
        ],
        "demand_charges": [
            { "rate": 18000.0 },
            { "rate": 22000.0, "hours": peak_hours, "weekdays": [0, 1, 2, 3, 4], "months": summer }
        ]
    });
    let flat = json!({
        "name": "synthetic flat energy rate",
        "fixed_charge": 0.0,
        "energy_charges": [ { "rate": 100.0 } ],
        "demand_charges": []
    });
    for (name, doc) in [("tariff_tou_demand.json", tou), ("tariff_flat.json", flat)] {
        let text = serde_json::to_string_pretty(&doc).expect("json") + "\n";
        parse_tariff(text.as_bytes()).expect("shipped tariff validates");
        fs::write(dir.join(name), text).expect("write tariff");
    }

    let config = json!({
        "signal": "data/dam_2023-07.csv",
        "kind": "dam",
        "region": REGION,
        "month": "2023-07",
        "average_day": true,
        "uptime_mode": "exact",
        "u_grid": [0.25, 0.5, 0.75, 1.0],
        "pc_grid": [0.0, 0.5, 1.0],
        "format": "csv"
    });
    fs::write(
        dir.join("sweep_config.json"),
        serde_json::to_string_pretty(&config).expect("json") + "\n",
    )
    .expect("write config");
}
