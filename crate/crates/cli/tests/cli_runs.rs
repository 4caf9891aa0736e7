use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use brewflex::report::{BreweryRecord, CategoryRecord, HourlyRecord};

fn brewflex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brewflex"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    csv::Reader::from_path(path)
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1e-12)
}

/// Synthetic inputs for `n` facilities written to disk.
fn synth(dir: &Path, n: usize) -> PathBuf {
    ok(brewflex(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--facilities",
        &n.to_string(),
    ]));
    dir.join("scenario.toml")
}

#[test]
fn ten_facility_totals_match_the_brewery_table() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = synth(tmp.path(), 10);
    let out = tmp.path().join("report");
    ok(brewflex(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));

    let breweries: Vec<BreweryRecord> = read_csv(&out.join("per_brewery.csv"));
    let categories: Vec<CategoryRecord> = read_csv(&out.join("per_category.csv"));
    let hourly: Vec<HourlyRecord> = read_csv(&out.join("hourly_load.csv"));
    let flexible: Vec<HourlyRecord> = read_csv(&out.join("hourly_load_flexible.csv"));
    let summary = json(&out.join("summary.json"));

    assert_eq!(breweries.len(), 10);
    assert!(breweries.windows(2).all(|w| w[0].brewery_id < w[1].brewery_id));
    assert_eq!(categories.len(), 8);
    assert_eq!(categories.iter().map(|c| c.count).sum::<usize>(), 10);
    assert_eq!(hourly.len(), 8760);
    assert_eq!(flexible.len(), 8760);
    assert_eq!(hourly[0].timestamp, "2021-01-01T00:00:00Z");

    let mut cost = 0.0;
    let mut co2 = 0.0;
    let mut load = 0.0;
    let mut flex_cost = 0.0;
    for b in &breweries {
        cost += b.cost_dkk;
        co2 += b.co2_kg;
        load += b.load_kwh;
        flex_cost += b.flexible_cost_dkk.unwrap();
        assert!(b.flexible_cost_dkk.unwrap() <= b.cost_dkk + 1e-6);
    }
    let national = &summary["national"];
    assert!(close(national["baseline"]["cost_dkk"].as_f64().unwrap(), cost));
    assert!(close(national["baseline"]["co2_kg"].as_f64().unwrap(), co2));
    assert!(close(national["baseline"]["load_kwh"].as_f64().unwrap(), load));
    assert!(close(national["flexible"]["cost_dkk"].as_f64().unwrap(), flex_cost));
    assert!(close(
        summary["relative_saving"].as_f64().unwrap(),
        (cost - flex_cost) / cost
    ));

    let hourly_total: f64 = hourly.iter().map(|h| h.dk1_kwh + h.dk2_kwh).sum();
    assert!(close(hourly_total, load));

    for c in &categories {
        let members: Vec<&BreweryRecord> = breweries.iter().filter(|b| b.category == c.category).collect();
        assert_eq!(members.len(), c.count);
        let sum: f64 = members.iter().map(|b| b.cost_dkk).sum();
        assert!(close(c.cost_dkk, sum) || (c.count == 0 && c.cost_dkk == 0.0));
    }
    assert_eq!(summary["metadata"]["facilities"], 10);
    assert_eq!(summary["metadata"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, jobs) in [(&a, "1"), (&b, "3")] {
        ok(brewflex(&[
            "run",
            "--facilities",
            "6",
            "--seed",
            "9",
            "--out",
            dir.to_str().unwrap(),
            "--jobs",
            jobs,
        ]));
    }
    for name in [
        "summary.json",
        "per_category.csv",
        "per_brewery.csv",
        "hourly_load.csv",
        "hourly_load_flexible.csv",
    ] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 5, "{names:?}");
}

#[test]
fn constant_prices_give_zero_saving() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = synth(tmp.path(), 8);
    for area in ["dk1", "dk2"] {
        let p = tmp.path().join(format!("prices_{area}.csv"));
        let text = std::fs::read_to_string(&p).unwrap();
        let flat: String = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                if i == 0 {
                    format!("{l}\n")
                } else {
                    format!("{},612.5\n", l.split(',').next().unwrap())
                }
            })
            .collect();
        std::fs::write(&p, flat).unwrap();
    }
    let out = tmp.path().join("flat");
    ok(brewflex(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let summary = json(&out.join("summary.json"));
    assert!(summary["relative_saving"].as_f64().unwrap().abs() <= 1e-9);
}

#[test]
fn baseline_mode_writes_no_flexible_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    ok(brewflex(&[
        "run",
        "--facilities",
        "3",
        "--mode",
        "baseline",
        "--out",
        out.to_str().unwrap(),
    ]));
    let rows: Vec<BreweryRecord> = read_csv(&out.join("per_brewery.csv"));
    assert!(rows
        .iter()
        .all(|r| r.flexible_cost_dkk.is_none() && r.relative_saving.is_none()));
    assert!(!out.join("hourly_load_flexible.csv").exists());
    let summary = json(&out.join("summary.json"));
    assert!(summary["relative_saving"].is_null());
    assert_eq!(summary["metadata"]["mode"], "baseline");
}

#[test]
fn traces_are_written_on_request() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    ok(brewflex(&[
        "run",
        "--facilities",
        "2",
        "--mode",
        "flexible",
        "--traces",
        "--out",
        out.to_str().unwrap(),
    ]));
    let mut rdr = csv::Reader::from_path(out.join("traces.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "brewery_id",
            "policy",
            "batch_id",
            "timestamp",
            "temperature_c",
            "extract_plato",
            "cooling_w"
        ]
    );
    let rows = rdr.records().count();
    assert!(rows > 1000, "{rows} trace rows");
}

#[test]
fn unwritable_output_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = blocker.join("report");
    let res = brewflex(&["run", "--facilities", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 1);
}

#[test]
fn validation_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("bad.toml");
    std::fs::write(&s, "[params.control]\ncop = -1.0\n").unwrap();
    let out = tmp.path().join("o");
    let res = brewflex(&["run", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("cop"));
    assert!(!out.exists());

    std::fs::write(&s, "[files]\nprices_dk1 = \"missing.csv\"\n").unwrap();
    let res = brewflex(&[
        "run",
        "--scenario",
        s.to_str().unwrap(),
        "--facilities",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(4));
}

#[test]
fn undersized_plant_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("small.toml");
    std::fs::write(&s, "[params.control]\nq_max_factor = 0.5\n").unwrap();
    let out = tmp.path().join("o");
    let res = brewflex(&[
        "run",
        "--scenario",
        s.to_str().unwrap(),
        "--facilities",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    let leftovers: Vec<_> = std::fs::read_dir(&out).unwrap().collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn short_price_series_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = synth(tmp.path(), 2);
    let p = tmp.path().join("prices_dk2.csv");
    let text = std::fs::read_to_string(&p).unwrap();
    let cut: String = text.lines().take(100).map(|l| format!("{l}\n")).collect();
    std::fs::write(&p, cut).unwrap();
    let res = brewflex(&["run", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("prices_dk2"));
}

#[test]
fn config_prints_a_reloadable_scenario() {
    let out = ok(brewflex(&["config"]));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(brewflex::Scenario::parse(&text).unwrap(), brewflex::Scenario::default());
}
