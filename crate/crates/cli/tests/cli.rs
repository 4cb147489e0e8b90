use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_bess-align");

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Canonical series with `d = 1 + r+` and `w = 1 + r-` at hourly steps.
fn write_excess(dir: &Path, r: &[f64]) {
    let mut w = String::from("timestamp,mwh_per_step\n");
    let mut d = w.clone();
    for (n, v) in r.iter().enumerate() {
        let ts = format!("2024-01-{:02}T{:02}:00:00Z", 1 + n / 24, n % 24);
        w.push_str(&format!("{ts},{}\n", 1.0 + (-v).max(0.0)));
        d.push_str(&format!("{ts},{}\n", 1.0 + v.max(0.0)));
    }
    fs::create_dir_all(dir.join("out")).unwrap();
    fs::write(dir.join("out/wind_series.csv"), w).unwrap();
    fs::write(dir.join("out/demand_series.csv"), d).unwrap();
    fs::write(dir.join("run.toml"), "[data]\ndelta_hours = 1.0\n").unwrap();
}

fn fixture() -> Vec<f64> {
    let mut r = Vec::new();
    for (len, v) in [
        (4, 1.0),
        (8, -1.0),
        (5, 1.0),
        (5, -1.0),
        (6, 1.0),
        (2, -1.0),
    ] {
        r.extend(std::iter::repeat(v).take(len));
    }
    r
}

#[test]
fn size_reports_fixture_bounds() {
    let dir = tempfile::tempdir().unwrap();
    write_excess(dir.path(), &fixture());
    let out = run(dir.path(), &["size", "--config", "run.toml"]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("B# = 8 MWh"), "{text}");
    assert!(text.contains("B#_g = 6 MWh"), "{text}");
    let doc = read_json(&dir.path().join("out/sizing.json"));
    assert_eq!(doc["b_sharp"], 8.0);
    assert_eq!(doc["b_sharp_g"], 6.0);
    assert_eq!(doc["g_av00"], 0.5);
    assert_eq!(doc["g_peak00"], 1.0);
    assert_eq!(doc["steps"], 30);
}

#[test]
fn size_rejects_unequal_averages() {
    let dir = tempfile::tempdir().unwrap();
    write_excess(dir.path(), &[1.0, 1.0, -1.0]);
    let out = run(dir.path(), &["size", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(7), "{out:?}");
}

#[test]
fn ingest_matches_golden_and_turbine_law() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "ingest",
            "--wind",
            data("raw_wind.csv").to_str().unwrap(),
            "--demand",
            data("raw_load.csv").to_str().unwrap(),
            "--output-dir",
            "canon",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("steps N = 6"));
    for name in ["wind_series.csv", "demand_series.csv"] {
        let got = fs::read_to_string(dir.path().join("canon").join(name)).unwrap();
        let want = fs::read_to_string(data("golden").join(name)).unwrap();
        assert_eq!(got, want, "{name}");
    }

    let parse = |name: &str| -> Vec<f64> {
        fs::read_to_string(data("golden").join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    };
    let speeds = [6.0, 7.5, 9.0, 12.0, 4.0, 0.5];
    let loads = [950.0, 1000.0, 1040.0, 1100.0, 980.0, 930.0];
    let area = std::f64::consts::PI * 118.0 * 118.0;
    let wind: Vec<f64> = speeds
        .iter()
        .map(|&v: &f64| {
            if v < 1.0 {
                0.0
            } else {
                0.5 * 1.225 * 0.45 * v.powi(3) * area * 1e-6 / 6.0
            }
        })
        .collect();
    let scale = wind.iter().sum::<f64>() / loads.iter().map(|l| l / 6.0).sum::<f64>();
    for (got, want) in parse("wind_series.csv").iter().zip(&wind) {
        assert!(
            (got - want).abs() <= 1e-12 * want.max(1.0),
            "{got} vs {want}"
        );
    }
    for (got, l) in parse("demand_series.csv").iter().zip(&loads) {
        let want = l / 6.0 * scale;
        assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
    }
}

#[test]
fn ingest_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("empty.csv"), "timestamp,speed_mps\n").unwrap();
    fs::write(p.join("schema.csv"), "time,v\n1,2\n").unwrap();
    fs::write(
        p.join("backwards.csv"),
        "timestamp,speed_mps\n2024-03-01T00:10:00Z,5\n2024-03-01T00:00:00Z,5\n",
    )
    .unwrap();
    fs::write(
        p.join("gappy.csv"),
        "timestamp,speed_mps\n2024-03-01T00:00:00Z,5\n2024-03-01T00:40:00Z,5\n",
    )
    .unwrap();
    let load = data("raw_load.csv");
    for (file, code) in [
        ("empty.csv", 3),
        ("schema.csv", 4),
        ("backwards.csv", 5),
        ("gappy.csv", 6),
    ] {
        let out = run(
            p,
            &["ingest", "--wind", file, "--demand", load.to_str().unwrap()],
        );
        assert_eq!(out.status.code(), Some(code), "{file}: {out:?}");
    }
    let out = run(p, &["ingest", "--demand", load.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn one_cell_surface() {
    let dir = tempfile::tempdir().unwrap();
    write_excess(dir.path(), &fixture());
    fs::write(
        dir.path().join("run.toml"),
        "[data]\ndelta_hours = 1.0\n[grid]\nb = [0.0]\np = [0.0]\n",
    )
    .unwrap();
    for engine in ["lp", "greedy"] {
        let out = run(
            dir.path(),
            &["surface", "--config", "run.toml", "--engine", engine],
        );
        assert!(out.status.success(), "{out:?}");
        let csv = fs::read_to_string(dir.path().join("out/surface.csv")).unwrap();
        assert_eq!(csv, "energy_rating_mwh,power_rating_mw,g_mw\n0,0,0.5\n");
        let doc = read_json(&dir.path().join("out/surface.json"));
        assert_eq!(doc["metadata"]["engine"], engine);
        assert_eq!(doc["values"][0][0], 0.5);
    }
}

#[test]
fn surface_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    write_excess(dir.path(), &fixture());
    fs::write(
        dir.path().join("run.toml"),
        "objective = \"avg\"\n[data]\ndelta_hours = 1.0\n[grid]\npoints = 3\n",
    )
    .unwrap();
    let out = run(
        dir.path(),
        &[
            "surface",
            "--config",
            "run.toml",
            "--objective",
            "peak",
            "--no-timestamp",
            "--dump-lp",
            "top.mps",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let doc = read_json(&dir.path().join("out/surface.json"));
    assert_eq!(doc["metadata"]["objective"], "peak");
    assert!(doc["metadata"].get("generated_at").is_none());
    assert_eq!(doc["b_grid"].as_array().unwrap().len(), 3);
    assert_eq!(doc["values"][0][0], 1.0);
    let mps = fs::read_to_string(dir.path().join("top.mps")).unwrap();
    assert!(mps.starts_with("NAME"));
    assert!(mps.trim_end().ends_with("ENDATA"));
}

#[test]
fn daily_loss_is_converted_and_echoed() {
    let dir = tempfile::tempdir().unwrap();
    write_excess(dir.path(), &fixture());
    let out = run(
        dir.path(),
        &[
            "surface",
            "--config",
            "run.toml",
            "--daily-loss",
            "0.24",
            "--points",
            "2",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("daily loss 0.24"));
    let doc = read_json(&dir.path().join("out/surface.json"));
    let alpha = doc["metadata"]["retention"].as_f64().unwrap();
    assert!((alpha - 0.76f64.powf(1.0 / 24.0)).abs() < 1e-15);

    let out = run(
        dir.path(),
        &["surface", "--retention", "0.9", "--daily-loss", "0.1"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn capacity_hits_target_or_reports_unreachable() {
    let dir = tempfile::tempdir().unwrap();
    write_excess(dir.path(), &fixture());
    let out = run(
        dir.path(),
        &[
            "capacity",
            "--config",
            "run.toml",
            "--hours",
            "1",
            "--points",
            "9",
            "--no-timestamp",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let doc = read_json(&dir.path().join("out/efficiency.json"));
    // avg peaker falls by 3/30 MW per MWh until B = 4, so half of 0.5 MW needs 2.5 MWh
    let b = doc["energy_rating"].as_f64().unwrap();
    assert!((b - 2.5).abs() < 1e-6, "{b}");
    assert!((doc["efficiency"].as_f64().unwrap() - 0.2).abs() < 1e-6);
    let table = fs::read_to_string(dir.path().join("out/capacity.csv")).unwrap();
    assert_eq!(table.lines().count(), 10);

    let out = run(
        dir.path(),
        &[
            "capacity", "--config", "run.toml", "--hours", "100", "--target", "0.9",
        ],
    );
    assert_eq!(out.status.code(), Some(9), "{out:?}");
}

#[test]
fn validate_twenty_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "validate", "--seeds", "20", "--steps", "30", "--seed", "100",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let doc = read_json(&dir.path().join("out/validation.json"));
    assert_eq!(doc["pass"], true);
    assert_eq!(doc["instances"].as_array().unwrap().len(), 20);
    assert!(doc["max_relative_discrepancy"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn missing_series_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["size"]);
    assert_eq!(out.status.code(), Some(10));
}
