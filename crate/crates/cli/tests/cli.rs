use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hosu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hosu"))
        .args(args)
        .env_remove("HOSU_SEED")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

const HEADER: &str = "k,x_err,step_norm,rel_frob_err,dm_ratio,proxy,angle_deg,skipped";

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let res = hosu(&["run", "--out", path(out)]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let first = fs::read(&a).unwrap();
    assert_eq!(first, fs::read(&b).unwrap());
    let text = String::from_utf8(first).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(HEADER));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 8);
    // 17 significant digits: one before the point, sixteen after.
    let mantissa = row[1].split('e').next().unwrap();
    assert_eq!(mantissa.trim_start_matches('-').len(), 18, "{}", row[1]);

    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.with_extension("json")).unwrap()).unwrap();
    assert_eq!(sidecar["trace"]["provenance"], "cg");
}

#[test]
fn two_point_trace_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.txt");
    fs::write(&trace, "0 0\n0.5 0.25\n").unwrap();
    let out = dir.path().join("one.csv");
    let iterates = format!("file:{}", path(&trace));
    let res = hosu(&["run", "--iterates", &iterates, "--out", path(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("1,"));

    let fig = hosu(&["plot-data", "--csv", path(&out), "--figure", "fig1"]);
    assert!(fig.status.success());
    let body = String::from_utf8(fig.stdout).unwrap();
    assert_eq!(body.lines().filter(|l| !l.starts_with('#')).count(), 1);
}

#[test]
fn empty_trace_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("empty.txt");
    fs::write(&trace, "").unwrap();
    let iterates = format!("file:{}", path(&trace));
    let out = dir.path().join("x.csv");
    let res = hosu(&["run", "--iterates", &iterates, "--out", path(&out)]);
    assert!(!res.status.success());
    assert!(!out.exists());
}

#[test]
fn plot_data_selects_figure_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv");
    assert!(hosu(&["run", "--out", path(&csv)]).status.success());
    let rows = fs::read_to_string(&csv).unwrap().lines().count() - 1;

    let fig2 = String::from_utf8(hosu(&["plot-data", "--csv", path(&csv), "--figure", "fig2"]).stdout).unwrap();
    assert_eq!(fig2.lines().next(), Some("# k rel_frob_err proxy"));

    let out = dir.path().join("fig4.dat");
    let res = hosu(&["plot-data", "--csv", path(&csv), "--figure", "fig4", "--out", path(&out)]);
    assert!(res.status.success());
    let fig4 = fs::read_to_string(&out).unwrap();
    let mut lines = fig4.lines();
    assert_eq!(lines.next(), Some("# k angle_deg"));
    let data: Vec<&str> = lines.collect();
    assert_eq!(data.len(), rows);
    for line in data {
        let angle: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!((0.0..180.0).contains(&angle));
    }
}

#[test]
fn verify_golden_passes() {
    let res = hosu(&["verify", "golden"]);
    assert!(res.status.success());
    let out = String::from_utf8(res.stdout).unwrap();
    assert_eq!(out.lines().count(), 6);
    assert!(out.lines().all(|l| l.starts_with("PASS ")));
}

#[test]
fn unknown_suite_is_rejected() {
    let res = hosu(&["verify", "nope"]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("nope"));
}

#[test]
fn seed_environment_variable_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let res = Command::new(env!("CARGO_BIN_EXE_hosu"))
        .args(["run", "--iterates", "synthetic", "--steps", "5", "--seed", "3", "--out", path(&csv)])
        .env("HOSU_SEED", "42")
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(csv.with_extension("json")).unwrap()).unwrap();
    assert_eq!(sidecar["config"]["seed"], 42);

    let bad = Command::new(env!("CARGO_BIN_EXE_hosu"))
        .args(["verify", "golden"])
        .env("HOSU_SEED", "not-a-number")
        .output()
        .unwrap();
    assert!(!bad.status.success());
}

#[test]
fn polynomial_and_rules_run() {
    let dir = tempfile::tempdir().unwrap();
    for rule in ["psb", "dfp", "sr1"] {
        let csv = dir.path().join(format!("{rule}.csv"));
        let res = hosu(&["run", "--fn", "polynomial", "--iterates", "trust-region", "--rule", rule, "--out", path(&csv)]);
        assert!(res.status.success(), "{rule}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(fs::read_to_string(&csv).unwrap().starts_with(HEADER));
    }
}

#[test]
fn file_inputs_are_read() {
    let dir = tempfile::tempdir().unwrap();
    let poly = dir.path().join("poly.json");
    fs::write(
        &poly,
        r#"{
  "c_star": {"order": 3, "dim": 2, "entries": [6, 2, 2, -1, 2, -1, -1, 3]},
  "lower_terms": [
    {"order": 0, "dim": 2, "entries": [0]},
    {"order": 1, "dim": 2, "entries": [0, 0]},
    {"order": 2, "dim": 2, "entries": [1, 0, 0, 1]}
  ],
  "minimizer": [0, 0]
}"#,
    )
    .unwrap();
    let matrix = dir.path().join("w.txt");
    fs::write(&matrix, "1 0\n0 1\n").unwrap();
    let c0 = dir.path().join("c0.json");
    fs::write(&c0, r#"{"order": 3, "dim": 2, "entries": [1, 0, 0, 0, 0, 0, 0, 1]}"#).unwrap();

    let csv = dir.path().join("f.csv");
    let res = hosu(&[
        "run",
        "--fn",
        &format!("poly:{}", path(&poly)),
        "--iterates",
        "synthetic",
        "--steps",
        "6",
        "--rule",
        &format!("matrix:{}", path(&matrix)),
        "--c0",
        &format!("file:{}", path(&c0)),
        "--out",
        path(&csv),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 7);
    // With W = I the steps are orthogonal, so the cubic is recovered exactly.
    let last: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    let rel: f64 = last[3].parse().unwrap();
    assert!(rel <= 1e-10, "{rel}");

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"order": 2, "dim": 2, "entries": [0, 0, 0, 0]}"#).unwrap();
    let res = hosu(&["run", "--c0", &format!("file:{}", path(&bad)), "--out", path(&csv)]);
    assert!(!res.status.success());
}
