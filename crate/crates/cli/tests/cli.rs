use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cgmix::simulation::{generate, Scenario, ScenarioConfig};
use serde_json::Value;

fn cgmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgmix"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Scenario (a) sample written as `y,x` with `n` rows.
fn sample_csv(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let (d, _) = generate(&ScenarioConfig::new(Scenario::A, n, seed).unwrap()).unwrap();
    let mut text = String::from("y,x\n");
    for i in 0..d.n() {
        text.push_str(&format!("{},{}\n", d.y()[i], d.x()[(i, 1)]));
    }
    let path = dir.join("sample.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fit_args<'a>(data: &'a str, out: &'a str, model: &'a str) -> Vec<&'a str> {
    vec![
        "fit",
        "--data",
        data,
        "--y-col",
        "y",
        "--x-cols",
        "x",
        "--model",
        model,
        "--out-dir",
        out,
        "--seed",
        "4",
        "--restarts",
        "3",
    ]
}

#[test]
fn fit_writes_report_and_plot_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample_csv(dir.path(), 200, 1);
    let out = dir.path().join("out");
    let mut args = fit_args(s(&data), s(&out), "scgmoe");
    args.extend(["--h", "0.1"]);
    let o = cgmix(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value =
        serde_json::from_slice(&std::fs::read(out.join("fit.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["model"], "scgmoe");
    assert_eq!(report["n"], 200);
    assert_eq!(report["clusters"]["labels"].as_array().unwrap().len(), 200);
    assert_eq!(report["gating"]["kind"], "nonparametric");

    // The stored BIC follows exactly from the stored loglik, df and n.
    let ll = report["loglik"].as_f64().unwrap();
    let df = report["df"]["total"].as_f64().unwrap();
    assert_eq!(
        report["bic"].as_f64().unwrap(),
        -2.0 * ll + df * 200f64.ln()
    );

    let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    assert!(curves.starts_with("u,pi_1,pi_2\n"));
    assert_eq!(curves.lines().count(), 101);
    let lines = std::fs::read_to_string(out.join("lines.csv")).unwrap();
    assert!(lines.starts_with("row,x1,mu_1,mu_2\n"));
    assert_eq!(lines.lines().count(), 201);
}

#[test]
fn identical_flags_give_identical_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample_csv(dir.path(), 150, 2);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = cgmix(&fit_args(s(&data), s(out), "cgmoe"));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(
        std::fs::read(a.join("fit.json")).unwrap(),
        std::fs::read(b.join("fit.json")).unwrap()
    );
    assert!(!a.join("curves.csv").exists());
}

#[test]
fn missing_input_is_a_usage_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("missing.csv");
    let o = cgmix(&fit_args(s(&missing), s(&out), "gmlr"));
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let header_only = dir.path().join("header.csv");
    std::fs::write(&header_only, "y,x\n").unwrap();
    let o = cgmix(&fit_args(s(&header_only), s(&out), "gmlr"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n = 0"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn degenerate_data_is_a_fit_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("flat.csv");
    let text: String = std::iter::once("y,x\n".to_string())
        .chain((0..30).map(|i| format!("{},1\n", i % 7)))
        .collect();
    std::fs::write(&data, text).unwrap();
    let out = dir.path().join("out");
    let o = cgmix(&fit_args(s(&data), s(&out), "gmlr"));
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn bad_cells_report_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "y,x\n1,0.1\n2,abc\n").unwrap();
    let o = cgmix(&fit_args(s(&data), s(dir.path()), "gmlr"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3, column 'x'"), "{}", stderr(&o));
}

#[test]
fn classify_writes_one_row_per_observation() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample_csv(dir.path(), 120, 3);
    let out = dir.path().join("out");
    let mut args = fit_args(s(&data), s(&out), "cgmlr");
    args[0] = "classify";
    args.extend(["--threshold", "0.5"]);
    let o = cgmix(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("clusters.csv")).unwrap();
    assert!(text.starts_with("row,label,outlier,z_1,z_2,v_1,v_2\n"));
    assert_eq!(text.lines().count(), 121);
}

#[test]
fn contaminate_scales_floor_fraction_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample_csv(dir.path(), 150, 4);
    let run = |out: &Path, factor: &str| {
        let o = cgmix(&[
            "contaminate",
            "--data",
            s(&data),
            "--y-col",
            "y",
            "--fraction",
            "0.05",
            "--factor",
            factor,
            "--seed",
            "11",
            "--out-dir",
            s(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        (
            std::fs::read_to_string(out.join("sample_contaminated.csv")).unwrap(),
            std::fs::read_to_string(out.join("sample_contaminated_rows.csv")).unwrap(),
        )
    };
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    let (csv_a, rows_a) = run(&a, "2.5");
    let (_, rows_b) = run(&b, "2.5");
    assert_eq!(rows_a, rows_b);
    assert_eq!(rows_a.lines().count(), 1 + 7);

    let original = std::fs::read_to_string(&data).unwrap();
    let changed: Vec<usize> = original
        .lines()
        .zip(csv_a.lines())
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i)
        .collect();
    let listed: Vec<usize> = rows_a.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(changed, listed);

    let (csv_c, _) = run(&c, "1");
    assert_eq!(csv_c, original);
}

#[test]
fn contaminate_rejects_fraction_outside_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample_csv(dir.path(), 60, 5);
    let o = cgmix(&[
        "contaminate",
        "--data",
        s(&data),
        "--y-col",
        "y",
        "--fraction",
        "1",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[0, 1)"));
}

#[test]
fn cv_bandwidth_with_one_candidate_selects_it() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample_csv(dir.path(), 100, 6);
    let out = dir.path().join("out");
    let base = [
        "cv-bandwidth",
        "--data",
        s(&data),
        "--y-col",
        "y",
        "--x-cols",
        "x",
        "--model",
        "sgmoe",
        "--restarts",
        "2",
    ];
    let mut args = base.to_vec();
    args.extend(["--h-grid", "0.15", "--folds", "4", "--out-dir", s(&out)]);
    let o = cgmix(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("selected h = 0.15"));
    let v: Value = serde_json::from_slice(&std::fs::read(out.join("cv.json")).unwrap()).unwrap();
    assert_eq!(v["selected"].as_f64(), Some(0.15));
    assert_eq!(v["scores"][0]["fold_logliks"].as_array().unwrap().len(), 4);

    let mut args = base.to_vec();
    args.extend(["--h-grid", "0.15", "--folds", "101"]);
    assert_eq!(cgmix(&args).status.code(), Some(2));

    let mut args = base.to_vec();
    args[8] = "gmoe";
    assert_eq!(cgmix(&args).status.code(), Some(2));
}

#[test]
fn simulate_minimal_spec_writes_every_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = cgmix(&[
        "simulate",
        "--scenarios",
        "b",
        "--n-values",
        "60",
        "--models",
        "cgmlr",
        "--reps",
        "2",
        "--restarts",
        "2",
        "--seed",
        "7",
        "--out-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&std::fs::read(out.join("study.json")).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["records"].as_array().unwrap().len(), 2);
    let cells = std::fs::read_to_string(out.join("study_cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 2);
    let params = std::fs::read_to_string(out.join("study_params.csv")).unwrap();
    assert!(params.contains("b,60,cgmlr,beta11,"));
}

#[test]
fn paper_grid_enumerates_all_cells() {
    let o = cgmix(&["simulate", "--paper-grid", "--dry-run"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("72 cells x 100 replications\n"));
    assert_eq!(text.lines().count(), 73);
}

#[test]
fn unknown_scenario_lists_valid_names() {
    let o = cgmix(&["simulate", "--scenarios", "e", "--dry-run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("a, b, c, d"));
}

#[test]
fn config_file_supplies_defaults_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "scenarios = [\"a\", \"c\"]\nn_values = [100]\nreps = 3\nmodels = [\"gmlr\"]\n",
    )
    .unwrap();
    let o = cgmix(&["simulate", "--config", s(&cfg), "--reps", "5", "--dry-run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).starts_with("2 cells x 5 replications\n"),
        "{}",
        stdout(&o)
    );

    std::fs::write(&cfg, "bandwidth = 0.2\n").unwrap();
    let o = cgmix(&["simulate", "--config", s(&cfg), "--dry-run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bandwidth"), "{}", stderr(&o));
}
