use std::path::Path;
use std::process::{Command, Output};

const GAME: &str = r#"{
    "graphon": {"family": "separable_power", "params": {"alpha": 0.5}},
    "utility": {"family": "lq_plateau", "params": {"lambda": 0.5}},
    "L": 4.0,
    "grid_n": 256
}"#;

const GRAPHON: &str = r#"{"family": "separable_power", "params": {"alpha": 0.5}}"#;

fn graphon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphon"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_column(path: &Path) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect()
}

#[test]
fn lq_solve_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let graphon_path = write(dir.path(), "w.json", GRAPHON);
    let game_path = write(dir.path(), "game.json", GAME);
    let profile = dir.path().join("s.csv");
    let out = graphon(&[
        "lq",
        "solve",
        "--graphon",
        &graphon_path,
        "--lambda",
        "0.5",
        "--L",
        "4",
        "--g",
        "const:1",
        "--n",
        "256",
        "--tol",
        "1e-10",
        "--out",
        profile.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = read_column(&profile);
    assert_eq!(s.len(), 256);
    for (i, v) in s.iter().enumerate() {
        let t = (i as f64 + 0.5) / 256.0;
        assert!((v - (1.0 + 4.0 / 9.0 * t.sqrt())).abs() < 5e-3);
    }

    let regrets = dir.path().join("r.csv");
    let out = graphon(&[
        "lq",
        "verify",
        "--game",
        &game_path,
        "--profile",
        profile.to_str().unwrap(),
        "--regrets",
        regrets.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("certified=true"));
    let report = std::fs::read_to_string(&regrets).unwrap();
    assert!(report.starts_with("cell_index,midpoint,strategy,aggregate,regret"));
    assert_eq!(report.lines().count(), 257);

    let bad = write(dir.path(), "bad.csv", &"3.5\n".repeat(256));
    let out = graphon(&["lq", "verify", "--game", &game_path, "--profile", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("certified=false"));
    assert!(stdout(&out).contains("StrategyOnPlateau"));
}

#[test]
fn lq_solve_rejects_a_small_cap() {
    let dir = tempfile::tempdir().unwrap();
    let graphon_path = write(dir.path(), "w.json", GRAPHON);
    let out = graphon(&[
        "lq",
        "solve",
        "--graphon",
        &graphon_path,
        "--lambda",
        "0.5",
        "--L",
        "1.5",
        "--n",
        "16",
        "--out",
        dir.path().join("s.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2"));
}

#[test]
fn solve_writes_profile_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let game_path = write(dir.path(), "game.json", GAME);
    let config = write(
        dir.path(),
        "cfg.json",
        r#"{"damping": 1.0, "regret_target": 1e-14, "step_tolerance": 1e-12}"#,
    );
    let (profile, trace) = (dir.path().join("f.csv"), dir.path().join("trace.csv"));
    let out = graphon(&[
        "solve",
        "--game",
        &game_path,
        "--init",
        "const:4",
        "--config",
        &config,
        "--out",
        profile.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("converged=true"));
    let f = read_column(&profile);
    assert!((f[255] - (1.0 + 4.0 / 9.0 * (255.5f64 / 256.0).sqrt())).abs() < 5e-3);
    let trace = std::fs::read_to_string(&trace).unwrap();
    assert!(trace.starts_with("iteration,epsilon_star,step_size"));
    assert!(trace.lines().count() > 2);
}

#[test]
fn lab_run_reports_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let plan = format!(
        r#"{{"game": {GAME}, "n_list": [8, 32, 128], "alternate": {{"reference_n": 192, "n_list": [12, 48, 96]}}}}"#
    );
    let plan_path = write(dir.path(), "plan.json", &plan);
    let out_dir = dir.path().join("out");
    let out = graphon(&[
        "lab",
        "run",
        "--plan",
        &plan_path,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}{}",
        stdout(&out),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("PASS cross_sequence.l1"));
    assert!(!stdout(&out).contains("FAIL"));
    let summary: serde_json::Value =
        serde_json::from_reader(std::fs::File::open(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["passed"], serde_json::Value::Bool(true));
    assert!(out_dir.join("main_limit_profile.csv").exists());

    let strict = plan.replacen('{', r#"{"tolerances": {"final_epsilon": -1.0}, "#, 1);
    let strict_path = write(dir.path(), "strict.json", &strict);
    let out = graphon(&[
        "lab",
        "run",
        "--plan",
        &strict_path,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL main.approximation.final_epsilon"));
}

#[test]
fn lab_run_needs_an_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let plan_path = write(dir.path(), "plan.json", &format!(r#"{{"game": {GAME}}}"#));
    let out = graphon(&["lab", "run", "--plan", &plan_path]);
    assert_eq!(out.status.code(), Some(2));
}
