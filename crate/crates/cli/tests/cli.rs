//! Exit codes, file round-trips and byte-stable outputs of the binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use saddlerl::io::{load_mdp, parse_policy, read_metrics_csv, CSV_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_saddlerl"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_counterexample(dir: &Path) -> PathBuf {
    let p = dir.join("ce.json");
    let out = run(&["gen", "--kind", "counterexample", "--gamma", "0.9", "--out", path_str(&p)]);
    assert_eq!(code(&out), 0);
    p
}

#[test]
fn gen_outputs_validate_and_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["--kind", "counterexample", "--gamma", "0.0"],
        vec!["--kind", "random", "--states", "6", "--actions", "3", "--branching", "2", "--seed", "4"],
        vec!["--kind", "random", "--states", "1", "--actions", "1", "--branching", "1"],
        vec!["--kind", "gridworld", "--width", "3", "--height", "2", "--slip", "0.2", "--gamma", "0.95"],
        vec!["--kind", "gridworld", "--width", "1", "--height", "2"],
    ];
    for (i, case) in cases.iter().enumerate() {
        let a = dir.path().join(format!("a{i}.json"));
        let b = dir.path().join(format!("b{i}.json"));
        for p in [&a, &b] {
            let mut args = vec!["gen"];
            args.extend(case);
            args.extend(["--out", path_str(p)]);
            assert_eq!(code(&run(&args)), 0, "{case:?}");
        }
        let mdp = load_mdp(&a).unwrap();
        assert!(mdp.validate().is_empty());
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }
}

#[test]
fn gen_rejects_bad_parameters() {
    let out = run(&["gen", "--kind", "random", "--states", "3", "--branching", "5"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&run(&["gen", "--kind", "hexagon"])), 2);
}

#[test]
fn solve_writes_checkpoints_and_policy() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = gen_counterexample(dir.path());
    let csv = dir.path().join("m.csv");
    let out = run(&["solve", "--mdp", path_str(&mdp), "--steps", "1000", "--seed", "3", "--out", path_str(&csv)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let eta = (1.0 - 0.9) / (9.0f64 * 1000.0).sqrt();
    assert!(text.contains(&format!("# eta = {eta:.16e} (auto)")), "{text}");
    assert!(text.lines().any(|l| l == CSV_HEADER));
    let rows = read_metrics_csv(&text).unwrap();
    // 1, 2, ..., 512 and 1000
    assert_eq!(rows.len(), 11);
    assert_eq!(rows.last().unwrap().n, 1000);
    assert!(rows.iter().all(|r| r.queries == 2 * r.n as u64 && r.eta == eta));
    assert!(rows.iter().all(|r| (r.value_gap - r.residual_cert).abs() <= 1e-8));
    let policy = parse_policy(&fs::read_to_string(dir.path().join("m.csv.policy.json")).unwrap()).unwrap();
    assert_eq!((policy.num_states(), policy.num_actions()), (3, 3));
}

#[test]
fn solve_options() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = gen_counterexample(dir.path());
    let out = run(&[
        "solve", "--mdp", path_str(&mdp), "--steps", "50", "--eta", "0.01", "--checkpoints", "10,20",
        "--oracle-eval", "false",
    ]);
    assert_eq!(code(&out), 0);
    let rows = read_metrics_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![10, 20, 50]);
    assert!(rows.iter().all(|r| r.value_gap.is_nan() && r.eta == 0.01));
}

#[test]
fn solve_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = gen_counterexample(dir.path());
    let outputs: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            let out = run(&["solve", "--mdp", path_str(&mdp), "--steps", "4096", "--seed", "9"]);
            assert_eq!(code(&out), 0);
            out.stdout
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = gen_counterexample(dir.path());
    let m = path_str(&mdp);
    for args in [
        vec!["solve", "--mdp", m, "--steps", "10", "--unknown-flag"],
        vec!["solve", "--mdp", m],
        vec!["solve", "--mdp", m, "--steps", "0"],
        vec!["solve", "--mdp", m, "--steps", "10", "--eta", "-1"],
        vec!["solve", "--mdp", m, "--steps", "10", "--checkpoints", "a,b"],
        vec!["features", "--mdp", m, "--steps", "10", "--basis", "tabular", "--cv", "0"],
        vec!["verify"],
        vec!["verify", "--mdp", m, "--suite", "standard"],
        vec!["frobnicate"],
    ] {
        assert_eq!(code(&run(&args)), 2, "{args:?}");
    }
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn missing_files_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&run(&["solve", "--mdp", path_str(&missing), "--steps", "10"])), 4);
    assert_eq!(code(&run(&["verify", "--mdp", path_str(&missing)])), 4);
    assert_eq!(code(&run(&["bench", "--spec", path_str(&missing)])), 4);
    let mdp = gen_counterexample(dir.path());
    let unwritable = dir.path().join("no/such/dir/out.csv");
    assert_eq!(code(&run(&["solve", "--mdp", path_str(&mdp), "--steps", "10", "--out", path_str(&unwritable)])), 4);
}

#[test]
fn invalid_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"num_states":2,"num_actions":1,"gamma":0.9,"initial":[0.5,0.5],"reward":[0.0,1.0],"transition":[[0.6,0.6],[0.0,1.0]]}"#,
    )
    .unwrap();
    let out = run(&["verify", "--mdp", path_str(&bad)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("transition[0]"));
    assert_eq!(code(&run(&["solve", "--mdp", path_str(&bad), "--steps", "10"])), 3);

    fs::write(&bad, "not json").unwrap();
    assert_eq!(code(&run(&["solve", "--mdp", path_str(&bad), "--steps", "10"])), 3);

    let mdp = gen_counterexample(dir.path());
    let basis = dir.path().join("basis.json");
    let mut psi_rows = vec!["[1.0, 0.0]"; 9];
    psi_rows[4] = "[0.0, 0.5]";
    let phi = "[[1.0], [1.0], [1.0]]";
    fs::write(&basis, format!(r#"{{"d_v": 1, "d_mu": 2, "phi": {phi}, "psi": [{}]}}"#, psi_rows.join(", "))).unwrap();
    let out = run(&["features", "--mdp", path_str(&mdp), "--basis", path_str(&basis), "--steps", "10"]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("psi column[0]") && err.contains("psi column[1]"), "{err}");

    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"name": "x", "instance": {"kind": "counterexample", "gamma": 0.9}, "steps": [], "seeds": [0]}"#).unwrap();
    assert_eq!(code(&run(&["bench", "--spec", path_str(&spec)])), 3);
}

#[test]
fn features_runs_with_tabular_and_file_bases() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = gen_counterexample(dir.path());
    let out = run(&["features", "--mdp", path_str(&mdp), "--basis", "tabular", "--cv", "3", "--steps", "2000"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let eta = (1.0 - 0.9) / (2000.0f64 * (9.0 + 9.0)).sqrt();
    assert!(text.contains(&format!("# eta = {eta:.16e} (auto)")), "{text}");
    assert_eq!(read_metrics_csv(&text).unwrap().last().unwrap().n, 2000);

    let basis = dir.path().join("agg.json");
    fs::write(&basis, r#"{"d_v": 1, "d_mu": 3, "phi": [[1.0], [1.0], [1.0]], "psi": "state-aggregation:1"}"#).unwrap();
    let csv = dir.path().join("f.csv");
    let out = run(&[
        "features", "--mdp", path_str(&mdp), "--basis", path_str(&basis), "--steps", "300", "--out", path_str(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("f.csv.policy.json").exists());
}

#[test]
fn verify_reports_and_fails_at_impossible_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = gen_counterexample(dir.path());
    let out = run(&["verify", "--mdp", path_str(&mdp)]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| !l.starts_with("FAIL")));

    let out = run(&["verify", "--mdp", path_str(&mdp), "--tol", "1e-300", "--points", "50"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));
}

#[test]
fn bench_two_point_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"name": "two", "instance": {"kind": "random", "states": 3, "actions": 2, "branching": 2, "gamma": 0.9, "seed": 1},
            "steps": [64, 256], "seeds": [5]}"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "4"] {
        let csv = dir.path().join(format!("w{workers}.csv"));
        let out = run(&["bench", "--spec", path_str(&spec), "--workers", workers, "--out", path_str(&csv)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(fs::read(&csv).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let rows = read_metrics_csv(std::str::from_utf8(&outputs[0]).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].n, rows[1].n), (64, 256));
    assert_eq!((rows[0].queries, rows[1].queries), (128, 512));
    assert!(rows.iter().all(|r| r.run_id == "two" && r.seed == 5 && r.elapsed_ms == 0.0));
}
