use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use avgcost::{catalog, io};
use serde_json::Value;
use tempfile::TempDir;

fn avgcost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avgcost"))
        .args(args)
        .env_remove("AVGCOST_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(args: &[&str]) -> Output {
    let out = avgcost(args);
    assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
    out
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn num(v: &Value) -> f64 {
    match v {
        Value::Number(n) => n.as_f64().unwrap(),
        Value::String(t) if t == "inf" => f64::INFINITY,
        other => panic!("not a number: {other}"),
    }
}

fn nums(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(num).collect()
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn write_catalog(dir: &TempDir, name: &str, args: &[&str]) -> PathBuf {
    let p = path(dir, &format!("{name}.json"));
    let mut full = vec!["catalog", name];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--out", s(&p)]);
    ok(&full);
    p
}

#[test]
fn solve_indicator_gives_zero_minimum_and_indicator_u() {
    let dir = TempDir::new().unwrap();
    let m = write_catalog(&dir, "indicator", &["--grid-size", "11"]);
    let v = json(&ok(&["solve", "--model", s(&m), "--alpha", "0.9"]).stdout);
    assert_eq!(num(&v["m"]), 0.0);
    let u = nums(&v["u"]);
    assert_eq!(
        u,
        (0..11)
            .map(|x| if x == 0 { 0.0 } else { 1.0 })
            .collect::<Vec<_>>()
    );
    assert_eq!(num(&v["tol"]), 1e-10);
}

#[test]
fn solve_constant_cost_gives_geometric_sum() {
    let dir = TempDir::new().unwrap();
    let m = write_catalog(
        &dir,
        "constant",
        &["--n-states", "4", "--n-actions", "2", "--seed", "3"],
    );
    for alpha in [0.5, 0.9, 0.99] {
        let v = json(&ok(&["solve", "--model", s(&m), "--alpha", &alpha.to_string()]).stdout);
        let expect = 1.0 / (1.0 - alpha);
        assert!((num(&v["m"]) - expect).abs() < 1e-9 * expect, "alpha {alpha}");
    }
}

#[test]
fn solve_random_matches_oracle_dump() {
    // Discounted optimum of random_finite(4, 3, 7, 0) at alpha 0.9 from
    // policy enumeration; the core oracle tests hold the same constants.
    const DUMP: [f64; 4] = [
        5.0040802061705545e0,
        5.0818937477287456e0,
        5.0661783049350060e0,
        4.7593515164182696e0,
    ];
    let dir = TempDir::new().unwrap();
    let m = write_catalog(
        &dir,
        "random",
        &["--n-states", "4", "--n-actions", "3", "--seed", "7"],
    );
    let v = json(&ok(&["solve", "--model", s(&m), "--alpha", "0.9", "--tol", "1e-12"]).stdout);
    for (x, got) in nums(&v["v"]).into_iter().enumerate() {
        assert!((got - DUMP[x]).abs() < 1e-10, "x {x}: {got}");
    }
}

#[test]
fn catalog_files_round_trip_to_the_constructors() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (
            write_catalog(&dir, "indicator", &["--grid-size", "7"]),
            catalog::example_indicator(7),
        ),
        (
            write_catalog(&dir, "dirichlet", &["--n-pairs", "3"]),
            catalog::example_dirichlet(3),
        ),
        (
            write_catalog(
                &dir,
                "random",
                &[
                    "--n-states",
                    "5",
                    "--n-actions",
                    "3",
                    "--seed",
                    "9",
                    "--sparsity",
                    "0.3",
                ],
            ),
            catalog::random_finite(5, 3, 9, 0.3),
        ),
    ];
    for (p, expect) in cases {
        let (model, report) = io::read_model(&p).unwrap();
        assert!(report.is_valid());
        assert_eq!(model, expect, "{}", p.display());
    }
}

#[test]
fn vanish_verify_simulate_on_indicator() {
    let dir = TempDir::new().unwrap();
    let m = write_catalog(&dir, "indicator", &["--grid-size", "21"]);
    let (d, p) = (path(&dir, "diag.json"), path(&dir, "policy.json"));
    ok(&["vanish", "--model", s(&m), "--out", s(&d), "--policy-out", s(&p)]);
    let diag = json(&std::fs::read(&d).unwrap());
    assert_eq!(num(&diag["w_upper_seq"]), 0.0);
    assert_eq!(diag["tail_start"], 21);

    let r = path(&dir, "report.json");
    let out = ok(&["verify", "--model", s(&m), "--diagnostics", s(&d), "--out", s(&r)]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("acoe"));
    let report = json(&std::fs::read(&r).unwrap());
    let ec = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "equicontinuity")
        .unwrap();
    assert_eq!(ec["verdict"], "fail");

    let est = json(
        &ok(&[
            "simulate",
            "--model",
            s(&m),
            "--policy",
            s(&p),
            "--x0",
            "5",
            "--horizon",
            "500",
        ])
        .stdout,
    );
    // One step at cost 1, then the origin forever.
    assert!((num(&est["mean"]) - 1.0 / 500.0).abs() < 1e-15);
    // A diagnostics file is accepted as the policy source as well.
    let again = ok(&[
        "simulate",
        "--model",
        s(&m),
        "--policy",
        s(&d),
        "--x0",
        "5",
        "--horizon",
        "500",
    ]);
    assert_eq!(json(&again.stdout), est);
}

#[test]
fn verify_subset_of_checks() {
    let dir = TempDir::new().unwrap();
    let m = write_catalog(&dir, "constant", &["--n-states", "3", "--n-actions", "2"]);
    let d = path(&dir, "diag.json");
    ok(&["vanish", "--model", s(&m), "--out", s(&d)]);
    let out = ok(&[
        "verify",
        "--model",
        s(&m),
        "--diagnostics",
        s(&d),
        "--checks",
        "acoe,chain",
    ]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("chain: w_lower_seq <= w_upper_seq"));
    assert!(!table.contains("wacoi"));
    let bad = avgcost(&[
        "verify",
        "--model",
        s(&m),
        "--diagnostics",
        s(&d),
        "--checks",
        "nope",
    ]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn coarse_weak_construction_on_dirichlet_has_empty_action_sets() {
    let dir = TempDir::new().unwrap();
    let m = write_catalog(&dir, "dirichlet", &["--n-pairs", "2"]);
    let d = path(&dir, "diag.json");
    // Radius 0.3 reaches the rational neighbours, so weak u vanishes everywhere.
    let args = [
        "vanish",
        "--model",
        s(&m),
        "--construction",
        "weak",
        "--radii",
        "0.3",
        "--out",
        s(&d),
    ];
    let out = avgcost(&args);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("[1, 3]"), "{}", stderr(&out));
    // Diagnostics are still written for inspection.
    let diag = json(&std::fs::read(&d).unwrap());
    assert!(diag["policy"].is_null());
    let diag: avgcost::VanishDiagnostics = serde_json::from_slice(&std::fs::read(&d).unwrap()).unwrap();
    assert_eq!(diag.u.unwrap().values, vec![0.0; 5]);
    // The default construction for a setwise model succeeds.
    ok(&["vanish", "--model", s(&m), "--out", s(&d)]);
}

#[test]
fn failing_residual_check_exits_5() {
    let dir = TempDir::new().unwrap();
    let m = write_catalog(
        &dir,
        "random",
        &["--n-states", "5", "--n-actions", "3", "--seed", "2"],
    );
    let d = path(&dir, "diag.json");
    ok(&["vanish", "--model", s(&m), "--out", s(&d)]);
    ok(&[
        "verify",
        "--model",
        s(&m),
        "--diagnostics",
        s(&d),
        "--checks",
        "wacoi,acoe",
    ]);
    let out = avgcost(&[
        "verify",
        "--model",
        s(&m),
        "--diagnostics",
        s(&d),
        "--checks",
        "acoe",
        "--tol",
        "1e-300",
    ]);
    assert_eq!(code(&out), 5, "{}", stderr(&out));
    assert!(stderr(&out).contains("acoe"));
}

#[test]
fn malformed_model_reports_position_and_exits_2() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "bad.json");
    std::fs::write(&p, "{\n  \"states\": [\n    {\"coord\": [0.0]},\n  ]\n}\n").unwrap();
    let out = avgcost(&["solve", "--model", s(&p), "--alpha", "0.5"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 4"), "{}", stderr(&out));
}

#[test]
fn invalid_kernel_exits_2_with_violation() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "sub.json");
    std::fs::write(
        &p,
        r#"{"states": [{"coord": [0.0]}, {"coord": [1.0]}], "metric": "euclidean-on-coord",
            "actions": ["a"], "cost": [[0], [1]],
            "kernel": {"0,0": [{"state": 0, "prob": 0.5}], "1,0": [{"state": 0, "prob": 1.0}]},
            "continuity_class": "W*"}"#,
    )
    .unwrap();
    let out = avgcost(&["vanish", "--model", s(&p)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("fails validation"), "{}", stderr(&out));
}

#[test]
fn bad_policy_and_bad_flags_exit_2() {
    let dir = TempDir::new().unwrap();
    let m = write_catalog(
        &dir,
        "random",
        &[
            "--n-states",
            "3",
            "--n-actions",
            "2",
            "--sparsity",
            "0.9",
            "--seed",
            "1",
        ],
    );
    let (model, _) = io::read_model(&m).unwrap();
    let missing = (0..3)
        .find(|&x| !model.cost(x, 1).is_finite())
        .expect("some pair dropped");
    let mut actions = vec![0usize; 3];
    actions[missing] = 1;
    let p = path(&dir, "policy.json");
    std::fs::write(&p, serde_json::to_string(&actions).unwrap()).unwrap();
    let out = avgcost(&["simulate", "--model", s(&m), "--policy", s(&p)]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains(&format!("A({missing})")),
        "{}",
        stderr(&out)
    );

    let out = avgcost(&["vanish", "--model", s(&m), "--schedule", "geometric:1.5:10"]);
    assert_eq!(code(&out), 2);
    let out = avgcost(&["solve", "--model", s(&m), "--alpha", "1.0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn slow_solve_exits_3() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "trap.json");
    io::write_model(&catalog::two_state(1.0, 0.0, 0.0, 1.0), &p).unwrap();
    let out = avgcost(&[
        "solve",
        "--model",
        s(&p),
        "--alpha",
        "0.999999999",
        "--tol",
        "1e-12",
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("did not converge"));
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let m = write_catalog(
        &dir,
        "random",
        &["--n-states", "5", "--n-actions", "3", "--seed", "4"],
    );
    let run = |threads: &str, extra: &[&str], out: &Path| {
        let mut args = vec![
            "report",
            "--model",
            s(&m),
            "--seed",
            "11",
            "--horizon",
            "2000",
            "--out",
            s(out),
        ];
        args.extend_from_slice(extra);
        let o = Command::new(env!("CARGO_BIN_EXE_avgcost"))
            .args(&args)
            .env("AVGCOST_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        (o.stdout, std::fs::read(out).unwrap())
    };
    let a = run("1", &[], &path(&dir, "a.json"));
    let b = run("1", &[], &path(&dir, "b.json"));
    let c = run("4", &[], &path(&dir, "c.json"));
    let d = run("4", &["--serial"], &path(&dir, "d.json"));
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(a, d);
    let doc = json(&a.1);
    assert!(
        doc["simulation"]["check"]["verdict"] == "pass",
        "{}",
        doc["simulation"]["check"]
    );
}

#[test]
fn trajectory_log_depends_only_on_seed() {
    let dir = TempDir::new().unwrap();
    let m = write_catalog(
        &dir,
        "random",
        &["--n-states", "4", "--n-actions", "2", "--seed", "5"],
    );
    let p = path(&dir, "policy.json");
    std::fs::write(&p, "[0, 1, 0, 1]").unwrap();
    let log = |seed: &str, name: &str| {
        let f = path(&dir, name);
        ok(&[
            "simulate",
            "--model",
            s(&m),
            "--policy",
            s(&p),
            "--horizon",
            "50",
            "--reps",
            "2",
            "--seed",
            seed,
            "--log",
            s(&f),
        ]);
        std::fs::read_to_string(f).unwrap()
    };
    let (a, b, c) = (log("8", "a.log"), log("8", "b.log"), log("9", "c.log"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 51);
}
