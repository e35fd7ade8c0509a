//! End-to-end tests of the `kdelinalg` binary: spec'd example invocations,
//! report schema stability, determinism, error surfaces, and exit codes.

use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kdelinalg"));
    // Tests control the cap explicitly where they need it.
    cmd.env_remove("KDELINALG_ORACLE_CAP");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn kdelinalg")
}

fn run_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON document")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Spec'd example: the kernel sum on identical points (s(K) = n^2) stays
/// within eps of the oracle in at least 95% of trials.
#[test]
fn sum_identical_success_rate() {
    let rep = run_json(&[
        "sum",
        "--gen",
        "identical:n=500,d=3",
        "--eps",
        "0.2",
        "--trials",
        "100",
        "--oracle",
        "--seed",
        "1",
    ]);
    assert_eq!(rep["aggregate"]["success_rate"].as_f64().unwrap() >= 0.95, true);
    assert_eq!(rep["trial_reports"].as_array().unwrap().len(), 100);
    assert_eq!(rep["trial_reports"][0]["oracle_value"].as_f64().unwrap(), 250_000.0);
}

/// Spec'd example: top eigenpair from a point file, sampling backend,
/// reports a Rayleigh ratio of at least 1 - 5 eps / 8 = 0.875.
#[test]
fn topeig_file_input_reports_rayleigh_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pts.csv");
    let gen = run(&[
        "gen",
        "--gen",
        "gaussian_blobs:n=80,d=4,k=3",
        "--seed",
        "21",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(gen.status.success(), "{}", stderr_of(&gen));

    let rep = run_json(&[
        "topeig",
        "--input",
        path.to_str().unwrap(),
        "--eps",
        "0.2",
        "--backend",
        "sampling",
        "--oracle",
        "--seed",
        "3",
    ]);
    let trial = &rep["trial_reports"][0];
    let ratio = trial["detail"]["rayleigh_ratio"].as_f64().unwrap();
    assert!(ratio >= 0.875, "rayleigh ratio {ratio}");
    assert_eq!(trial["pass"], Value::Bool(true));
    assert_eq!(rep["aggregate"]["success_rate"].as_f64().unwrap(), 1.0);
    assert_eq!(rep["n"].as_u64().unwrap(), 80);
}

/// Spec'd example: the iteration lower-bound simulation at n = 10^6,
/// eps = delta = 0.05 stagnates for exactly 65 steps.
#[test]
fn adversary_iteration_lb_matches_closed_form() {
    let rep = run_json(&[
        "adversary",
        "--mode",
        "iteration-lb",
        "--n",
        "1000000",
        "--eps",
        "0.05",
        "--delta",
        "0.05",
    ]);
    assert_eq!(rep["stagnation_steps"].as_u64().unwrap(), 65);
    assert_eq!(rep["legal"], Value::Null);
}

#[test]
fn adversary_stagnation_and_signed_noise_modes() {
    let rep = run_json(&[
        "adversary",
        "--mode",
        "stagnation",
        "--n",
        "10000",
        "--eps",
        "0.1",
        "--delta",
        "0.15",
    ]);
    assert_eq!(rep["legal"], Value::Bool(true));
    assert!(rep["ratio"].as_f64().unwrap() > 0.1 / 0.9);

    let rep = run_json(&["adversary", "--mode", "signed-noise", "--n", "400"]);
    assert_eq!(rep["signed_inner"].as_f64().unwrap(), 0.0);
    assert!(rep["required_delta"].as_f64().unwrap() > 0.0);
}

/// `gen` output must round-trip: regenerating writes the identical file,
/// and the documented dp size cap is enforced with a clear error.
#[test]
fn gen_round_trip_and_dp_cap() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = run(&[
            "gen",
            "--gen",
            "gaussian_blobs:n=40,d=3,k=3",
            "--seed",
            "11",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    let text_a = std::fs::read_to_string(&a).unwrap();
    let text_b = std::fs::read_to_string(&b).unwrap();
    assert_eq!(text_a, text_b);
    assert_eq!(text_a.lines().count(), 40);

    // Feeding the file back reproduces the generated dataset bit-exactly:
    // an experiment on --input must see the same oracle value as on --gen.
    let via_gen = run_json(&[
        "sum", "--gen", "gaussian_blobs:n=40,d=3,k=3", "--seed", "11", "--eps", "0.3",
        "--backend", "exact", "--oracle",
    ]);
    let via_file = run_json(&[
        "sum", "--input", a.to_str().unwrap(), "--seed", "11", "--eps", "0.3",
        "--backend", "exact", "--oracle",
    ]);
    assert_eq!(
        via_gen["trial_reports"][0]["oracle_value"],
        via_file["trial_reports"][0]["oracle_value"]
    );

    let capped = run(&["gen", "--gen", "dp:n=10001"]);
    assert!(!capped.status.success());
    assert!(stderr_of(&capped).contains("capped"), "{}", stderr_of(&capped));
}

#[test]
fn ragged_input_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "1 2\n3\n").unwrap();
    let out = run(&["sum", "--input", path.to_str().unwrap(), "--eps", "0.2"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("line 2"), "stderr: {err}");
}

/// Identical configuration and seed give byte-identical reports except for
/// the wall-time lines, and the trial schema carries every key even when
/// values are null.
#[test]
fn reports_are_deterministic_minus_wall_time() {
    let args = [
        "sum",
        "--gen",
        "gaussian_blobs:n=60,d=3,k=3",
        "--eps",
        "0.3",
        "--seed",
        "5",
        "--trials",
        "3",
        "--oracle",
    ];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success() && second.status.success());
    let scrub = |bytes: &[u8]| -> String {
        String::from_utf8_lossy(bytes)
            .lines()
            .filter(|l| !l.contains("wall_ms"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(scrub(&first.stdout), scrub(&second.stdout));

    let rep: Value = serde_json::from_slice(&first.stdout).unwrap();
    let expected_top = [
        "command", "kernel", "eps", "backend", "seed", "trials", "n", "dim", "input_path",
        "gen_spec", "oracle_enabled", "oracle_cap", "contract", "trial_reports", "aggregate",
    ];
    for key in expected_top {
        assert!(rep.get(key).is_some(), "missing top-level key {key}");
    }
    let expected_trial = [
        "trial", "seed", "estimate", "detail", "oracle_value", "relative_error", "pass",
        "kde_work", "wall_ms",
    ];
    for trial in rep["trial_reports"].as_array().unwrap() {
        for key in expected_trial {
            assert!(trial.get(key).is_some(), "missing trial key {key}");
        }
    }
}

/// Without `--oracle` the comparison fields are present but null.
#[test]
fn missing_oracle_fields_are_null_not_absent() {
    let rep = run_json(&[
        "mvp",
        "--gen",
        "gaussian_blobs:n=50,d=3,k=3",
        "--eps",
        "0.2",
        "--trials",
        "2",
        "--seed",
        "7",
    ]);
    assert_eq!(rep["oracle_enabled"], Value::Bool(false));
    assert_eq!(rep["aggregate"]["success_rate"], Value::Null);
    assert_eq!(rep["aggregate"]["median_relative_error"], Value::Null);
    for trial in rep["trial_reports"].as_array().unwrap() {
        assert_eq!(trial["oracle_value"], Value::Null);
        assert_eq!(trial["relative_error"], Value::Null);
        assert_eq!(trial["pass"], Value::Null);
        assert!(trial["estimate"].as_f64().unwrap() > 0.0);
        assert!(trial["kde_work"].as_u64().unwrap() > 0);
    }
}

/// The oracle cap is `KDELINALG_ORACLE_CAP` when set: a 30-point dataset
/// passes a cap of 30 and trips a cap of 10 with a capacity error.
#[test]
fn oracle_cap_env_is_honored() {
    let args = [
        "sum",
        "--gen",
        "identical:n=30,d=2",
        "--eps",
        "0.2",
        "--oracle",
    ];
    let over = bin()
        .args(args)
        .env("KDELINALG_ORACLE_CAP", "10")
        .output()
        .unwrap();
    assert_eq!(over.status.code(), Some(1));
    let err = stderr_of(&over);
    assert!(err.contains("capacity") && err.contains("10"), "stderr: {err}");

    let under = bin()
        .args(args)
        .env("KDELINALG_ORACLE_CAP", "30")
        .output()
        .unwrap();
    assert!(under.status.success(), "{}", stderr_of(&under));
}

/// `--strict` turns contract violations into exit code 3. On identical
/// points with a tiny inclusion probability, the one-shot estimator Z is
/// either n (nothing sampled) or an enormous overshoot (any sampled pair
/// is scaled by q^-2 = 10^4), so every trial fails deterministically.
#[test]
fn strict_exit_code_on_contract_violation() {
    let args = [
        "estimator",
        "--gen",
        "identical:n=100,d=3",
        "--eps",
        "0.1",
        "--q",
        "0.01",
        "--trials",
        "5",
        "--oracle",
        "--seed",
        "0",
    ];
    let lenient = run(&args);
    assert!(lenient.status.success(), "{}", stderr_of(&lenient));
    let rep: Value = serde_json::from_slice(&lenient.stdout).unwrap();
    assert_eq!(rep["aggregate"]["success_rate"].as_f64().unwrap(), 0.0);
    assert_eq!(rep["trial_reports"][0]["kde_work"], Value::Null);

    let strict = bin().args(args).arg("--strict").output().unwrap();
    assert_eq!(strict.status.code(), Some(3));
}

/// With the exact backend the rounding envelopes are deterministic, so
/// quadform and matmul must pass their contracts on every trial.
#[test]
fn exact_backend_contracts_hold() {
    let rep = run_json(&[
        "quadform",
        "--gen",
        "gaussian_blobs:n=60,d=3,k=3",
        "--eps",
        "0.1",
        "--backend",
        "exact",
        "--trials",
        "3",
        "--oracle",
        "--seed",
        "2",
    ]);
    assert_eq!(rep["aggregate"]["success_rate"].as_f64().unwrap(), 1.0);

    let rep = run_json(&[
        "matmul",
        "--gen",
        "gaussian_blobs:n=40,d=3,k=3",
        "--eps",
        "0.15",
        "--backend",
        "exact",
        "--cols",
        "3",
        "--trials",
        "2",
        "--oracle",
        "--seed",
        "4",
    ]);
    assert_eq!(rep["aggregate"]["success_rate"].as_f64().unwrap(), 1.0);
    assert_eq!(rep["trial_reports"][0]["detail"]["cols"].as_u64().unwrap(), 3);
}

/// Unknown enum-ish string arguments fail with a readable message.
#[test]
fn unknown_backend_kernel_and_mode_are_rejected() {
    let bad_backend = run(&[
        "sum", "--gen", "identical:n=10,d=2", "--backend", "quantum",
    ]);
    assert_eq!(bad_backend.status.code(), Some(1));
    assert!(stderr_of(&bad_backend).contains("quantum"));

    let bad_kernel = run(&["sum", "--gen", "identical:n=10,d=2", "--kernel", "sinc"]);
    assert_eq!(bad_kernel.status.code(), Some(1));
    assert!(stderr_of(&bad_kernel).contains("sinc"));

    let bad_mode = run(&["adversary", "--mode", "bribe", "--n", "1000"]);
    assert_eq!(bad_mode.status.code(), Some(1));
    assert!(stderr_of(&bad_mode).contains("bribe"));

    let no_data = run(&["sum", "--eps", "0.2"]);
    assert_eq!(no_data.status.code(), Some(2), "clap usage error");
}

/// The gen spec written in the report echoes the input, and --out writes
/// the report to a file instead of stdout.
#[test]
fn report_goes_to_file_with_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = run(&[
        "sum",
        "--gen",
        "identical:n=20,d=2",
        "--eps",
        "0.2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(out.stdout.is_empty());
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(rep["gen_spec"].as_str().unwrap(), "identical:n=20,d=2");
    assert_eq!(rep["input_path"], Value::Null);
}
