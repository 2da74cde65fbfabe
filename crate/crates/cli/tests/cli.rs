//! End-to-end checks of the `epsense` binary: exit codes, output files,
//! and determinism of the CSV bytes.

use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn epsense() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epsense"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn three_mode_ep() -> serde_json::Value {
    json!({
        "catalog": "three_mode",
        "delta": 1.0,
        "kappa1": 2.0_f64.sqrt(),
        "kappa3": 2.0_f64.sqrt(),
    })
}

#[test]
fn validate_reports_chain_degeneracy_structure() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(
        dir.path(),
        "chain.json",
        r#"{"catalog": "kitaev_chain", "N": 4, "J": 1.0, "Omega": 1.0}"#,
    );
    let out = epsense().arg("validate").arg(&model).output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("model: kitaev_chain_N4 (4 modes)"), "{text}");
    // All eight eigenvalues collapse onto one defective zero of order 4.
    // The raw stability flag may read false here: an order-4 degeneracy
    // scatters the eigensolver output by roundoff^(1/4), far above the
    // 1e-9 stability tolerance, so only the cluster line is load-bearing.
    assert!(text.contains("multiplicity 8, order 4"), "{text}");

    // Away from the degeneracy the spectrum is simple and cleanly real.
    let detuned = write(
        dir.path(),
        "detuned.json",
        r#"{"catalog": "kitaev_chain", "N": 4, "J": 1.0, "Omega": 0.9}"#,
    );
    let out = epsense().arg("validate").arg(&detuned).output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("stable: true"), "{text}");
}

#[test]
fn invalid_model_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(
        dir.path(),
        "bad.json",
        r#"{"n_modes": 2,
            "h": [[[0.0,0.0],[1.0,0.0]],[[1.0,0.5],[0.0,0.0]]],
            "delta": [[[0.0,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0]]]}"#,
    );
    let out = epsense().arg("validate").arg(&model).output().unwrap();
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("Hermitian"), "{}", stderr(&out));
}

#[test]
fn missing_file_exits_3() {
    let out = epsense()
        .arg("validate")
        .arg("/no/such/model.json")
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).starts_with("error:"), "{}", stderr(&out));
}

#[test]
fn malformed_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", "{ not json");
    let out = epsense()
        .args(["qfi-sweep", "-c"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("cfg.json"), "{}", stderr(&out));
}

#[test]
fn unknown_preset_exits_3_and_lists_names() {
    let out = epsense().args(["reproduce", "fig9z"]).output().unwrap();
    assert_eq!(code(&out), 3);
    let err = stderr(&out);
    assert!(err.contains("unknown preset 'fig9z'"), "{err}");
    assert!(err.contains("fig4b"), "{err}");
}

#[test]
fn grid_validation_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad_lo = write(
        dir.path(),
        "lo.json",
        &json!({
            "model": three_mode_ep(), "param": "kappa1",
            "t_grid": {"lo": 0.0, "hi": 10.0, "count": 9},
        })
        .to_string(),
    );
    let out = epsense().args(["qfi-sweep", "-c"]).arg(&bad_lo).output().unwrap();
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("0 < lo < hi"), "{}", stderr(&out));

    let short = write(
        dir.path(),
        "short.json",
        &json!({
            "model": three_mode_ep(), "param": "kappa1",
            "t_grid": {"lo": 1.0, "hi": 10.0, "count": 2},
        })
        .to_string(),
    );
    let out = epsense().args(["qfi-sweep", "-c"]).arg(&short).output().unwrap();
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("at least 3 points"), "{}", stderr(&out));

    let missing = write(
        dir.path(),
        "missing.json",
        &json!({"model": three_mode_ep(), "param": "kappa1"}).to_string(),
    );
    let out = epsense()
        .args(["spectrum-sweep", "-c"])
        .arg(&missing)
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
    assert!(
        stderr(&out).contains("config needs 'epsilon_grid'"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn alpha_length_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        &json!({
            "model": three_mode_ep(), "param": "kappa1",
            "t_grid": {"lo": 1.0, "hi": 10.0, "count": 5},
            "alpha": [[1.0, 0.0]],
        })
        .to_string(),
    );
    let out = epsense().args(["qfi-sweep", "-c"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(
        stderr(&out).contains("alpha has 1 entries, model has 3 modes"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn sweep_csv_is_deterministic_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        &json!({
            "model": three_mode_ep(), "param": "kappa1",
            "t_grid": {"lo": 0.5, "hi": 20.0, "count": 9},
            "window": [2.0, 20.0],
        })
        .to_string(),
    );
    // Same output path both times so the self-describing header matches too;
    // the second run also exercises a different worker count.
    let csv = dir.path().join("sweep.csv");
    let mut captured = Vec::new();
    for jobs in ["1", "3"] {
        let out = epsense()
            .args(["qfi-sweep", "-c"])
            .arg(&cfg)
            .arg("--out")
            .arg(&csv)
            .args(["--jobs", jobs])
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
        let text = stdout(&out);
        assert!(text.contains("wrote"), "{text}");
        assert!(text.contains("fit: slope"), "{text}");
        captured.push((
            std::fs::read(&csv).unwrap(),
            std::fs::read(dir.path().join("sweep.csv.fit.json")).unwrap(),
        ));
    }
    assert_eq!(captured[0], captured[1], "output bytes differ between runs");

    let text = String::from_utf8(captured[0].0.clone()).unwrap();
    let mut lines = text.lines();
    let head = lines.next().unwrap();
    assert!(head.starts_with("# {"), "{head}");
    let embedded: serde_json::Value = serde_json::from_str(&head[2..]).unwrap();
    assert_eq!(embedded["param"], "kappa1");
    assert_eq!(lines.next().unwrap(), "t,F,Q");
    assert_eq!(lines.count(), 9);
}

#[test]
fn window_flag_overrides_config_window() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        &json!({
            "model": three_mode_ep(), "param": "kappa1",
            "t_grid": {"lo": 1.0, "hi": 20.0, "count": 9},
            "window": [2.0, 20.0],
        })
        .to_string(),
    );
    let csv = dir.path().join("w.csv");
    let out = epsense()
        .args(["qfi-sweep", "-c"])
        .arg(&cfg)
        .arg("--out")
        .arg(&csv)
        .args(["--window", "5:15"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("w.csv.fit.json")).unwrap())
            .unwrap();
    assert_eq!(fit["window"][0], 5.0);
    assert_eq!(fit["window"][1], 15.0);

    let out = epsense()
        .args(["qfi-sweep", "-c"])
        .arg(&cfg)
        .args(["--window", "15:5"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).contains("window needs lo < hi"), "{}", stderr(&out));
}

#[test]
fn amplifying_sweep_truncates_csv_and_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        &json!({
            "model": {"catalog": "single_mode", "delta": 1.0, "kappa": 2.0},
            "param": "kappa",
            "t_grid": {"lo": 1.0, "hi": 200.0, "count": 24},
        })
        .to_string(),
    );
    let csv = dir.path().join("blowup.csv");
    let out = epsense()
        .args(["qfi-sweep", "-c"])
        .arg(&cfg)
        .arg("--out")
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(code(&out), 4, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("wrote"), "{}", stdout(&out));
    let err = stderr(&out);
    assert!(err.contains("numeric range"), "{err}");
    assert!(err.contains("last good grid point"), "{err}");
    // The file holds the grid prefix that stayed finite.
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows = text.lines().count() - 2;
    assert!((1..24).contains(&rows), "rows {rows}");
    assert!(!dir.path().join("blowup.csv.fit.json").exists());
}

#[test]
fn size_sweep_beyond_step_budget_exits_4_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        &json!({
            "model": {"catalog": "kitaev_with_edge", "N": 4, "J": 1.0, "Omega": 0.9,
                      "eta": 0.0, "theta": std::f64::consts::FRAC_PI_4},
            "param": "eta",
            "n_range": [4, 6],
            "t0": 1.0e9,
        })
        .to_string(),
    );
    let out = epsense()
        .args(["size-sweep", "-c"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("size.csv"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 4, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("try a smaller t0"), "{}", stderr(&out));
}

#[test]
fn ep_time_scaling_is_displacement_independent() {
    // Same degenerate model, vacuum vs a displaced input: the fitted
    // long-time exponent must not move.
    let dir = tempfile::tempdir().unwrap();
    let mut slopes = Vec::new();
    for (name, alpha) in [
        ("vac", json!(null)),
        ("disp", json!([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])),
    ] {
        let mut body = json!({
            "model": three_mode_ep(), "param": "kappa1",
            "t_grid": {"lo": 40.0, "hi": 400.0, "count": 12},
            "window": [40.0, 400.0],
        });
        if !alpha.is_null() {
            body["alpha"] = alpha;
        }
        let cfg = write(dir.path(), &format!("{name}.json"), &body.to_string());
        let csv = dir.path().join(format!("{name}.csv"));
        let out = epsense()
            .args(["qfi-sweep", "-c"])
            .arg(&cfg)
            .arg("--out")
            .arg(&csv)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
        let fit: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join(format!("{name}.csv.fit.json"))).unwrap(),
        )
        .unwrap();
        slopes.push(fit["slope"].as_f64().unwrap());
    }
    for s in &slopes {
        assert!((s - 10.0).abs() < 0.2, "slopes {slopes:?}");
    }
}

#[test]
fn oracle_compare_threshold_gates_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let point = json!({
        "label": "single-ep",
        "model": {"catalog": "single_mode", "delta": 1.0, "kappa": 1.0},
        "param": "kappa",
        "t": 0.25,
        "cutoff": 48,
    });
    let pass_cfg = write(
        dir.path(),
        "pass.json",
        &json!({"points": [point]}).to_string(),
    );
    let out = epsense()
        .args(["oracle-compare", "-c"])
        .arg(&pass_cfg)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("max relative deviation"), "{text}");
    assert!(text.contains("PASS"), "{text}");

    // The same point cannot beat an absurd threshold: exit 1, not an error.
    let fail_cfg = write(
        dir.path(),
        "fail.json",
        &json!({"points": [point], "threshold": 1e-12}).to_string(),
    );
    let out = epsense()
        .args(["oracle-compare", "-c"])
        .arg(&fail_cfg)
        .output()
        .unwrap();
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("FAIL"), "{}", stdout(&out));
}

#[test]
fn reproduce_fig2a_passes_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = epsense()
        .args(["reproduce", "fig2a"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("fig2a-unconstrained"), "{text}");
    assert!(text.matches(" PASS").count() >= 2, "{text}");
    for label in ["fig2a-unconstrained", "fig2a-constrained"] {
        assert!(dir.path().join(format!("{label}.csv")).exists());
        assert!(dir.path().join(format!("{label}.csv.fit.json")).exists());
    }
}
