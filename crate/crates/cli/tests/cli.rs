use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

/// Runs the binary from inside `cwd` so stray relative writes would land there.
fn quatmpc(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quatmpc"))
        .current_dir(cwd)
        .env_remove("QUATMPC_OUT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn entries(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn run_writes_a_full_log_and_only_into_out() {
    let cwd = tempfile::tempdir().unwrap();
    let out = cwd.path().join("results");
    let path = scenario("stand.toml");
    let o = quatmpc(
        cwd.path(),
        &["run", path.to_str().unwrap(), "--out", out.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("stand: Completed"));

    assert_eq!(entries(cwd.path()), vec!["results"]);
    assert_eq!(entries(&out), vec!["manifest.json", "stand.csv", "stand.summary.json"]);

    // 2 s at 1 ms: one row per physics step plus the initial state
    let text = std::fs::read_to_string(out.join("stand.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("time,"));
    assert_eq!(lines.count(), 2001);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("stand.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "completed");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "run");
}

#[test]
fn malformed_field_is_a_config_error_naming_the_field() {
    let cwd = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("stand.toml"))
        .unwrap()
        .replace("duration = 2.0", "duration = \"long\"");
    assert!(text.contains("\"long\""), "fixture no longer has duration = 2.0");
    let bad = cwd.path().join("bad.toml");
    std::fs::write(&bad, text).unwrap();
    let o = quatmpc(cwd.path(), &["run", bad.to_str().unwrap(), "--out", "o"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error:") && err.contains("duration"), "{err}");
    assert!(!cwd.path().join("o").exists());
}

#[test]
fn missing_scenario_file_is_a_config_error() {
    let cwd = tempfile::tempdir().unwrap();
    let o = quatmpc(cwd.path(), &["run", "nope.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn euler_wall_standing_is_a_scenario_failure() {
    let cwd = tempfile::tempdir().unwrap();
    let path = scenario("wall_standing_euler.toml");
    let o = quatmpc(cwd.path(), &["run", path.to_str().unwrap(), "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("failure:"));
    // the partial log is still written
    assert!(cwd.path().join("o/wall_standing_euler.csv").exists());
}

#[test]
fn montecarlo_is_reproducible_for_a_seed() {
    let cwd = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let o = quatmpc(
            cwd.path(),
            &["montecarlo", "--trials", "2", "--seed", "5", "--out", out],
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(cwd.path().join(out).join("montecarlo_quaternion.json")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    let report: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(report["trials"], 2);
    assert_eq!(report["outcomes"].as_array().unwrap().len(), 2);
    assert_eq!(entries(cwd.path()), vec!["a", "b"]);
}

#[test]
fn montecarlo_single_trial_from_the_scenario_file() {
    let cwd = tempfile::tempdir().unwrap();
    let path = scenario("falling_cat.toml");
    let o = quatmpc(
        cwd.path(),
        &[
            "montecarlo",
            "--trials",
            "1",
            "--controller",
            "euler",
            "--scenario",
            path.to_str().unwrap(),
            "--out",
            "o",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cwd.path().join("o/montecarlo_euler.json")).unwrap()).unwrap();
    assert_eq!(report["outcomes"].as_array().unwrap().len(), 1);
    assert_eq!(report["controller"], "euler");
}

#[test]
fn zero_trials_is_rejected() {
    let cwd = tempfile::tempdir().unwrap();
    let o = quatmpc(cwd.path(), &["montecarlo", "--trials", "0", "--out", "o"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trials"));
}

#[test]
fn verify_passes_and_catches_a_broken_gradient() {
    let cwd = tempfile::tempdir().unwrap();
    let o = quatmpc(cwd.path(), &["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));

    let o = quatmpc(cwd.path(), &["verify", "--perturb-gradient", "1e-3"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    assert!(entries(cwd.path()).is_empty());
}
