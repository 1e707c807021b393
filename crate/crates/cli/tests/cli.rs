use std::path::Path;
use std::process::{Command, Output};

fn e2e(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_e2e-qos"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn bundled_5g_run_writes_a_full_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = e2e(&["run", "builtin:paper_5g"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("trace.csv"));
    assert_eq!(rows.len(), 1002);
    let header: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(header[..8], ["t", "gamma", "phi_true", "phi_fictitious", "g_1", "g_2", "g_3", "g_4"]);
    assert_eq!(header[8], "e_1_1");
    assert_eq!(header[19], "e_3_4");
    assert_eq!(header[20..], ["d_e2e_11", "d_e2e_12", "d_e2e_21", "d_e2e_22"]);
    let last: Vec<&str> = rows[1001].split(',').collect();
    assert_eq!(last[0], "1000");
    assert_eq!(last.len(), header.len());
    // At least 12 significant digits.
    let mantissa = last[2].split('e').next().unwrap();
    assert!(mantissa.chars().filter(char::is_ascii_digit).count() >= 12, "{}", last[2]);
    // gamma_t = min(0.1, (t + 1)^-0.6)
    let gamma: f64 = last[1].parse().unwrap();
    assert!((gamma - 1001f64.powf(-0.6)).abs() < 1e-15);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    for key in ["seed", "config", "final_phi", "mean_phi_last_50", "oracle_gap", "wall_clock_seconds"] {
        assert!(summary.get(key).is_some(), "summary lacks {key}");
    }
    assert_eq!(summary["config"]["run.mu"], serde_json::json!(2e4));
    assert!(summary["oracle_gap"].is_null());
}

#[test]
fn zero_iterations_leaves_only_the_initial_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = e2e(&["run", "builtin:paper_5g", "--iterations", "0"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(csv_rows(&dir.path().join("trace.csv")).len(), 2);
}

#[test]
fn config_errors_exit_with_two_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let missing = e2e(&["run", "/nonexistent/config.toml"], dir.path());
    assert_eq!(missing.status.code(), Some(2));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "scenario = \"fiveg\"\n[noise]\nsigmaa = 0.5\n").unwrap();
    let o = e2e(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("noise.sigmaa"), "{}", stderr(&o));

    let o = e2e(&["run", "builtin:paper_5g", "--set", "fiveg.flows=[[1, 2]]"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fiveg.flows"), "{}", stderr(&o));

    let o = e2e(&["run", "builtin:paper_5g", "--set", "weights.rows=[[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]]"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flags_override_file_keys() {
    let dir = tempfile::tempdir().unwrap();
    let o = e2e(
        &["run", "builtin:paper_5g", "--iterations", "5", "--seed", "3", "--set", "run.iterations=9"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    // Dedicated flags are applied after --set.
    assert_eq!(csv_rows(&dir.path().join("trace.csv")).len(), 7);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 3);
}

#[test]
fn oracle_result_feeds_the_run_gap() {
    let dir = tempfile::tempdir().unwrap();
    let o = e2e(&["oracle", "builtin:routing_chain"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let opt: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("optimum.json")).unwrap()).unwrap();
    assert_eq!(opt["converged"], true);
    let opt_path = dir.path().join("optimum.json");
    let o = e2e(&["run", "builtin:routing_chain", "--optimum", opt_path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["oracle_gap"].as_f64().unwrap().abs() < 1e-3);
}

#[test]
fn routing_scenario_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("net.toml"),
        r#"
a = 2.0
budgets = [1.0]
e2e_flows = [{ class = 0, agents = [0, 1] }]

[[agents]]
links = [{ capacity = 10.0 }, { capacity = 5.0 }]
flows = [{ class = 0, demand = 6.0, routes = [[0], [1]] }]

[[agents]]
links = [{ capacity = 8.0 }, { capacity = 8.0 }]
flows = [{ class = 0, demand = 6.0, routes = [[0], [1]] }]
"#,
    )
    .unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "scenario = \"routing\"\nrouting.file = \"net.toml\"\nrun.mu = 100.0\nrun.tau = 1.0\nrun.iterations = 50\nnoise.kind = \"none\"\nlimiter.enabled = false\n",
    )
    .unwrap();
    let from_file = e2e(&["run", cfg.to_str().unwrap()], &dir.path().join("file"));
    assert_eq!(from_file.status.code(), Some(0), "{}", stderr(&from_file));
    let preset = e2e(
        &["run", "builtin:routing_chain", "--iterations", "50", "--set", "weights.rows=[[0.5, 0.5], [0.5, 0.5]]"],
        &dir.path().join("preset"),
    );
    assert_eq!(preset.status.code(), Some(0));
    assert_eq!(
        std::fs::read(dir.path().join("file/trace.csv")).unwrap(),
        std::fs::read(dir.path().join("preset/trace.csv")).unwrap()
    );
}

#[test]
fn verify_passes_on_the_routing_chain_and_fails_when_impossible() {
    let dir = tempfile::tempdir().unwrap();
    let o = e2e(&["verify", "builtin:routing_chain", "--iterations", "500"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("verify.json").exists());
    // One oracle iteration leaves the reference unconverged.
    let o = e2e(
        &["verify", "builtin:routing_chain", "--iterations", "500", "--set", "oracle.max_iters=1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn compare_reports_windows_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = e2e(
        &["compare", "builtin:routing_chain", "--iterations", "200", "--set", "compare.seeds=[1, 2]"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("compare.json")).unwrap()).unwrap();
    let seeds = report["seeds"].as_array().unwrap();
    assert_eq!(seeds.len(), 2);
    assert_eq!(seeds[0]["windows"].as_array().unwrap().len(), 5);
}
