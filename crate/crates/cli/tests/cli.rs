//! End-to-end behavior of the `pollingkit` binary: exit codes, diagnostics,
//! file outputs and determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario_json(discipline: &str, threshold: f64) -> String {
    format!(
        r#"{{
  "discipline": "{discipline}",
  "queue1": {{
    "base": {{
      "lambda": 0.6,
      "service": {{"kind": "exponential", "rate": 1.0}},
      "threshold": {threshold}
    }}
  }},
  "queue2": {{"lambda": 0.2, "service": {{"kind": "exponential", "rate": 1.0}}}},
  "switch_over": {{
    "s1": {{"kind": "exponential", "rate": 1.0}},
    "s2": {{"kind": "exponential", "rate": 1.0}}
  }},
  "simulation": {{
    "seed": 11,
    "warmup_customers": 5000,
    "measured_customers": 60000,
    "replications": 4
  }}
}}"#
    )
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("pollingkit-cli-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        Self(dir)
    }

    fn file(&self, name: &str, content: &str) -> PathBuf {
        let path = self.0.join(name);
        std::fs::write(&path, content).unwrap();
        path
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pollingkit"))
        .args(args)
        .env("POLLINGKIT_THREADS", "1")
        .output()
        .expect("binary runs")
}

#[test]
fn analyze_writes_report_and_succeeds() {
    let dir = TempDir::new("analyze");
    let scenario = dir.file("scenario.json", &scenario_json("exhaustive", 1.38));
    let out = dir.path("report.json");
    let result = run(&[
        "analyze",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let ratio = report["high"]["mean_wait"].as_f64().unwrap()
        / report["low"]["mean_wait"].as_f64().unwrap();
    assert!((ratio - 0.4).abs() < 1e-8);
}

#[test]
fn schema_error_exits_2_with_pointer() {
    let dir = TempDir::new("schema");
    let bad = scenario_json("gated", 1.0).replace("\"lambda\": 0.2,", "");
    let scenario = dir.file("scenario.json", &bad);
    let result = run(&["analyze", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    let diag: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&result.stderr).trim()).unwrap();
    assert_eq!(diag["error"], "schema");
    assert!(diag["pointer"].as_str().unwrap().contains("queue2"));
}

#[test]
fn unstable_scenario_exits_3_naming_rho() {
    let dir = TempDir::new("unstable");
    let bad = scenario_json("gated", 1.0).replace("\"lambda\": 0.2", "\"lambda\": 0.7");
    let scenario = dir.file("scenario.json", &bad);
    let result = run(&["analyze", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(3));
    let diag: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&result.stderr).trim()).unwrap();
    assert_eq!(diag["error"], "unstable");
    let message = diag["message"].as_str().unwrap();
    let rho: f64 = message.split("rho = ").nth(1).unwrap().parse().unwrap();
    assert!((rho - 1.3).abs() < 1e-12, "{message}");
}

#[test]
fn sweep_csv_is_bit_stable() {
    let dir = TempDir::new("sweep");
    let scenario = dir.file("scenario.json", &scenario_json("gated", 1.0));
    let mut csvs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path(name);
        let result = run(&[
            "sweep",
            "--scenario",
            scenario.to_str().unwrap(),
            "--grid",
            "0.5:1.5:0.25",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{result:?}");
        let stdout = String::from_utf8_lossy(&result.stdout).to_string();
        assert!(stdout.contains("argmin EW_1_weighted"));
        csvs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,lambda_H,lambda_L,EW_H,EW_L,EW_1_weighted,EW_1_nopriority,EW_2,\
         sd_WH,sd_WL,sd_W1_weighted,sd_W1_nopriority"
    );
    assert_eq!(lines.count(), 5);
}

#[test]
fn sweep_rows_satisfy_weighting_identity() {
    let dir = TempDir::new("sweepid");
    let scenario = dir.file("scenario.json", &scenario_json("exhaustive", 1.0));
    let out = dir.path("rows.csv");
    let result = run(&[
        "sweep",
        "--scenario",
        scenario.to_str().unwrap(),
        "--grid",
        "0.5:2.0:0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut nopriority = None;
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let (lh, ll, ewh, ewl, ew1w, ew1np) = (v[1], v[2], v[3], v[4], v[5], v[6]);
        // Values carry 12 significant digits in the CSV, so the identity
        // re-derived from parsed fields holds to the rounding level.
        let weighted = (lh * ewh + ll * ewl) / (lh + ll);
        assert!((weighted - ew1w).abs() < 1e-10 * ew1w.max(1.0));
        // Exhaustive ratio identity at every threshold.
        assert!((ewh / ewl - 0.4).abs() < 1e-8);
        // The no-priority column is constant across rows.
        match nopriority {
            None => nopriority = Some(ew1np),
            Some(prev) => assert_eq!(prev, ew1np),
        }
    }
}

#[test]
fn simulate_is_reproducible_and_flags_low_budget() {
    let dir = TempDir::new("simulate");
    let scenario = dir.file("scenario.json", &scenario_json("gated", 1.0));
    let mut outputs = Vec::new();
    for name in ["s1.json", "s2.json"] {
        let out = dir.path(name);
        let result = run(&[
            "simulate",
            "--scenario",
            scenario.to_str().unwrap(),
            "--seed",
            "42",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{result:?}");
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let est: serde_json::Value = serde_json::from_slice(&outputs[0]).unwrap();
    assert_eq!(est["seed"], 42);
    assert_eq!(est["low_precision"], false);

    let tiny = scenario_json("gated", 1.0).replace("60000", "1000");
    let scenario = dir.file("tiny.json", &tiny);
    let result = run(&["simulate", "--scenario", scenario.to_str().unwrap()]);
    assert!(result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("low-precision"));
}

#[test]
fn compare_passes_on_matched_model() {
    let dir = TempDir::new("compare");
    let scenario = dir.file("scenario.json", &scenario_json("globally-gated", 1.0));
    let result = run(&["compare", "--scenario", scenario.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(result.status.success(), "{stdout}");
    assert!(stdout.contains("overall: pass"));
}

#[test]
fn compare_mismatch_exits_4_naming_quantity() {
    // Simulating with preemption against the nonpreemptive report shifts
    // E(W_H) by far more than its standard error.
    let dir = TempDir::new("comparefail");
    let scenario = dir.file("scenario.json", &scenario_json("exhaustive", 1.0));
    let result = run(&[
        "compare",
        "--scenario",
        scenario.to_str().unwrap(),
        "--preemptive",
    ]);
    assert_eq!(result.status.code(), Some(4));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("overall: FAIL"));
    let wh_row = stdout.lines().find(|l| l.starts_with("E(W_H)")).unwrap();
    assert!(wh_row.contains("FAIL"), "{wh_row}");
}

#[test]
fn discipline_override_applies() {
    let dir = TempDir::new("override");
    let scenario = dir.file("scenario.json", &scenario_json("gated", 1.0));
    let out = dir.path("report.json");
    let result = run(&[
        "analyze",
        "--scenario",
        scenario.to_str().unwrap(),
        "--discipline",
        "exhaustive",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["discipline"], "exhaustive");
}
