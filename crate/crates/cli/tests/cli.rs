use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use drmpc_cli::manifest::sha256_hex;
use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn ts04() -> PathBuf {
    config("double_integrator_ts040.json")
}

fn drmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drmpc"))
        .args(args)
        .env_remove("DRMPC_LOG")
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut full: Vec<&str> = args.to_vec();
    let out = dir.to_str().unwrap();
    full.extend(["--out", out]);
    drmpc(&full)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a variant of the ts = 0.4 config with one field replaced.
fn variant(dir: &Path, key: &str, value: Value) -> PathBuf {
    let mut v = json(&ts04());
    v[key] = value;
    let path = dir.join(format!("variant_{key}.json"));
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path
}

#[test]
fn precompute_writes_plan_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ts04();
    let o = run_in(tmp.path(), &["precompute", "--config", cfg.to_str().unwrap(), "--terminal", "pi-set"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let plan = json(&tmp.path().join("plan.json"));
    assert_eq!(plan["M"], 3);
    let states = plan["states"].as_array().unwrap();
    assert_eq!(states.len(), 4);
    for s in states {
        let last = s.as_array().unwrap().last().unwrap().as_array().unwrap();
        assert!(last.iter().all(|z| z.as_f64().unwrap().abs() <= 1e-8));
    }
    assert_eq!(json(&tmp.path().join("terminal.json"))["kind"], "pi-set");
    let csv = std::fs::read_to_string(tmp.path().join("plan.csv")).unwrap();
    assert!(csv.starts_with("vertex,step,w1,z1,z2\n"), "{csv}");
    let manifest = json(&tmp.path().join("manifest.json"));
    assert_eq!(manifest["config"]["sha256"], sha256_hex(&std::fs::read(&cfg).unwrap()));
    assert_eq!(manifest["outputs"], serde_json::json!(["plan.json", "plan.csv", "terminal.json"]));
    assert_eq!(manifest["exit_code"], 0);
}

#[test]
fn precompute_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    // three steps of |u| <= 2 cannot cancel a 0.15 offset at ts = 0.1
    let o = run_in(
        &tmp.path().join("a"),
        &["precompute", "--config", config("double_integrator_ts010.json").to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let short = variant(tmp.path(), "M", Value::from(1));
    let o = run_in(&tmp.path().join("b"), &["precompute", "--config", short.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let calm = variant(tmp.path(), "D", serde_json::json!({"vertices": [[0.0, 0.0]]}));
    let o = run_in(&tmp.path().join("c"), &["precompute", "--config", calm.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let plan = json(&tmp.path().join("c/plan.json"));
    let all_zero = plan["inputs"].as_array().unwrap().iter().flat_map(|v| v.as_array().unwrap()).all(|step| {
        step.as_array().unwrap().iter().all(|w| w.as_f64().unwrap() == 0.0)
    });
    assert!(all_zero, "{plan}");

    let o = drmpc(&["precompute", "--config", "/nonexistent.json", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_equilibrium_and_disturbed_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ts04();
    let cfg = cfg.to_str().unwrap();
    let o = run_in(&tmp.path().join("rest"), &["simulate", "--config", cfg, "--x0", "0,0", "--policy", "zero", "--steps", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = std::fs::read_to_string(tmp.path().join("rest/trace.csv")).unwrap();
    for line in trace.lines().skip(1) {
        for field in line.split(',').skip(1).take(5).filter(|f| !f.is_empty()) {
            assert!(field.parse::<f64>().unwrap().abs() <= 1e-9, "{line}");
        }
    }

    let args = ["simulate", "--config", cfg, "--x0=-2,0.5", "--policy", "uniform", "--seed", "7", "--steps", "30"];
    let o = run_in(&tmp.path().join("run1"), &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = std::fs::read_to_string(tmp.path().join("run1/trace.csv")).unwrap();
    assert_eq!(trace.lines().filter(|l| l.ends_with(",Optimal")).count(), 30);
    let iss = json(&tmp.path().join("run1/iss.json"));
    assert_eq!(iss["feasible"], true);
    assert_eq!(iss["report"]["stays_in_x"], true);
    let manifest = json(&tmp.path().join("run1/manifest.json"));
    assert_eq!((manifest["seed"].as_u64(), manifest["rng"].as_str()), (Some(7), Some("chacha8")));

    let o = run_in(&tmp.path().join("run2"), &args);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(trace, std::fs::read_to_string(tmp.path().join("run2/trace.csv")).unwrap());
}

#[test]
fn simulate_outside_the_region_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ts04();
    let o = run_in(tmp.path(), &["simulate", "--config", cfg.to_str().unwrap(), "--x0", "4.9,1.9"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("step 0"), "{}", stderr(&o));
    assert_eq!(json(&tmp.path().join("iss.json"))["aborted_at"], 0);
    assert_eq!(json(&tmp.path().join("manifest.json"))["exit_code"], 4);
}

#[test]
fn bad_arguments_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ts04();
    let cfg = cfg.to_str().unwrap();
    for args in [
        vec!["simulate", "--config", cfg, "--x0", "1"],
        vec!["simulate", "--config", cfg, "--x0", "0,0", "--policy", "gauss"],
        vec!["simulate", "--config", cfg, "--x0", "0,0", "--steps", "0"],
        vec!["roa", "--config", cfg, "--resolution", "10x0"],
        vec!["roa", "--config", cfg, "--controller", "lqr"],
        vec!["roa", "--config", cfg, "--workers", "0"],
    ] {
        let o = run_in(tmp.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn solve_writes_decision_and_qp() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ts04();
    let o = run_in(
        tmp.path(),
        &["solve", "--config", cfg.to_str().unwrap(), "--controller", "drmpc-offline", "--x0=1,-0.2", "--dump-qp"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let d = json(&tmp.path().join("decision.json"));
    assert_eq!(d["status"], "Optimal");
    assert!(d["input"][0].as_f64().unwrap().abs() <= 2.0);
    let qp = json(&tmp.path().join("qp.json"));
    assert!(qp.as_object().unwrap().len() > 2);
    assert_eq!(json(&tmp.path().join("controller.json"))["type"], "drmpc-offline");
}

#[test]
fn roa_is_deterministic_and_counts_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ts04();
    let args = ["roa", "--config", cfg.to_str().unwrap(), "--controller", "drmpc-offline", "--resolution", "21x9"];
    for run in ["a", "b"] {
        let o = run_in(&tmp.path().join(run), &args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for file in ["mask.csv", "boundary.csv", "roa.json"] {
        assert_eq!(
            std::fs::read(tmp.path().join("a").join(file)).unwrap(),
            std::fs::read(tmp.path().join("b").join(file)).unwrap(),
            "{file}"
        );
    }
    let mask = std::fs::read_to_string(tmp.path().join("a/mask.csv")).unwrap();
    let feasible = mask.lines().skip(1).filter(|l| l.split(',').nth(2) == Some("1")).count();
    let summary = json(&tmp.path().join("a/roa.json"));
    assert_eq!(summary["feasible_count"], feasible);
    assert_eq!(summary["volume"].as_f64().unwrap(), feasible as f64 / 189.0 * 40.0);
}

#[test]
fn roa_masks_nest_in_the_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let long = variant(tmp.path(), "N", Value::from(40));
    let masks: Vec<Vec<bool>> = [ts04(), long]
        .iter()
        .enumerate()
        .map(|(i, cfg)| {
            let dir = tmp.path().join(format!("n{i}"));
            let o = run_in(&dir, &["roa", "--config", cfg.to_str().unwrap(), "--resolution", "21x9", "--scan", "rows"]);
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
            std::fs::read_to_string(dir.join("mask.csv"))
                .unwrap()
                .lines()
                .skip(1)
                .map(|l| l.split(',').nth(2) == Some("1"))
                .collect()
        })
        .collect();
    assert!(masks[0].iter().any(|&b| b));
    assert!(masks[0].iter().zip(&masks[1]).all(|(&short, &long)| !short || long));
}

#[test]
fn check_passes_on_a_feasible_config() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["check", "--config", ts04().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}\n{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let report = json(&tmp.path().join("check.json"));
    let count = report["suites"].as_array().unwrap().iter().find(|s| s["name"] == "constraint-count").unwrap();
    assert_eq!(count["detail"], "closed form 1533, enumerated 1533");
}

#[test]
fn check_rejects_a_disturbance_set_without_the_origin() {
    let tmp = tempfile::tempdir().unwrap();
    let shifted = variant(tmp.path(), "D", serde_json::json!({"vertices": [[0.1, 0.1], [0.2, 0.1], [0.2, 0.2]]}));
    let o = drmpc(&["check", "--config", shifted.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Assumption 2"), "{}", stderr(&o));
}

#[test]
fn check_reports_synthesis_failure_at_ts_0_1() {
    let o = drmpc(&["check", "--config", config("double_integrator_ts010.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn compare_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(
        tmp.path(),
        &[
            "compare",
            "--config",
            ts04().to_str().unwrap(),
            "--tables",
            "I,III",
            "--ts-list",
            "0.4",
            "--horizons",
            "10",
            "--resolution",
            "21x9",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for t in ["I", "III"] {
        let csv = std::fs::read_to_string(tmp.path().join(format!("table_{t}.csv"))).unwrap();
        assert!(csv.starts_with("ts,10\n4.0000000000000002e-1,"), "{csv}");
        let md = std::fs::read_to_string(tmp.path().join(format!("table_{t}.md"))).unwrap();
        assert!(md.contains("| 0.40 |"));
    }
    let all = json(&tmp.path().join("compare.json"));
    assert_eq!(all["I"]["label_b"], "drmpc-offline");
    assert!(!tmp.path().join("table_II.csv").exists());
    let o = run_in(tmp.path(), &["compare", "--config", ts04().to_str().unwrap(), "--tables", "IV"]);
    assert_eq!(o.status.code(), Some(2));
}
