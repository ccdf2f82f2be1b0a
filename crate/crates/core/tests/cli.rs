//! The `posbench` binary end to end.

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn posbench(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posbench"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("POSBENCH_TOKEN")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = r#"{
  "targets": [{"label": "edge", "profile": "paper-gcp", "platform": "gcp", "virtual_clock": true}],
  "scenarios": [
    {"name": "Baseline", "concurrent_users": 4, "ramp_up_s": 2, "steady_s": 10, "repetitions": 2, "rest_between_runs_s": 1},
    {"name": "Stress", "concurrent_users": 12, "ramp_up_s": 2, "steady_s": 10, "repetitions": 1, "rest_between_runs_s": 1}
  ],
  "seed": 5
}"#;

#[test]
fn run_report_estimate() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), SMALL).unwrap();
    let o = posbench(&["run", "--config", "c.json", "--out", "out"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let raw = dir.path().join("out/raw");
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(raw.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["prng"], posbench::workload::PRNG_ID);
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["targets"][0]["platform"], "gcp");
    assert!(manifest["config_digest"].as_str().unwrap().len() == 64);
    for f in ["edge-Baseline-r1.csv", "edge-Baseline-r2.csv", "edge-Stress-r1.csv"] {
        assert!(raw.join(f).is_file(), "{f}");
    }

    let o = posbench(&["report", "--raw", "out/raw", "--out", "out/report"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("single target"));
    let rt = std::fs::read_to_string(dir.path().join("out/report/tables/response_times.csv")).unwrap();
    let lines: Vec<&str> = rt.lines().collect();
    assert!(lines[1].starts_with("Baseline,edge,2,"), "{rt}");
    assert!(lines[2].starts_with("Stress,edge,1,"), "{rt}");
    let costs = std::fs::read_to_string(dir.path().join("out/report/tables/costs.csv")).unwrap();
    assert!(costs.contains("# costs: priced as edge=gcp"), "{costs}");

    let o = posbench(&["estimate", "--raw", "out/raw"], dir.path());
    assert_eq!(code(&o), 0);
    let est = stdout(&o);
    assert!(est.starts_with("platform,scenario,api_calls,egress_gb,call_cost_usd,egress_cost_usd,total_usd\n"));
    assert!(est.contains("edge,Baseline,"));

    // a rerun replaces the raw files it owns
    std::fs::write(raw.join("edge-Old-r9.csv"), "junk").unwrap();
    let o = posbench(&["run", "--config", "c.json", "--out", "out", "--seed", "6"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(!raw.join("edge-Old-r9.csv").exists());
}

#[test]
fn desk_scale_changes_durations_only() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"targets":[{"label":"v","profile":"instant","virtual_clock":true}],
            "scenarios":[{"name":"Baseline","concurrent_users":3,"ramp_up_s":60,"steady_s":300,"repetitions":3,"rest_between_runs_s":300}]}"#,
    )
    .unwrap();
    let o = posbench(&["run", "--config", "c.json", "--out", "o", "--desk-scale"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/raw/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["desk_scale"], true);
    let runs = m["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 1);
    let s = &runs[0]["scenario"];
    assert_eq!((s["concurrent_users"].as_u64(), s["steady_s"].as_f64(), s["ramp_up_s"].as_f64()), (Some(3), Some(30.0), Some(10.0)));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();

    std::fs::write(p.join("bad.json"), r#"{"targets":[{"label":"a","profile":"instant"}],"mix":{"transaction_weight":1.2}}"#).unwrap();
    let o = posbench(&["run", "--config", "bad.json"], p);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mix"));

    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    std::fs::write(p.join("gone.json"), format!(r#"{{"targets":[{{"label":"a","base_url":"http://127.0.0.1:{port}"}}]}}"#)).unwrap();
    let o = posbench(&["run", "--config", "gone.json", "--out", "gone"], p);
    assert_eq!(code(&o), 2);
    assert!(!p.join("gone").exists(), "nothing is written for an unreachable target");

    std::fs::create_dir(p.join("empty")).unwrap();
    assert_eq!(code(&posbench(&["report", "--raw", "empty", "--out", "r"], p)), 4);
    std::fs::write(p.join("empty/notes.csv"), "hello,world\n").unwrap();
    assert_eq!(code(&posbench(&["report", "--raw", "empty", "--out", "r"], p)), 4);

    assert_eq!(code(&posbench(&["serve", "--profile", "nope", "--port", "0"], p)), 5);
    let busy = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let busy_port = busy.local_addr().unwrap().port().to_string();
    assert_eq!(code(&posbench(&["serve", "--port", &busy_port], p)), 5);

    std::fs::write(p.join("u.json"), r#"{"gcp":{"api_calls":-1,"egress_bytes":0}}"#).unwrap();
    assert_eq!(code(&posbench(&["estimate", "--usage", "u.json"], p)), 6);
    std::fs::write(p.join("u.json"), r#"{"oracle":{"api_calls":1,"egress_bytes":0}}"#).unwrap();
    assert_eq!(code(&posbench(&["estimate", "--usage", "u.json"], p)), 6);
    assert_eq!(code(&posbench(&["estimate"], p)), 6);
}

#[test]
fn estimate_from_usage() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("u.json"), r#"{"gcp":{"api_calls":1000000,"egress_gb":1},"azure":{"api_calls":1e6,"egress_bytes":1000000000}}"#).unwrap();
    let o = posbench(&["estimate", "--usage", "u.json"], p);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("gcp,,1000000,1,0.40,0.12,0.52\n"), "{out}");
    assert!(out.contains("azure,,1000000,1,0.20,0.19,0.39\n"), "{out}");

    std::fs::write(p.join("empty.json"), "{}").unwrap();
    let out = stdout(&posbench(&["estimate", "--usage", "empty.json"], p));
    assert!(out.contains("azure,,0,0,0.00,0.00,0.00\n") && out.contains("gcp,,0,0,0.00,0.00,0.00\n"), "{out}");

    std::fs::write(p.join("pricing.json"), r#"{"gcp":{"per_call_usd":"0.000001","per_gb_egress_usd":"0"}}"#).unwrap();
    std::fs::write(p.join("g.json"), r#"{"gcp":{"api_calls":1000000,"egress_gb":1}}"#).unwrap();
    let o = posbench(&["estimate", "--usage", "g.json", "--pricing", "pricing.json"], p);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("gcp,,1000000,1,1.00,0.00,1.00\n"), "{}", stdout(&o));
    // azure is not in the custom catalog
    assert_eq!(code(&posbench(&["estimate", "--usage", "u.json", "--pricing", "pricing.json"], p)), 6);
}

#[test]
fn serve_answers_and_stops_on_interrupt() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_posbench"))
        .args(["serve", "--profile", "instant", "--port", "0"])
        .env_remove("POSBENCH_TOKEN")
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().rsplit(' ').next().unwrap().to_string();
    assert!(url.starts_with("http://127.0.0.1:"), "{line}");

    let rt = tokio::runtime::Runtime::new().unwrap();
    let status = rt.block_on(async { reqwest::get(format!("{url}/healthz")).await.unwrap().status() });
    assert_eq!(status, 200);

    Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
}
