//! Prints per-level latency and throughput for an emulation profile in
//! virtual time. Handy when tuning a profile file.
//!
//!     cargo run --example calibrate -- paper-azure
//!     cargo run --example calibrate -- my-profile.json 120

use std::sync::Arc;

use posbench::cli::config::default_sim_epoch;
use posbench::engine::{run_scenario, LoadScenario, RunPlan, SimClock, TargetEndpoint};
use posbench::metrics::{fmt_2dp, summarize};
use posbench::target::{EmulationProfile, PosService, ServiceOptions};
use posbench::workload::{Catalog, TrafficShape, WorkloadMix};

#[tokio::main(flavor = "current_thread")]
async fn main() {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "paper-gcp".into());
    let steady_s: f64 = args.next().map(|s| s.parse().expect("steady seconds")).unwrap_or(30.0);
    let profile = EmulationProfile::resolve(&name).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(5);
    });

    let plan = RunPlan {
        catalog: Arc::new(Catalog::pos_default()),
        mix: WorkloadMix::default(),
        shape: TrafficShape::identity(),
        target_label: name.clone(),
        product_count: 1000,
    };
    println!("level,users,p50_ms,p95_ms,p99_ms,tps,error_rate_pct");
    for scenario in LoadScenario::canonical_set() {
        let scenario = LoadScenario {
            ramp_up_s: 10.0,
            steady_s,
            ..scenario
        };
        let service = Arc::new(PosService::new(ServiceOptions::with_profile(profile.clone())));
        let mut clock = SimClock {
            epoch: default_sim_epoch(),
            now_s: 0.0,
        };
        let run = run_scenario(&plan, &scenario, &TargetEndpoint::Simulated(service), "calibrate", 1, &mut clock)
            .await
            .expect("simulated run");
        let s = summarize(&run).expect("steady-state data");
        let p = |v: Option<f64>| v.map(fmt_2dp).unwrap_or_default();
        println!(
            "{},{},{},{},{},{},{}",
            scenario.name,
            scenario.concurrent_users,
            p(s.p50_ms),
            p(s.p95_ms),
            p(s.p99_ms),
            fmt_2dp(s.tps),
            fmt_2dp(s.error_rate_pct)
        );
    }
}
