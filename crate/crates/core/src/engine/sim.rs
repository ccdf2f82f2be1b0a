//! Virtual-time driver.
//!
//! Users are replayed as a discrete-event simulation against an in-process
//! service: a request issued at virtual time `t` sees the number of requests
//! still in service at `t`, receives the emulated delay as its latency, and
//! the user becomes ready again after the response, a fixed client overhead
//! and its think time. Event order is (time, user index), so a run is a pure
//! function of its inputs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{classify_outcome, LoadScenario, Outcome, RequestResult, ResponseSignal, RunPlan, RunRecord, SimClock};
use crate::target::{is_control_route, PosService, ServiceRequest, ServiceResponse};
use crate::workload::{build_request, sample_operation, shape_multiplier, think_time_ms, user_rng, Session};

/// Client-side time between receiving a response and sending the next request.
pub const CLIENT_OVERHEAD_US: u64 = 1_000;

fn to_us(seconds: f64) -> u64 {
    (seconds * 1e6).round().max(0.0) as u64
}

pub fn run_scenario(
    plan: &RunPlan,
    scenario: &LoadScenario,
    service: &PosService,
    run_id: &str,
    seed: u64,
    clock: &mut SimClock,
) -> RunRecord {
    let schedule = scenario.ramp_schedule();
    let run_start_s = clock.now_s;
    let started_at = clock.at();
    let end_us = to_us(schedule.end_s());
    let timeout_us = scenario.request_timeout_ms * 1000;

    let mut users: Vec<(rand_chacha::ChaCha8Rng, Session)> = (0..scenario.concurrent_users)
        .map(|u| (user_rng(seed, u as u64), Session::new(plan.product_count)))
        .collect();
    let mut ready: BinaryHeap<Reverse<(u64, u32)>> = (0..scenario.concurrent_users)
        .map(|u| Reverse((to_us(schedule.start_offset_s(u)), u)))
        .collect();
    let mut departures: BinaryHeap<Reverse<u64>> = BinaryHeap::new();
    let mut results = Vec::new();
    let mut issued: u64 = 0;
    let mut last_us = end_us;

    while let Some(Reverse((t, user))) = ready.pop() {
        if t >= end_us {
            continue;
        }
        while departures.peek().is_some_and(|Reverse(d)| *d <= t) {
            departures.pop();
        }
        let (rng, session) = &mut users[user as usize];
        // catalog and mix are validated before a run starts
        let spec = sample_operation(&plan.catalog, &plan.mix, rng).expect("validated catalog");
        let req = build_request(&plan.catalog, spec, session, rng).expect("validated catalog");
        issued += 1;

        let now_s = run_start_s + t as f64 / 1e6;
        let service_req = ServiceRequest {
            method: req.method.as_str(),
            path: &req.path,
            body: &req.body,
            authorization: None,
            now_unix_s: (clock.epoch + chrono::Duration::microseconds((now_s * 1e6) as i64)).timestamp(),
        };
        let (delay_us, response) = if is_control_route(&req.path) {
            (0, service.handle(&service_req))
        } else {
            let in_flight = departures.len() as u64 + 1;
            let admission = service.emulator().admit(in_flight, now_s);
            let delay_us = (admission.delay_ms * 1000.0).round().max(0.0) as u64;
            departures.push(Reverse(t + delay_us));
            let response = match admission.fault {
                Some(status) => ServiceResponse::error(status, "injected_fault", "emulated platform failure"),
                None => service.handle(&service_req),
            };
            (delay_us, response)
        };

        let timed_out = delay_us >= timeout_us;
        let waited_us = delay_us.min(timeout_us);
        let latency_ms = waited_us as f64 / 1000.0;
        let (outcome, status_code, body): (Outcome, Option<u16>, &[u8]) = if timed_out {
            (Outcome::Timeout, None, &[])
        } else {
            let outcome = classify_outcome(
                ResponseSignal::Status(response.status),
                latency_ms,
                scenario.request_timeout_ms as f64,
            );
            (outcome, Some(response.status), &response.body)
        };
        session.observe(&req, status_code, body);
        results.push(RequestResult {
            run_id: run_id.to_string(),
            user_index: user,
            operation_name: req.operation_name.clone(),
            category: req.category,
            start_offset_ms: t as f64 / 1000.0,
            latency_ms,
            outcome,
            status_code,
            bytes_out: req.body.len() as u64,
            bytes_in: body.len() as u64,
        });

        let done = t + waited_us;
        last_us = last_us.max(done);
        let multiplier = shape_multiplier(&plan.shape, t as f64 / 1e6, started_at);
        let pause_us = (think_time_ms(scenario.think_time_ms, multiplier, rng) * 1000.0).round() as u64;
        ready.push(Reverse((done + CLIENT_OVERHEAD_US + pause_us, user)));
    }

    clock.now_s = run_start_s + last_us as f64 / 1e6;
    results.sort_by(|a, b| {
        a.start_offset_ms
            .total_cmp(&b.start_offset_ms)
            .then(a.user_index.cmp(&b.user_index))
    });
    RunRecord {
        run_id: run_id.to_string(),
        scenario: scenario.clone(),
        target_label: plan.target_label.clone(),
        seed,
        started_at,
        ended_at: clock.at(),
        results,
        issued_requests: issued,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use chrono::TimeZone;

    use super::*;
    use crate::target::{EmulationProfile, ServiceOptions};
    use crate::workload::{Catalog, TrafficShape, WorkloadMix};

    fn plan() -> RunPlan {
        RunPlan {
            catalog: Arc::new(Catalog::pos_default()),
            mix: WorkloadMix::default(),
            shape: TrafficShape::identity(),
            target_label: "sim".into(),
            product_count: 1000,
        }
    }

    fn scenario(users: u32) -> LoadScenario {
        LoadScenario {
            ramp_up_s: 2.0,
            steady_s: 5.0,
            repetitions: 1,
            rest_between_runs_s: 0.0,
            ..LoadScenario::canonical("Baseline", users)
        }
    }

    fn clock() -> SimClock {
        SimClock {
            epoch: chrono::Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            now_s: 0.0,
        }
    }

    fn flat(ms: f64) -> PosService {
        PosService::new(ServiceOptions::with_profile(EmulationProfile {
            base_latency_ms: ms,
            ..EmulationProfile::instant()
        }))
    }

    #[test]
    fn flat_latency_is_exact() {
        let svc = flat(100.0);
        let run = run_scenario(&plan(), &scenario(4), &svc, "r", 1, &mut clock());
        assert!(!run.results.is_empty());
        assert!(run.results.iter().all(|r| r.latency_ms == 100.0));
        assert_eq!(run.results.len() as u64, run.issued_requests);
        assert!(run.results.iter().all(|r| r.start_offset_ms < 7000.0));
    }

    #[test]
    fn same_inputs_same_run() {
        let p = plan();
        let s = scenario(5);
        let svc_profile = EmulationProfile::paper_azure();
        let a = run_scenario(&p, &s, &PosService::new(ServiceOptions::with_profile(svc_profile.clone())), "r", 9, &mut clock());
        let b = run_scenario(&p, &s, &PosService::new(ServiceOptions::with_profile(svc_profile)), "r", 9, &mut clock());
        assert_eq!(a.results, b.results);
    }

    #[test]
    fn forced_timeouts() {
        let svc = flat(150.0);
        let mut s = scenario(3);
        s.request_timeout_ms = 1;
        let run = run_scenario(&plan(), &s, &svc, "r", 1, &mut clock());
        assert!(run.results.iter().all(|r| r.outcome == Outcome::Timeout && r.latency_ms >= 1.0));
    }

    #[test]
    fn users_never_overlap() {
        let svc = PosService::new(ServiceOptions::with_profile(EmulationProfile::paper_gcp()));
        let run = run_scenario(&plan(), &scenario(8), &svc, "r", 3, &mut clock());
        for u in 0..8 {
            let mine: Vec<_> = run.results.iter().filter(|r| r.user_index == u).collect();
            for w in mine.windows(2) {
                assert!(w[0].start_offset_ms + w[0].latency_ms <= w[1].start_offset_ms);
            }
        }
    }

    #[test]
    fn clock_advances_past_run() {
        let svc = flat(10.0);
        let mut c = clock();
        let run = run_scenario(&plan(), &scenario(2), &svc, "r", 1, &mut c);
        assert!(c.now_s >= 7.0);
        assert!(run.ended_at > run.started_at);
    }
}
