use std::collections::HashSet;

use chrono::{TimeZone, Utc};
use posbench::costs::{estimate_cost, PricingCatalog, UsageRecord};
use posbench::engine::{LoadScenario, Outcome, RequestResult};
use posbench::metrics::{aggregate, error_rate, fmt_2dp, percentile, summarize_results};
use posbench::money::Usd;
use posbench::target::{EmulationProfile, PosService, ServiceOptions, ServiceRequest};
use posbench::workload::{build_request, sample_operation, shape_multiplier, user_rng, Catalog, Session, TrafficShape, WorkloadMix};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn outcome() -> impl Strategy<Value = Outcome> {
    prop_oneof![
        6 => Just(Outcome::Success),
        1 => Just(Outcome::HttpError),
        1 => Just(Outcome::Timeout),
        1 => Just(Outcome::TransportError),
    ]
}

fn results(max: usize) -> impl Strategy<Value = Vec<RequestResult>> {
    prop::collection::vec((0u32..20, 0.0f64..40_000.0, 0.5f64..3000.0, outcome(), 0u64..5000), 1..max).prop_map(|rows| {
        rows.into_iter()
            .map(|(user, start, latency, outcome, bytes)| RequestResult {
                run_id: "r".into(),
                user_index: user,
                operation_name: "get_product".into(),
                category: posbench::workload::OperationCategory::Inventory,
                start_offset_ms: start,
                latency_ms: latency,
                outcome,
                status_code: if outcome == Outcome::Success { Some(200) } else { None },
                bytes_out: 0,
                bytes_in: bytes,
            })
            .collect()
    })
}

fn scenario() -> LoadScenario {
    LoadScenario {
        ramp_up_s: 5.0,
        steady_s: 30.0,
        ..LoadScenario::canonical("Baseline", 10)
    }
}

proptest! {
    #[test]
    fn percentile_is_a_member_and_monotone(
        xs in prop::collection::vec(0.0f64..1e4, 1..500),
        p in 0.1f64..100.0,
        q in 0.1f64..100.0,
    ) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let a = percentile(&xs, lo).unwrap();
        let b = percentile(&xs, hi).unwrap();
        prop_assert!(xs.contains(&a));
        prop_assert!(a <= b);
    }

    #[test]
    fn error_and_success_rates_sum_to_100(rs in results(300)) {
        let err = error_rate(&rs).unwrap();
        let ok = rs.iter().filter(|r| r.outcome == Outcome::Success).count();
        let success = 100.0 * ok as f64 / rs.len() as f64;
        prop_assert_eq!(fmt_2dp(err + success), "100.00");
        prop_assert!((err + success - 100.0).abs() < 1e-9);
    }

    #[test]
    fn summarize_ignores_result_order(rs in results(400), seed in any::<u64>()) {
        let s = scenario();
        let mut shuffled = rs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = summarize_results("r", &s, "t", &rs);
        let b = summarize_results("r", &s, "t", &shuffled);
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn aggregate_of_copies_is_the_summary(rs in results(400), k in 1usize..6) {
        if let Ok(s) = summarize_results("r", &scenario(), "t", &rs) {
            let agg = aggregate(&vec![s.clone(); k]).unwrap();
            prop_assert_eq!(agg.tps.mean, s.tps);
            prop_assert_eq!(agg.error_rate_pct.mean, s.error_rate_pct);
            prop_assert_eq!(agg.p95_ms.map(|x| x.mean), s.p95_ms);
            prop_assert_eq!(agg.tps.stdev, 0.0);
            prop_assert_eq!(agg.total_calls.stdev, 0.0);
        }
    }

    #[test]
    fn cost_is_linear_and_monotone(
        calls in 0u64..1_000_000_000,
        bytes in 0u64..1_000_000_000_000,
        k in 0u64..10_000,
        extra_calls in 0u64..1000,
        extra_bytes in 0u64..1_000_000,
        azure in any::<bool>(),
    ) {
        let pricing = PricingCatalog::default();
        let platform = if azure { "azure" } else { "gcp" };
        let u = |c: u64, b: u64| UsageRecord { platform_label: platform.into(), api_calls: c, egress_bytes: b };
        let base = estimate_cost(&u(calls, bytes), &pricing).unwrap();
        let scaled = estimate_cost(&u(calls * k, bytes * k), &pricing).unwrap();
        prop_assert_eq!(scaled.total_usd, base.total_usd * k);
        prop_assert_eq!(scaled.call_cost_usd, base.call_cost_usd * k);
        let more = estimate_cost(&u(calls + extra_calls, bytes + extra_bytes), &pricing).unwrap();
        prop_assert!(more.total_usd >= base.total_usd);
        prop_assert!(base.total_usd >= Usd::ZERO);
    }

    #[test]
    fn shape_multipliers_compose(
        a_hours in prop::collection::vec(0.1f64..4.0, 24),
        b_hours in prop::collection::vec(0.1f64..4.0, 24),
        a_days in prop::collection::vec(0.1f64..4.0, 7),
        b_days in prop::collection::vec(0.1f64..4.0, 7),
        t in 0.0f64..2_000_000.0,
    ) {
        let anchor = Utc.with_ymd_and_hms(2024, 3, 4, 0, 0, 0).unwrap();
        let a = TrafficShape { hourly_multipliers: a_hours.clone(), weekday_multipliers: a_days.clone(), seasonal_multiplier: 1.5 };
        let b = TrafficShape { hourly_multipliers: b_hours.clone(), weekday_multipliers: b_days.clone(), seasonal_multiplier: 0.5 };
        let ab = TrafficShape {
            hourly_multipliers: a_hours.iter().zip(&b_hours).map(|(x, y)| x * y).collect(),
            weekday_multipliers: a_days.iter().zip(&b_days).map(|(x, y)| x * y).collect(),
            seasonal_multiplier: 0.75,
        };
        let separate = shape_multiplier(&a, t, anchor) * shape_multiplier(&b, t, anchor);
        let joint = shape_multiplier(&ab, t, anchor);
        prop_assert!((separate - joint).abs() <= 1e-12 * separate.abs());
    }

    #[test]
    fn ramp_is_monotone_and_reaches_users(users in 1u32..200, ramp in 0.0f64..120.0, ts in prop::collection::vec(0.0f64..200.0, 1..50)) {
        let s = LoadScenario { ramp_up_s: ramp, ..LoadScenario::canonical("x", users) };
        let sched = s.ramp_schedule();
        let mut ts = ts;
        ts.sort_by(f64::total_cmp);
        let mut prev = 0;
        for t in ts {
            let n = sched.active_at(t);
            prop_assert!(n >= prev && n <= users);
            prev = n;
        }
        prop_assert_eq!(sched.active_at(ramp.max(1e-9)), users);
    }

    #[test]
    fn sessions_never_touch_a_sale_they_did_not_create(seed in any::<u64>(), user in 0u64..64) {
        let catalog = Catalog::pos_default();
        let mix = WorkloadMix::default();
        let service = PosService::new(ServiceOptions::with_profile(EmulationProfile::instant()));
        let mut rng = user_rng(seed, user);
        let mut session = Session::new(50);
        let mut created: HashSet<u64> = HashSet::new();
        for _ in 0..200 {
            let spec = sample_operation(&catalog, &mix, &mut rng).unwrap();
            let req = build_request(&catalog, spec, &mut session, &mut rng).unwrap();
            if let Some(rest) = req.path.strip_prefix("/sales/") {
                let id: u64 = rest.split('/').next().unwrap().parse().unwrap();
                prop_assert!(created.contains(&id), "{} before creating sale {}", req.path, id);
            }
            let resp = service.handle(&ServiceRequest::new(req.method.as_str(), &req.path, &req.body));
            if req.path == "/sales" && resp.status == 201 {
                created.insert(resp.json_body().unwrap()["sale_id"].as_u64().unwrap());
            }
            session.observe(&req, Some(resp.status), &resp.body);
        }
    }
}

#[test]
fn operation_sequence_is_fixed_by_seed() {
    let catalog = Catalog::pos_default();
    let mix = WorkloadMix::default();
    let names = |seed: u64| {
        let mut rng = user_rng(seed, 3);
        let mut h = sha2::Sha256::default();
        for _ in 0..10_000 {
            sha2::Digest::update(&mut h, sample_operation(&catalog, &mix, &mut rng).unwrap().name.as_bytes());
            sha2::Digest::update(&mut h, b"\n");
        }
        hex::encode(sha2::Digest::finalize(h))
    };
    assert_eq!(names(9), names(9));
    assert_ne!(names(9), names(10));
}
