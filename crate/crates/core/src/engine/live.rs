//! Wall-clock driver: one tokio task per virtual user, real HTTP.

use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::Utc;
use reqwest::{Client, Method};
use tokio::task::JoinSet;

use super::{
    classify_outcome, EngineError, LoadScenario, RequestResult, ResponseSignal, ResultSink, RunPlan, RunRecord,
    TargetEndpoint,
};
use crate::workload::{build_request, sample_operation, shape_multiplier, think_time_ms, user_rng, Session};

pub(crate) fn client(pool: usize) -> Result<Client, EngineError> {
    Client::builder()
        .redirect(reqwest::redirect::Policy::none())
        .pool_max_idle_per_host(pool)
        .build()
        .map_err(|e| EngineError::Client(e.to_string()))
}

/// Succeeds when the target answers anything at all on `/healthz`.
pub async fn probe(client: &Client, base_url: &str, timeout: Duration) -> Result<(), String> {
    match tokio::time::timeout(timeout, client.get(format!("{base_url}/healthz")).send()).await {
        Ok(Ok(_)) => Ok(()),
        Ok(Err(e)) => Err(e.to_string()),
        Err(_) => Err(format!("no answer within {timeout:?}")),
    }
}

struct Issued {
    signal: ResponseSignal,
    body: Vec<u8>,
}

async fn issue(
    client: &Client,
    base_url: &str,
    token: Option<&str>,
    req: &crate::workload::RequestDescriptor,
    timeout: Duration,
) -> Issued {
    let method = Method::from_bytes(req.method.as_str().as_bytes()).expect("catalog methods are valid");
    let mut builder = client.request(method, format!("{base_url}{}", req.path));
    if let Some(t) = token {
        builder = builder.header(reqwest::header::AUTHORIZATION, format!("Bearer {t}"));
    }
    if !req.body.is_empty() {
        builder = builder
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(req.body.clone());
    }
    let exchange = async {
        let resp = builder.send().await?;
        let status = resp.status().as_u16();
        let body = resp.bytes().await?;
        Ok::<_, reqwest::Error>((status, body))
    };
    match tokio::time::timeout(timeout, exchange).await {
        Err(_) => Issued {
            signal: ResponseSignal::NoResponse,
            body: Vec::new(),
        },
        Ok(Err(e)) if e.is_timeout() => Issued {
            signal: ResponseSignal::NoResponse,
            body: Vec::new(),
        },
        Ok(Err(_)) => Issued {
            signal: ResponseSignal::Transport,
            body: Vec::new(),
        },
        Ok(Ok((status, body))) => Issued {
            signal: ResponseSignal::Status(status),
            body: body.to_vec(),
        },
    }
}

pub async fn run_scenario(
    plan: &RunPlan,
    scenario: &LoadScenario,
    target: &TargetEndpoint,
    run_id: &str,
    seed: u64,
) -> Result<RunRecord, EngineError> {
    let TargetEndpoint::Http { base_url, bearer_token } = target else {
        unreachable!("live driver only handles HTTP targets");
    };
    let client = client(scenario.concurrent_users as usize)?;
    let timeout = Duration::from_millis(scenario.request_timeout_ms);
    probe(&client, base_url, timeout.max(Duration::from_secs(2)))
        .await
        .map_err(|reason| EngineError::TargetUnreachable {
            target: base_url.clone(),
            reason,
        })?;

    let schedule = scenario.ramp_schedule();
    let sink = Arc::new(ResultSink::new());
    let started_at = Utc::now();
    let start = Instant::now();
    let end = start + Duration::from_secs_f64(schedule.end_s());

    let mut users = JoinSet::new();
    for user in 0..scenario.concurrent_users {
        let sink = Arc::clone(&sink);
        let client = client.clone();
        let plan = plan.clone();
        let base_url = base_url.clone();
        let token = bearer_token.clone();
        let run_id = run_id.to_string();
        let think_mean = scenario.think_time_ms;
        let user_start = start + Duration::from_secs_f64(schedule.start_offset_s(user));
        users.spawn(async move {
            tokio::time::sleep_until(user_start.into()).await;
            let mut rng = user_rng(seed, user as u64);
            let mut session = Session::new(plan.product_count);
            loop {
                let now = Instant::now();
                if now >= end {
                    break;
                }
                let spec = sample_operation(&plan.catalog, &plan.mix, &mut rng)?;
                let req = build_request(&plan.catalog, spec, &mut session, &mut rng)?;
                let offset = now - start;
                sink.note_issued();
                let t0 = Instant::now();
                let issued = issue(&client, &base_url, token.as_deref(), &req, timeout).await;
                let elapsed_ms = t0.elapsed().as_secs_f64() * 1000.0;
                let timeout_ms = timeout.as_secs_f64() * 1000.0;
                let outcome = classify_outcome(issued.signal, elapsed_ms, timeout_ms);
                let status_code = match issued.signal {
                    ResponseSignal::Status(s) if outcome != super::Outcome::Timeout => Some(s),
                    _ => None,
                };
                session.observe(&req, status_code, &issued.body);
                sink.push(RequestResult {
                    run_id: run_id.clone(),
                    user_index: user,
                    operation_name: req.operation_name.clone(),
                    category: req.category,
                    start_offset_ms: offset.as_secs_f64() * 1000.0,
                    latency_ms: if outcome == super::Outcome::Timeout {
                        elapsed_ms.max(timeout_ms)
                    } else {
                        elapsed_ms
                    },
                    outcome,
                    status_code,
                    bytes_out: req.body.len() as u64,
                    bytes_in: issued.body.len() as u64,
                });
                let multiplier = shape_multiplier(&plan.shape, offset.as_secs_f64(), started_at);
                let pause = think_time_ms(think_mean, multiplier, &mut rng);
                if pause > 0.0 {
                    tokio::time::sleep(Duration::from_secs_f64(pause / 1000.0)).await;
                }
            }
            Ok::<(), EngineError>(())
        });
    }
    let mut first_err = None;
    while let Some(joined) = users.join_next().await {
        match joined {
            Ok(Ok(())) => {}
            Ok(Err(e)) => {
                first_err.get_or_insert(e);
            }
            Err(e) => {
                first_err.get_or_insert(EngineError::Client(format!("user task failed: {e}")));
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    let sink = Arc::try_unwrap(sink).expect("all user tasks have finished");
    let issued_requests = sink.issued();
    Ok(RunRecord {
        run_id: run_id.to_string(),
        scenario: scenario.clone(),
        target_label: plan.target_label.clone(),
        seed,
        started_at,
        ended_at: Utc::now(),
        results: sink.into_sorted(),
        issued_requests,
    })
}
