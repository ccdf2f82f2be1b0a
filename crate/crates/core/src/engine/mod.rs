//! Closed-loop scenario execution.
//!
//! Two drivers share the same per-user loop semantics:
//! - [`live`] issues real HTTP requests with one task per virtual user;
//! - [`sim`] replays the loop in virtual time against an in-process
//!   [`PosService`](crate::target::PosService), which makes whole campaigns
//!   reproducible to the byte.

pub mod live;
pub mod raw;
pub mod sim;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::target::PosService;
use crate::workload::{Catalog, OperationCategory, TrafficShape, WorkloadError, WorkloadMix};

pub const DEFAULT_REQUEST_TIMEOUT_MS: u64 = 10_000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("target {target} unreachable: {reason}")]
    TargetUnreachable { target: String, reason: String },
    #[error("invalid scenario {name}: {reason}")]
    InvalidScenario { name: String, reason: String },
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("http client: {0}")]
    Client(String),
}

/// One progressive-load level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadScenario {
    pub name: String,
    pub concurrent_users: u32,
    pub ramp_up_s: f64,
    pub steady_s: f64,
    pub repetitions: u32,
    pub rest_between_runs_s: f64,
    #[serde(default = "default_timeout")]
    pub request_timeout_ms: u64,
    #[serde(default)]
    pub think_time_ms: f64,
}

fn default_timeout() -> u64 {
    DEFAULT_REQUEST_TIMEOUT_MS
}

/// Names of the canonical levels in reporting order.
pub const CANONICAL_LEVELS: [&str; 4] = ["Baseline", "Typical", "Peak", "Stress"];

impl LoadScenario {
    pub fn canonical(name: &str, users: u32) -> Self {
        LoadScenario {
            name: name.to_string(),
            concurrent_users: users,
            ramp_up_s: 60.0,
            steady_s: 300.0,
            repetitions: 3,
            rest_between_runs_s: 300.0,
            request_timeout_ms: DEFAULT_REQUEST_TIMEOUT_MS,
            think_time_ms: 0.0,
        }
    }

    /// Baseline 10, Typical 25, Peak 50, Stress 100 users.
    pub fn canonical_set() -> Vec<LoadScenario> {
        CANONICAL_LEVELS
            .iter()
            .zip([10, 25, 50, 100])
            .map(|(name, users)| LoadScenario::canonical(name, users))
            .collect()
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |reason: &str| {
            Err(EngineError::InvalidScenario {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.name.is_empty() {
            return bad("name is empty");
        }
        if self.concurrent_users == 0 {
            return bad("concurrent_users must be positive");
        }
        if !(self.ramp_up_s.is_finite() && self.ramp_up_s >= 0.0) {
            return bad("ramp_up_s must be non-negative");
        }
        if !(self.steady_s.is_finite() && self.steady_s > 0.0) {
            return bad("steady_s must be positive");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be positive");
        }
        if !(self.rest_between_runs_s.is_finite() && self.rest_between_runs_s >= 0.0) {
            return bad("rest_between_runs_s must be non-negative");
        }
        if self.request_timeout_ms == 0 {
            return bad("request_timeout_ms must be positive");
        }
        if !(self.think_time_ms.is_finite() && self.think_time_ms >= 0.0) {
            return bad("think_time_ms must be non-negative");
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.ramp_up_s + self.steady_s
    }

    /// Position of the level in reporting order; custom levels sort last.
    pub fn level_rank(name: &str) -> usize {
        CANONICAL_LEVELS.iter().position(|l| *l == name).unwrap_or(CANONICAL_LEVELS.len())
    }

    pub fn ramp_schedule(&self) -> RampSchedule {
        RampSchedule {
            users: self.concurrent_users,
            ramp_up_s: self.ramp_up_s,
            total_s: self.duration_s(),
        }
    }
}

/// Active user count as a function of elapsed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampSchedule {
    users: u32,
    ramp_up_s: f64,
    total_s: f64,
}

impl RampSchedule {
    /// `ceil(users * t / ramp)` during the ramp, `users` afterwards.
    pub fn active_at(&self, t: f64) -> u32 {
        if t <= 0.0 {
            return 0;
        }
        if self.ramp_up_s <= 0.0 || t >= self.ramp_up_s {
            return self.users;
        }
        let exact = self.users as f64 * t / self.ramp_up_s;
        // ceil, but tolerate float noise just above an integer
        let rounded = exact.round();
        let active = if (exact - rounded).abs() < 1e-9 { rounded } else { exact.ceil() };
        (active as u32).min(self.users)
    }

    /// Offset at which the zero-based `user_index` begins issuing requests.
    pub fn start_offset_s(&self, user_index: u32) -> f64 {
        if self.ramp_up_s <= 0.0 {
            0.0
        } else {
            self.ramp_up_s * user_index as f64 / self.users as f64
        }
    }

    pub fn end_s(&self) -> f64 {
        self.total_s
    }
}

pub fn ramp_schedule(scenario: &LoadScenario) -> RampSchedule {
    scenario.ramp_schedule()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    HttpError,
    Timeout,
    TransportError,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "Success",
            Outcome::HttpError => "HttpError",
            Outcome::Timeout => "Timeout",
            Outcome::TransportError => "TransportError",
        }
    }

    pub fn is_failure(self) -> bool {
        self != Outcome::Success
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Success" => Ok(Outcome::Success),
            "HttpError" => Ok(Outcome::HttpError),
            "Timeout" => Ok(Outcome::Timeout),
            "TransportError" => Ok(Outcome::TransportError),
            other => Err(format!("unknown outcome {other:?}")),
        }
    }
}

/// What the client observed for one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseSignal {
    Status(u16),
    /// Connection refused, reset, or a malformed response.
    Transport,
    /// No response before the client gave up.
    NoResponse,
}

pub fn classify_outcome(signal: ResponseSignal, elapsed_ms: f64, timeout_ms: f64) -> Outcome {
    if elapsed_ms >= timeout_ms {
        return Outcome::Timeout;
    }
    match signal {
        ResponseSignal::Transport => Outcome::TransportError,
        ResponseSignal::NoResponse => Outcome::Timeout,
        ResponseSignal::Status(200..=299) => Outcome::Success,
        // redirects are not followed
        ResponseSignal::Status(_) => Outcome::HttpError,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestResult {
    pub run_id: String,
    pub user_index: u32,
    pub operation_name: String,
    pub category: OperationCategory,
    pub start_offset_ms: f64,
    pub latency_ms: f64,
    pub outcome: Outcome,
    pub status_code: Option<u16>,
    pub bytes_out: u64,
    pub bytes_in: u64,
}

impl RequestResult {
    pub fn in_ramp(&self, scenario: &LoadScenario) -> bool {
        self.start_offset_ms < scenario.ramp_up_s * 1000.0
    }

    pub fn in_steady_window(&self, scenario: &LoadScenario) -> bool {
        !self.in_ramp(scenario) && self.start_offset_ms < scenario.duration_s() * 1000.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub scenario: LoadScenario,
    pub target_label: String,
    pub seed: u64,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    pub results: Vec<RequestResult>,
    /// Requests counted at issue time, independently of `results`.
    pub issued_requests: u64,
}

/// Append-only result collection shared by concurrent users.
#[derive(Debug, Default)]
pub struct ResultSink {
    results: Mutex<Vec<RequestResult>>,
    issued: AtomicU64,
}

impl ResultSink {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts a request at the moment it is sent.
    pub fn note_issued(&self) {
        self.issued.fetch_add(1, Ordering::Relaxed);
    }

    pub fn push(&self, result: RequestResult) {
        self.results.lock().push(result);
    }

    pub fn issued(&self) -> u64 {
        self.issued.load(Ordering::Relaxed)
    }

    /// Results ordered by start offset, ties by user.
    pub fn into_sorted(self) -> Vec<RequestResult> {
        let mut v = self.results.into_inner();
        v.sort_by(|a, b| {
            a.start_offset_ms
                .total_cmp(&b.start_offset_ms)
                .then(a.user_index.cmp(&b.user_index))
        });
        v
    }
}

/// Where requests go.
#[derive(Clone)]
pub enum TargetEndpoint {
    Http {
        base_url: String,
        /// Value for `Authorization: Bearer ...`, if any.
        bearer_token: Option<String>,
    },
    /// In-process service driven in virtual time.
    Simulated(Arc<PosService>),
}

impl fmt::Debug for TargetEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetEndpoint::Http { base_url, bearer_token } => f
                .debug_struct("Http")
                .field("base_url", base_url)
                .field("bearer_token", &bearer_token.as_ref().map(|_| "***"))
                .finish(),
            TargetEndpoint::Simulated(_) => f.write_str("Simulated"),
        }
    }
}

impl TargetEndpoint {
    /// HTTP endpoint with the token taken from `token_env` when that variable is set.
    pub fn http(base_url: impl Into<String>, token_env: Option<&str>) -> Self {
        let bearer_token = token_env.and_then(|name| std::env::var(name).ok()).filter(|t| !t.is_empty());
        TargetEndpoint::Http {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            bearer_token,
        }
    }
}

/// Everything a run needs besides the scenario.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub catalog: Arc<Catalog>,
    pub mix: WorkloadMix,
    pub shape: TrafficShape,
    pub target_label: String,
    /// Products the workload draws ids from.
    pub product_count: u64,
}

/// Virtual-time bookkeeping carried across the runs of a simulated campaign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub epoch: DateTime<Utc>,
    /// Seconds since `epoch`.
    pub now_s: f64,
}

impl SimClock {
    pub fn at(&self) -> DateTime<Utc> {
        self.epoch + chrono::Duration::microseconds((self.now_s * 1e6).round() as i64)
    }
}

pub async fn run_scenario(
    plan: &RunPlan,
    scenario: &LoadScenario,
    target: &TargetEndpoint,
    run_id: &str,
    seed: u64,
    clock: &mut SimClock,
) -> Result<RunRecord, EngineError> {
    scenario.validate()?;
    match target {
        TargetEndpoint::Http { .. } => live::run_scenario(plan, scenario, target, run_id, seed).await,
        TargetEndpoint::Simulated(service) => Ok(sim::run_scenario(plan, scenario, service, run_id, seed, clock)),
    }
}

/// Identifier of the run `ordinal` of a campaign.
pub fn run_id(target_label: &str, scenario: &str, repetition: u32) -> String {
    format!("{target_label}-{scenario}-r{}", repetition + 1)
}

/// Runs every scenario `repetitions` times with rests between consecutive
/// runs. Run seeds are `seed + ordinal`. `on_run` sees each record as soon as
/// it completes so callers can persist partial campaigns.
pub async fn execute_campaign<F>(
    plan: &RunPlan,
    scenarios: &[LoadScenario],
    target: &TargetEndpoint,
    seed: u64,
    sim_epoch: DateTime<Utc>,
    mut on_run: F,
) -> Result<Vec<RunRecord>, EngineError>
where
    F: FnMut(&RunRecord),
{
    if scenarios.is_empty() {
        return Err(EngineError::InvalidScenario {
            name: "<campaign>".into(),
            reason: "no scenarios".into(),
        });
    }
    for s in scenarios {
        s.validate()?;
    }
    let mut clock = SimClock { epoch: sim_epoch, now_s: 0.0 };
    let mut runs = Vec::new();
    let mut ordinal: u64 = 0;
    let mut previous_rest: Option<f64> = None;
    for scenario in scenarios {
        for rep in 0..scenario.repetitions {
            if let Some(rest) = previous_rest {
                match target {
                    TargetEndpoint::Http { .. } => tokio::time::sleep(Duration::from_secs_f64(rest)).await,
                    TargetEndpoint::Simulated(_) => clock.now_s += rest,
                }
            }
            let id = run_id(&plan.target_label, &scenario.name, rep);
            let record = run_scenario(plan, scenario, target, &id, seed.wrapping_add(ordinal), &mut clock).await?;
            on_run(&record);
            runs.push(record);
            ordinal += 1;
            previous_rest = Some(scenario.rest_between_runs_s);
        }
    }
    Ok(runs)
}
