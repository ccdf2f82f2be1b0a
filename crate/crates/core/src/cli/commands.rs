//! The `run`, `report`, `serve` and `estimate` subcommands.

use std::collections::BTreeMap;
use std::future::Future;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::net::TcpListener;

use super::config::{apply_desk_scale, ConfigInvalid, ResolvedConfig, DEFAULT_TOKEN_ENV};
use crate::costs::{estimate_cost, load_pricing, parse_usage, CostError, PricingCatalog, UsageRecord, COST_HEADER};
use crate::engine::raw::{read_raw, write_run, RawError};
use crate::engine::{execute_campaign, EngineError, LoadScenario, RequestResult, RunPlan, RunRecord, TargetEndpoint, CANONICAL_LEVELS};
use crate::metrics::{summarize_results, MetricsSummary};
use crate::report::{build_bundle, build_tables, write_bundle, Highlights, ManifestInfo, ReportInput};
use crate::target::{http, EmulationProfile, PosService, ServiceOptions};
use crate::workload::PRNG_ID;

pub const RAW_MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Unreachable(String),
    #[error(transparent)]
    Config(#[from] ConfigInvalid),
    #[error("no raw results: {0}")]
    EmptyRaw(String),
    #[error("serve: {0}")]
    Serve(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    /// Process exit code; distinct per failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Unreachable(_) => 2,
            CliError::Config(_) => 3,
            CliError::EmptyRaw(_) => 4,
            CliError::Serve(_) => 5,
            CliError::Usage(_) => 6,
            CliError::Other(_) => 1,
        }
    }
}

fn other(context: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Other(anyhow::anyhow!("{context}: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTargetMeta {
    pub label: String,
    pub platform: String,
    /// `http`, `embedded` or `virtual`.
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<EmulationProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRunMeta {
    pub run_id: String,
    pub file: String,
    pub target_label: String,
    pub platform: String,
    pub scenario: LoadScenario,
    pub seed: u64,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    pub issued_requests: u64,
    pub recorded_results: u64,
}

/// Run metadata written next to the raw CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawManifest {
    pub tool: String,
    pub version: String,
    pub config_digest: String,
    pub seed: u64,
    pub prng: String,
    pub desk_scale: bool,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    pub targets: Vec<RawTargetMeta>,
    pub runs: Vec<RawRunMeta>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub desk_scale: bool,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub raw_dir: PathBuf,
    pub manifest: RawManifest,
}

fn clear_raw_dir(raw_dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(raw_dir).map_err(|e| other(raw_dir.display(), e))?;
    for entry in std::fs::read_dir(raw_dir).map_err(|e| other(raw_dir.display(), e))? {
        let p = entry.map_err(|e| other(raw_dir.display(), e))?.path();
        let ours = p.extension().is_some_and(|x| x == "csv") || p.file_name().is_some_and(|n| n == RAW_MANIFEST);
        if ours && p.is_file() {
            std::fs::remove_file(&p).map_err(|e| other(p.display(), e))?;
        }
    }
    Ok(())
}

/// Executes every scenario against every target and writes
/// `<out>/raw/<run_id>.csv` plus `<out>/raw/manifest.json`.
pub async fn cmd_run(resolved: ResolvedConfig, overrides: RunOverrides) -> Result<RunOutcome, CliError> {
    let ResolvedConfig {
        mut config,
        catalog,
        profiles,
        digest,
        ..
    } = resolved;
    if overrides.desk_scale {
        apply_desk_scale(&mut config.scenarios);
    }
    let seed = overrides.seed.unwrap_or(config.seed);
    let out_dir = overrides.out_dir.unwrap_or_else(|| config.out_dir.clone());
    let raw_dir = out_dir.join("raw");
    let catalog = Arc::new(catalog);

    // live targets must answer before anything is written
    let client = crate::engine::live::client(1).map_err(|e| other("http client", e))?;
    for t in &config.targets {
        if let Some(url) = &t.base_url {
            let url = url.trim_end_matches('/');
            crate::engine::live::probe(&client, url, std::time::Duration::from_secs(5))
                .await
                .map_err(|reason| CliError::Unreachable(format!("target {} ({url}) unreachable: {reason}", t.label)))?;
        }
    }

    clear_raw_dir(&raw_dir)?;
    let started_at = Utc::now();
    let mut targets_meta = Vec::new();
    let mut runs_meta = Vec::new();

    for (t, profile) in config.targets.iter().zip(&profiles) {
        let plan = RunPlan {
            catalog: Arc::clone(&catalog),
            mix: config.mix,
            shape: config.shape.clone(),
            target_label: t.label.clone(),
            product_count: config.product_count,
        };
        let mut server = None;
        let (endpoint, mode, base_url) = match (&t.base_url, profile) {
            (Some(url), _) => {
                let env = t.token_env.as_deref().unwrap_or(DEFAULT_TOKEN_ENV);
                (TargetEndpoint::http(url.clone(), Some(env)), "http", Some(url.clone()))
            }
            (None, Some(p)) => {
                let service = Arc::new(PosService::new(ServiceOptions {
                    catalog: Some(Arc::clone(&catalog)),
                    ..ServiceOptions::with_profile(p.clone())
                }));
                if t.virtual_clock {
                    (TargetEndpoint::Simulated(service), "virtual", None)
                } else {
                    let running = http::spawn(service, SocketAddr::from(([127, 0, 0, 1], 0)))
                        .await
                        .map_err(|e| other(format!("embedded target {}", t.label), e))?;
                    let url = running.base_url();
                    server = Some(running);
                    (TargetEndpoint::http(url.clone(), None), "embedded", Some(url))
                }
            }
            (None, None) => unreachable!("config validation requires base_url or profile"),
        };
        targets_meta.push(RawTargetMeta {
            label: t.label.clone(),
            platform: t.platform().to_string(),
            mode: mode.to_string(),
            base_url: base_url.filter(|_| mode == "http"),
            profile: profile.clone(),
        });

        tracing::info!(target = %t.label, mode, scenarios = config.scenarios.len(), "starting campaign");
        let mut write_error = None;
        let result = execute_campaign(&plan, &config.scenarios, &endpoint, seed, config.sim_epoch, |run: &RunRecord| {
            let file = format!("{}.csv", run.run_id);
            let path = raw_dir.join(&file);
            let written = std::fs::File::create(&path)
                .map_err(|e| e.to_string())
                .and_then(|f| write_run(run, std::io::BufWriter::new(f)).map_err(|e| e.to_string()));
            if let Err(e) = written {
                write_error.get_or_insert(format!("{}: {e}", path.display()));
            }
            tracing::info!(run = %run.run_id, requests = run.results.len(), "run complete");
            runs_meta.push(RawRunMeta {
                run_id: run.run_id.clone(),
                file,
                target_label: run.target_label.clone(),
                platform: t.platform().to_string(),
                scenario: run.scenario.clone(),
                seed: run.seed,
                started_at: run.started_at,
                ended_at: run.ended_at,
                issued_requests: run.issued_requests,
                recorded_results: run.results.len() as u64,
            });
        })
        .await;
        if let Some(s) = server {
            let _ = s.stop().await;
        }
        if let Some(e) = write_error {
            return Err(other("writing raw results", e));
        }
        match result {
            Ok(_) => {}
            Err(EngineError::TargetUnreachable { target, reason }) => {
                return Err(CliError::Unreachable(format!("target {target} unreachable: {reason}")));
            }
            Err(e) => return Err(other(format!("campaign for {}", t.label), e)),
        }
    }

    let manifest = RawManifest {
        tool: "posbench".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_digest: digest,
        seed,
        prng: PRNG_ID.into(),
        desk_scale: overrides.desk_scale,
        started_at,
        ended_at: Utc::now(),
        targets: targets_meta,
        runs: runs_meta,
    };
    let path = raw_dir.join(RAW_MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("serializable manifest") + "\n";
    std::fs::write(&path, text).map_err(|e| other(path.display(), e))?;
    Ok(RunOutcome { raw_dir, manifest })
}

/// Summaries and provenance recovered from a raw directory.
#[derive(Debug, Clone, Default)]
pub struct LoadedRaw {
    pub summaries: Vec<MetricsSummary>,
    pub platforms: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    pub inputs: Vec<String>,
    pub digest: String,
}

/// Reads every `*.csv` under `raw_dir` (name order), skipping malformed rows
/// with a warning each, and summarizes each run over its steady window.
pub fn load_raw_dir(raw_dir: &Path) -> Result<LoadedRaw, CliError> {
    let entries = std::fs::read_dir(raw_dir).map_err(|e| CliError::EmptyRaw(format!("{}: {e}", raw_dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::EmptyRaw(format!("{} holds no .csv files", raw_dir.display())));
    }

    let mut out = LoadedRaw::default();
    let manifest: Option<RawManifest> = match std::fs::read_to_string(raw_dir.join(RAW_MANIFEST)) {
        Ok(text) => match serde_json::from_str(&text) {
            Ok(m) => Some(m),
            Err(e) => {
                out.warnings.push(format!("{RAW_MANIFEST}: unreadable ({e}); using canonical scenario timing"));
                None
            }
        },
        Err(_) => {
            out.warnings.push(format!("{RAW_MANIFEST}: missing; using canonical scenario timing"));
            None
        }
    };
    let run_meta: BTreeMap<&str, &RawRunMeta> = manifest
        .iter()
        .flat_map(|m| m.runs.iter().map(|r| (r.run_id.as_str(), r)))
        .collect();
    if let Some(m) = &manifest {
        for t in &m.targets {
            out.platforms.insert(t.label.clone(), t.platform.clone());
        }
    }

    let mut hasher = Sha256::new();
    // (target, scenario, run_id) -> results
    let mut runs: BTreeMap<(String, String, String), Vec<RequestResult>> = BTreeMap::new();
    for path in &files {
        let name = path.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
        let bytes = std::fs::read(path).map_err(|e| other(path.display(), e))?;
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update(&bytes);
        out.inputs.push(name.clone());
        match read_raw(&bytes[..]) {
            Ok(raw) => {
                for (line, reason) in raw.skipped {
                    out.warnings.push(format!("{name}:{line}: skipped row ({reason})"));
                }
                for row in raw.rows {
                    runs.entry((row.target_label, row.scenario, row.result.run_id.clone()))
                        .or_default()
                        .push(row.result);
                }
            }
            Err(RawError::BadHeader(_)) => out.warnings.push(format!("{name}: not a raw results file, skipped")),
            Err(e) => out.warnings.push(format!("{name}: {e}")),
        }
    }
    out.digest = hex::encode(hasher.finalize());

    for ((label, scenario_name, run_id), results) in runs {
        let scenario = match run_meta.get(run_id.as_str()) {
            Some(m) if m.scenario.name == scenario_name && m.target_label == label => m.scenario.clone(),
            Some(_) => {
                out.warnings.push(format!("{run_id}: rows disagree with run metadata, skipped"));
                continue;
            }
            None => match CANONICAL_LEVELS.iter().position(|l| *l == scenario_name) {
                Some(i) => {
                    if manifest.is_some() {
                        out.warnings.push(format!("{run_id}: no run metadata; assuming canonical timing"));
                    }
                    LoadScenario::canonical_set().swap_remove(i)
                }
                None => {
                    out.warnings
                        .push(format!("{run_id}: unknown scenario {scenario_name:?} without run metadata, skipped"));
                    continue;
                }
            },
        };
        match summarize_results(&run_id, &scenario, &label, &results) {
            Ok(s) => out.summaries.push(s),
            Err(e) => out.warnings.push(format!("{run_id}: {e}")),
        }
    }
    if out.summaries.is_empty() {
        return Err(CliError::EmptyRaw(format!("{} holds no usable runs", raw_dir.display())));
    }
    Ok(out)
}

fn pricing_from(path: Option<&Path>) -> Result<PricingCatalog, CliError> {
    match path {
        Some(p) => load_pricing(p).map_err(|e| {
            CliError::Config(ConfigInvalid {
                field: "--pricing".into(),
                reason: e.to_string(),
            })
        }),
        None => Ok(PricingCatalog::default()),
    }
}

#[derive(Debug, Clone)]
pub struct ReportOutcome {
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    pub highlights: Highlights,
    pub summary: String,
}

/// Builds the report for `raw_dir` into `out_dir`.
pub fn cmd_report(raw_dir: &Path, out_dir: &Path, pricing: Option<&Path>) -> Result<ReportOutcome, CliError> {
    let loaded = load_raw_dir(raw_dir)?;
    let pricing = pricing_from(pricing)?;
    let platforms = loaded.platforms.clone();
    let input = ReportInput::from_summaries(&loaded.summaries, &pricing, |label| {
        platforms.get(label).cloned().unwrap_or_else(|| label.to_string())
    })
    .map_err(|e| other("report", e))?;
    let mut warnings = loaded.warnings;
    for (t, p) in &input.unpriced {
        warnings.push(format!("{t}: no pricing for platform {p}; omitted from costs"));
    }
    for w in &warnings {
        tracing::warn!("{w}");
    }
    let bundle = build_bundle(&input).map_err(|e| other("report", e))?;
    let info = ManifestInfo {
        input_digest: loaded.digest,
        inputs: loaded.inputs,
        warnings: warnings.clone(),
    };
    let files = write_bundle(&bundle, out_dir, &info).map_err(|e| other("report", e))?;
    Ok(ReportOutcome {
        files,
        warnings,
        highlights: bundle.highlights,
        summary: bundle.summary,
    })
}

/// Writes a cost CSV for an explicit usage file or, failing that, a raw
/// directory. Returns warnings.
pub fn cmd_estimate<W: Write>(
    usage: Option<&Path>,
    raw_dir: Option<&Path>,
    pricing: Option<&Path>,
    out: W,
) -> Result<Vec<String>, CliError> {
    let pricing = pricing_from(pricing)?;
    let mut warnings = Vec::new();
    let csv_text = match (usage, raw_dir) {
        (Some(u), raw) => {
            if raw.is_some() {
                warnings.push("both --usage and --raw given; using --usage".to_string());
            }
            let text = std::fs::read_to_string(u).map_err(|e| CliError::Usage(format!("{}: {e}", u.display())))?;
            let mut records = if text.trim().is_empty() {
                Vec::new()
            } else {
                parse_usage(&text).map_err(|e| CliError::Usage(e.to_string()))?
            };
            if records.is_empty() {
                records = pricing
                    .entries
                    .keys()
                    .map(|p| UsageRecord {
                        platform_label: p.clone(),
                        api_calls: 0,
                        egress_bytes: 0,
                    })
                    .collect();
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(COST_HEADER).map_err(|e| other("csv", e))?;
            for r in &records {
                let est = estimate_cost(r, &pricing).map_err(|e| match e {
                    CostError::UnknownPlatform(p) => CliError::Usage(format!("usage names platform {p:?}, which has no pricing")),
                    other_err => other("estimate", other_err),
                })?;
                w.write_record(est.csv_row(&r.platform_label, "")).map_err(|e| other("csv", e))?;
            }
            String::from_utf8(w.into_inner().map_err(|e| other("csv", e))?).expect("utf-8")
        }
        (None, Some(raw)) => {
            let loaded = load_raw_dir(raw)?;
            warnings.extend(loaded.warnings);
            let platforms = loaded.platforms;
            let input = ReportInput::from_summaries(&loaded.summaries, &pricing, |label| {
                platforms.get(label).cloned().unwrap_or_else(|| label.to_string())
            })
            .map_err(|e| other("estimate", e))?;
            for (t, p) in &input.unpriced {
                warnings.push(format!("{t}: no pricing for platform {p}; omitted"));
            }
            build_tables(&input)["costs"].to_csv()
        }
        (None, None) => return Err(CliError::Usage("estimate needs --usage or --raw".into())),
    };
    let mut out = out;
    out.write_all(csv_text.as_bytes()).map_err(|e| other("stdout", e))?;
    for w in &warnings {
        tracing::warn!("{w}");
    }
    Ok(warnings)
}

/// Serves the target with `profile` on `port` until `shutdown` resolves.
/// `on_ready` receives the bound address.
pub async fn cmd_serve<F>(
    profile: &str,
    port: u16,
    auth_token: Option<String>,
    shutdown: F,
    on_ready: impl FnOnce(SocketAddr),
) -> Result<(), CliError>
where
    F: Future<Output = ()> + Send + 'static,
{
    let profile = EmulationProfile::resolve(profile).map_err(|e| CliError::Serve(e.to_string()))?;
    let listener = TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], port)))
        .await
        .map_err(|e| CliError::Serve(format!("port {port}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| CliError::Serve(e.to_string()))?;
    let service = Arc::new(PosService::new(ServiceOptions {
        auth_token,
        ..ServiceOptions::with_profile(profile)
    }));
    on_ready(addr);
    http::serve(service, listener, shutdown)
        .await
        .map_err(|e| CliError::Serve(e.to_string()))
}
