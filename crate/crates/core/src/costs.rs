//! Cost estimation from measured usage and a per-platform pricing catalog.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::metrics::{relative_difference, MetricsSummary};
use crate::money::Usd;

/// Bytes per (decimal) gigabyte.
pub const BYTES_PER_GB: u64 = 1_000_000_000;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("malformed pricing: {0}")]
    MalformedPricing(String),
    #[error("no pricing for platform {0:?}")]
    UnknownPlatform(String),
    #[error("at least two estimates are needed for a comparison, got {0}")]
    InsufficientEstimates(usize),
    #[error("malformed usage: {0}")]
    MalformedUsage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlatformPricing {
    pub per_call_usd: Usd,
    pub per_gb_egress_usd: Usd,
    pub currency: String,
    /// Accepted but not used by the estimator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_compute_second_usd: Option<Usd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_gb_month_storage_usd: Option<Usd>,
}

impl PlatformPricing {
    pub fn new(per_call_usd: Usd, per_gb_egress_usd: Usd) -> Self {
        PlatformPricing {
            per_call_usd,
            per_gb_egress_usd,
            currency: "USD".into(),
            per_compute_second_usd: None,
            per_gb_month_storage_usd: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct PricingCatalog {
    pub entries: BTreeMap<String, PlatformPricing>,
}

impl Default for PricingCatalog {
    /// gcp: $0.0000004 per call, $0.12 per GB; azure: $0.0000002 per call, $0.19 per GB.
    fn default() -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(
            "gcp".to_string(),
            PlatformPricing::new(Usd::from_nanos(400), Usd::from_nanos(120_000_000)),
        );
        entries.insert(
            "azure".to_string(),
            PlatformPricing::new(Usd::from_nanos(200), Usd::from_nanos(190_000_000)),
        );
        PricingCatalog { entries }
    }
}

impl PricingCatalog {
    pub fn get(&self, platform: &str) -> Option<&PlatformPricing> {
        self.entries.get(platform)
    }

    /// Parses `{ "<platform>": { "per_call_usd": n, "per_gb_egress_usd": n } }`.
    pub fn from_json(text: &str) -> Result<Self, CostError> {
        let root: Value = serde_json::from_str(text).map_err(|e| CostError::MalformedPricing(e.to_string()))?;
        let Value::Object(map) = root else {
            return Err(CostError::MalformedPricing("top level must be an object".into()));
        };
        let mut entries = BTreeMap::new();
        for (platform, v) in map {
            let Value::Object(fields) = v else {
                return Err(CostError::MalformedPricing(format!("{platform}: must be an object")));
            };
            let mut pricing = PlatformPricing::new(Usd::ZERO, Usd::ZERO);
            let mut seen = (false, false);
            for (key, value) in &fields {
                let at = format!("{platform}.{key}");
                match key.as_str() {
                    "per_call_usd" => {
                        pricing.per_call_usd = rate(&at, value)?;
                        seen.0 = true;
                    }
                    "per_gb_egress_usd" => {
                        pricing.per_gb_egress_usd = rate(&at, value)?;
                        seen.1 = true;
                    }
                    "per_compute_second_usd" => pricing.per_compute_second_usd = Some(rate(&at, value)?),
                    "per_gb_month_storage_usd" => pricing.per_gb_month_storage_usd = Some(rate(&at, value)?),
                    "currency" => match value.as_str() {
                        Some("USD") => {}
                        _ => return Err(CostError::MalformedPricing(format!("{at}: only \"USD\" is supported"))),
                    },
                    _ => return Err(CostError::MalformedPricing(format!("{at}: unknown field"))),
                }
            }
            if !seen.0 {
                return Err(CostError::MalformedPricing(format!("{platform}.per_call_usd: missing")));
            }
            if !seen.1 {
                return Err(CostError::MalformedPricing(format!("{platform}.per_gb_egress_usd: missing")));
            }
            entries.insert(platform, pricing);
        }
        Ok(PricingCatalog { entries })
    }
}

fn rate(at: &str, value: &Value) -> Result<Usd, CostError> {
    let bad = |why: &str| CostError::MalformedPricing(format!("{at}: {why}"));
    let usd = match value {
        Value::Number(n) => {
            let f = n.as_f64().ok_or_else(|| bad("not a number"))?;
            let nanos = f * 1e9;
            if (nanos - nanos.round()).abs() > 1e-6 * nanos.abs().max(1.0) {
                return Err(bad("finer than 1e-9 USD"));
            }
            Usd::from_f64(f).map_err(|e| bad(&e.to_string()))?
        }
        Value::String(s) => s.parse::<Usd>().map_err(|e| bad(&e.to_string()))?,
        _ => return Err(bad("expected a number")),
    };
    if usd.is_negative() {
        return Err(bad("negative rate"));
    }
    Ok(usd)
}

/// Reads a pricing file. A missing file yields the built-in catalog.
pub fn load_pricing(path: &Path) -> Result<PricingCatalog, CostError> {
    match std::fs::read_to_string(path) {
        Ok(text) => PricingCatalog::from_json(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            tracing::info!(path = %path.display(), "pricing file not found, using built-in rates");
            Ok(PricingCatalog::default())
        }
        Err(source) => Err(CostError::Io {
            path: path.display().to_string(),
            source,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UsageRecord {
    pub platform_label: String,
    pub api_calls: u64,
    pub egress_bytes: u64,
}

impl UsageRecord {
    pub fn from_summary(platform_label: &str, summary: &MetricsSummary) -> Self {
        UsageRecord {
            platform_label: platform_label.to_string(),
            api_calls: summary.total_calls,
            egress_bytes: summary.egress_bytes,
        }
    }

    pub fn scaled(&self, k: u64) -> Self {
        UsageRecord {
            platform_label: self.platform_label.clone(),
            api_calls: self.api_calls * k,
            egress_bytes: self.egress_bytes * k,
        }
    }
}

/// Parses `{ "<platform>": { "api_calls": n, "egress_bytes": n } }`;
/// `egress_gb` (decimal gigabytes) may replace `egress_bytes`.
pub fn parse_usage(text: &str) -> Result<Vec<UsageRecord>, CostError> {
    let bad = |m: String| CostError::MalformedUsage(m);
    let root: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let Value::Object(map) = root else {
        return Err(bad("top level must be an object".into()));
    };
    let mut out = Vec::new();
    for (platform, v) in map {
        let Value::Object(fields) = v else {
            return Err(bad(format!("{platform}: must be an object")));
        };
        let mut calls = None;
        let mut bytes = None;
        for (key, value) in &fields {
            let at = format!("{platform}.{key}");
            match key.as_str() {
                "api_calls" => calls = Some(whole_number(&at, value)?),
                "egress_bytes" => bytes = Some(whole_number(&at, value)?),
                "egress_gb" => {
                    let gb = value.as_f64().filter(|g| g.is_finite() && *g >= 0.0);
                    let gb = gb.ok_or_else(|| bad(format!("{at}: expected a non-negative number")))?;
                    bytes = Some((gb * BYTES_PER_GB as f64).round() as u64);
                }
                _ => return Err(bad(format!("{at}: unknown field"))),
            }
        }
        out.push(UsageRecord {
            api_calls: calls.ok_or_else(|| bad(format!("{platform}.api_calls: missing")))?,
            egress_bytes: bytes.ok_or_else(|| bad(format!("{platform}.egress_bytes: missing")))?,
            platform_label: platform,
        });
    }
    Ok(out)
}

fn whole_number(at: &str, value: &Value) -> Result<u64, CostError> {
    if let Some(n) = value.as_u64() {
        return Ok(n);
    }
    match value.as_f64() {
        Some(f) if f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64 => Ok(f as u64),
        _ => Err(CostError::MalformedUsage(format!("{at}: expected a non-negative integer"))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostEstimate {
    pub platform_label: String,
    pub api_calls: u64,
    pub egress_bytes: u64,
    pub call_cost_usd: Usd,
    pub egress_cost_usd: Usd,
    pub total_usd: Usd,
}

/// calls x per-call rate + (bytes / 10^9) x per-GB rate, exactly.
pub fn estimate_cost(usage: &UsageRecord, pricing: &PricingCatalog) -> Result<CostEstimate, CostError> {
    let rates = pricing
        .get(&usage.platform_label)
        .ok_or_else(|| CostError::UnknownPlatform(usage.platform_label.clone()))?;
    let call_cost_usd = rates.per_call_usd * usage.api_calls;
    // rates are whole nano-dollars, so per-byte cost is a whole number of base units
    let egress_cost_usd = Usd::from_units(rates.per_gb_egress_usd.nanos() * usage.egress_bytes as i128);
    Ok(CostEstimate {
        platform_label: usage.platform_label.clone(),
        api_calls: usage.api_calls,
        egress_bytes: usage.egress_bytes,
        call_cost_usd,
        egress_cost_usd,
        total_usd: call_cost_usd + egress_cost_usd,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostComparison {
    pub platform_label: String,
    pub total_usd: Usd,
    /// How much more this platform costs than the cheapest, in percent of
    /// the cheapest total. Zero for the cheapest itself.
    pub pct_above_cheapest: f64,
}

/// Rows sorted by ascending total (ties by label).
pub fn compare_costs(estimates: &[CostEstimate]) -> Result<Vec<CostComparison>, CostError> {
    if estimates.len() < 2 {
        return Err(CostError::InsufficientEstimates(estimates.len()));
    }
    let mut sorted: Vec<&CostEstimate> = estimates.iter().collect();
    sorted.sort_by(|a, b| a.total_usd.cmp(&b.total_usd).then(a.platform_label.cmp(&b.platform_label)));
    let cheapest = sorted[0].total_usd.to_f64();
    Ok(sorted
        .into_iter()
        .map(|e| CostComparison {
            platform_label: e.platform_label.clone(),
            total_usd: e.total_usd,
            pct_above_cheapest: if cheapest == 0.0 {
                0.0
            } else {
                -relative_difference(cheapest, e.total_usd.to_f64()).expect("non-zero baseline")
            },
        })
        .collect())
}

pub const COST_HEADER: [&str; 7] = [
    "platform",
    "scenario",
    "api_calls",
    "egress_gb",
    "call_cost_usd",
    "egress_cost_usd",
    "total_usd",
];

/// Exact decimal gigabytes.
pub fn format_gb(bytes: u64) -> String {
    let whole = bytes / BYTES_PER_GB;
    let mut frac = format!("{:09}", bytes % BYTES_PER_GB);
    while frac.ends_with('0') {
        frac.pop();
    }
    if frac.is_empty() {
        whole.to_string()
    } else {
        format!("{whole}.{frac}")
    }
}

impl CostEstimate {
    /// Row for the cost CSV under `platform` (usually the target label).
    pub fn csv_row(&self, platform: &str, scenario: &str) -> Vec<String> {
        vec![
            platform.to_string(),
            scenario.to_string(),
            self.api_calls.to_string(),
            format_gb(self.egress_bytes),
            self.call_cost_usd.to_decimal_string(2),
            self.egress_cost_usd.to_decimal_string(2),
            self.total_usd.to_decimal_string(2),
        ]
    }
}
