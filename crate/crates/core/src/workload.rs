//! POS operation catalog, category mix, traffic shaping and request synthesis.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration as ChronoDuration, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::money::Usd;

/// Identifier recorded in run metadata for the per-user generator.
pub const PRNG_ID: &str = "chacha8/seed_from_u64+stream";

/// Upper bound used for the open-ended sales summary window (2100-01-01).
const SUMMARY_WINDOW_END: i64 = 4_102_444_800;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("mix invalid: transaction={transaction} inventory={inventory} analytics={analytics} ({reason})")]
    MixInvalid {
        transaction: f64,
        inventory: f64,
        analytics: f64,
        reason: String,
    },
    #[error("no operations in category {0}")]
    EmptyCategory(OperationCategory),
    #[error("placeholder {{{placeholder}}} in {operation} cannot be resolved")]
    UnresolvablePlaceholder {
        operation: String,
        placeholder: String,
    },
    #[error("catalog invalid: {0}")]
    CatalogInvalid(String),
    #[error("traffic shape invalid: {0}")]
    ShapeInvalid(String),
    #[error("reading catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing catalog: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OperationCategory {
    Transaction,
    Inventory,
    Analytics,
}

impl OperationCategory {
    /// Fixed walk order for cumulative-weight sampling.
    pub const ALL: [OperationCategory; 3] = [
        OperationCategory::Transaction,
        OperationCategory::Inventory,
        OperationCategory::Analytics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OperationCategory::Transaction => "Transaction",
            OperationCategory::Inventory => "Inventory",
            OperationCategory::Analytics => "Analytics",
        }
    }
}

impl fmt::Display for OperationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OperationCategory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Transaction" => Ok(OperationCategory::Transaction),
            "Inventory" => Ok(OperationCategory::Inventory),
            "Analytics" => Ok(OperationCategory::Analytics),
            other => Err(format!("unknown category {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    Post,
    Put,
    Delete,
}

impl HttpMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            HttpMethod::Get => "GET",
            HttpMethod::Post => "POST",
            HttpMethod::Put => "PUT",
            HttpMethod::Delete => "DELETE",
        }
    }
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One entry of the operation catalog.
///
/// `path_template` and string values inside `body` may contain placeholders:
/// `{sale_id}` (the session's open sale), `{last_sale_id}` (most recent sale,
/// open or paid), `{product_id}`, `{qty}`, `{discount_usd}`, `{stock_delta}`,
/// `{from}` and `{to}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationSpec {
    pub name: String,
    pub category: OperationCategory,
    pub method: HttpMethod,
    pub path_template: String,
    #[serde(default)]
    pub payload_bytes: u64,
    #[serde(default)]
    pub expected_response_bytes: u64,
    #[serde(default = "default_weight")]
    pub intra_category_weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<Map<String, Value>>,
}

fn default_weight() -> f64 {
    1.0
}

impl OperationSpec {
    fn new(
        name: &str,
        category: OperationCategory,
        method: HttpMethod,
        path_template: &str,
        payload_bytes: u64,
        expected_response_bytes: u64,
        body: Option<Value>,
    ) -> Self {
        OperationSpec {
            name: name.to_string(),
            category,
            method,
            path_template: path_template.to_string(),
            payload_bytes,
            expected_response_bytes,
            intra_category_weight: 1.0,
            body: body.and_then(|v| v.as_object().cloned()),
        }
    }

    fn creates_sale(&self) -> bool {
        self.method == HttpMethod::Post && self.path_template == "/sales"
    }

    fn closes_sale(&self) -> bool {
        self.path_template.contains("{sale_id}") && self.path_template.ends_with("/payment")
    }

    fn placeholders(&self) -> Vec<String> {
        let mut out = Vec::new();
        collect_placeholders(&self.path_template, &mut out);
        if let Some(body) = &self.body {
            for v in body.values() {
                if let Value::String(s) = v {
                    collect_placeholders(s, &mut out);
                }
            }
        }
        out
    }
}

fn collect_placeholders(s: &str, out: &mut Vec<String>) {
    let mut rest = s;
    while let Some(start) = rest.find('{') {
        let Some(end) = rest[start..].find('}') else { break };
        let name = &rest[start + 1..start + end];
        if !out.iter().any(|n| n == name) {
            out.push(name.to_string());
        }
        rest = &rest[start + end + 1..];
    }
}

const KNOWN_PLACEHOLDERS: &[&str] = &[
    "sale_id",
    "last_sale_id",
    "product_id",
    "qty",
    "discount_usd",
    "stock_delta",
    "from",
    "to",
];

/// Validated list of operations.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Catalog {
    specs: Vec<OperationSpec>,
}

/// Request body size for writes in the default catalog.
pub const DEFAULT_WRITE_PAYLOAD_BYTES: u64 = 512;
/// Response size the default catalog expects from analytics routes.
pub const DEFAULT_ANALYTICS_RESPONSE_BYTES: u64 = 2048;

impl Catalog {
    pub fn new(specs: Vec<OperationSpec>) -> Result<Self, WorkloadError> {
        let invalid = |m: String| Err(WorkloadError::CatalogInvalid(m));
        if specs.is_empty() {
            return invalid("catalog is empty".into());
        }
        for (i, s) in specs.iter().enumerate() {
            if s.name.is_empty() {
                return invalid(format!("[{i}].name is empty"));
            }
            if specs[..i].iter().any(|o| o.name == s.name) {
                return invalid(format!("[{i}].name {:?} is duplicated", s.name));
            }
            if !(s.intra_category_weight.is_finite() && s.intra_category_weight > 0.0) {
                return invalid(format!("[{i}].intra_category_weight must be positive"));
            }
            if s.method == HttpMethod::Get && s.payload_bytes != 0 {
                return invalid(format!("[{i}].payload_bytes must be 0 for GET"));
            }
            if !s.path_template.starts_with('/') {
                return invalid(format!("[{i}].path_template must start with '/'"));
            }
            for p in s.placeholders() {
                if !KNOWN_PLACEHOLDERS.contains(&p.as_str()) {
                    return invalid(format!("[{i}] unknown placeholder {{{p}}}"));
                }
            }
        }
        let catalog = Catalog { specs };
        let needs_sale = catalog.specs.iter().any(|s| {
            let ph = s.placeholders();
            ph.iter().any(|p| p == "sale_id" || p == "last_sale_id")
        });
        if needs_sale && catalog.sale_creation().is_none() {
            return invalid("operations reference a sale but no POST /sales operation exists".into());
        }
        Ok(catalog)
    }

    /// The twelve POS operations: five transaction, four inventory, three analytics.
    pub fn pos_default() -> Self {
        use HttpMethod::*;
        use OperationCategory::*;
        let w = DEFAULT_WRITE_PAYLOAD_BYTES;
        let a = DEFAULT_ANALYTICS_RESPONSE_BYTES;
        let specs = vec![
            OperationSpec::new("create_sale", Transaction, Post, "/sales", w, 0, Some(serde_json::json!({}))),
            OperationSpec::new(
                "add_item",
                Transaction,
                Post,
                "/sales/{sale_id}/items",
                w,
                0,
                Some(serde_json::json!({"product_id": "{product_id}", "qty": "{qty}"})),
            ),
            OperationSpec::new(
                "apply_discount",
                Transaction,
                Post,
                "/sales/{sale_id}/discount",
                w,
                0,
                Some(serde_json::json!({"amount_usd": "{discount_usd}"})),
            ),
            OperationSpec::new(
                "process_payment",
                Transaction,
                Post,
                "/sales/{sale_id}/payment",
                w,
                0,
                Some(serde_json::json!({})),
            ),
            OperationSpec::new("get_receipt", Transaction, Get, "/sales/{last_sale_id}/receipt", 0, 0, None),
            OperationSpec::new("product_detail", Inventory, Get, "/products/{product_id}", 0, 0, None),
            OperationSpec::new("price_check", Inventory, Get, "/products/{product_id}/price", 0, 0, None),
            OperationSpec::new(
                "stock_update",
                Inventory,
                Put,
                "/products/{product_id}/stock",
                w,
                0,
                Some(serde_json::json!({"delta": "{stock_delta}"})),
            ),
            OperationSpec::new("availability", Inventory, Get, "/products/{product_id}/availability", 0, 0, None),
            OperationSpec::new("sales_summary", Analytics, Get, "/reports/sales-summary?from={from}&to={to}", 0, a, None),
            OperationSpec::new("inventory_report", Analytics, Get, "/reports/inventory", 0, a, None),
            OperationSpec::new("employee_metrics", Analytics, Get, "/reports/employee-metrics", 0, a, None),
        ];
        Catalog::new(specs).expect("default catalog is valid")
    }

    /// Reads a JSON array of operation specs.
    pub fn load(path: &Path) -> Result<Self, WorkloadError> {
        let text = std::fs::read_to_string(path).map_err(|source| WorkloadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let specs: Vec<OperationSpec> = serde_json::from_str(&text)?;
        Catalog::new(specs)
    }

    pub fn specs(&self) -> &[OperationSpec] {
        &self.specs
    }

    pub fn get(&self, name: &str) -> Option<&OperationSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn sale_creation(&self) -> Option<&OperationSpec> {
        self.specs.iter().find(|s| s.creates_sale())
    }

    pub fn in_category(&self, category: OperationCategory) -> impl Iterator<Item = &OperationSpec> {
        self.specs.iter().filter(move |s| s.category == category)
    }

    /// Expected response size for a concrete request path, if any catalog
    /// entry's template matches it.
    pub fn expected_response_bytes(&self, method: &str, path: &str) -> Option<u64> {
        let path = path.split('?').next().unwrap_or(path);
        self.specs
            .iter()
            .find(|s| s.method.as_str() == method && template_matches(&s.path_template, path))
            .map(|s| s.expected_response_bytes)
    }
}

fn template_matches(template: &str, path: &str) -> bool {
    let template = template.split('?').next().unwrap_or(template);
    let t: Vec<&str> = template.split('/').collect();
    let p: Vec<&str> = path.split('/').collect();
    t.len() == p.len()
        && t.iter()
            .zip(&p)
            .all(|(a, b)| (a.starts_with('{') && a.ends_with('}') && !b.is_empty()) || a == b)
}

/// Category weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadMix {
    pub transaction_weight: f64,
    pub inventory_weight: f64,
    pub analytics_weight: f64,
}

impl Default for WorkloadMix {
    fn default() -> Self {
        WorkloadMix {
            transaction_weight: 0.60,
            inventory_weight: 0.30,
            analytics_weight: 0.10,
        }
    }
}

impl WorkloadMix {
    pub fn new(transaction: f64, inventory: f64, analytics: f64) -> Self {
        WorkloadMix {
            transaction_weight: transaction,
            inventory_weight: inventory,
            analytics_weight: analytics,
        }
    }

    pub fn weight(&self, category: OperationCategory) -> f64 {
        match category {
            OperationCategory::Transaction => self.transaction_weight,
            OperationCategory::Inventory => self.inventory_weight,
            OperationCategory::Analytics => self.analytics_weight,
        }
    }

    /// Category whose cumulative band contains `u` in [0,1).
    pub fn category_for_draw(&self, u: f64) -> OperationCategory {
        let mut acc = 0.0;
        for category in OperationCategory::ALL {
            acc += self.weight(category);
            if u < acc {
                return category;
            }
        }
        // u landed in the rounding slack above the last band
        OperationCategory::ALL
            .into_iter()
            .rev()
            .find(|c| self.weight(*c) > 0.0)
            .unwrap_or(OperationCategory::Analytics)
    }
}

pub fn validate_mix(mix: &WorkloadMix) -> Result<(), WorkloadError> {
    let ws = [mix.transaction_weight, mix.inventory_weight, mix.analytics_weight];
    let fail = |reason: String| {
        Err(WorkloadError::MixInvalid {
            transaction: ws[0],
            inventory: ws[1],
            analytics: ws[2],
            reason,
        })
    };
    if let Some(bad) = ws.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return fail(format!("weight {bad} outside [0,1]"));
    }
    let sum: f64 = ws.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return fail(format!("weights sum to {sum}"));
    }
    Ok(())
}

/// Per-user generator: stream `user_index` of the run seed.
pub fn user_rng(seed: u64, user_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user_index);
    rng
}

/// Draws a category by cumulative walk, then an operation within it by
/// `intra_category_weight`. Always consumes exactly two uniforms.
pub fn sample_operation<'a, R: Rng + ?Sized>(
    catalog: &'a Catalog,
    mix: &WorkloadMix,
    rng: &mut R,
) -> Result<&'a OperationSpec, WorkloadError> {
    let u_cat: f64 = rng.random();
    let u_op: f64 = rng.random();
    let category = mix.category_for_draw(u_cat);
    pick_in_category(catalog, category, u_op)
}

fn pick_in_category(
    catalog: &Catalog,
    category: OperationCategory,
    u: f64,
) -> Result<&OperationSpec, WorkloadError> {
    let total: f64 = catalog.in_category(category).map(|s| s.intra_category_weight).sum();
    let mut last = None;
    let mut acc = 0.0;
    for spec in catalog.in_category(category) {
        acc += spec.intra_category_weight / total;
        last = Some(spec);
        if u < acc {
            return Ok(spec);
        }
    }
    last.ok_or(WorkloadError::EmptyCategory(category))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficShape {
    pub hourly_multipliers: Vec<f64>,
    pub weekday_multipliers: Vec<f64>,
    #[serde(default = "default_weight")]
    pub seasonal_multiplier: f64,
}

impl Default for TrafficShape {
    fn default() -> Self {
        TrafficShape::identity()
    }
}

impl TrafficShape {
    pub fn identity() -> Self {
        TrafficShape {
            hourly_multipliers: vec![1.0; 24],
            weekday_multipliers: vec![1.0; 7],
            seasonal_multiplier: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.hourly_multipliers.len() != 24 {
            return Err(WorkloadError::ShapeInvalid("hourly_multipliers needs 24 values".into()));
        }
        if self.weekday_multipliers.len() != 7 {
            return Err(WorkloadError::ShapeInvalid("weekday_multipliers needs 7 values".into()));
        }
        let all = self
            .hourly_multipliers
            .iter()
            .chain(&self.weekday_multipliers)
            .chain(std::iter::once(&self.seasonal_multiplier));
        for m in all {
            if !(m.is_finite() && *m > 0.0) {
                return Err(WorkloadError::ShapeInvalid(format!("multiplier {m} is not positive")));
            }
        }
        Ok(())
    }
}

/// Intensity multiplier at `wall_anchor + timestamp_s` (UTC). Weekday index 0 is Monday.
pub fn shape_multiplier(shape: &TrafficShape, timestamp_s: f64, wall_anchor: DateTime<Utc>) -> f64 {
    let at = wall_anchor + ChronoDuration::microseconds((timestamp_s * 1e6).round() as i64);
    let hour = at.hour() as usize;
    let weekday = at.weekday().num_days_from_monday() as usize;
    shape.hourly_multipliers[hour] * shape.weekday_multipliers[weekday] * shape.seasonal_multiplier
}

/// Identifiers a virtual user carries between requests.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Session {
    pub product_count: u64,
    pub open_sale: Option<u64>,
    pub last_sale: Option<u64>,
    /// Sale-creation requests issued so far.
    pub sales_requested: u64,
}

impl Session {
    pub fn new(product_count: u64) -> Self {
        Session {
            product_count,
            ..Default::default()
        }
    }

    /// Updates identifiers from a response.
    pub fn observe(&mut self, request: &RequestDescriptor, status: Option<u16>, body: &[u8]) {
        let ok = matches!(status, Some(200..=299));
        match request.effect {
            SessionEffect::OpensSale if ok => {
                let id = serde_json::from_slice::<Value>(body)
                    .ok()
                    .and_then(|v| v.get("sale_id").and_then(Value::as_u64));
                if let Some(id) = id {
                    self.open_sale = Some(id);
                    self.last_sale = Some(id);
                }
            }
            SessionEffect::ClosesSale if ok => {
                self.open_sale = None;
            }
            _ => {}
        }
        if request.uses_open_sale && matches!(status, Some(404) | Some(409)) {
            // sale vanished (state reset) or was already closed
            let code = serde_json::from_slice::<Value>(body)
                .ok()
                .and_then(|v| v.get("code").and_then(Value::as_str).map(str::to_string));
            if matches!(code.as_deref(), Some("sale_not_found") | Some("sale_already_paid")) {
                self.open_sale = None;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionEffect {
    None,
    OpensSale,
    ClosesSale,
}

/// A fully resolved request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestDescriptor {
    pub operation_name: String,
    pub category: OperationCategory,
    pub method: HttpMethod,
    pub path: String,
    pub body: Vec<u8>,
    /// Name of the sampled operation when sale creation was issued in its place.
    pub substituted_for: Option<String>,
    pub effect: SessionEffect,
    uses_open_sale: bool,
}

/// Resolves `spec` against the session. Operations that need a sale the
/// session does not have are replaced by the catalog's sale-creation request.
pub fn build_request<R: Rng + ?Sized>(
    catalog: &Catalog,
    spec: &OperationSpec,
    session: &mut Session,
    rng: &mut R,
) -> Result<RequestDescriptor, WorkloadError> {
    let placeholders = spec.placeholders();
    let needs_open = placeholders.iter().any(|p| p == "sale_id");
    let needs_any = placeholders.iter().any(|p| p == "last_sale_id");
    let missing = (needs_open && session.open_sale.is_none()) || (needs_any && session.last_sale.is_none());
    if missing {
        let creation = catalog.sale_creation().ok_or_else(|| WorkloadError::UnresolvablePlaceholder {
            operation: spec.name.clone(),
            placeholder: if needs_open { "sale_id" } else { "last_sale_id" }.to_string(),
        })?;
        let mut req = resolve(creation, session, rng)?;
        req.substituted_for = Some(spec.name.clone());
        session.sales_requested += 1;
        return Ok(req);
    }
    let req = resolve(spec, session, rng)?;
    if spec.creates_sale() {
        session.sales_requested += 1;
    }
    Ok(req)
}

fn resolve<R: Rng + ?Sized>(
    spec: &OperationSpec,
    session: &Session,
    rng: &mut R,
) -> Result<RequestDescriptor, WorkloadError> {
    let mut values: Vec<(String, Value)> = Vec::new();
    for name in spec.placeholders() {
        let unresolvable = || WorkloadError::UnresolvablePlaceholder {
            operation: spec.name.clone(),
            placeholder: name.clone(),
        };
        let v = match name.as_str() {
            "sale_id" => Value::from(session.open_sale.ok_or_else(unresolvable)?),
            "last_sale_id" => Value::from(session.last_sale.ok_or_else(unresolvable)?),
            "product_id" => {
                if session.product_count == 0 {
                    return Err(unresolvable());
                }
                Value::from(rng.random_range(1..=session.product_count))
            }
            "qty" => Value::from(rng.random_range(1..=3u64)),
            "discount_usd" => {
                let cents: i64 = rng.random_range(10..=100);
                Value::from(Usd::from_cents(cents).to_string())
            }
            "stock_delta" => Value::from(if rng.random::<bool>() { 1 } else { -1 }),
            "from" => Value::from(0),
            "to" => Value::from(SUMMARY_WINDOW_END),
            _ => return Err(unresolvable()),
        };
        values.push((name, v));
    }
    let lookup = |name: &str| values.iter().find(|(n, _)| n == name).map(|(_, v)| v);

    let mut path = spec.path_template.clone();
    for (name, v) in &values {
        let text = match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        path = path.replace(&format!("{{{name}}}"), &text);
    }

    let body = match &spec.body {
        None if spec.payload_bytes == 0 => Vec::new(),
        template => {
            let mut obj = Map::new();
            for (k, v) in template.iter().flatten() {
                let resolved = match v {
                    Value::String(s) if s.starts_with('{') && s.ends_with('}') => lookup(&s[1..s.len() - 1])
                        .cloned()
                        .unwrap_or_else(|| v.clone()),
                    other => other.clone(),
                };
                obj.insert(k.clone(), resolved);
            }
            pad_json(&Value::Object(obj), spec.payload_bytes as usize)
        }
    };

    Ok(RequestDescriptor {
        operation_name: spec.name.clone(),
        category: spec.category,
        method: spec.method,
        path,
        body,
        substituted_for: None,
        effect: if spec.creates_sale() {
            SessionEffect::OpensSale
        } else if spec.closes_sale() {
            SessionEffect::ClosesSale
        } else {
            SessionEffect::None
        },
        uses_open_sale: spec.path_template.contains("{sale_id}"),
    })
}

/// Serializes `value` (an object) and adds a `"pad"` string so the encoding is
/// exactly `target` bytes. Objects whose minimal encoding is already larger are
/// returned unpadded.
pub fn pad_json(value: &Value, target: usize) -> Vec<u8> {
    let base = serde_json::to_string(value).expect("json values serialize");
    let empty = base == "{}";
    let overhead = if empty { "{\"pad\":\"\"}".len() } else { base.len() + ",\"pad\":\"\"".len() };
    if target < overhead {
        return base.into_bytes();
    }
    let pad = "x".repeat(target - overhead);
    let out = if empty {
        format!("{{\"pad\":\"{pad}\"}}")
    } else {
        format!("{},\"pad\":\"{pad}\"}}", &base[..base.len() - 1])
    };
    debug_assert_eq!(out.len(), target);
    out.into_bytes()
}

/// Exponential pause with the given mean, divided by the shape multiplier.
pub fn think_time_ms<R: Rng + ?Sized>(mean_ms: f64, multiplier: f64, rng: &mut R) -> f64 {
    if mean_ms <= 0.0 {
        return 0.0;
    }
    let u: f64 = rng.random();
    -(1.0 - u).ln() * mean_ms / multiplier
}
