//! Tables, charts and a plain-text summary from run summaries and costs.
//!
//! Output layout under the report directory:
//!
//! ```text
//! tables/{response_times,p95_scaling,throughput,costs,error_rates,runs}.csv
//! figures/{p95_by_load,tps_by_load,cost_by_load,error_by_load}.svg
//! summary.txt
//! manifest.json
//! ```

pub mod svg;
mod tables;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::costs::{estimate_cost, CostError, CostEstimate, PricingCatalog, UsageRecord};
use crate::engine::LoadScenario;
use crate::metrics::{aggregate, fmt_1dp, fmt_2dp, relative_difference, AggregateSummary, MetricsError, MetricsSummary};
use svg::ChartData;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown figure kind {0:?} (expected p95, tps, cost or error)")]
    UnknownKind(String),
    #[error("nothing to report")]
    Empty,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub const TABLE_NAMES: [&str; 5] = ["response_times", "p95_scaling", "throughput", "costs", "error_rates"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    P95,
    Tps,
    Cost,
    Error,
}

impl FigureKind {
    pub const ALL: [FigureKind; 4] = [FigureKind::P95, FigureKind::Tps, FigureKind::Cost, FigureKind::Error];

    pub fn file_stem(self) -> &'static str {
        match self {
            FigureKind::P95 => "p95_by_load",
            FigureKind::Tps => "tps_by_load",
            FigureKind::Cost => "cost_by_load",
            FigureKind::Error => "error_by_load",
        }
    }

    /// The table the figure's numbers come from.
    pub fn table(self) -> &'static str {
        match self {
            FigureKind::P95 => "p95_scaling",
            FigureKind::Tps => "throughput",
            FigureKind::Cost => "costs",
            FigureKind::Error => "error_rates",
        }
    }

    fn title(self) -> (&'static str, &'static str) {
        match self {
            FigureKind::P95 => ("p95 response time by load level", "p95 latency (ms)"),
            FigureKind::Tps => ("Throughput by load level", "throughput (TPS)"),
            FigureKind::Cost => ("Estimated cost by load level", "cost (USD)"),
            FigureKind::Error => ("Error rate by load level", "error rate (%)"),
        }
    }
}

impl FromStr for FigureKind {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "p95" => Ok(FigureKind::P95),
            "tps" => Ok(FigureKind::Tps),
            "cost" => Ok(FigureKind::Cost),
            "error" => Ok(FigureKind::Error),
            other => Err(ReportError::UnknownKind(other.to_string())),
        }
    }
}

/// Cost of one target at one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelCost {
    pub scenario: String,
    pub target_label: String,
    pub estimate: CostEstimate,
}

/// Everything the report is rendered from.
#[derive(Debug, Clone, Default)]
pub struct ReportInput {
    pub aggregates: Vec<AggregateSummary>,
    pub costs: Vec<LevelCost>,
    /// (target, pricing key) pairs with no entry in the pricing catalog.
    pub unpriced: Vec<(String, String)>,
}

impl ReportInput {
    /// Groups per-run summaries by (scenario, target), aggregates them, and
    /// prices the mean steady-window usage of each group. `platform_of` maps
    /// a target label to its pricing key.
    pub fn from_summaries(
        summaries: &[MetricsSummary],
        pricing: &PricingCatalog,
        platform_of: impl Fn(&str) -> String,
    ) -> Result<Self, ReportError> {
        let mut groups: BTreeMap<(String, String), Vec<MetricsSummary>> = BTreeMap::new();
        for s in summaries {
            groups
                .entry((s.scenario.clone(), s.target_label.clone()))
                .or_default()
                .push(s.clone());
        }
        let mut input = ReportInput::default();
        for ((scenario, label), mut runs) in groups {
            runs.sort_by(|a, b| a.run_id.cmp(&b.run_id));
            let usage = UsageRecord {
                platform_label: platform_of(&label),
                api_calls: mean_half_up(runs.iter().map(|r| r.total_calls)),
                egress_bytes: mean_half_up(runs.iter().map(|r| r.egress_bytes)),
            };
            match estimate_cost(&usage, pricing) {
                Ok(estimate) => input.costs.push(LevelCost {
                    scenario: scenario.clone(),
                    target_label: label.clone(),
                    estimate,
                }),
                Err(CostError::UnknownPlatform(p)) => {
                    if !input.unpriced.contains(&(label.clone(), p.clone())) {
                        input.unpriced.push((label.clone(), p));
                    }
                }
                Err(e) => return Err(e.into()),
            }
            input.aggregates.push(aggregate(&runs)?);
        }
        Ok(input)
    }

    /// Levels in canonical order, custom levels after them by name.
    pub fn levels(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .aggregates
            .iter()
            .map(|a| a.scenario.as_str())
            .chain(self.costs.iter().map(|c| c.scenario.as_str()))
            .collect();
        let mut v: Vec<String> = set.into_iter().map(str::to_string).collect();
        v.sort_by(|a, b| LoadScenario::level_rank(a).cmp(&LoadScenario::level_rank(b)).then(a.cmp(b)));
        v
    }

    /// Target labels, sorted.
    pub fn targets(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .aggregates
            .iter()
            .map(|a| a.target_label.as_str())
            .chain(self.costs.iter().map(|c| c.target_label.as_str()))
            .collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn aggregate(&self, level: &str, target: &str) -> Option<&AggregateSummary> {
        self.aggregates.iter().find(|a| a.scenario == level && a.target_label == target)
    }

    pub fn cost(&self, level: &str, target: &str) -> Option<&LevelCost> {
        self.costs.iter().find(|c| c.scenario == level && c.target_label == target)
    }

    fn ordered_aggregates(&self) -> Vec<&AggregateSummary> {
        let mut v = Vec::new();
        for level in self.levels() {
            for t in self.targets() {
                if let Some(a) = self.aggregate(&level, &t) {
                    v.push(a);
                }
            }
        }
        v
    }
}

fn mean_half_up(values: impl Iterator<Item = u64>) -> u64 {
    let (sum, n) = values.fold((0u128, 0u128), |(s, n), v| (s + v as u128, n + 1));
    if n == 0 {
        0
    } else {
        ((2 * sum + n) / (2 * n)) as u64
    }
}

/// A CSV document: header, data rows, then `#` footnote rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TableDoc {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub footnotes: Vec<String>,
}

impl TableDoc {
    fn new(name: &str, header: Vec<String>) -> Self {
        TableDoc {
            name: name.to_string(),
            header,
            rows: Vec::new(),
            footnotes: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let mut notes = self.footnotes.clone();
        notes.dedup();
        for n in &notes {
            w.write_record([n]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    /// Cell at (`row_key` in column 0, `column`).
    pub fn cell(&self, row_key: &str, column: &str) -> Option<&str> {
        let ci = self.header.iter().position(|h| h == column)?;
        self.rows.iter().find(|r| r[0] == row_key).map(|r| r[ci].as_str())
    }
}

pub fn build_tables(input: &ReportInput) -> BTreeMap<String, TableDoc> {
    [
        tables::response_times(input),
        tables::p95_scaling(input),
        tables::throughput(input),
        tables::costs(input),
        tables::error_rates(input),
        tables::runs(input),
    ]
    .into_iter()
    .map(|t| (t.name.clone(), t))
    .collect()
}

/// Chart data for `kind`, read from the already-built tables so every bar
/// label is a table cell.
pub fn figure_data(kind: FigureKind, tables: &BTreeMap<String, TableDoc>) -> ChartData {
    let table = &tables[kind.table()];
    let (title, y_label) = kind.title();
    let mut chart = ChartData {
        title: title.into(),
        y_label: y_label.into(),
        levels: Vec::new(),
        series: Vec::new(),
        scientific: kind == FigureKind::Cost,
    };
    if kind == FigureKind::Cost {
        let mut levels: Vec<String> = Vec::new();
        let mut series: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for r in &table.rows {
            if !levels.contains(&r[1]) {
                levels.push(r[1].clone());
            }
            series.entry(r[0].clone()).or_default().insert(r[1].clone(), r[6].clone());
        }
        chart.series = series
            .into_iter()
            .map(|(name, by_level)| (name, levels.iter().map(|l| by_level.get(l).cloned()).collect()))
            .collect();
        chart.levels = levels;
    } else {
        chart.levels = table.rows.iter().map(|r| r[0].clone()).collect();
        for (ci, h) in table.header.iter().enumerate().skip(1).step_by(2) {
            let vals = table
                .rows
                .iter()
                .map(|r| Some(r[ci].clone()).filter(|c| !c.is_empty()))
                .collect();
            chart.series.push((h.clone(), vals));
        }
    }
    chart
}

pub fn emit_figure(kind: FigureKind, tables: &BTreeMap<String, TableDoc>) -> String {
    svg::render(&figure_data(kind, tables))
}

/// Per-level comparison of a lower-is-better metric across targets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelDelta {
    pub level: String,
    pub best: String,
    pub best_value: f64,
    pub worst: String,
    pub worst_value: f64,
    /// `relative_difference(worst, best)`: how much lower the best is, in
    /// percent of the worst.
    pub delta_pct: f64,
}

/// Compares targets per level; levels with fewer than two values are skipped.
pub fn level_deltas(levels: &[(String, Vec<(String, f64)>)]) -> Vec<LevelDelta> {
    let mut out = Vec::new();
    for (level, values) in levels {
        if values.len() < 2 {
            continue;
        }
        let mut v = values.clone();
        v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let (best, worst) = (&v[0], &v[v.len() - 1]);
        let Ok(delta_pct) = relative_difference(worst.1, best.1) else {
            continue;
        };
        out.push(LevelDelta {
            level: level.clone(),
            best: best.0.clone(),
            best_value: best.1,
            worst: worst.0.clone(),
            worst_value: worst.1,
            delta_pct,
        });
    }
    out
}

/// Mean delta over the levels won by the target that wins most levels
/// (ties broken by label).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MajorityMean {
    pub winner: String,
    pub levels: Vec<String>,
    pub mean_pct: f64,
}

pub fn majority_mean(deltas: &[LevelDelta]) -> Option<MajorityMean> {
    let mut wins: BTreeMap<&str, Vec<&LevelDelta>> = BTreeMap::new();
    for d in deltas {
        wins.entry(d.best.as_str()).or_default().push(d);
    }
    let (winner, won) = wins.into_iter().max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))?;
    Some(MajorityMean {
        winner: winner.to_string(),
        levels: won.iter().map(|d| d.level.clone()).collect(),
        mean_pct: won.iter().map(|d| d.delta_pct).sum::<f64>() / won.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Highlights {
    pub latency: Vec<LevelDelta>,
    pub cost: Vec<LevelDelta>,
    pub cost_mean: Option<MajorityMean>,
}

pub fn highlights(input: &ReportInput) -> Highlights {
    let levels = input.levels();
    let p95: Vec<(String, Vec<(String, f64)>)> = levels
        .iter()
        .map(|l| {
            let v = input
                .aggregates
                .iter()
                .filter(|a| &a.scenario == l)
                .filter_map(|a| a.p95_ms.map(|s| (a.target_label.clone(), s.mean)))
                .collect();
            (l.clone(), v)
        })
        .collect();
    let cost: Vec<(String, Vec<(String, f64)>)> = levels
        .iter()
        .map(|l| {
            let v = input
                .costs
                .iter()
                .filter(|c| &c.scenario == l)
                .map(|c| (c.target_label.clone(), c.estimate.total_usd.to_f64()))
                .collect();
            (l.clone(), v)
        })
        .collect();
    let cost = level_deltas(&cost);
    Highlights {
        latency: level_deltas(&p95),
        cost_mean: majority_mean(&cost),
        cost,
    }
}

pub fn summary_text(input: &ReportInput, h: &Highlights) -> String {
    let mut s = String::new();
    let targets = input.targets();
    let _ = writeln!(s, "targets: {}", targets.join(", "));
    let _ = writeln!(s, "levels: {}", input.levels().join(", "));
    if targets.len() < 2 {
        let _ = writeln!(s, "single target: comparisons omitted");
        return s;
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "per level (lower p95 is faster, lower total is cheaper):");
    for level in input.levels() {
        let fast = h.latency.iter().find(|d| d.level == level);
        let cheap = h.cost.iter().find(|d| d.level == level);
        let fast = fast.map_or("n/a".to_string(), |d| {
            format!("{} ({} ms vs {} ms)", d.best, fmt_2dp(d.best_value), fmt_2dp(d.worst_value))
        });
        let cheap = cheap.map_or("n/a".to_string(), |d| {
            let c = |t: &str| input.cost(&level, t).map(|c| c.estimate.total_usd.to_decimal_string(2));
            format!(
                "{} ({} vs {} USD)",
                d.best,
                c(&d.best).unwrap_or_default(),
                c(&d.worst).unwrap_or_default()
            )
        });
        let _ = writeln!(s, "  {level}: faster {fast}; cheaper {cheap}");
    }
    let _ = writeln!(s);
    match h.latency.iter().find(|d| d.level == "Baseline") {
        Some(d) => {
            let _ = writeln!(
                s,
                "baseline p95 delta: {} is {}% faster than {}",
                d.best,
                fmt_1dp(d.delta_pct),
                d.worst
            );
        }
        None => {
            let _ = writeln!(s, "baseline p95 delta: n/a");
        }
    }
    let _ = writeln!(s, "cost delta per level (saving of the cheaper target relative to the pricier one):");
    for d in &h.cost {
        let _ = writeln!(s, "  {}: {} {}% cheaper than {}", d.level, d.best, fmt_1dp(d.delta_pct), d.worst);
    }
    if let Some(m) = &h.cost_mean {
        let _ = writeln!(
            s,
            "mean cost delta over the {} level(s) where {} is cheaper ({}): {}%",
            m.levels.len(),
            m.winner,
            m.levels.join(", "),
            fmt_1dp(m.mean_pct)
        );
        let others: Vec<&str> = h
            .cost
            .iter()
            .filter(|d| d.best != m.winner)
            .map(|d| d.level.as_str())
            .collect();
        if !others.is_empty() {
            let _ = writeln!(
                s,
                "note: {} is not cheaper at {}; those levels are excluded from the mean, so it is not an all-level average",
                m.winner,
                others.join(", ")
            );
        }
    }
    s
}

/// Rendered report, ready to write.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub tables: BTreeMap<String, TableDoc>,
    pub figures: BTreeMap<String, String>,
    pub summary: String,
    pub highlights: Highlights,
}

pub fn build_bundle(input: &ReportInput) -> Result<ReportBundle, ReportError> {
    if input.aggregates.is_empty() {
        return Err(ReportError::Empty);
    }
    let tables = build_tables(input);
    let figures = FigureKind::ALL
        .iter()
        .map(|k| (k.file_stem().to_string(), emit_figure(*k, &tables)))
        .collect();
    let highlights = highlights(input);
    Ok(ReportBundle {
        summary: summary_text(input, &highlights),
        tables,
        figures,
        highlights,
    })
}

/// Extra facts recorded in the report manifest.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ManifestInfo {
    /// sha256 over the input files, in name order.
    pub input_digest: String,
    pub inputs: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
struct ManifestFile {
    path: String,
    bytes: usize,
    sha256: String,
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Writes the bundle and `manifest.json`; returns the written paths relative to `out_dir`.
pub fn write_bundle(bundle: &ReportBundle, out_dir: &Path, info: &ManifestInfo) -> Result<Vec<String>, ReportError> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for (name, t) in &bundle.tables {
        files.push((format!("tables/{name}.csv"), t.to_csv().into_bytes()));
    }
    for (name, svg) in &bundle.figures {
        files.push((format!("figures/{name}.svg"), svg.clone().into_bytes()));
    }
    files.push(("summary.txt".into(), bundle.summary.clone().into_bytes()));
    for dir in ["tables", "figures"] {
        let p = out_dir.join(dir);
        std::fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    let mut listed = Vec::new();
    for (rel, data) in &files {
        let p = out_dir.join(rel);
        std::fs::write(&p, data).map_err(io_err(&p))?;
        listed.push(ManifestFile {
            path: rel.clone(),
            bytes: data.len(),
            sha256: sha256_hex(data),
        });
    }
    let manifest = serde_json::json!({
        "tool": "posbench",
        "version": env!("CARGO_PKG_VERSION"),
        "input_digest": info.input_digest,
        "inputs": info.inputs,
        "warning_count": info.warnings.len(),
        "warnings": info.warnings,
        "files": listed,
    });
    let p = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("json value") + "\n";
    std::fs::write(&p, text).map_err(io_err(&p))?;
    let mut paths: Vec<String> = files.into_iter().map(|(p, _)| p).collect();
    paths.push("manifest.json".into());
    Ok(paths)
}
