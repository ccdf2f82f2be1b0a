//! CSV tables.

use crate::costs::COST_HEADER;
use crate::metrics::{fmt_2dp, AggregateSummary, Stat, SUMMARY_HEADER};

use super::{ReportInput, TableDoc};

fn stat_cells(s: Option<Stat>) -> [String; 2] {
    match s {
        Some(s) => [fmt_2dp(s.mean), fmt_2dp(s.stdev)],
        None => [String::new(), String::new()],
    }
}

fn missing_note(table: &str, metric: &str, a: &AggregateSummary) -> String {
    format!(
        "# {table}: {metric} for {} at {} is empty because no request succeeded in the steady-state window",
        a.target_label, a.scenario
    )
}

pub(super) fn response_times(input: &ReportInput) -> TableDoc {
    let mut header = vec!["scenario".to_string(), "target_label".into(), "runs".into()];
    for m in ["p50_ms", "p95_ms", "p99_ms", "tps", "error_rate_pct", "total_calls", "egress_bytes"] {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_stdev"));
    }
    let mut doc = TableDoc::new("response_times", header);
    for a in input.ordered_aggregates() {
        let mut row = vec![a.scenario.clone(), a.target_label.clone(), a.runs.len().to_string()];
        for (name, s) in [("p50_ms", a.p50_ms), ("p95_ms", a.p95_ms), ("p99_ms", a.p99_ms)] {
            if s.is_none() {
                doc.footnotes.push(missing_note("response_times", name, a));
            }
            row.extend(stat_cells(s));
        }
        for s in [a.tps, a.error_rate_pct, a.total_calls, a.egress_bytes] {
            row.extend(stat_cells(Some(s)));
        }
        doc.rows.push(row);
    }
    doc
}

/// Per-run summaries, one row per run.
pub(super) fn runs(input: &ReportInput) -> TableDoc {
    let mut doc = TableDoc::new("runs", SUMMARY_HEADER.iter().map(|s| s.to_string()).collect());
    for a in input.ordered_aggregates() {
        for r in &a.runs {
            doc.rows.push(r.csv_row());
        }
    }
    doc
}

/// Levels down, one value and one stdev column per target.
fn wide(input: &ReportInput, name: &str, metric: &str, pick: impl Fn(&AggregateSummary) -> Option<Stat>) -> TableDoc {
    let targets = input.targets();
    let mut header = vec!["scenario".to_string()];
    for t in &targets {
        header.push(t.clone());
        header.push(format!("{t}_stdev"));
    }
    let mut doc = TableDoc::new(name, header);
    for level in input.levels() {
        let mut row = vec![level.clone()];
        for t in &targets {
            match input.aggregate(&level, t) {
                Some(a) => {
                    let s = pick(a);
                    if s.is_none() {
                        doc.footnotes.push(missing_note(name, metric, a));
                    }
                    row.extend(stat_cells(s));
                }
                None => {
                    doc.footnotes
                        .push(format!("# {name}: {t} has no runs at {level}"));
                    row.extend([String::new(), String::new()]);
                }
            }
        }
        doc.rows.push(row);
    }
    doc
}

pub(super) fn p95_scaling(input: &ReportInput) -> TableDoc {
    wide(input, "p95_scaling", "p95_ms", |a| a.p95_ms)
}

pub(super) fn throughput(input: &ReportInput) -> TableDoc {
    wide(input, "throughput", "tps", |a| Some(a.tps))
}

pub(super) fn error_rates(input: &ReportInput) -> TableDoc {
    wide(input, "error_rates", "error_rate_pct", |a| Some(a.error_rate_pct))
}

pub(super) fn costs(input: &ReportInput) -> TableDoc {
    let mut doc = TableDoc::new("costs", COST_HEADER.iter().map(|s| s.to_string()).collect());
    for level in input.levels() {
        for t in input.targets() {
            if let Some(c) = input.cost(&level, &t) {
                doc.rows.push(c.estimate.csv_row(&t, &level));
            }
        }
    }
    if input.costs.iter().any(|c| c.estimate.platform_label != c.target_label) {
        let mut pairs: Vec<String> = input
            .costs
            .iter()
            .filter(|c| c.estimate.platform_label != c.target_label)
            .map(|c| format!("{}={}", c.target_label, c.estimate.platform_label))
            .collect();
        pairs.sort();
        pairs.dedup();
        doc.footnotes.push(format!("# costs: priced as {}", pairs.join(", ")));
    }
    for (t, p) in &input.unpriced {
        doc.footnotes.push(format!("# costs: {t} omitted, no pricing for platform {p}"));
    }
    doc
}
