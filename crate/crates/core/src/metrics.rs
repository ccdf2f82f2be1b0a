//! Latency percentiles, throughput, error rates and cross-run aggregation.

use serde::Serialize;
use thiserror::Error;

use crate::engine::{LoadScenario, Outcome, RequestResult, RunRecord};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty sample")]
    EmptySample,
    #[error("percentile {0} outside (0, 100]")]
    BadPercentile(f64),
    #[error("run {0} has no results in its steady-state window")]
    NoSteadyStateData(String),
    #[error("cannot aggregate runs of different configurations: {0}")]
    MixedConfigurations(String),
    #[error("nothing to aggregate")]
    EmptyInput,
    #[error("relative difference against a zero baseline")]
    ZeroBaseline,
}

/// Nearest-rank percentile: the element at 1-based index `ceil(p/100 * n)`
/// of the ascending sample.
pub fn percentile(latencies: &[f64], p: f64) -> Result<f64, MetricsError> {
    if latencies.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    let mut sorted = latencies.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

/// [`percentile`] over data the caller has already sorted ascending.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> Result<f64, MetricsError> {
    if sorted.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(MetricsError::BadPercentile(p));
    }
    Ok(sorted[nearest_rank(sorted.len(), p) - 1])
}

/// 1-based nearest rank. Integer arithmetic when `p` has at most six
/// fractional digits, so 95% of 100 is exactly 95.
fn nearest_rank(n: usize, p: f64) -> usize {
    let micro = (p * 1e6).round();
    let rank = if (p * 1e6 - micro).abs() < 1e-6 {
        let num = micro as u128 * n as u128;
        num.div_ceil(100_000_000) as usize
    } else {
        (p / 100.0 * n as f64).ceil() as usize
    };
    rank.clamp(1, n)
}

/// Successes per second of window.
pub fn throughput<'a, I>(results: I, window_s: f64) -> f64
where
    I: IntoIterator<Item = &'a RequestResult>,
{
    if window_s <= 0.0 {
        return 0.0;
    }
    let successes = results.into_iter().filter(|r| r.outcome == Outcome::Success).count();
    successes as f64 / window_s
}

/// Percentage of results that are not `Success`.
pub fn error_rate<'a, I>(results: I) -> Result<f64, MetricsError>
where
    I: IntoIterator<Item = &'a RequestResult>,
{
    let (mut total, mut failed) = (0u64, 0u64);
    for r in results {
        total += 1;
        if r.outcome.is_failure() {
            failed += 1;
        }
    }
    if total == 0 {
        return Err(MetricsError::EmptySample);
    }
    Ok(100.0 * failed as f64 / total as f64)
}

/// Metrics of one run over its steady-state window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub scenario: String,
    pub target_label: String,
    pub run_id: String,
    /// `None` when the window holds no successful request.
    pub p50_ms: Option<f64>,
    pub p95_ms: Option<f64>,
    pub p99_ms: Option<f64>,
    pub tps: f64,
    pub error_rate_pct: f64,
    pub total_calls: u64,
    pub egress_bytes: u64,
    pub included_window_s: f64,
}

pub fn summarize(run: &RunRecord) -> Result<MetricsSummary, MetricsError> {
    summarize_results(&run.run_id, &run.scenario, &run.target_label, &run.results)
}

/// [`summarize`] for results that are not wrapped in a [`RunRecord`].
pub fn summarize_results(
    run_id: &str,
    scenario: &LoadScenario,
    target_label: &str,
    results: &[RequestResult],
) -> Result<MetricsSummary, MetricsError> {
    let window: Vec<&RequestResult> = results.iter().filter(|r| r.in_steady_window(scenario)).collect();
    if window.is_empty() {
        return Err(MetricsError::NoSteadyStateData(run_id.to_string()));
    }
    let mut ok: Vec<f64> = window
        .iter()
        .filter(|r| r.outcome == Outcome::Success)
        .map(|r| r.latency_ms)
        .collect();
    ok.sort_by(f64::total_cmp);
    let pct = |p| percentile_sorted(&ok, p).ok();
    Ok(MetricsSummary {
        scenario: scenario.name.clone(),
        target_label: target_label.to_string(),
        run_id: run_id.to_string(),
        p50_ms: pct(50.0),
        p95_ms: pct(95.0),
        p99_ms: pct(99.0),
        tps: throughput(window.iter().copied(), scenario.steady_s),
        error_rate_pct: error_rate(window.iter().copied())?,
        total_calls: window.len() as u64,
        egress_bytes: window.iter().map(|r| r.bytes_in).sum(),
        included_window_s: scenario.steady_s,
    })
}

/// Mean and sample standard deviation of one metric across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub stdev: f64,
}

impl Stat {
    /// `n - 1` denominator; a single value has zero spread.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        if values.iter().all(|v| *v == values[0]) {
            // summing k copies and dividing by k can be off by an ulp
            return Some(Stat { mean: values[0], stdev: 0.0 });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stdev = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Stat { mean, stdev })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateSummary {
    pub scenario: String,
    pub target_label: String,
    pub runs: Vec<MetricsSummary>,
    /// Over the runs that have the percentile; `None` if none do.
    pub p50_ms: Option<Stat>,
    pub p95_ms: Option<Stat>,
    pub p99_ms: Option<Stat>,
    pub tps: Stat,
    pub error_rate_pct: Stat,
    pub total_calls: Stat,
    pub egress_bytes: Stat,
}

pub fn aggregate(summaries: &[MetricsSummary]) -> Result<AggregateSummary, MetricsError> {
    let first = summaries.first().ok_or(MetricsError::EmptyInput)?;
    if let Some(other) = summaries
        .iter()
        .find(|s| s.scenario != first.scenario || s.target_label != first.target_label)
    {
        return Err(MetricsError::MixedConfigurations(format!(
            "({}, {}) vs ({}, {})",
            first.scenario, first.target_label, other.scenario, other.target_label
        )));
    }
    let stat = |f: &dyn Fn(&MetricsSummary) -> f64| {
        let v: Vec<f64> = summaries.iter().map(f).collect();
        Stat::of(&v).expect("non-empty")
    };
    let opt = |f: &dyn Fn(&MetricsSummary) -> Option<f64>| {
        let v: Vec<f64> = summaries.iter().filter_map(f).collect();
        Stat::of(&v)
    };
    Ok(AggregateSummary {
        scenario: first.scenario.clone(),
        target_label: first.target_label.clone(),
        runs: summaries.to_vec(),
        p50_ms: opt(&|s| s.p50_ms),
        p95_ms: opt(&|s| s.p95_ms),
        p99_ms: opt(&|s| s.p99_ms),
        tps: stat(&|s| s.tps),
        error_rate_pct: stat(&|s| s.error_rate_pct),
        total_calls: stat(&|s| s.total_calls as f64),
        egress_bytes: stat(&|s| s.egress_bytes as f64),
    })
}

/// `100 * (baseline - comparison) / baseline`, unrounded.
pub fn relative_difference(baseline: f64, comparison: f64) -> Result<f64, MetricsError> {
    if baseline == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok(100.0 * (baseline - comparison) / baseline)
}

/// Decimal rendering with `digits` fractional digits. The value is first
/// printed with six guard digits and then rounded half away from zero, so
/// 22.95 becomes 23.0 even though its binary value is slightly below.
pub fn fmt_fixed(value: f64, digits: usize) -> String {
    if !value.is_finite() {
        return value.to_string();
    }
    let guard = 6;
    let s = format!("{:.*}", digits + guard, value.abs());
    let scaled: u128 = s.replace('.', "").parse().expect("formatted float");
    let unit = 10u128.pow(guard as u32);
    let q = (scaled + unit / 2) / unit;
    let p = 10u128.pow(digits as u32);
    let sign = if value < 0.0 && q != 0 { "-" } else { "" };
    if digits == 0 {
        format!("{sign}{q}")
    } else {
        format!("{sign}{}.{:0width$}", q / p, q % p, width = digits)
    }
}

/// [`fmt_fixed`] parsed back to a float.
pub fn round_to(value: f64, digits: usize) -> f64 {
    fmt_fixed(value, digits).parse().unwrap_or(value)
}

/// Reporting format for latencies, throughput and rates: two decimals.
pub fn fmt_2dp(value: f64) -> String {
    fmt_fixed(value, 2)
}

/// Reporting format for relative differences: one decimal.
pub fn fmt_1dp(value: f64) -> String {
    fmt_fixed(value, 1)
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "scenario",
    "target_label",
    "run_id",
    "p50_ms",
    "p95_ms",
    "p99_ms",
    "tps",
    "error_rate_pct",
    "total_calls",
    "egress_bytes",
];

impl MetricsSummary {
    /// Row for the per-run summary CSV. Absent percentiles are empty cells.
    pub fn csv_row(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt_2dp).unwrap_or_default();
        vec![
            self.scenario.clone(),
            self.target_label.clone(),
            self.run_id.clone(),
            opt(self.p50_ms),
            opt(self.p95_ms),
            opt(self.p99_ms),
            fmt_2dp(self.tps),
            fmt_2dp(self.error_rate_pct),
            self.total_calls.to_string(),
            self.egress_bytes.to_string(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::OperationCategory;

    fn result(offset_ms: f64, latency_ms: f64, outcome: Outcome) -> RequestResult {
        RequestResult {
            run_id: "r".into(),
            user_index: 0,
            operation_name: "price_check".into(),
            category: OperationCategory::Inventory,
            start_offset_ms: offset_ms,
            latency_ms,
            outcome,
            status_code: Some(200),
            bytes_out: 0,
            bytes_in: 10,
        }
    }

    fn scenario() -> LoadScenario {
        LoadScenario {
            ramp_up_s: 10.0,
            steady_s: 100.0,
            ..LoadScenario::canonical("Baseline", 10)
        }
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile(&[100.0], 50.0).unwrap(), 100.0);
        let seq: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&seq, 95.0).unwrap(), 95.0);
        assert_eq!(percentile(&seq, 50.0).unwrap(), 50.0);
        assert_eq!(percentile(&seq, 100.0).unwrap(), 100.0);
        assert_eq!(percentile(&seq, 0.5).unwrap(), 1.0);
        assert_eq!(percentile(&[], 50.0), Err(MetricsError::EmptySample));
        assert!(matches!(percentile(&seq, 0.0), Err(MetricsError::BadPercentile(_))));
    }

    #[test]
    fn throughput_examples() {
        let ok: Vec<_> = (0..300).map(|_| result(0.0, 1.0, Outcome::Success)).collect();
        assert_eq!(throughput(&ok, 60.0), 5.0);
        let ok: Vec<_> = (0..2286).map(|_| result(0.0, 1.0, Outcome::Success)).collect();
        assert_eq!(fmt_2dp(throughput(&ok, 300.0)), "7.62");
        assert_eq!(throughput(&[], 60.0), 0.0);
    }

    #[test]
    fn error_rate_examples() {
        let mut v: Vec<_> = (0..998).map(|_| result(0.0, 1.0, Outcome::Success)).collect();
        v.push(result(0.0, 1.0, Outcome::HttpError));
        v.push(result(0.0, 1.0, Outcome::Timeout));
        assert!((error_rate(&v).unwrap() - 0.2).abs() < 1e-12);
        let mut w: Vec<_> = (0..29_400).map(|_| result(0.0, 1.0, Outcome::Success)).collect();
        w.extend((0..600).map(|_| result(0.0, 1.0, Outcome::TransportError)));
        assert_eq!(error_rate(&w).unwrap(), 2.0);
        assert_eq!(error_rate(&[]), Err(MetricsError::EmptySample));
    }

    #[test]
    fn summarize_uses_steady_window_and_successes() {
        let mut results: Vec<_> = (1..=100).map(|i| result(20_000.0, i as f64, Outcome::Success)).collect();
        results.push(result(5_000.0, 1e6, Outcome::Success)); // ramp
        results.push(result(120_000.0, 1e6, Outcome::Success)); // after the window
        results.push(result(30_000.0, 10_000.0, Outcome::Timeout));
        let s = summarize_results("r", &scenario(), "gcp", &results).unwrap();
        assert_eq!((s.p50_ms, s.p95_ms, s.p99_ms), (Some(50.0), Some(95.0), Some(99.0)));
        assert_eq!(s.total_calls, 101);
        assert_eq!(s.tps, 1.0);
        assert_eq!(s.egress_bytes, 1010);
    }

    #[test]
    fn all_timeouts() {
        let results: Vec<_> = (0..5).map(|_| result(20_000.0, 10_000.0, Outcome::Timeout)).collect();
        let s = summarize_results("r", &scenario(), "gcp", &results).unwrap();
        assert_eq!(s.error_rate_pct, 100.0);
        assert_eq!(s.tps, 0.0);
        assert_eq!(s.p95_ms, None);
        assert_eq!(s.csv_row()[4], "");
    }

    #[test]
    fn no_steady_data() {
        let results = vec![result(1.0, 1.0, Outcome::Success)];
        assert!(matches!(
            summarize_results("r", &scenario(), "gcp", &results),
            Err(MetricsError::NoSteadyStateData(_))
        ));
    }

    fn summary(tps: f64) -> MetricsSummary {
        MetricsSummary {
            scenario: "Baseline".into(),
            target_label: "gcp".into(),
            run_id: "x".into(),
            p50_ms: Some(1.0),
            p95_ms: Some(2.0),
            p99_ms: None,
            tps,
            error_rate_pct: 0.0,
            total_calls: 10,
            egress_bytes: 100,
            included_window_s: 300.0,
        }
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate(&[summary(7.0), summary(8.0), summary(9.0)]).unwrap();
        assert_eq!(a.tps, Stat { mean: 8.0, stdev: 1.0 });
        assert_eq!(a.p99_ms, None);
        let one = aggregate(&[summary(7.0)]).unwrap();
        assert_eq!(one.tps, Stat { mean: 7.0, stdev: 0.0 });
        assert_eq!(aggregate(&[]), Err(MetricsError::EmptyInput));
        let mut other = summary(1.0);
        other.target_label = "azure".into();
        assert!(matches!(aggregate(&[summary(1.0), other]), Err(MetricsError::MixedConfigurations(_))));
    }

    #[test]
    fn relative_difference_examples() {
        assert_eq!(fmt_1dp(relative_difference(238.42, 183.69).unwrap()), "23.0");
        assert_eq!(fmt_1dp(relative_difference(5.0, 5.0).unwrap()), "0.0");
        assert_eq!(relative_difference(100.0, 50.0).unwrap(), 50.0);
        assert_eq!(relative_difference(0.0, 1.0), Err(MetricsError::ZeroBaseline));
    }

    #[test]
    fn rounding_is_half_away_from_zero_in_decimal() {
        assert_eq!(fmt_1dp(22.95), "23.0");
        assert_eq!(fmt_2dp(1.005), "1.01");
        assert_eq!(fmt_2dp(2.675), "2.68");
        assert_eq!(fmt_1dp(-0.04), "0.0");
    }
}
