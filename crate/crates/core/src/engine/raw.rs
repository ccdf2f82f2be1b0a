//! Raw per-request CSV files.

use std::io::{Read, Write};

use super::{Outcome, RequestResult, RunRecord};

pub const RAW_HEADER: [&str; 12] = [
    "run_id",
    "scenario",
    "target_label",
    "user_index",
    "operation",
    "category",
    "start_offset_ms",
    "latency_ms",
    "outcome",
    "status_code",
    "bytes_out",
    "bytes_in",
];

pub fn write_run<W: Write>(run: &RunRecord, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RAW_HEADER)?;
    for r in &run.results {
        w.write_record([
            r.run_id.as_str(),
            run.scenario.name.as_str(),
            run.target_label.as_str(),
            &r.user_index.to_string(),
            &r.operation_name,
            r.category.as_str(),
            &format!("{:.3}", r.start_offset_ms),
            &format!("{:.3}", r.latency_ms),
            r.outcome.as_str(),
            &r.status_code.map(|c| c.to_string()).unwrap_or_default(),
            &r.bytes_out.to_string(),
            &r.bytes_in.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One parsed raw row with the columns that are not part of [`RequestResult`].
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub scenario: String,
    pub target_label: String,
    pub result: RequestResult,
}

#[derive(Debug, Default)]
pub struct RawFile {
    pub rows: Vec<RawRow>,
    /// Rows that failed to parse, with their 1-based line numbers.
    pub skipped: Vec<(u64, String)>,
}

#[derive(Debug, thiserror::Error)]
pub enum RawError {
    #[error("not a raw results file: header {0:?}")]
    BadHeader(Vec<String>),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Reads a raw results CSV. Malformed rows are skipped and reported rather
/// than failing the whole file.
pub fn read_raw<R: Read>(input: R) -> Result<RawFile, RawError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RAW_HEADER {
        return Err(RawError::BadHeader(header));
    }
    let mut out = RawFile::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        match rec.map_err(|e| e.to_string()).and_then(|r| parse_row(&r)) {
            Ok(row) => out.rows.push(row),
            Err(e) => out.skipped.push((line, e)),
        }
    }
    Ok(out)
}

fn parse_row(r: &csv::StringRecord) -> Result<RawRow, String> {
    if r.len() != RAW_HEADER.len() {
        return Err(format!("expected {} fields, found {}", RAW_HEADER.len(), r.len()));
    }
    let num = |i: usize| -> Result<f64, String> {
        let v: f64 = r[i].parse().map_err(|_| format!("{}: {:?} is not a number", RAW_HEADER[i], &r[i]))?;
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(format!("{}: {v} out of range", RAW_HEADER[i]))
        }
    };
    let int = |i: usize| -> Result<u64, String> {
        r[i].parse().map_err(|_| format!("{}: {:?} is not an integer", RAW_HEADER[i], &r[i]))
    };
    let status_code = if r[9].is_empty() {
        None
    } else {
        Some(r[9].parse::<u16>().map_err(|_| format!("status_code: {:?}", &r[9]))?)
    };
    if r[0].is_empty() || r[1].is_empty() || r[2].is_empty() || r[4].is_empty() {
        return Err("empty identifier".into());
    }
    Ok(RawRow {
        scenario: r[1].to_string(),
        target_label: r[2].to_string(),
        result: RequestResult {
            run_id: r[0].to_string(),
            user_index: u32::try_from(int(3)?).map_err(|e| e.to_string())?,
            operation_name: r[4].to_string(),
            category: r[5].parse()?,
            start_offset_ms: num(6)?,
            latency_ms: num(7)?,
            outcome: r[8].parse::<Outcome>()?,
            status_code,
            bytes_out: int(10)?,
            bytes_in: int(11)?,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::LoadScenario;
    use crate::workload::OperationCategory;

    fn record() -> RunRecord {
        let r = RequestResult {
            run_id: "gcp-Baseline-r1".into(),
            user_index: 3,
            operation_name: "price_check".into(),
            category: OperationCategory::Inventory,
            start_offset_ms: 61_000.25,
            latency_ms: 153.5,
            outcome: Outcome::Success,
            status_code: Some(200),
            bytes_out: 0,
            bytes_in: 48,
        };
        let mut timeout = r.clone();
        timeout.outcome = Outcome::Timeout;
        timeout.status_code = None;
        RunRecord {
            run_id: "gcp-Baseline-r1".into(),
            scenario: LoadScenario::canonical("Baseline", 10),
            target_label: "gcp".into(),
            seed: 1,
            started_at: chrono::Utc::now(),
            ended_at: chrono::Utc::now(),
            results: vec![r, timeout],
            issued_requests: 2,
        }
    }

    #[test]
    fn round_trip() {
        let run = record();
        let mut buf = Vec::new();
        write_run(&run, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("run_id,scenario,target_label,user_index,operation,category,start_offset_ms,latency_ms,outcome,status_code,bytes_out,bytes_in\n"));
        let parsed = read_raw(&buf[..]).unwrap();
        assert!(parsed.skipped.is_empty());
        let back: Vec<_> = parsed.rows.into_iter().map(|r| r.result).collect();
        assert_eq!(back, run.results);
    }

    #[test]
    fn corrupt_rows_are_skipped() {
        let mut buf = Vec::new();
        write_run(&record(), &mut buf).unwrap();
        buf.extend_from_slice(b"gcp-Baseline-r1,Baseline,gcp,1,price_check,Inventory,abc,1,Success,200,0,1\n");
        buf.extend_from_slice(b"truncated,row\n");
        let parsed = read_raw(&buf[..]).unwrap();
        assert_eq!(parsed.rows.len(), 2);
        assert_eq!(parsed.skipped.len(), 2);
        assert_eq!(parsed.skipped[0].0, 4);
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(matches!(read_raw(&b"a,b\n1,2\n"[..]), Err(RawError::BadHeader(_))));
    }
}
