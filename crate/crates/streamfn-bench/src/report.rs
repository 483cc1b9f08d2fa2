//! CSV output: one row per run in the main report, percentile summaries
//! in a latency sidecar next to it.

use std::fs::OpenOptions;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::metrics::percentile;
use crate::modes::BenchReport;

pub const REPORT_HEADER: &str = "mode,duration_s,t0_ns,t1_ns,t2_ns,theta,overhead_s,frames";
pub const LATENCY_HEADER: &str = "mode,duration_s,frames,p50_ms,p90_ms,p99_ms,max_ms";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

fn append_line(path: &Path, header: &str, row: &str) -> io::Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    if file.metadata()?.len() == 0 {
        writeln!(file, "{header}")?;
    }
    writeln!(file, "{row}")
}

/// Appends one run to the report, writing the header when the file is new.
pub fn append_report(path: &Path, report: &BenchReport) -> io::Result<()> {
    let row = format!(
        "{},{},{},{},{},{:.12},{:.9},{}",
        report.mode,
        report.workload.duration_s,
        report.t0_ns,
        report.t1_ns,
        report.t2_ns,
        report.theta,
        report.overhead_s,
        report.frames_sent
    );
    append_line(path, REPORT_HEADER, &row)
}

/// The sidecar path for a report path: `report.csv` -> `report.latencies.csv`.
pub fn latency_sidecar_path(report_path: &Path) -> PathBuf {
    let stem = report_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".to_string());
    report_path.with_file_name(format!("{stem}.latencies.csv"))
}

/// Appends this run's latency percentiles to the sidecar. Runs without
/// observable latencies are skipped.
pub fn append_latencies(report_path: &Path, report: &BenchReport) -> io::Result<Option<PathBuf>> {
    if report.latencies_ms.is_empty() {
        return Ok(None);
    }
    let p = |q: f64| percentile(&report.latencies_ms, q).expect("nonempty sample");
    let max = report
        .latencies_ms
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let path = latency_sidecar_path(report_path);
    let row = format!(
        "{},{},{},{:.3},{:.3},{:.3},{:.3}",
        report.mode,
        report.workload.duration_s,
        report.frames_sent,
        p(50.0),
        p(90.0),
        p(99.0),
        max
    );
    append_line(&path, LATENCY_HEADER, &row)?;
    Ok(Some(path))
}

/// One parsed report row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub mode: String,
    pub duration_s: f64,
    pub t0_ns: u64,
    pub t1_ns: u64,
    pub t2_ns: u64,
    pub theta: f64,
    pub overhead_s: f64,
    pub frames: u64,
}

/// Reads a report back, validating the header.
pub fn read_report(path: &Path) -> Result<Vec<ReportRow>, ReportError> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == REPORT_HEADER => {}
        Some((_, header)) => {
            return Err(ReportError::Parse {
                line: 1,
                reason: format!("unexpected header {header:?}"),
            })
        }
        None => return Ok(Vec::new()),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let parse = |reason: String| ReportError::Parse {
            line: idx + 1,
            reason,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(parse(format!("expected 8 fields, got {}", fields.len())));
        }
        rows.push(ReportRow {
            mode: fields[0].to_string(),
            duration_s: fields[1]
                .parse()
                .map_err(|e| parse(format!("duration_s: {e}")))?,
            t0_ns: fields[2].parse().map_err(|e| parse(format!("t0_ns: {e}")))?,
            t1_ns: fields[3].parse().map_err(|e| parse(format!("t1_ns: {e}")))?,
            t2_ns: fields[4].parse().map_err(|e| parse(format!("t2_ns: {e}")))?,
            theta: fields[5].parse().map_err(|e| parse(format!("theta: {e}")))?,
            overhead_s: fields[6]
                .parse()
                .map_err(|e| parse(format!("overhead_s: {e}")))?,
            frames: fields[7]
                .parse()
                .map_err(|e| parse(format!("frames: {e}")))?,
        });
    }
    Ok(rows)
}
