//! Run and trend CSV files, and the `key=value` summary block.

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::fmt_f64;
use crate::sim::RunRecord;
use crate::stats::SimulationSummary;

pub const RUNS_HEADER: &str = "run,service_time_ms,response_time_ms";
pub const TREND_HEADER: &str = "run,service_time_ms,response_time_ms,moving_avg_ms";
pub const DEFAULT_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("no runs")]
    EmptyInput,
    #[error("window must be at least 1")]
    InvalidWindow,
    #[error("line {line}: {message}")]
    MalformedCsv { line: usize, message: String },
}

impl ReportError {
    pub fn code(&self) -> &'static str {
        match self {
            ReportError::EmptyInput => "EmptyInput",
            ReportError::InvalidWindow => "InvalidWindow",
            ReportError::MalformedCsv { .. } => "MalformedCsv",
        }
    }
}

/// Per-run CSV; `run` is 1-based.
pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut out = String::with_capacity(32 * (records.len() + 1));
    out.push_str(RUNS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{}",
            r.index + 1,
            fmt_f64(r.service_time),
            fmt_f64(r.response_time)
        );
    }
    out
}

/// Reads a per-run CSV back. Step counts are not stored in the file and come
/// back as 0.
pub fn parse_runs_csv(text: &str) -> Result<Vec<RunRecord>, ReportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RUNS_HEADER => {}
        _ => {
            return Err(ReportError::MalformedCsv {
                line: 1,
                message: format!("expected header '{RUNS_HEADER}'"),
            })
        }
    }
    let mut records = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| ReportError::MalformedCsv {
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [run, service, response] = fields[..] else {
            return Err(bad(format!("expected 3 fields, found {}", fields.len())));
        };
        let run: usize = run
            .parse()
            .map_err(|_| bad(format!("bad run number '{run}'")))?;
        if run != records.len() + 1 {
            return Err(bad(format!("run {run} out of sequence")));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("bad number '{s}'")))
        };
        records.push(RunRecord {
            index: run - 1,
            service_time: num(service)?,
            response_time: num(response)?,
            steps: 0,
        });
    }
    Ok(records)
}

/// Per-run CSV plus a trailing moving average of the service time over the
/// last `min(window, run)` runs.
pub fn emit_trend_csv(records: &[RunRecord], window: usize) -> Result<String, ReportError> {
    if window == 0 {
        return Err(ReportError::InvalidWindow);
    }
    if records.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let mut out = String::with_capacity(48 * (records.len() + 1));
    out.push_str(TREND_HEADER);
    out.push('\n');
    for (i, r) in records.iter().enumerate() {
        let lo = (i + 1).saturating_sub(window);
        let tail = &records[lo..=i];
        let avg = tail.iter().map(|r| r.service_time).sum::<f64>() / tail.len() as f64;
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.index + 1,
            fmt_f64(r.service_time),
            fmt_f64(r.response_time),
            fmt_f64(avg)
        );
    }
    Ok(out)
}

/// Up to 6 significant digits, trailing zeros dropped.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-5..6).contains(&magnitude) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

pub fn summary_block(s: &SimulationSummary) -> String {
    let rows = [
        ("mean_ms", s.mean),
        ("std_ms", s.std),
        ("min_ms", s.min),
        ("max_ms", s.max),
        ("p50_ms", s.p50),
        ("p90_ms", s.p90),
        ("p95_ms", s.p95),
        ("p99_ms", s.p99),
        ("ci95_ms", s.ci95_halfwidth),
    ];
    let mut out = format!("count={}\n", s.count);
    for (k, v) in rows {
        let _ = writeln!(out, "{k}={}", fmt_sig6(v));
    }
    out
}
