//! Metrics reports: one record per ablation row.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::json::write_line;
use super::{parse_record, FormatError, LineReader};
use crate::evalkit::{MetricsReport, ReportRow};

pub const METRICS_FORMAT: &str = "vidar-metrics";

/// A metrics row; `null` marks an empty size bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    pub format: String,
    pub row: String,
    pub frames: usize,
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_s: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
    pub ar10: Option<f64>,
    pub ar_s: Option<f64>,
    pub ar_m: Option<f64>,
    pub ar_l: Option<f64>,
}

impl MetricsRecord {
    pub fn new(row: &ReportRow, frames: usize) -> Self {
        let m = &row.metrics;
        Self {
            format: METRICS_FORMAT.to_string(),
            row: row.label.clone(),
            frames,
            ap: m.ap,
            ap50: m.ap50,
            ap75: m.ap75,
            ap_s: m.ap_s,
            ap_m: m.ap_m,
            ap_l: m.ap_l,
            ar10: m.ar10,
            ar_s: m.ar_s,
            ar_m: m.ar_m,
            ar_l: m.ar_l,
        }
    }

    pub fn report(&self) -> ReportRow {
        ReportRow {
            label: self.row.clone(),
            metrics: MetricsReport {
                ap: self.ap,
                ap50: self.ap50,
                ap75: self.ap75,
                ap_s: self.ap_s,
                ap_m: self.ap_m,
                ap_l: self.ap_l,
                ar10: self.ar10,
                ar_s: self.ar_s,
                ar_m: self.ar_m,
                ar_l: self.ar_l,
            },
        }
    }
}

pub fn write_metrics<W: Write>(out: &mut W, records: &[MetricsRecord]) -> std::io::Result<()> {
    for r in records {
        write_line(out, r)?;
    }
    out.flush()
}

pub fn read_metrics<R: BufRead>(inner: R) -> Result<Vec<MetricsRecord>, FormatError> {
    let mut lines = LineReader::new(inner);
    let mut out = Vec::new();
    while let Some(line) = lines.next_line()? {
        let number = line.number;
        let rec: MetricsRecord = parse_record(&line)?;
        if rec.format != METRICS_FORMAT {
            return Err(FormatError::Header { line: number, message: format!("unexpected format '{}'", rec.format) });
        }
        out.push(rec);
    }
    Ok(out)
}
