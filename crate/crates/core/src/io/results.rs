//! Pipeline results: a header with the configuration, then one record per frame.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::json::write_line;
use super::{parse_header, parse_record, FormatError, LineReader};
use crate::category::CategoryId;
use crate::geometry::BBox;
use crate::pipeline::{DetectionDiagnostics, FrameResult, PipelineConfig, ScoredDetection};

pub const RESULTS_FORMAT: &str = "vidar-results";
pub const RESULTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsHeader {
    pub format: String,
    pub version: u32,
    /// Ablation row label of `config`.
    pub row: String,
    pub config: PipelineConfig,
    /// Hex SHA-256 of the session file the results were computed from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_digest: Option<String>,
}

impl ResultsHeader {
    pub fn new(config: &PipelineConfig) -> Self {
        Self {
            format: RESULTS_FORMAT.to_string(),
            version: RESULTS_VERSION,
            row: config.row_label(),
            config: config.clone(),
            session_digest: None,
        }
    }

    pub fn with_session_digest(mut self, digest: String) -> Self {
        self.session_digest = Some(digest);
        self
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputRecord {
    label: CategoryId,
    p: f64,
    bbox: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnosticsRecord {
    p_l: f64,
    p_scale: f64,
    p_map: f64,
    d_w: Option<f64>,
    d_h: Option<f64>,
    d: Option<f64>,
    roll: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultRecord {
    frame_id: u64,
    outputs: Vec<OutputRecord>,
    diagnostics: Vec<DiagnosticsRecord>,
}

impl From<&FrameResult> for ResultRecord {
    fn from(r: &FrameResult) -> Self {
        Self {
            frame_id: r.frame_id,
            outputs: r
                .outputs
                .iter()
                .map(|o| OutputRecord { label: o.label, p: o.p, bbox: [o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h] })
                .collect(),
            diagnostics: r
                .diagnostics
                .iter()
                .map(|d| DiagnosticsRecord {
                    p_l: d.p_l,
                    p_scale: d.p_scale,
                    p_map: d.p_map,
                    d_w: d.d_w,
                    d_h: d.d_h,
                    d: d.d,
                    roll: d.roll,
                })
                .collect(),
        }
    }
}

impl From<ResultRecord> for FrameResult {
    fn from(r: ResultRecord) -> Self {
        Self {
            frame_id: r.frame_id,
            outputs: r
                .outputs
                .into_iter()
                .map(|o| ScoredDetection { label: o.label, p: o.p, bbox: BBox::new(o.bbox[0], o.bbox[1], o.bbox[2], o.bbox[3]) })
                .collect(),
            diagnostics: r
                .diagnostics
                .into_iter()
                .map(|d| DetectionDiagnostics {
                    p_l: d.p_l,
                    p_scale: d.p_scale,
                    p_map: d.p_map,
                    d_w: d.d_w,
                    d_h: d.d_h,
                    d: d.d,
                    roll: d.roll,
                })
                .collect(),
        }
    }
}

pub struct ResultsWriter<W: Write> {
    out: W,
}

impl<W: Write> ResultsWriter<W> {
    pub fn new(mut out: W, header: &ResultsHeader) -> std::io::Result<Self> {
        write_line(&mut out, header)?;
        Ok(Self { out })
    }

    pub fn write(&mut self, result: &FrameResult) -> std::io::Result<()> {
        write_line(&mut self.out, &ResultRecord::from(result))
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn read_results_from<R: BufRead>(inner: R) -> Result<(ResultsHeader, Vec<FrameResult>), FormatError> {
    let mut lines = LineReader::new(inner);
    let Some(line) = lines.next_line()? else {
        return Err(FormatError::Header { line: 0, message: "empty results file".to_string() });
    };
    let header: ResultsHeader = parse_header(&line, RESULTS_FORMAT, RESULTS_VERSION)?;
    let mut out = Vec::new();
    while let Some(line) = lines.next_line()? {
        let number = line.number;
        let rec: ResultRecord = parse_record(&line)?;
        if rec.diagnostics.len() != rec.outputs.len() {
            return Err(FormatError::Invalid {
                line: number,
                frame_id: rec.frame_id,
                message: "outputs and diagnostics differ in length".to_string(),
            });
        }
        out.push(FrameResult::from(rec));
    }
    Ok((header, out))
}

pub fn read_results(path: &Path) -> Result<(ResultsHeader, Vec<FrameResult>), FormatError> {
    let file = File::open(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    read_results_from(BufReader::new(file))
}
