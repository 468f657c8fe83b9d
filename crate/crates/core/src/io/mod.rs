//! Line-delimited file formats and config loading.
//!
//! Every file is UTF-8 with one JSON object per line: a header record that
//! names the format and version, then data records. Floats are written with
//! 9 significant digits (see [`json`]). Byte-level layouts are documented in
//! `docs/FORMATS.md`.

pub mod json;
pub mod map_dump;
pub mod metrics;
pub mod results;
pub mod session;

use std::io::BufRead;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;

pub use map_dump::{read_map_dump, write_map_dump};
pub use metrics::{read_metrics, write_metrics, MetricsRecord};
pub use results::{read_results, ResultsHeader, ResultsWriter};
pub use session::{SessionFrame, SessionHeader, SessionReader, SessionWriter};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: truncated record at byte offset {offset}")]
    Truncated { line: u64, offset: u64 },
    #[error("line {line}: {message}")]
    Header { line: u64, message: String },
    #[error("line {line} (frame {frame_id}): {message}")]
    Invalid { line: u64, frame_id: u64, message: String },
    #[error("{path}: {message}")]
    Config { path: String, message: String },
}

/// Reads lines while tracking line numbers and byte offsets, reusing one
/// buffer so memory stays flat for arbitrarily long files.
#[derive(Debug)]
pub(crate) struct LineReader<R> {
    inner: R,
    buf: String,
    line: u64,
    offset: u64,
}

/// One physical line: number (1-based), byte offset of its first byte,
/// whether it ended with a newline.
pub(crate) struct Line<'a> {
    pub number: u64,
    pub offset: u64,
    pub text: &'a str,
    pub terminated: bool,
}

impl<R: BufRead> LineReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, buf: String::new(), line: 0, offset: 0 }
    }

    /// Next non-blank line, or `None` at end of input.
    pub fn next_line(&mut self) -> Result<Option<Line<'_>>, FormatError> {
        loop {
            self.buf.clear();
            let start = self.offset;
            let n = self.inner.read_line(&mut self.buf)?;
            if n == 0 {
                return Ok(None);
            }
            self.line += 1;
            self.offset += n as u64;
            if self.buf.trim().is_empty() {
                continue;
            }
            let terminated = self.buf.ends_with('\n');
            return Ok(Some(Line { number: self.line, offset: start, text: self.buf.trim_end(), terminated }));
        }
    }
}

/// Parses one JSON record. An unparsable line without a trailing newline is
/// reported as truncated.
pub(crate) fn parse_record<T: DeserializeOwned>(line: &Line<'_>) -> Result<T, FormatError> {
    serde_json::from_str(line.text).map_err(|e| {
        if !line.terminated && e.is_eof() {
            FormatError::Truncated { line: line.number, offset: line.offset }
        } else {
            FormatError::Parse { line: line.number, message: e.to_string() }
        }
    })
}

/// Checks a header's `format` tag and version.
pub(crate) fn check_header(line: u64, format: &str, version: u32, want_format: &str, want_version: u32) -> Result<(), FormatError> {
    if format != want_format {
        return Err(FormatError::Header { line, message: format!("expected format '{want_format}', found '{format}'") });
    }
    if version != want_version {
        return Err(FormatError::Header {
            line,
            message: format!("unsupported {format} version {version} (this build reads version {want_version})"),
        });
    }
    Ok(())
}

#[derive(Deserialize)]
struct FormatTag {
    format: Option<String>,
    version: Option<u32>,
}

/// Parses a header line after checking its `format` tag and version, so a file
/// of the wrong kind is reported as such rather than as a schema error.
pub(crate) fn parse_header<T: DeserializeOwned>(line: &Line<'_>, want_format: &str, want_version: u32) -> Result<T, FormatError> {
    let tag: FormatTag = parse_record(line)?;
    let Some(format) = tag.format else {
        return Err(FormatError::Header { line: line.number, message: format!("missing format tag; expected '{want_format}'") });
    };
    let Some(version) = tag.version else {
        return Err(FormatError::Header { line: line.number, message: format!("{format} header has no version") });
    };
    check_header(line.number, &format, version, want_format, want_version)?;
    parse_record(line)
}

/// Loads a TOML file into `T`.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FormatError::Config { path: path.display().to_string(), message: e.to_string() })?;
    parse_toml(&text).map_err(|message| FormatError::Config { path: path.display().to_string(), message })
}

pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}
