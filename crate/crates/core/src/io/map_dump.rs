//! Semantic map dumps: a header, then one record per superpoint in id order.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::json::write_line;
use super::{parse_header, parse_record, FormatError, LineReader};
use crate::category::CategoryId;
use crate::geometry::Vec3;
use crate::semantic_map::{MapSnapshot, SuperPoint};

pub const MAP_FORMAT: &str = "vidar-map";
pub const MAP_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapHeader {
    format: String,
    version: u32,
    superpoints: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuperPointRecord {
    id: u64,
    loc: [f64; 3],
    /// `[label, score]` pairs, ascending label.
    scores: Vec<(CategoryId, f64)>,
    views: Vec<[f64; 3]>,
    scales: Vec<i32>,
}

pub fn write_map_dump<W: Write>(out: &mut W, snapshot: &MapSnapshot) -> std::io::Result<()> {
    let header = MapHeader { format: MAP_FORMAT.to_string(), version: MAP_VERSION, superpoints: snapshot.superpoints.len() };
    write_line(out, &header)?;
    for sp in &snapshot.superpoints {
        let rec = SuperPointRecord {
            id: sp.id,
            loc: sp.loc.into(),
            scores: sp.scores.iter().map(|(&l, &s)| (l, s)).collect(),
            views: sp.views.iter().map(|v| (*v).into()).collect(),
            scales: sp.scales.clone(),
        };
        write_line(out, &rec)?;
    }
    out.flush()
}

pub fn read_map_dump<R: BufRead>(inner: R) -> Result<MapSnapshot, FormatError> {
    let mut lines = LineReader::new(inner);
    let Some(line) = lines.next_line()? else {
        return Err(FormatError::Header { line: 0, message: "empty map file".to_string() });
    };
    let number = line.number;
    let header: MapHeader = parse_header(&line, MAP_FORMAT, MAP_VERSION)?;
    let mut superpoints = Vec::with_capacity(header.superpoints);
    let mut last: Option<u64> = None;
    while let Some(line) = lines.next_line()? {
        let number = line.number;
        let rec: SuperPointRecord = parse_record(&line)?;
        let invalid = |message: &str| FormatError::Parse { line: number, message: format!("superpoint {}: {message}", rec.id) };
        if last.is_some_and(|l| rec.id <= l) {
            return Err(invalid("ids must increase"));
        }
        let mut scores = BTreeMap::new();
        for &(label, score) in &rec.scores {
            if scores.insert(label, score).is_some() {
                return Err(invalid("duplicate score label"));
            }
        }
        last = Some(rec.id);
        superpoints.push(SuperPoint {
            id: rec.id,
            loc: Vec3::from(rec.loc),
            scores,
            views: rec.views.iter().map(|&v| Vec3::from(v)).collect(),
            scales: rec.scales,
        });
    }
    if superpoints.len() != header.superpoints {
        return Err(FormatError::Header {
            line: number,
            message: format!("header announces {} superpoints, file has {}", header.superpoints, superpoints.len()),
        });
    }
    Ok(MapSnapshot { superpoints })
}
