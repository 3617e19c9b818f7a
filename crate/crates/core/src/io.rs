//! Text formats: RTTM annotations, speech-activity regions and embedding tables.
//!
//! Readers reject malformed input with the offending line number. Writers are
//! deterministic, so equal data always produces byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::plda::PldaParams;

#[derive(Debug, Clone, PartialEq)]
pub struct RttmRecord {
    pub recording_id: String,
    pub onset: f64,
    pub duration: f64,
    pub speaker: String,
}

impl RttmRecord {
    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }
}

/// A speech region `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SadRegion {
    pub start: f64,
    pub end: f64,
}

impl SadRegion {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Time-ordered vectors; row `i` sits at `start + i * step` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub step: f64,
    pub start: f64,
    pub rows: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn time_of(&self, row: usize) -> f64 {
        self.start + row as f64 * self.step
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::parse(line, format!("invalid {what} {field:?}"))),
    }
}

pub fn parse_rttm(text: &str) -> Result<Vec<RttmRecord>> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 10 {
            return Err(Error::parse(
                line,
                format!("expected 10 fields, found {}", fields.len()),
            ));
        }
        if fields[0] != "SPEAKER" {
            return Err(Error::parse(line, format!("unsupported record type {:?}", fields[0])));
        }
        let onset = parse_f64(fields[3], line, "onset")?;
        let duration = parse_f64(fields[4], line, "duration")?;
        if onset < 0.0 {
            return Err(Error::parse(line, format!("negative onset {onset}")));
        }
        if duration < 0.0 {
            return Err(Error::NegativeDuration { line, duration });
        }
        if duration == 0.0 {
            return Err(Error::parse(line, "zero duration"));
        }
        records.push(RttmRecord {
            recording_id: fields[1].to_string(),
            onset,
            duration,
            speaker: fields[7].to_string(),
        });
    }
    Ok(records)
}

pub fn format_rttm(records: &[RttmRecord]) -> String {
    let mut out = String::new();
    for r in records {
        writeln!(
            out,
            "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
            r.recording_id, r.onset, r.duration, r.speaker
        )
        .unwrap();
    }
    out
}

pub fn read_rttm(path: impl AsRef<Path>) -> Result<Vec<RttmRecord>> {
    let path = path.as_ref();
    parse_rttm(&read_to_string(path)?).map_err(|e| e.with_path(path))
}

pub fn write_rttm(path: impl AsRef<Path>, records: &[RttmRecord]) -> Result<()> {
    write_string(path.as_ref(), &format_rttm(records))
}

/// Parses `<rec> <start> <end>` lines into sorted regions per recording.
/// Touching regions are merged; overlapping ones are rejected.
pub fn parse_sad(text: &str) -> Result<BTreeMap<String, Vec<SadRegion>>> {
    let mut by_rec: BTreeMap<String, Vec<(SadRegion, usize)>> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 3 {
            return Err(Error::parse(
                line,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        let start = parse_f64(fields[1], line, "start")?;
        let end = parse_f64(fields[2], line, "end")?;
        if start < 0.0 {
            return Err(Error::parse(line, format!("negative start {start}")));
        }
        if end <= start {
            return Err(Error::InvertedInterval { line, start, end });
        }
        by_rec
            .entry(fields[0].to_string())
            .or_default()
            .push((SadRegion { start, end }, line));
    }

    let mut out = BTreeMap::new();
    for (rec, mut regions) in by_rec {
        regions.sort_by(|a, b| a.0.start.total_cmp(&b.0.start));
        let mut merged: Vec<SadRegion> = Vec::with_capacity(regions.len());
        for (region, line) in regions {
            match merged.last_mut() {
                Some(last) if region.start < last.end => {
                    return Err(Error::parse(
                        line,
                        format!(
                            "region [{}, {}) overlaps [{}, {})",
                            region.start, region.end, last.start, last.end
                        ),
                    ));
                }
                Some(last) if region.start == last.end => last.end = region.end,
                _ => merged.push(region),
            }
        }
        out.insert(rec, merged);
    }
    Ok(out)
}

pub fn read_sad(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<SadRegion>>> {
    let path = path.as_ref();
    parse_sad(&read_to_string(path)?).map_err(|e| e.with_path(path))
}

pub fn format_sad(recording_id: &str, regions: &[SadRegion]) -> String {
    let mut out = String::new();
    for r in regions {
        writeln!(out, "{recording_id} {:.3} {:.3}", r.start, r.end).unwrap();
    }
    out
}

pub fn write_sad(path: impl AsRef<Path>, recording_id: &str, regions: &[SadRegion]) -> Result<()> {
    write_string(path.as_ref(), &format_sad(recording_id, regions))
}

pub fn parse_embedding_table(text: &str) -> Result<EmbeddingTable> {
    let mut lines = text.lines().enumerate();
    let (header_idx, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| Error::parse(1, "missing header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let header_line = header_idx + 1;
    if fields.len() != 6 || fields[0] != "#DIM" || fields[2] != "STEP" || fields[4] != "START" {
        return Err(Error::parse(
            header_line,
            format!("expected header `#DIM <D> STEP <s> START <t>`, found {header:?}"),
        ));
    }
    let dim: usize = fields[1]
        .parse()
        .ok()
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::parse(header_line, format!("invalid dimension {:?}", fields[1])))?;
    let step = parse_f64(fields[3], header_line, "step")?;
    if step <= 0.0 {
        return Err(Error::parse(header_line, format!("step must be positive, got {step}")));
    }
    let start = parse_f64(fields[5], header_line, "start")?;

    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let values: Vec<&str> = raw.split_whitespace().collect();
        if values.is_empty() {
            continue;
        }
        if values.len() != dim {
            return Err(Error::DimMismatch {
                line,
                expected: dim,
                actual: values.len(),
            });
        }
        rows.push(
            values
                .iter()
                .map(|v| parse_f64(v, line, "value"))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(EmbeddingTable {
        dim,
        step,
        start,
        rows,
    })
}

/// Values are written with 9 significant digits.
pub fn format_embedding_table(table: &EmbeddingTable) -> String {
    let mut out = String::new();
    writeln!(out, "#DIM {} STEP {} START {}", table.dim, table.step, table.start).unwrap();
    for row in &table.rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            write!(out, "{v:.8e}").unwrap();
            first = false;
        }
        out.push('\n');
    }
    out
}

pub fn read_embedding_table(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    parse_embedding_table(&read_to_string(path)?).map_err(|e| e.with_path(path))
}

pub fn write_embedding_table(path: impl AsRef<Path>, table: &EmbeddingTable) -> Result<()> {
    if let Some(row) = table.rows.iter().find(|r| r.len() != table.dim) {
        return Err(Error::DimensionMismatch {
            expected: table.dim,
            actual: row.len(),
        });
    }
    write_string(path.as_ref(), &format_embedding_table(table))
}

/// PLDA covariances: a line with `D`, then `D` rows of the within-class
/// covariance and `D` rows of the across-class covariance.
pub fn parse_plda(text: &str) -> Result<PldaParams> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (line, first) = lines.next().ok_or_else(|| Error::parse(1, "missing dimension line"))?;
    let dim: usize = first
        .trim()
        .parse()
        .ok()
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::parse(line, format!("invalid dimension {first:?}")))?;
    let eof_line = text.lines().count() + 1;
    let mut read_matrix = |name: &str| -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(dim, dim);
        for row in 0..dim {
            let (line, text) = lines
                .next()
                .ok_or_else(|| Error::parse(eof_line, format!("{name} has fewer than {dim} rows")))?;
            let values: Vec<&str> = text.split_whitespace().collect();
            if values.len() != dim {
                return Err(Error::DimMismatch {
                    line,
                    expected: dim,
                    actual: values.len(),
                });
            }
            for (col, v) in values.iter().enumerate() {
                m[(row, col)] = parse_f64(v, line, "matrix entry")?;
            }
        }
        Ok(m)
    };
    let sigma_wc = read_matrix("sigma_wc")?;
    let sigma_ac = read_matrix("sigma_ac")?;
    if let Some((line, _)) = lines.next() {
        return Err(Error::parse(line, "trailing data after sigma_ac"));
    }
    PldaParams::new(sigma_wc, sigma_ac)
}

pub fn format_plda(params: &PldaParams) -> String {
    let mut out = format!("{}\n", params.dim());
    for m in [&params.sigma_wc, &params.sigma_ac] {
        for row in m.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn read_plda(path: impl AsRef<Path>) -> Result<PldaParams> {
    let path = path.as_ref();
    parse_plda(&read_to_string(path)?).map_err(|e| e.with_path(path))
}

pub fn write_plda(path: impl AsRef<Path>, params: &PldaParams) -> Result<()> {
    write_string(path.as_ref(), &format_plda(params))
}
