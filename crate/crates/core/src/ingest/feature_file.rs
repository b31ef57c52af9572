//! Comma-delimited feature files.
//!
//! ```text
//! # layout: v1|m:l.x,m:l.y,n:head.energy
//! seq_id,frame,label,f0,f1,f2
//! s0,0,here,0.0,0.0,0.01
//! ```
//!
//! The layout comment is optional; without it columns are named `f0..fK`
//! and treated as manual.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::features::{FeatureLayout, FeatureSequence};

use super::IngestError;

const LAYOUT_PREFIX: &str = "# layout:";

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub seq_id: String,
    pub label: String,
    pub features: FeatureSequence,
}

pub fn load_feature_sequences(path: &Path) -> Result<Vec<LabeledSequence>, IngestError> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    read_feature_sequences(&text)
}

fn row_err(row: u64, message: impl Into<String>) -> IngestError {
    IngestError::FeatureRow {
        row,
        message: message.into(),
    }
}

pub fn read_feature_sequences(text: &str) -> Result<Vec<LabeledSequence>, IngestError> {
    let declared = text
        .lines()
        .take_while(|l| l.starts_with('#') || l.trim().is_empty())
        .find_map(|l| l.strip_prefix(LAYOUT_PREFIX))
        .map(|tag| FeatureLayout::from_tag(tag).map_err(|e| row_err(1, e.to_string())))
        .transpose()?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(row_err(e.position().map_or(1, |p| p.line()), e.to_string())),
    };
    if header.is_empty() {
        return Ok(Vec::new());
    }
    let header_line = reader.position().line().max(1);
    let fixed = ["seq_id", "frame", "label"];
    if header.len() < 4 || header.iter().take(3).ne(fixed.iter().copied()) {
        return Err(row_err(header_line, "header must be seq_id,frame,label,f0..fK"));
    }
    let dim = header.len() - 3;
    for (k, name) in header.iter().skip(3).enumerate() {
        if name != format!("f{k}") {
            return Err(row_err(header_line, format!("expected column f{k}, found {name:?}")));
        }
    }
    let layout = match declared {
        Some(l) if l.dim() != dim => {
            return Err(row_err(
                header_line,
                format!("layout declares {} columns but header has {dim}", l.dim()),
            ))
        }
        Some(l) => Arc::new(l),
        None => Arc::new(FeatureLayout::generic(dim).map_err(|e| row_err(header_line, e.to_string()))?),
    };

    struct Pending {
        seq_id: String,
        label: String,
        rows: Vec<Vec<f64>>,
    }
    let mut out: Vec<LabeledSequence> = Vec::new();
    let mut pending: Option<Pending> = None;
    let flush = |p: Pending, out: &mut Vec<LabeledSequence>| -> Result<(), IngestError> {
        if out.iter().any(|s| s.seq_id == p.seq_id) {
            return Err(row_err(0, format!("sequence {:?} is not contiguous", p.seq_id)));
        }
        let features = FeatureSequence::new(layout.clone(), p.rows).map_err(|e| row_err(0, e.to_string()))?;
        out.push(LabeledSequence {
            seq_id: p.seq_id,
            label: p.label,
            features,
        });
        Ok(())
    };

    for record in reader.records() {
        let record = record.map_err(|e| row_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != dim + 3 {
            return Err(row_err(
                line,
                format!("expected {} columns, found {}", dim + 3, record.len()),
            ));
        }
        let seq_id = &record[0];
        let frame: usize = record[1]
            .parse()
            .map_err(|_| row_err(line, format!("bad frame index {:?}", &record[1])))?;
        let label = &record[2];
        let values = record
            .iter()
            .skip(3)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| row_err(line, format!("bad value {v:?}")))
            })
            .collect::<Result<Vec<f64>, _>>()?;

        if pending.as_ref().is_some_and(|p| p.seq_id != seq_id) {
            flush(pending.take().unwrap(), &mut out).map_err(|e| match e {
                IngestError::FeatureRow { message, .. } => row_err(line, message),
                e => e,
            })?;
        }
        let p = pending.get_or_insert_with(|| Pending {
            seq_id: seq_id.to_string(),
            label: label.to_string(),
            rows: Vec::new(),
        });
        if p.label != label {
            return Err(row_err(line, format!("label {label:?} differs from {:?}", p.label)));
        }
        if frame != p.rows.len() {
            return Err(row_err(line, format!("expected frame {}, found {frame}", p.rows.len())));
        }
        p.rows.push(values);
    }
    if let Some(p) = pending {
        flush(p, &mut out)?;
    }
    Ok(out)
}

/// Writes sequences sharing `layout`. Values use the shortest round-trip
/// decimal form, so reading the file back reproduces every bit.
pub fn write_feature_sequences<W: Write>(
    mut w: W,
    layout: &FeatureLayout,
    sequences: &[LabeledSequence],
) -> std::io::Result<()> {
    writeln!(w, "{LAYOUT_PREFIX} {}", layout.tag())?;
    write!(w, "seq_id,frame,label")?;
    for k in 0..layout.dim() {
        write!(w, ",f{k}")?;
    }
    writeln!(w)?;
    for s in sequences {
        if s.features.layout().as_ref() != layout {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("sequence {} has a different layout", s.seq_id),
            ));
        }
        for (t, row) in s.features.rows().enumerate() {
            write!(w, "{},{t},{}", s.seq_id, s.label)?;
            for v in row {
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}
