//! Per-frame feature vectors: layout descriptors, sequence trimming,
//! trajectory normalization and assembly of the three modality groups.

mod assemble;
mod normalize;
mod trim;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assemble::{assemble, AssemblyConfig};
pub use normalize::{normalize_trajectories, position_features, NormalizationParams};
pub use trim::{trim_sequence, HandObservation, ObservationFrame, ObservationSequence, TrimConfig};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("row {row}: expected {expected} values, found {found}")]
    Dimension {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column}: non-finite value")]
    NonFinite { row: usize, column: usize },
    #[error("sequence is empty after trimming")]
    TooShort,
    #[error("degenerate trajectory: all points coincide")]
    DegenerateTrajectory,
    #[error("face box has zero area")]
    DegenerateFaceBox,
    #[error("position features need a face box but none was observed")]
    MissingFaceBox,
    #[error("smoothing factor must lie in (0, 1], got {0}")]
    InvalidSmoothing(f64),
    #[error("shape features enabled but no feature ranges configured")]
    MissingShapeRanges,
    #[error("invalid trim parameters: N must be >= 1")]
    InvalidTrim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Manual,
    Nonmanual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalityGroup {
    Manual,
    Nonmanual,
    Combined,
}

impl fmt::Display for ModalityGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModalityGroup::Manual => "manual",
            ModalityGroup::Nonmanual => "nonmanual",
            ModalityGroup::Combined => "combined",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Column {
    pub name: String,
    pub modality: Modality,
}

const LAYOUT_VERSION: &str = "v1";

/// Ordered, named feature columns, each tagged with its modality.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureLayout {
    columns: Vec<Column>,
}

impl FeatureLayout {
    pub fn new(columns: Vec<Column>) -> Result<Self, FeatureError> {
        if columns.is_empty() {
            return Err(FeatureError::Layout("no columns".into()));
        }
        for (i, c) in columns.iter().enumerate() {
            if c.name.is_empty() || c.name.contains([',', ':', '|']) || c.name.trim() != c.name {
                return Err(FeatureError::Layout(format!("bad column name {:?}", c.name)));
            }
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(FeatureError::Layout(format!("duplicate column {:?}", c.name)));
            }
        }
        Ok(Self { columns })
    }

    /// `f0..f{dim-1}`, all manual. Used for feature files without a layout line.
    pub fn generic(dim: usize) -> Result<Self, FeatureError> {
        Self::new(
            (0..dim)
                .map(|i| Column {
                    name: format!("f{i}"),
                    modality: Modality::Manual,
                })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn group(&self) -> ModalityGroup {
        let manual = self.columns.iter().any(|c| c.modality == Modality::Manual);
        let nonmanual = self.columns.iter().any(|c| c.modality == Modality::Nonmanual);
        match (manual, nonmanual) {
            (true, false) => ModalityGroup::Manual,
            (false, true) => ModalityGroup::Nonmanual,
            _ => ModalityGroup::Combined,
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Stable textual descriptor, e.g. `v1|m:l.x,m:l.y,n:head.vx`.
    pub fn tag(&self) -> String {
        let cols: Vec<String> = self
            .columns
            .iter()
            .map(|c| {
                let m = match c.modality {
                    Modality::Manual => 'm',
                    Modality::Nonmanual => 'n',
                };
                format!("{m}:{}", c.name)
            })
            .collect();
        format!("{LAYOUT_VERSION}|{}", cols.join(","))
    }

    pub fn from_tag(tag: &str) -> Result<Self, FeatureError> {
        let (version, body) = tag
            .trim()
            .split_once('|')
            .ok_or_else(|| FeatureError::Layout(format!("missing version in {tag:?}")))?;
        if version != LAYOUT_VERSION {
            return Err(FeatureError::Layout(format!("unsupported layout version {version:?}")));
        }
        let columns = body
            .split(',')
            .map(|c| {
                let (m, name) = c
                    .split_once(':')
                    .ok_or_else(|| FeatureError::Layout(format!("bad column {c:?}")))?;
                let modality = match m {
                    "m" => Modality::Manual,
                    "n" => Modality::Nonmanual,
                    _ => return Err(FeatureError::Layout(format!("bad modality {m:?}"))),
                };
                Ok(Column {
                    name: name.to_string(),
                    modality,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(columns)
    }

    /// Sub-layout holding only the columns of one modality, with their indices.
    pub fn select(&self, modality: Modality) -> Option<(FeatureLayout, Vec<usize>)> {
        let idx: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.modality == modality)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return None;
        }
        let cols = idx.iter().map(|&i| self.columns[i].clone()).collect();
        Some((FeatureLayout { columns: cols }, idx))
    }

    pub fn concat(&self, other: &FeatureLayout) -> Result<FeatureLayout, FeatureError> {
        Self::new(self.columns.iter().chain(&other.columns).cloned().collect())
    }
}

/// Per-frame real vectors sharing one layout. Row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    layout: Arc<FeatureLayout>,
    data: Vec<f64>,
}

impl FeatureSequence {
    pub fn new(layout: Arc<FeatureLayout>, rows: Vec<Vec<f64>>) -> Result<Self, FeatureError> {
        let dim = layout.dim();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(FeatureError::Dimension {
                    row: r,
                    expected: dim,
                    found: row.len(),
                });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(FeatureError::NonFinite { row: r, column: c });
            }
            data.extend(row);
        }
        Ok(Self { layout, data })
    }

    pub fn layout(&self) -> &Arc<FeatureLayout> {
        &self.layout
    }

    pub fn group(&self) -> ModalityGroup {
        self.layout.group()
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let d = self.dim();
        &self.data[t * d..(t + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        let d = self.dim();
        &mut self.data[t * d..(t + 1) * d]
    }

    /// Keeps the given column indices under a sub-layout.
    pub fn select_columns(&self, layout: Arc<FeatureLayout>, indices: &[usize]) -> FeatureSequence {
        debug_assert_eq!(layout.dim(), indices.len());
        let mut data = Vec::with_capacity(self.len() * indices.len());
        for r in self.rows() {
            data.extend(indices.iter().map(|&j| r[j]));
        }
        FeatureSequence { layout, data }
    }

    /// Columns of one modality, or `None` when the layout has none.
    pub fn modality(&self, modality: Modality) -> Option<FeatureSequence> {
        let (sub, idx) = self.layout.select(modality)?;
        Some(self.select_columns(Arc::new(sub), &idx))
    }
}
