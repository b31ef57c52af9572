use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::head::{adaptive_smooth, HeadFeatureSequence};
use crate::ingest::FaceBox;
use crate::shape::{normalize_features, FeatureRanges, SHAPE_DIM};

use super::normalize::{normalize_trajectories, position_features};
use super::trim::ObservationSequence;
use super::{Column, FeatureError, FeatureLayout, FeatureSequence, Modality, ModalityGroup};

/// Which manual channels go into the vector, plus the parameters they need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyConfig {
    /// Normalized trajectory and velocity (4 columns per hand).
    pub trajectory: bool,
    /// Position relative to the face (2 columns per hand).
    pub position: bool,
    /// Normalized hand shape (19 columns per hand).
    pub shape: bool,
    pub head_alpha: f64,
    pub shape_ranges: Option<FeatureRanges>,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self {
            trajectory: true,
            position: true,
            shape: true,
            head_alpha: 0.5,
            shape_ranges: None,
        }
    }
}

const HANDS: [&str; 2] = ["l", "r"];
const HEAD_COLUMNS: [&str; 3] = ["head.energy", "head.vx", "head.vy"];

impl AssemblyConfig {
    /// Without hand shape: 12 manual columns.
    pub fn without_shape() -> Self {
        Self {
            shape: false,
            ..Self::default()
        }
    }

    fn hand_columns(&self, hand: &str) -> Vec<String> {
        let mut out = Vec::new();
        if self.trajectory {
            out.extend(["x", "y", "vx", "vy"].map(|c| format!("{hand}.{c}")));
        }
        if self.position {
            out.extend(["px", "py"].map(|c| format!("{hand}.{c}")));
        }
        if self.shape {
            out.extend((0..SHAPE_DIM).map(|i| format!("{hand}.shape{i}")));
        }
        out
    }

    pub fn layout(&self, group: ModalityGroup) -> Result<FeatureLayout, FeatureError> {
        let mut cols = Vec::new();
        if group != ModalityGroup::Nonmanual {
            for h in HANDS {
                cols.extend(self.hand_columns(h).into_iter().map(|name| Column {
                    name,
                    modality: Modality::Manual,
                }));
            }
            if cols.is_empty() {
                return Err(FeatureError::Layout("all manual channels disabled".into()));
            }
        }
        if group != ModalityGroup::Manual {
            cols.extend(HEAD_COLUMNS.iter().map(|n| Column {
                name: n.to_string(),
                modality: Modality::Nonmanual,
            }));
        }
        FeatureLayout::new(cols)
    }
}

/// Builds the per-frame vectors of one modality group from a trimmed
/// observation sequence. A hand not yet observed contributes zeros.
pub fn assemble(seq: &ObservationSequence, group: ModalityGroup, cfg: &AssemblyConfig) -> Result<FeatureSequence, FeatureError> {
    if seq.frames.is_empty() {
        return Err(FeatureError::TooShort);
    }
    if !(cfg.head_alpha > 0.0 && cfg.head_alpha <= 1.0) {
        return Err(FeatureError::InvalidSmoothing(cfg.head_alpha));
    }
    let layout = Arc::new(cfg.layout(group)?);
    let n = seq.frames.len();
    let mut rows: Vec<Vec<f64>> = vec![Vec::with_capacity(layout.dim()); n];

    if group != ModalityGroup::Nonmanual {
        append_manual(seq, cfg, &mut rows)?;
    }
    if group != ModalityGroup::Manual {
        let raw = HeadFeatureSequence {
            frames: seq.frames.iter().map(|f| f.head).collect(),
        };
        let smooth = adaptive_smooth(&raw, cfg.head_alpha).map_err(|_| FeatureError::InvalidSmoothing(cfg.head_alpha))?;
        for (row, h) in rows.iter_mut().zip(smooth.frames) {
            row.extend(h.to_array());
        }
    }
    FeatureSequence::new(layout, rows)
}

fn append_manual(seq: &ObservationSequence, cfg: &AssemblyConfig, rows: &mut [Vec<f64>]) -> Result<(), FeatureError> {
    if cfg.shape && cfg.shape_ranges.is_none() {
        return Err(FeatureError::MissingShapeRanges);
    }
    let hand = |f: &super::ObservationFrame, i: usize| if i == 0 { f.left.clone() } else { f.right.clone() };

    let params = if cfg.trajectory {
        let pts = |i: usize| -> Vec<(f64, f64)> { seq.frames.iter().filter_map(|f| hand(f, i)).map(|o| o.com).collect() };
        Some(normalize_trajectories(&pts(0), &pts(1))?.2)
    } else {
        None
    };

    // frames before the first face detection borrow the first one
    let first_face = seq.frames.iter().find_map(|f| f.face);
    if cfg.position && first_face.is_none() {
        return Err(FeatureError::MissingFaceBox);
    }

    for i in 0..HANDS.len() {
        let start = params.and_then(|p| if i == 0 { p.left_start } else { p.right_start });
        let mut face: Option<FaceBox> = first_face;
        let mut last_shape = None;
        for (f, row) in seq.frames.iter().zip(rows.iter_mut()) {
            if f.face.is_some() {
                face = f.face;
            }
            let Some(o) = hand(f, i) else {
                row.extend(std::iter::repeat_n(0.0, cfg.hand_columns(HANDS[i]).len()));
                continue;
            };
            if let (Some(p), Some(s)) = (params, start) {
                let q = p.scale_point(o.com);
                let v = p.scale_velocity(o.velocity);
                row.extend([q.0 - s.0, q.1 - s.1, v.0, v.1]);
            }
            if cfg.position {
                let (px, py) = position_features(o.com, face.as_ref().expect("checked above"))?;
                row.extend([px, py]);
            }
            if cfg.shape {
                let ranges = cfg.shape_ranges.as_ref().expect("checked above");
                if o.shape.is_some() {
                    last_shape = o.shape;
                }
                match &last_shape {
                    Some(v) => row.extend(normalize_features(v, ranges)),
                    None => row.extend([0.0; SHAPE_DIM]),
                }
            }
        }
    }
    Ok(())
}
