use serde::{Deserialize, Serialize};

use crate::head::HeadFeatureFrame;
use crate::ingest::FaceBox;
use crate::shape::{ClusterDecision, HandShapeVector};

use super::FeatureError;

/// What the vision front end knows about one hand in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandObservation {
    /// Kalman posterior position, pixels.
    pub com: (f64, f64),
    /// Kalman posterior velocity, pixels/frame.
    pub velocity: (f64, f64),
    /// Raw (unnormalized) shape descriptor; `None` for degenerate masks.
    pub shape: Option<HandShapeVector>,
    pub cluster: Option<ClusterDecision>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationFrame {
    pub left: Option<HandObservation>,
    pub right: Option<HandObservation>,
    pub head: HeadFeatureFrame,
    pub face: Option<FaceBox>,
    /// The frame had no detection and its hand data was copied forward.
    #[serde(default)]
    pub filled: bool,
}

impl ObservationFrame {
    pub fn detected(&self) -> bool {
        self.filled || self.left.is_some() || self.right.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationSequence {
    pub frames: Vec<ObservationFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimConfig {
    /// Gaps of at least this many undetected frames end the sign.
    pub gap_limit: usize,
    /// Transition frames removed from each end.
    pub transition: usize,
}

impl Default for TrimConfig {
    fn default() -> Self {
        Self {
            gap_limit: 6,
            transition: 2,
        }
    }
}

fn copied(obs: &HandObservation) -> HandObservation {
    HandObservation {
        velocity: (0.0, 0.0),
        ..obs.clone()
    }
}

/// Drops leading undetected frames, ends the sign at the first gap of
/// `gap_limit` undetected frames (or at trailing undetected frames), copies
/// hand data forward across shorter gaps, then removes `transition` frames
/// from each end.
pub fn trim_sequence(seq: &ObservationSequence, cfg: &TrimConfig) -> Result<ObservationSequence, FeatureError> {
    if cfg.gap_limit == 0 {
        return Err(FeatureError::InvalidTrim);
    }
    let frames = &seq.frames;
    let start = frames.iter().position(|f| f.detected()).ok_or(FeatureError::TooShort)?;

    let mut end = frames.len();
    let mut gap_start = None;
    for (i, f) in frames.iter().enumerate().skip(start) {
        if f.detected() {
            gap_start = None;
        } else {
            let g = *gap_start.get_or_insert(i);
            if i + 1 - g >= cfg.gap_limit {
                end = g;
                break;
            }
        }
    }
    if let Some(g) = gap_start {
        end = end.min(g);
    }

    let mut kept: Vec<ObservationFrame> = frames[start..end].to_vec();
    let mut last_left: Option<HandObservation> = None;
    let mut last_right: Option<HandObservation> = None;
    for f in &mut kept {
        if !f.detected() {
            f.filled = true;
        }
        match &f.left {
            Some(o) => last_left = Some(o.clone()),
            None => f.left = last_left.as_ref().map(copied),
        }
        match &f.right {
            Some(o) => last_right = Some(o.clone()),
            None => f.right = last_right.as_ref().map(copied),
        }
    }

    let t = cfg.transition;
    if kept.len() <= 2 * t {
        return Err(FeatureError::TooShort);
    }
    let kept = kept[t..kept.len() - t].to_vec();
    Ok(ObservationSequence { frames: kept })
}
