//! Frames in, feature vectors out: segment → track → shape → head → trim → assemble.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    assemble, trim_sequence, AssemblyConfig, FeatureError, FeatureLayout, FeatureSequence, HandObservation,
    ModalityGroup, ObservationFrame, ObservationSequence, TrimConfig,
};
use crate::glove::{detect_face, segment_frame, GloveModel, GlovePair};
use crate::head::{analyze_head, HeadConfig, HeadError};
use crate::ingest::{FaceBox, FrameSequence, IngestError};
use crate::mask::BinaryMask;
use crate::shape::{
    classify_shape, cluster_distances, extract_hand_features, normalize_features, DistanceSmoother, FeatureRanges,
    Hand, ShapeConfig, ShapeError, TemplateLibrary,
};
use crate::track::{center_of_mass, track_measurements, KalmanConfig, TrackFlag, Trajectory};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisionModels {
    pub gloves: GlovePair,
    /// Skin model for the fallback face locator.
    #[serde(default)]
    pub skin: Option<GloveModel>,
    #[serde(default)]
    pub library: Option<TemplateLibrary>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub kalman: KalmanConfig,
    pub shape: ShapeConfig,
    pub head: HeadConfig,
    pub trim: TrimConfig,
    pub assembly: AssemblyConfig,
}

impl AssemblyConfig {
    /// The channel selection that reproduces `layout` for `group`, if any.
    pub fn for_layout(layout: &FeatureLayout, group: ModalityGroup) -> Option<AssemblyConfig> {
        (0..8u8).find_map(|bits| {
            let cfg = AssemblyConfig {
                trajectory: bits & 1 != 0,
                position: bits & 2 != 0,
                shape: bits & 4 != 0,
                ..AssemblyConfig::default()
            };
            (cfg.layout(group).ok().as_ref() == Some(layout)).then_some(cfg)
        })
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// (left, right) glove masks per frame.
    pub masks: Vec<(BinaryMask, BinaryMask)>,
    pub face_boxes: Vec<Option<FaceBox>>,
    pub left: Trajectory,
    pub right: Trajectory,
    /// One entry per input frame, before trimming.
    pub observations: ObservationSequence,
    pub trimmed: ObservationSequence,
    pub features: FeatureSequence,
}

fn shape_ranges<'a>(models: &'a VisionModels, cfg: &'a PipelineConfig) -> Option<&'a FeatureRanges> {
    cfg.assembly
        .shape_ranges
        .as_ref()
        .or_else(|| models.library.as_ref().and_then(|l| l.ranges.as_ref()))
}

fn observe_hand(
    hand: Hand,
    masks: &[&BinaryMask],
    traj: &Trajectory,
    models: &VisionModels,
    cfg: &PipelineConfig,
) -> Result<Vec<Option<HandObservation>>, PipelineError> {
    let ranges = shape_ranges(models, cfg);
    let mut smoother = DistanceSmoother::default();
    let mut out = Vec::with_capacity(masks.len());
    for (t, mask) in masks.iter().enumerate() {
        // a frame counts as a detection only when the glove was actually seen
        let point = traj.at_frame(t).filter(|p| p.flag == TrackFlag::Measured);
        let Some(p) = point else {
            out.push(None);
            continue;
        };
        let shape = extract_hand_features(mask, hand, &cfg.shape).ok();
        let cluster = match (shape.as_ref(), models.library.as_ref(), ranges) {
            (Some(v), Some(lib), Some(r)) => {
                let d = cluster_distances(&normalize_features(v, r), lib)?;
                let s = smoother.push(d.clone())?;
                Some(classify_shape(d, s, lib)?)
            }
            _ => None,
        };
        out.push(Some(HandObservation {
            com: (p.x, p.y),
            velocity: (p.vx, p.vy),
            shape,
            cluster,
        }));
    }
    Ok(out)
}

/// Runs the vision front end and assembles features of `group`.
pub fn run_pipeline(
    seq: &FrameSequence,
    models: &VisionModels,
    cfg: &PipelineConfig,
    group: ModalityGroup,
) -> Result<PipelineOutput, PipelineError> {
    seq.validate()?;
    let masks: Vec<(BinaryMask, BinaryMask)> = seq
        .frames
        .par_iter()
        .map(|f| segment_frame(f, &models.gloves.left, &models.gloves.right))
        .collect();
    let face_boxes: Vec<Option<FaceBox>> = (0..seq.len())
        .map(|i| {
            seq.face_box(i)
                .or_else(|| models.skin.as_ref().and_then(|s| detect_face(&seq.frames[i], s)))
        })
        .collect();

    let left_masks: Vec<&BinaryMask> = masks.iter().map(|m| &m.0).collect();
    let right_masks: Vec<&BinaryMask> = masks.iter().map(|m| &m.1).collect();
    let com = |ms: &[&BinaryMask]| ms.iter().map(|m| center_of_mass(m)).collect::<Vec<_>>();
    let left = track_measurements(&com(&left_masks), &cfg.kalman);
    let right = track_measurements(&com(&right_masks), &cfg.kalman);
    let l_obs = observe_hand(Hand::Left, &left_masks, &left, models, cfg)?;
    let r_obs = observe_hand(Hand::Right, &right_masks, &right, models, cfg)?;

    let head = if group == ModalityGroup::Manual {
        None
    } else {
        Some(analyze_head(&seq.frames, &face_boxes, &cfg.head)?)
    };
    let observations = ObservationSequence {
        frames: (0..seq.len())
            .map(|t| ObservationFrame {
                left: l_obs[t].clone(),
                right: r_obs[t].clone(),
                head: head.as_ref().map(|h| h.frames[t]).unwrap_or_default(),
                face: face_boxes[t],
                filled: false,
            })
            .collect(),
    };
    let trimmed = trim_sequence(&observations, &cfg.trim)?;
    let mut assembly = cfg.assembly.clone();
    if assembly.shape_ranges.is_none() {
        assembly.shape_ranges = shape_ranges(models, cfg).cloned();
    }
    assembly.head_alpha = cfg.head.smoothing_alpha;
    let features = assemble(&trimmed, group, &assembly)?;
    Ok(PipelineOutput {
        masks,
        face_boxes,
        left,
        right,
        observations,
        trimmed,
        features,
    })
}
