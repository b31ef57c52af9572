use serde::{Deserialize, Serialize};

use crate::ingest::FaceBox;

use super::FeatureError;

/// Joint translation/scale normalization shared by both hands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub x_m: f64,
    pub y_m: f64,
    /// `max(d_x, d_y)` over the union of both hands' points.
    pub d: f64,
    /// Pre-shift normalized first point of each hand.
    pub left_start: Option<(f64, f64)>,
    pub right_start: Option<(f64, f64)>,
}

impl NormalizationParams {
    /// Maps a raw point into `[0, 1]²` (before the start-point shift).
    pub fn scale_point(&self, p: (f64, f64)) -> (f64, f64) {
        (
            0.5 + 0.5 * (p.0 - self.x_m) / self.d,
            0.5 + 0.5 * (p.1 - self.y_m) / self.d,
        )
    }

    /// Maps a raw velocity to normalized units per frame.
    pub fn scale_velocity(&self, v: (f64, f64)) -> (f64, f64) {
        (0.5 * v.0 / self.d, 0.5 * v.1 / self.d)
    }
}

/// Normalizes both trajectories with jointly computed mid-points and scale,
/// then translates each so it starts at the origin.
pub fn normalize_trajectories(
    left: &[(f64, f64)],
    right: &[(f64, f64)],
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>, NormalizationParams), FeatureError> {
    let all = || left.iter().chain(right);
    if all().next().is_none() || all().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(FeatureError::DegenerateTrajectory);
    }
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all() {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    let d = ((x_max - x_min) / 2.0).max((y_max - y_min) / 2.0);
    if d <= 0.0 {
        return Err(FeatureError::DegenerateTrajectory);
    }
    let mut params = NormalizationParams {
        x_m: (x_max + x_min) / 2.0,
        y_m: (y_max + y_min) / 2.0,
        d,
        left_start: None,
        right_start: None,
    };
    params.left_start = left.first().map(|&p| params.scale_point(p));
    params.right_start = right.first().map(|&p| params.scale_point(p));
    let shift = |pts: &[(f64, f64)], start: Option<(f64, f64)>| -> Vec<(f64, f64)> {
        let Some(s) = start else { return Vec::new() };
        pts.iter()
            .map(|&p| {
                let q = params.scale_point(p);
                (q.0 - s.0, q.1 - s.1)
            })
            .collect()
    };
    let l = shift(left, params.left_start);
    let r = shift(right, params.right_start);
    Ok((l, r, params))
}

/// Hand CoM relative to the face center, in face widths and heights
/// (image coordinates: negative y is above the face center).
pub fn position_features(hand: (f64, f64), face: &FaceBox) -> Result<(f64, f64), FeatureError> {
    if face.area() == 0 {
        return Err(FeatureError::DegenerateFaceBox);
    }
    let (fx, fy) = face.center();
    Ok((
        (hand.0 - fx) / face.width as f64,
        (hand.1 - fy) / face.height as f64,
    ))
}
