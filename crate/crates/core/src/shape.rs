//! Hand-shape descriptors from binary masks, template classification with a
//! reject threshold, and temporal smoothing of cluster distances.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BinaryMask;

pub const SHAPE_DIM: usize = 19;

/// Feature indices (0-based) in descriptor order.
pub mod idx {
    pub const ELLIPSE_WIDTH: usize = 0;
    pub const ELLIPSE_HEIGHT: usize = 1;
    pub const COMPACTNESS: usize = 2;
    pub const OUTSIDE_INSIDE: usize = 3;
    pub const HAND_BACKGROUND: usize = 4;
    pub const SIN_2A: usize = 5;
    pub const COS_2A: usize = 6;
    pub const ELONGATION: usize = 7;
    /// First of the eight sector fills, ordered NW, N, NE, E, SE, S, SW, W.
    pub const SECTOR_NW: usize = 8;
    pub const AREA: usize = 16;
    pub const BBOX_WIDTH: usize = 17;
    pub const BBOX_HEIGHT: usize = 18;
}

/// Features whose value does not depend on the mask's scale.
pub const SCALE_INVARIANT: std::ops::Range<usize> = idx::COMPACTNESS..idx::AREA;

/// Features already expressed as fractions in `[0, 1]`.
pub const FRACTION_FEATURES: std::ops::Range<usize> = idx::SECTOR_NW..idx::AREA;

/// Smoothing weights, newest frame first.
pub const SMOOTHING_WEIGHTS: [f64; 6] = [0.34, 0.25, 0.18, 0.12, 0.07, 0.04];

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("degenerate shape: {0}")]
    Degenerate(String),
    #[error("template library is empty")]
    EmptyLibrary,
    #[error("invalid template library: {0}")]
    InvalidLibrary(String),
    #[error("expected {expected} distances, got {found}")]
    DistanceCount { expected: usize, found: usize },
    #[error("distance history is empty")]
    EmptyHistory,
}

/// Ellipse with the same centroid and second-order central moments as the
/// mask, pixels taken as unit squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEllipse {
    pub center: (f64, f64),
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Major-axis angle in degrees, `[0, 180)`, image coordinates (y down).
    pub angle_deg: f64,
}

impl MomentEllipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_major).powi(2) + (v / self.semi_minor).powi(2) <= 1.0
    }

    pub fn elongation(&self) -> f64 {
        self.semi_major / self.semi_minor
    }
}

pub fn fit_ellipse(mask: &BinaryMask) -> Result<MomentEllipse, ShapeError> {
    let n = mask.count();
    if n < 3 {
        return Err(ShapeError::Degenerate(format!("{n} foreground pixels")));
    }
    let nf = n as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (x, y) in mask.foreground() {
        sx += x as f64;
        sy += y as f64;
    }
    let (cx, cy) = (sx / nf, sy / nf);
    let (mut m20, mut m02, mut m11) = (0.0, 0.0, 0.0);
    for (x, y) in mask.foreground() {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        m20 += dx * dx;
        m02 += dy * dy;
        m11 += dx * dy;
    }
    m20 /= nf;
    m02 /= nf;
    m11 /= nf;
    let mean = (m20 + m02) / 2.0;
    let radius = (((m20 - m02) / 2.0).powi(2) + m11 * m11).sqrt();
    let l1 = mean + radius;
    let l2 = mean - radius;
    if l2 <= 1e-9 * l1.max(1.0) {
        return Err(ShapeError::Degenerate("foreground pixels are collinear".into()));
    }
    // moments of unit-square pixels rather than pixel centres: the fitted
    // ellipse then scales exactly under nearest-neighbour upscaling
    let l1 = l1 + 1.0 / 12.0;
    let l2 = l2 + 1.0 / 12.0;
    let mut angle = 0.5 * (2.0 * m11).atan2(m20 - m02).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if angle >= 180.0 {
        angle -= 180.0;
    }
    Ok(MomentEllipse {
        center: (cx, cy),
        semi_major: 2.0 * l1.sqrt(),
        semi_minor: 2.0 * l2.sqrt(),
        angle_deg: angle,
    })
}

/// Crofton perimeter estimate from run counts along rows and columns:
/// `π/2 · (row runs + column runs)`. Exact for digital disks in the limit
/// and exactly linear under nearest-neighbour upscaling. Diagonal directions
/// are left out on purpose: upscaled staircase edges inflate their counts.
pub fn perimeter(mask: &BinaryMask) -> f64 {
    let w = mask.width() as i64;
    let h = mask.height() as i64;
    let runs = |points: &mut dyn Iterator<Item = (i64, i64)>| -> usize {
        let mut prev = false;
        let mut count = 0;
        for (x, y) in points {
            let cur = mask.get_signed(x, y);
            if cur && !prev {
                count += 1;
            }
            prev = cur;
        }
        count
    };
    let rows: usize = (0..h).map(|y| runs(&mut (0..w).map(|x| (x, y)))).sum();
    let cols: usize = (0..w).map(|x| runs(&mut (0..h).map(|y| (x, y)))).sum();
    FRAC_PI_2 * (rows + cols) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeConfig {
    /// Value taken by the two pixel-count ratios when their denominator is
    /// zero; larger ratios are capped to it as well.
    pub ratio_saturation: f64,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        Self {
            ratio_saturation: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HandShapeVector(pub [f64; SHAPE_DIM]);

impl HandShapeVector {
    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn sectors(&self) -> &[f64] {
        &self.0[FRACTION_FEATURES]
    }
}

fn ratio(num: f64, den: f64, cap: f64) -> f64 {
    if den <= 0.0 {
        cap
    } else {
        (num / den).min(cap)
    }
}

const COVERAGE_SAMPLES: usize = 4;

/// Fraction of the unit square centred on `(x, y)` inside the ellipse.
fn pixel_coverage(e: &MomentEllipse, x: f64, y: f64) -> f64 {
    let n = COVERAGE_SAMPLES;
    let step = 1.0 / n as f64;
    let mut hits = 0;
    for j in 0..n {
        for i in 0..n {
            let sx = x - 0.5 + (i as f64 + 0.5) * step;
            let sy = y - 0.5 + (j as f64 + 0.5) * step;
            if e.contains(sx, sy) {
                hits += 1;
            }
        }
    }
    hits as f64 / (n * n) as f64
}

/// Sector index clockwise from north: N=0, NE=1, ..., NW=7.
fn compass_sector(dx: f64, dy: f64) -> usize {
    if dx == 0.0 && dy == 0.0 {
        return 0;
    }
    let bearing = dx.atan2(-dy).to_degrees().rem_euclid(360.0);
    (((bearing + 22.5) / 45.0).floor() as usize) % 8
}

pub fn extract_features(mask: &BinaryMask, cfg: &ShapeConfig) -> Result<HandShapeVector, ShapeError> {
    let ellipse = fit_ellipse(mask)?;
    let bounds = mask.bounds().expect("non-degenerate mask has pixels");
    let area = mask.count();
    let mut f = [0.0; SHAPE_DIM];

    f[idx::ELLIPSE_WIDTH] = 2.0 * ellipse.semi_major;
    f[idx::ELLIPSE_HEIGHT] = 2.0 * ellipse.semi_minor;
    f[idx::COMPACTNESS] = perimeter(mask).powi(2) / area as f64;

    // area-weighted: each hand pixel contributes the supersampled fraction of
    // its unit square inside the ellipse, and background inside is the rest of
    // the ellipse's area (off-image counts as background)
    let mut hand_inside = 0.0;
    for (x, y) in mask.foreground() {
        hand_inside += pixel_coverage(&ellipse, x as f64, y as f64);
    }
    let hand_outside = area as f64 - hand_inside;
    let bg_inside = (PI * ellipse.semi_major * ellipse.semi_minor - hand_inside).max(0.0);
    f[idx::OUTSIDE_INSIDE] = ratio(hand_outside, hand_inside, cfg.ratio_saturation);
    f[idx::HAND_BACKGROUND] = ratio(hand_inside, bg_inside, cfg.ratio_saturation);

    let (s2, c2) = (2.0 * ellipse.angle_deg.to_radians()).sin_cos();
    f[idx::SIN_2A] = s2;
    f[idx::COS_2A] = c2;
    f[idx::ELONGATION] = ellipse.elongation();

    let bcx = (bounds.x_min + bounds.x_max) as f64 / 2.0;
    let bcy = (bounds.y_min + bounds.y_max) as f64 / 2.0;
    let mut filled = [0usize; 8];
    let mut total = [0usize; 8];
    for y in bounds.y_min..=bounds.y_max {
        for x in bounds.x_min..=bounds.x_max {
            let k = compass_sector(x as f64 - bcx, y as f64 - bcy);
            total[k] += 1;
            if mask.get(x, y) {
                filled[k] += 1;
            }
        }
    }
    // descriptor order starts at NW
    for (slot, k) in [7usize, 0, 1, 2, 3, 4, 5, 6].into_iter().enumerate() {
        f[idx::SECTOR_NW + slot] = if total[k] == 0 {
            0.0
        } else {
            filled[k] as f64 / total[k] as f64
        };
    }

    f[idx::AREA] = area as f64;
    f[idx::BBOX_WIDTH] = bounds.width() as f64;
    f[idx::BBOX_HEIGHT] = bounds.height() as f64;
    Ok(HandShapeVector(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

/// Right-hand masks are mirrored so both hands share one geometry.
pub fn extract_hand_features(
    mask: &BinaryMask,
    hand: Hand,
    cfg: &ShapeConfig,
) -> Result<HandShapeVector, ShapeError> {
    match hand {
        Hand::Left => extract_features(mask, cfg),
        Hand::Right => extract_features(&mask.mirror_horizontal(), cfg),
    }
}

/// Per-feature (min, max) observed in training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanges {
    pub min: [f64; SHAPE_DIM],
    pub max: [f64; SHAPE_DIM],
}

impl FeatureRanges {
    pub fn fit(vectors: &[HandShapeVector]) -> Option<Self> {
        let first = vectors.first()?;
        let mut r = Self {
            min: first.0,
            max: first.0,
        };
        for v in &vectors[1..] {
            for i in 0..SHAPE_DIM {
                r.min[i] = r.min[i].min(v.0[i]);
                r.max[i] = r.max[i].max(v.0[i]);
            }
        }
        Some(r)
    }
}

/// Fractions pass through; everything else maps `(F - min) / (max - min)`
/// clamped to `[0, 1]`, or 0.5 when the range is empty.
pub fn normalize_features(v: &HandShapeVector, r: &FeatureRanges) -> [f64; SHAPE_DIM] {
    let mut out = [0.0; SHAPE_DIM];
    for i in 0..SHAPE_DIM {
        out[i] = if FRACTION_FEATURES.contains(&i) {
            v.0[i].clamp(0.0, 1.0)
        } else if r.max[i] == r.min[i] {
            0.5
        } else {
            ((v.0[i] - r.min[i]) / (r.max[i] - r.min[i])).clamp(0.0, 1.0)
        };
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeCluster {
    pub id: usize,
    #[serde(default)]
    pub name: String,
    pub templates: Vec<[f64; SHAPE_DIM]>,
}

fn default_reject() -> f64 {
    0.6
}

fn default_k() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateLibrary {
    pub clusters: Vec<ShapeCluster>,
    #[serde(default = "default_reject")]
    pub reject_threshold: f64,
    #[serde(default = "default_k")]
    pub knn_k: usize,
    /// Normalization ranges the templates were built with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranges: Option<FeatureRanges>,
}

impl TemplateLibrary {
    pub fn validate(&self) -> Result<(), ShapeError> {
        if self.clusters.is_empty() {
            return Err(ShapeError::EmptyLibrary);
        }
        if self.knn_k == 0 {
            return Err(ShapeError::InvalidLibrary("knn_k must be >= 1".into()));
        }
        for c in &self.clusters {
            if c.templates.is_empty() {
                return Err(ShapeError::InvalidLibrary(format!("cluster {} has no templates", c.id)));
            }
            if c.templates.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(ShapeError::InvalidLibrary(format!(
                    "cluster {} has templates outside [0,1]",
                    c.id
                )));
            }
        }
        Ok(())
    }

    /// Builds a library from normalized exemplars labeled by cluster id.
    /// Clusters with more than `max_templates` exemplars are reduced by
    /// averaging consecutive runs of exemplars.
    pub fn from_exemplars(
        exemplars: &[(usize, [f64; SHAPE_DIM])],
        max_templates: usize,
        ranges: Option<FeatureRanges>,
    ) -> Result<Self, ShapeError> {
        let mut ids: Vec<usize> = exemplars.iter().map(|e| e.0).collect();
        ids.sort_unstable();
        ids.dedup();
        let max_templates = max_templates.max(1);
        let clusters = ids
            .into_iter()
            .map(|id| {
                let members: Vec<&[f64; SHAPE_DIM]> =
                    exemplars.iter().filter(|e| e.0 == id).map(|e| &e.1).collect();
                let n_out = members.len().min(max_templates);
                let templates = (0..n_out)
                    .map(|j| {
                        let lo = j * members.len() / n_out;
                        let hi = (j + 1) * members.len() / n_out;
                        let mut t = [0.0; SHAPE_DIM];
                        for m in &members[lo..hi] {
                            for i in 0..SHAPE_DIM {
                                t[i] += m[i];
                            }
                        }
                        t.iter_mut().for_each(|v| *v /= (hi - lo) as f64);
                        t
                    })
                    .collect();
                ShapeCluster {
                    id,
                    name: format!("cluster{id}"),
                    templates,
                }
            })
            .collect();
        let lib = Self {
            clusters,
            reject_threshold: default_reject(),
            knn_k: default_k(),
            ranges,
        };
        lib.validate()?;
        Ok(lib)
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Per cluster, the mean distance to its `knn_k` nearest templates (or all of
/// them when the cluster is smaller).
pub fn cluster_distances(v: &[f64; SHAPE_DIM], lib: &TemplateLibrary) -> Result<Vec<f64>, ShapeError> {
    if lib.clusters.is_empty() {
        return Err(ShapeError::EmptyLibrary);
    }
    Ok(lib
        .clusters
        .iter()
        .map(|c| {
            let mut d: Vec<f64> = c.templates.iter().map(|t| euclidean(v, t)).collect();
            let k = lib.knn_k.min(d.len()).max(1);
            d.select_nth_unstable_by(k - 1, f64::total_cmp);
            d[..k].iter().sum::<f64>() / k as f64
        })
        .collect())
}

/// Weighted average over the last (up to six) frames of distances; `history`
/// is ordered oldest to newest. Short histories use the leading weights
/// renormalized to sum to one.
pub fn smooth_distances(history: &[Vec<f64>]) -> Result<Vec<f64>, ShapeError> {
    let newest = history.last().ok_or(ShapeError::EmptyHistory)?;
    let taps = history.len().min(SMOOTHING_WEIGHTS.len());
    for h in &history[history.len() - taps..] {
        if h.len() != newest.len() {
            return Err(ShapeError::DistanceCount {
                expected: newest.len(),
                found: h.len(),
            });
        }
    }
    let total: f64 = SMOOTHING_WEIGHTS[..taps].iter().sum();
    // expressed relative to the newest frame so constant input is a fixed point
    let mut out = newest.clone();
    for (age, frame) in history.iter().rev().take(taps).enumerate().skip(1) {
        let w = SMOOTHING_WEIGHTS[age] / total;
        for (o, (&d, &n)) in out.iter_mut().zip(frame.iter().zip(newest)) {
            *o += w * (d - n);
        }
    }
    Ok(out)
}

/// Rolling six-frame smoother for one hand of one sequence.
#[derive(Debug, Clone, Default)]
pub struct DistanceSmoother {
    history: VecDeque<Vec<f64>>,
}

impl DistanceSmoother {
    pub fn push(&mut self, distances: Vec<f64>) -> Result<Vec<f64>, ShapeError> {
        if self.history.len() == SMOOTHING_WEIGHTS.len() {
            self.history.pop_front();
        }
        self.history.push_back(distances);
        smooth_distances(self.history.make_contiguous())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDecision {
    pub distances: Vec<f64>,
    pub smoothed_distances: Vec<f64>,
    /// `None` means the shape is unclassified.
    pub cluster: Option<usize>,
}

/// Argmin cluster when its smoothed distance is within the reject threshold.
/// Ties go to the earliest cluster.
pub fn classify_shape(distances: Vec<f64>, smoothed: Vec<f64>, lib: &TemplateLibrary) -> Result<ClusterDecision, ShapeError> {
    if smoothed.len() != lib.clusters.len() {
        return Err(ShapeError::DistanceCount {
            expected: lib.clusters.len(),
            found: smoothed.len(),
        });
    }
    let best = smoothed
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, &d)| match acc {
            Some((_, bd)) if bd <= d => acc,
            _ => Some((i, d)),
        });
    let cluster = best
        .filter(|&(_, d)| d <= lib.reject_threshold)
        .map(|(i, _)| lib.clusters[i].id);
    Ok(ClusterDecision {
        distances,
        smoothed_distances: smoothed,
        cluster,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: u32, h: u32) -> BinaryMask {
        BinaryMask::from_fn(w + 4, h + 4, |x, y| (2..w + 2).contains(&x) && (2..h + 2).contains(&y))
    }

    fn disk(r: f64) -> BinaryMask {
        let n = (2.0 * r).ceil() as u32 + 5;
        let c = n as f64 / 2.0;
        BinaryMask::from_fn(n, n, |x, y| (x as f64 - c).powi(2) + (y as f64 - c).powi(2) <= r * r)
    }

    fn lib(templates: Vec<Vec<[f64; SHAPE_DIM]>>) -> TemplateLibrary {
        TemplateLibrary {
            clusters: templates
                .into_iter()
                .enumerate()
                .map(|(id, templates)| ShapeCluster {
                    id,
                    name: String::new(),
                    templates,
                })
                .collect(),
            reject_threshold: 0.6,
            knn_k: 4,
            ranges: None,
        }
    }

    #[test]
    fn rectangle_ellipse_matches_analytic_moments() {
        let (w, h) = (40u32, 16u32);
        let e = fit_ellipse(&rect(w, h)).unwrap();
        assert!(e.angle_deg.abs() < 1e-9);
        // a solid w x h box of unit squares has variance w^2 / 12 along x
        let var_x = (w as f64).powi(2) / 12.0;
        let var_y = (h as f64).powi(2) / 12.0;
        assert!((e.semi_major - 2.0 * var_x.sqrt()).abs() < 1e-9);
        assert!((e.semi_minor - 2.0 * var_y.sqrt()).abs() < 1e-9);
        assert!((e.semi_major / e.semi_minor - w as f64 / h as f64).abs() < 1e-9);
    }

    #[test]
    fn rotated_rectangle_reports_ninety_degrees() {
        let a = fit_ellipse(&rect(40, 16)).unwrap();
        let b = fit_ellipse(&rect(16, 40)).unwrap();
        assert!((b.angle_deg - 90.0).abs() < 1e-9);
        assert!((a.semi_major - b.semi_major).abs() < 1e-9);
        assert!((a.semi_minor - b.semi_minor).abs() < 1e-9);
    }

    #[test]
    fn disk_is_round() {
        let e = fit_ellipse(&disk(20.0)).unwrap();
        assert!(e.elongation() <= 1.05);
    }

    #[test]
    fn degenerate_masks_rejected() {
        assert!(fit_ellipse(&BinaryMask::from_fn(5, 5, |x, y| x == 0 && y < 2)).is_err());
        assert!(fit_ellipse(&BinaryMask::from_fn(9, 9, |x, y| x == y)).is_err());
        assert!(extract_features(&BinaryMask::new(4, 4), &ShapeConfig::default()).is_err());
    }

    #[test]
    fn orientation_features() {
        let cfg = ShapeConfig::default();
        let f0 = extract_features(&rect(30, 10), &cfg).unwrap();
        assert!((f0.get(idx::SIN_2A) - 0.0).abs() < 1e-12);
        assert!((f0.get(idx::COS_2A) - 1.0).abs() < 1e-12);
        let f90 = extract_features(&rect(10, 30), &cfg).unwrap();
        assert!(f90.get(idx::SIN_2A).abs() < 1e-12);
        assert!((f90.get(idx::COS_2A) + 1.0).abs() < 1e-12);
        let diag = BinaryMask::from_fn(40, 40, |x, y| (x as i64 - y as i64).abs() <= 2);
        let f45 = extract_features(&diag, &cfg).unwrap();
        assert!((f45.get(idx::SIN_2A) - 1.0).abs() < 1e-12);
        assert!(f45.get(idx::COS_2A).abs() < 1e-12);
    }

    #[test]
    fn solid_rectangle_fills_every_sector() {
        let f = extract_features(&rect(21, 13), &ShapeConfig::default()).unwrap();
        assert!(f.sectors().iter().all(|&s| s == 1.0));
        assert_eq!(f.get(idx::AREA), 21.0 * 13.0);
        assert_eq!((f.get(idx::BBOX_WIDTH), f.get(idx::BBOX_HEIGHT)), (21.0, 13.0));
    }

    #[test]
    fn sector_fill_tracks_a_quadrant() {
        // top-left quadrant of a square: the NW sector is full, SE is empty
        let m = BinaryMask::from_fn(40, 40, |x, y| x < 20 || y < 20 || (x == 39 && y == 39));
        let f = extract_features(&m, &ShapeConfig::default()).unwrap();
        let s = f.sectors();
        assert_eq!(s[0], 1.0);
        assert!(s[4] < 0.05);
    }

    #[test]
    fn disk_compactness_near_four_pi() {
        let f = extract_features(&disk(25.0), &ShapeConfig::default()).unwrap();
        let c = f.get(idx::COMPACTNESS);
        assert!((c / (4.0 * PI) - 1.0).abs() < 0.15, "compactness {c}");
    }

    #[test]
    fn ratio_saturates_on_zero_denominator() {
        assert_eq!(ratio(5.0, 0.0, 50.0), 50.0);
        assert_eq!(ratio(500.0, 2.0, 50.0), 50.0);
        assert_eq!(ratio(1.0, 4.0, 50.0), 0.25);
    }

    #[test]
    fn normalization_endpoints() {
        let mut r = FeatureRanges {
            min: [0.0; SHAPE_DIM],
            max: [10.0; SHAPE_DIM],
        };
        r.min[0] = 2.0;
        r.max[1] = 0.0;
        let mut v = HandShapeVector([6.0; SHAPE_DIM]);
        v.0[idx::SECTOR_NW] = 0.3;
        v.0[idx::AREA] = 20.0;
        let n = normalize_features(&v, &r);
        assert_eq!(n[0], 0.5);
        assert_eq!(n[1], 0.5, "empty range maps to 0.5");
        assert_eq!(n[idx::SECTOR_NW], 0.3);
        assert_eq!(n[idx::AREA], 1.0, "clamped above");
        v.0[2] = 0.0;
        v.0[3] = 10.0;
        let n = normalize_features(&v, &r);
        assert_eq!((n[2], n[3]), (0.0, 1.0));
    }

    #[test]
    fn distance_to_repeated_template_is_zero() {
        let t = [0.25; SHAPE_DIM];
        let l = lib(vec![vec![[0.0; SHAPE_DIM]], vec![t; 4]]);
        let d = cluster_distances(&t, &l).unwrap();
        assert_eq!(d[1], 0.0);
        assert!((d[0] - (SHAPE_DIM as f64 * 0.0625).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_library_rejected() {
        let l = lib(vec![]);
        assert_eq!(cluster_distances(&[0.0; SHAPE_DIM], &l), Err(ShapeError::EmptyLibrary));
    }

    #[test]
    fn smoothing_examples() {
        let constant = vec![vec![0.42, 0.8]; 9];
        assert_eq!(smooth_distances(&constant).unwrap(), vec![0.42, 0.8]);
        assert_eq!(smooth_distances(&[vec![0.3]]).unwrap(), vec![0.3]);
        let mut step = vec![vec![1.0]; 5];
        step.push(vec![0.0]);
        assert!((smooth_distances(&step).unwrap()[0] - 0.66).abs() < 1e-12);
        assert_eq!(smooth_distances(&[]), Err(ShapeError::EmptyHistory));
    }

    #[test]
    fn truncated_history_renormalizes() {
        let h = vec![vec![1.0], vec![0.0]];
        let out = smooth_distances(&h).unwrap()[0];
        assert!((out - 0.25 / 0.59).abs() < 1e-12);
    }

    #[test]
    fn rolling_smoother_keeps_six_frames() {
        let mut s = DistanceSmoother::default();
        for _ in 0..10 {
            s.push(vec![5.0]).unwrap();
        }
        assert_eq!(s.history.len(), 6);
        assert_eq!(s.push(vec![5.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn classification_threshold_and_ties() {
        let l = lib((0..20).map(|_| vec![[0.0; SHAPE_DIM]]).collect());
        let mut d = vec![0.9; 20];
        d[12] = 0.59;
        assert_eq!(classify_shape(d.clone(), d, &l).unwrap().cluster, Some(12));
        let all = vec![0.7; 20];
        assert_eq!(classify_shape(all.clone(), all, &l).unwrap().cluster, None);
        let mut tie = vec![0.9; 20];
        tie[3] = 0.2;
        tie[9] = 0.2;
        assert_eq!(classify_shape(tie.clone(), tie, &l).unwrap().cluster, Some(3));
        let boundary = vec![0.6; 20];
        assert_eq!(classify_shape(boundary.clone(), boundary, &l).unwrap().cluster, Some(0));
    }

    #[test]
    fn library_from_exemplars_averages_down() {
        let ex: Vec<(usize, [f64; SHAPE_DIM])> = (0..30)
            .map(|i| (i % 2, [if i % 4 < 2 { 0.0 } else { 1.0 }; SHAPE_DIM]))
            .collect();
        let l = TemplateLibrary::from_exemplars(&ex, 5, None).unwrap();
        assert_eq!(l.clusters.len(), 2);
        assert_eq!(l.clusters[0].templates.len(), 5);
        assert_eq!(l.knn_k, 4);
    }
}
