//! Colored-glove segmentation: HSV likelihood histograms, double
//! (hysteresis) thresholding and largest-component selection.
//!
//! A [`GloveModel`] scores every pixel by looking up its HSV bin in a
//! max-normalized histogram. Pixels scoring at least `t_high` seed the
//! region; pixels scoring at least `t_low` are kept only when 8-connected to a
//! seed. Of what survives, only the largest component is reported as the hand.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::FaceBox;
use crate::mask::{hysteresis, neighbours_8, BinaryMask};

pub use crate::mask::largest_component;

/// Default bin counts along (H, S, V). Hue carries glove identity, so it is
/// binned more finely.
pub const DEFAULT_BINS: [usize; 3] = [32, 16, 16];

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("no foreground evidence: every training mask is empty")]
    NoForeground,
    #[error("threshold fitting needs both glove and background pixels")]
    SingleClass,
    #[error("snapshot {index}: mask is {mask_w}x{mask_h} but frame is {frame_w}x{frame_h}")]
    SizeMismatch {
        index: usize,
        frame_w: u32,
        frame_h: u32,
        mask_w: u32,
        mask_h: u32,
    },
    #[error("thresholds must satisfy 0 <= t_low <= t_high <= 1 (got {t_low}, {t_high})")]
    InvalidThresholds { t_low: f64, t_high: f64 },
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hsv {
    /// Hue in degrees, `[0, 360)`.
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

pub fn rgb_to_hsv(rgb: [u8; 3]) -> Hsv {
    let r = rgb[0] as f64 / 255.0;
    let g = rgb[1] as f64 / 255.0;
    let b = rgb[2] as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    Hsv {
        h: if h >= 360.0 { h - 360.0 } else { h },
        s,
        v: max,
    }
}

/// An HSV raster.
#[derive(Debug, Clone)]
pub struct HsvImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Hsv>,
}

impl HsvImage {
    pub fn from_rgb(frame: &RgbImage) -> Self {
        Self {
            width: frame.width(),
            height: frame.height(),
            pixels: frame.pixels().map(|p| rgb_to_hsv(p.0)).collect(),
        }
    }
}

/// 3-D likelihood histogram over (H, S, V), values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorHistogram {
    bin_counts: [usize; 3],
    #[serde(rename = "bins")]
    values: Vec<f64>,
}

impl ColorHistogram {
    pub fn empty(bin_counts: [usize; 3]) -> Self {
        let n = bin_counts.iter().product();
        Self {
            bin_counts,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(bin_counts: [usize; 3], values: Vec<f64>) -> Result<Self, SegmentError> {
        let h = Self { bin_counts, values };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<(), SegmentError> {
        if self.bin_counts.iter().any(|&c| c == 0) {
            return Err(SegmentError::InvalidHistogram("zero bin count".into()));
        }
        let n: usize = self.bin_counts.iter().product();
        if self.values.len() != n {
            return Err(SegmentError::InvalidHistogram(format!(
                "expected {n} bins, found {}",
                self.values.len()
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SegmentError::InvalidHistogram(format!("bin value {v} outside [0,1]")));
        }
        Ok(())
    }

    pub fn bin_counts(&self) -> [usize; 3] {
        self.bin_counts
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bin_of(&self, hsv: Hsv) -> usize {
        let [nh, ns, nv] = self.bin_counts;
        let q = |x: f64, n: usize| ((x * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
        let h = q(hsv.h / 360.0, nh);
        let s = q(hsv.s, ns);
        let v = q(hsv.v, nv);
        (h * ns + s) * nv + v
    }

    #[inline]
    pub fn score(&self, hsv: Hsv) -> f64 {
        self.values[self.bin_of(hsv)]
    }

    fn normalize_max(&mut self) {
        let max = self.values.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            for v in &mut self.values {
                *v /= max;
            }
        }
    }
}

/// Accumulates the HSV bins of mask-true pixels over all snapshots and
/// max-normalizes the result.
pub fn train_histogram(
    snapshots: &[(RgbImage, BinaryMask)],
    bin_counts: [usize; 3],
) -> Result<ColorHistogram, SegmentError> {
    let mut hist = ColorHistogram::empty(bin_counts);
    hist.validate()?;
    let mut total = 0usize;
    for (index, (frame, mask)) in snapshots.iter().enumerate() {
        check_size(index, frame, mask)?;
        for (x, y) in mask.foreground() {
            let bin = hist.bin_of(rgb_to_hsv(frame.get_pixel(x, y).0));
            hist.values[bin] += 1.0;
            total += 1;
        }
    }
    if total == 0 {
        return Err(SegmentError::NoForeground);
    }
    hist.normalize_max();
    Ok(hist)
}

fn check_size(index: usize, frame: &RgbImage, mask: &BinaryMask) -> Result<(), SegmentError> {
    if frame.width() != mask.width() || frame.height() != mask.height() {
        return Err(SegmentError::SizeMismatch {
            index,
            frame_w: frame.width(),
            frame_h: frame.height(),
            mask_w: mask.width(),
            mask_h: mask.height(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GloveModel {
    #[serde(flatten)]
    pub histogram: ColorHistogram,
    pub t_low: f64,
    pub t_high: f64,
}

impl GloveModel {
    pub fn new(histogram: ColorHistogram, t_low: f64, t_high: f64) -> Result<Self, SegmentError> {
        let m = Self {
            histogram,
            t_low,
            t_high,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), SegmentError> {
        self.histogram.validate()?;
        if !(0.0 <= self.t_low && self.t_low <= self.t_high && self.t_high <= 1.0) {
            return Err(SegmentError::InvalidThresholds {
                t_low: self.t_low,
                t_high: self.t_high,
            });
        }
        Ok(())
    }

    /// Hysteresis segmentation followed by largest-component selection.
    pub fn segment(&self, hsv: &HsvImage) -> BinaryMask {
        let scores: Vec<f64> = hsv.pixels.iter().map(|&p| self.histogram.score(p)).collect();
        let seeds: Vec<bool> = scores.iter().map(|&s| s >= self.t_high).collect();
        let cand: Vec<bool> = scores.iter().map(|&s| s >= self.t_low).collect();
        let kept = hysteresis(&seeds, &cand, hsv.width, hsv.height);
        BinaryMask::from_bits(hsv.width, hsv.height, kept).largest_component()
    }
}

/// Left and right glove models, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlovePair {
    pub left: GloveModel,
    pub right: GloveModel,
}

/// Returns (left mask, right mask). Either may be empty when the hand is absent.
pub fn segment_frame(frame: &RgbImage, left: &GloveModel, right: &GloveModel) -> (BinaryMask, BinaryMask) {
    let hsv = HsvImage::from_rgb(frame);
    (left.segment(&hsv), right.segment(&hsv))
}

/// Fallback face locator: bounding box of the largest skin-scored component.
pub fn detect_face(frame: &RgbImage, skin: &GloveModel) -> Option<FaceBox> {
    let mask = skin.segment(&HsvImage::from_rgb(frame));
    let b = mask.bounds()?;
    Some(FaceBox::new(b.x_min, b.y_min, b.width(), b.height()))
}

/// Pixels with optional ground truth. Unlabeled pixels neither count towards
/// the error nor conduct connectivity.
#[derive(Debug, Clone)]
pub struct LabeledFrame {
    pub width: u32,
    pub height: u32,
    pub hsv: Vec<Hsv>,
    pub truth: Vec<Option<bool>>,
}

impl LabeledFrame {
    pub fn from_snapshot(frame: &RgbImage, mask: &BinaryMask) -> Result<Self, SegmentError> {
        check_size(0, frame, mask)?;
        Ok(Self {
            width: frame.width(),
            height: frame.height(),
            hsv: frame.pixels().map(|p| rgb_to_hsv(p.0)).collect(),
            truth: mask.bits().iter().map(|&b| Some(b)).collect(),
        })
    }

    /// Spatially isolated pixels: each one is its own component, so
    /// hysteresis reduces to seeding at `t_high`.
    pub fn isolated(pixels: &[(Hsv, bool)]) -> Self {
        let n = pixels.len();
        let width = (2 * n).saturating_sub(1) as u32;
        let spacer = Hsv { h: 0.0, s: 0.0, v: 0.0 };
        let mut hsv = Vec::with_capacity(width as usize);
        let mut truth = Vec::with_capacity(width as usize);
        for (i, &(p, g)) in pixels.iter().enumerate() {
            if i > 0 {
                hsv.push(spacer);
                truth.push(None);
            }
            hsv.push(p);
            truth.push(Some(g));
        }
        Self {
            width,
            height: if n == 0 { 0 } else { 1 },
            hsv,
            truth,
        }
    }
}

/// Which histogram scores define the search window `[mu - delta, mu + delta]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPopulation {
    /// Mean and standard deviation of the scores of labeled glove pixels.
    #[default]
    GlovePixels,
    /// Mean and standard deviation of the non-zero histogram bins.
    NonzeroBins,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearch {
    pub population: WindowPopulation,
    /// Number of evenly spaced candidates across the window (endpoints included).
    pub grid_steps: usize,
}

impl Default for ThresholdSearch {
    fn default() -> Self {
        Self {
            population: WindowPopulation::GlovePixels,
            grid_steps: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdFit {
    pub t_low: f64,
    pub t_high: f64,
    pub misses: usize,
    pub false_alarms: usize,
    pub mu: f64,
    pub delta: f64,
}

impl ThresholdFit {
    pub fn total_error(&self) -> usize {
        self.misses + self.false_alarms
    }
}

/// Candidate threshold values spanning `[mu - delta, mu + delta]` clipped to `[0, 1]`.
pub fn candidate_grid(mu: f64, delta: f64, steps: usize) -> Vec<f64> {
    let lo = (mu - delta).clamp(0.0, 1.0);
    let hi = (mu + delta).clamp(0.0, 1.0);
    if steps <= 1 || hi <= lo {
        return vec![lo];
    }
    (0..steps)
        .map(|i| {
            if i + 1 == steps {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (steps - 1) as f64
            }
        })
        .collect()
}

#[derive(PartialEq)]
struct Widest(f64, usize);

impl Eq for Widest {}

impl PartialOrd for Widest {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Widest {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

/// For every pixel, the best achievable minimum score along an 8-connected
/// path of labeled pixels from any seed (score >= `t_high`). A pixel survives
/// hysteresis at `t_low` exactly when this value is >= `t_low`.
fn bottleneck_from_seeds(frame: &LabeledFrame, scores: &[f64], t_high: f64) -> Vec<f64> {
    let w = frame.width as i64;
    let h = frame.height as i64;
    let mut best = vec![f64::NEG_INFINITY; scores.len()];
    let mut heap = BinaryHeap::new();
    for (i, &s) in scores.iter().enumerate() {
        if frame.truth[i].is_some() && s >= t_high {
            best[i] = s;
            heap.push(Widest(s, i));
        }
    }
    while let Some(Widest(v, i)) = heap.pop() {
        if v < best[i] {
            continue;
        }
        let (x, y) = ((i as i64) % w, (i as i64) / w);
        for &(dx, dy) in neighbours_8() {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                continue;
            }
            let j = (ny * w + nx) as usize;
            if frame.truth[j].is_none() {
                continue;
            }
            let cand = v.min(scores[j]);
            if cand > best[j] {
                best[j] = cand;
                heap.push(Widest(cand, j));
            }
        }
    }
    best
}

fn mean_std(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = xs.collect();
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Grid search for the (t_low, t_high) pair minimizing misses + false alarms
/// after hysteresis segmentation of the labeled pixels. Ties prefer the larger
/// t_high, then the larger t_low.
pub fn fit_thresholds(
    histogram: &ColorHistogram,
    samples: &[LabeledFrame],
    search: &ThresholdSearch,
) -> Result<ThresholdFit, SegmentError> {
    let scores: Vec<Vec<f64>> = samples
        .iter()
        .map(|f| f.hsv.iter().map(|&p| histogram.score(p)).collect())
        .collect();

    let labeled = || {
        samples
            .iter()
            .zip(&scores)
            .flat_map(|(f, s)| f.truth.iter().zip(s).filter_map(|(t, &v)| t.map(|t| (t, v))))
    };
    let n_glove = labeled().filter(|(t, _)| *t).count();
    let n_bg = labeled().filter(|(t, _)| !*t).count();
    if n_glove == 0 || n_bg == 0 {
        return Err(SegmentError::SingleClass);
    }

    let (mu, delta) = match search.population {
        WindowPopulation::GlovePixels => mean_std(labeled().filter(|(t, _)| *t).map(|(_, v)| v)),
        WindowPopulation::NonzeroBins => {
            mean_std(histogram.values().iter().cloned().filter(|&v| v > 0.0))
        }
    };
    let grid = candidate_grid(mu, delta, search.grid_steps);

    let mut best: Option<ThresholdFit> = None;
    for &t_high in &grid {
        let mut glove_b = Vec::with_capacity(n_glove);
        let mut bg_b = Vec::with_capacity(n_bg);
        for (frame, s) in samples.iter().zip(&scores) {
            let b = bottleneck_from_seeds(frame, s, t_high);
            for (t, v) in frame.truth.iter().zip(b) {
                match t {
                    Some(true) => glove_b.push(v),
                    Some(false) => bg_b.push(v),
                    None => {}
                }
            }
        }
        glove_b.sort_by(f64::total_cmp);
        bg_b.sort_by(f64::total_cmp);
        for &t_low in grid.iter().filter(|&&t| t <= t_high) {
            // retained iff bottleneck >= t_low
            let misses = glove_b.partition_point(|&v| v < t_low);
            let false_alarms = bg_b.len() - bg_b.partition_point(|&v| v < t_low);
            let fit = ThresholdFit {
                t_low,
                t_high,
                misses,
                false_alarms,
                mu,
                delta,
            };
            let better = match &best {
                None => true,
                Some(b) => match fit.total_error().cmp(&b.total_error()) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => (t_high, t_low) > (b.t_high, b.t_low),
                },
            };
            if better {
                best = Some(fit);
            }
        }
    }
    Ok(best.expect("grid is never empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn hsv_reference_colors() {
        let red = rgb_to_hsv([255, 0, 0]);
        assert_eq!((red.h, red.s, red.v), (0.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv([128, 128, 128]).s, 0.0);
        assert_eq!(rgb_to_hsv([0, 0, 255]).h, 240.0);
        assert_eq!(rgb_to_hsv([0, 255, 0]).h, 120.0);
        let magenta = rgb_to_hsv([255, 0, 128]);
        assert!(magenta.h > 300.0 && magenta.h < 360.0);
    }

    #[test]
    fn single_bin_snapshot_gives_unit_bin() {
        let frame = RgbImage::from_pixel(4, 4, Rgb([200, 10, 10]));
        let mask = BinaryMask::from_fn(4, 4, |x, _| x < 2);
        let hist = train_histogram(&[(frame, mask)], DEFAULT_BINS).unwrap();
        let bin = hist.bin_of(rgb_to_hsv([200, 10, 10]));
        assert_eq!(hist.values()[bin], 1.0);
        assert_eq!(hist.values().iter().filter(|&&v| v > 0.0).count(), 1);
    }

    #[test]
    fn two_snapshots_three_to_one() {
        // 3 pixels of red in one snapshot, 1 pixel of blue in the other
        let red = RgbImage::from_pixel(3, 1, Rgb([255, 0, 0]));
        let blue = RgbImage::from_pixel(3, 1, Rgb([0, 0, 255]));
        let all = BinaryMask::from_fn(3, 1, |_, _| true);
        let one = BinaryMask::from_fn(3, 1, |x, _| x == 0);
        let hist = train_histogram(&[(red, all), (blue, one)], DEFAULT_BINS).unwrap();
        assert_eq!(hist.score(rgb_to_hsv([255, 0, 0])), 1.0);
        assert!((hist.score(rgb_to_hsv([0, 0, 255])) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_masks_rejected() {
        let frame = RgbImage::new(2, 2);
        let mask = BinaryMask::new(2, 2);
        assert_eq!(train_histogram(&[(frame, mask)], DEFAULT_BINS), Err(SegmentError::NoForeground));
        assert_eq!(train_histogram(&[], DEFAULT_BINS), Err(SegmentError::NoForeground));
    }

    #[test]
    fn candidate_window_is_confined() {
        let g = candidate_grid(0.5, 0.2, 41);
        assert_eq!(g.len(), 41);
        assert!((g[0] - 0.3).abs() < 1e-12);
        assert_eq!(*g.last().unwrap(), 0.7);
        assert!(g.iter().all(|&t| (0.3 - 1e-12..=0.7).contains(&t)));
    }

    #[test]
    fn single_class_rejected() {
        let hist = ColorHistogram::empty(DEFAULT_BINS);
        let px = rgb_to_hsv([1, 2, 3]);
        let frame = LabeledFrame::isolated(&[(px, true), (px, true)]);
        assert_eq!(
            fit_thresholds(&hist, &[frame], &ThresholdSearch::default()),
            Err(SegmentError::SingleClass)
        );
    }

    #[test]
    fn invalid_thresholds_rejected() {
        let hist = ColorHistogram::empty([2, 2, 2]);
        assert!(GloveModel::new(hist.clone(), 0.6, 0.4).is_err());
        assert!(GloveModel::new(hist, 0.4, 0.6).is_ok());
    }
}
