//! Deterministic inputs for the benchmarks.

use image::{Rgb, RgbImage};
use signtutor_core::fusion::{train_banks, ModelBanks};
use signtutor_core::glove::{fit_thresholds, train_histogram, GloveModel, GlovePair, LabeledFrame, ThresholdSearch, DEFAULT_BINS};
use signtutor_core::ingest::{generate_synthetic, SyntheticDataset, SyntheticSpec};
use signtutor_core::{BinaryMask, ClusterMap, TrainConfig};

pub const WIDTH: u32 = 320;
pub const HEIGHT: u32 = 240;
const LEFT: [u8; 3] = [220, 30, 40];
const RIGHT: [u8; 3] = [30, 60, 220];

fn centres(t: usize) -> [(f64, f64); 2] {
    let s = t as f64 * 0.05;
    [(90.0 + 40.0 * s.sin(), 150.0 - 30.0 * s.cos()), (230.0 - 40.0 * s.cos(), 140.0 + 25.0 * s.sin())]
}

fn disk(c: (f64, f64), r: f64) -> BinaryMask {
    BinaryMask::from_fn(WIDTH, HEIGHT, |x, y| (x as f64 - c.0).powi(2) + (y as f64 - c.1).powi(2) <= r * r)
}

/// Two glove blobs on a textured green background; frame `t` of a loop.
pub fn frame(t: usize) -> RgbImage {
    let [l, r] = centres(t);
    let (dl, dr) = (disk(l, 14.0), disk(r, 14.0));
    RgbImage::from_fn(WIDTH, HEIGHT, |x, y| {
        if dl.get(x, y) {
            Rgb(LEFT)
        } else if dr.get(x, y) {
            Rgb(RIGHT)
        } else {
            let n = ((x * 7 + y * 13) % 23) as u8;
            Rgb([60 + n, 130 + n, 60 + n])
        }
    })
}

pub fn gloves() -> GlovePair {
    let fit = |hand: usize| {
        let snaps: Vec<_> = [0, 10, 20].into_iter().map(|t| (frame(t), disk(centres(t)[hand], 14.0))).collect();
        let hist = train_histogram(&snaps, DEFAULT_BINS).expect("histogram");
        let labeled: Vec<_> = snaps.iter().map(|(f, m)| LabeledFrame::from_snapshot(f, m).expect("snapshot")).collect();
        let th = fit_thresholds(&hist, &labeled, &ThresholdSearch::default()).expect("thresholds");
        GloveModel::new(hist, th.t_low, th.t_high).expect("model")
    };
    GlovePair { left: fit(0), right: fit(1) }
}

pub fn hand_blob() -> BinaryMask {
    disk((WIDTH as f64 / 2.0, HEIGHT as f64 / 2.0), 30.0)
}

pub struct TrainedSet {
    pub data: SyntheticDataset,
    pub banks: ModelBanks,
    pub clusters: ClusterMap,
}

pub fn trained() -> TrainedSet {
    let data = generate_synthetic(&SyntheticSpec::default()).expect("synthetic set");
    let refs: Vec<_> = data.sequences.iter().collect();
    let banks = train_banks(&refs, &TrainConfig::default()).expect("banks");
    let clusters = ClusterMap::singletons(banks.ids());
    TrainedSet { data, banks, clusters }
}
