//! Fixtures shared by the CLI, service and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use signtutor_cli::recognize::Recognizer;
use signtutor_core::fusion::train_banks;
use signtutor_core::glove::{fit_thresholds, train_histogram, GloveModel, GlovePair, LabeledFrame, ThresholdSearch, DEFAULT_BINS};
use signtutor_core::ingest::{generate_synthetic, save_sequence, FaceBox, NoiseSpec, SyntheticDataset, SyntheticSpec};
use signtutor_core::pipeline::{PipelineConfig, VisionModels};
use signtutor_core::{BinaryMask, ClusterMap, FrameSequence, TrainConfig};

use crate::common::{smoke_clip, SmokeClip};

pub fn signtutor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_signtutor"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// 2 groups × 2 variants: small enough to train in well under a second.
pub fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        n_groups: 2,
        variants_per_group: 2,
        repetitions: 12,
        subjects: 4,
        frames: 30,
        noise: NoiseSpec {
            position: 1.0,
            velocity: 0.5,
            head_energy: 0.005,
            head_velocity: 0.003,
            ..NoiseSpec::zero()
        },
        ..SyntheticSpec::acceptance()
    }
}

pub fn small_train() -> TrainConfig {
    TrainConfig {
        n_states: 3,
        max_iters: 15,
        ..TrainConfig::default()
    }
}

/// Group-level confusability, as a manual-dominant model produces it.
pub fn group_clusters(d: &SyntheticDataset) -> ClusterMap {
    let mut by_group: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for s in &d.catalog.signs {
        by_group.entry(s.group.clone()).or_default().push(s.id.clone());
    }
    let mut clusters = BTreeMap::new();
    for s in &d.catalog.signs {
        clusters.insert(s.id.clone(), by_group[&s.group].clone());
    }
    ClusterMap { clusters }
}

pub struct Fixture {
    pub data: SyntheticDataset,
    pub recognizer: Recognizer,
}

/// Banks trained on the small dataset, group clusters and glove models for
/// the smoke clip.
pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let data = generate_synthetic(&small_spec()).unwrap();
        let refs: Vec<_> = data.sequences.iter().collect();
        let banks = train_banks(&refs, &small_train()).unwrap();
        let recognizer = Recognizer {
            clusters: group_clusters(&data),
            banks,
            vision: Some(smoke_vision()),
            pipeline: PipelineConfig::default(),
        };
        Fixture { data, recognizer }
    })
}

pub fn seq_text(d: &SyntheticDataset, label: &str) -> String {
    let s = d.sequences.iter().find(|s| s.label == label).unwrap();
    let mut buf = Vec::new();
    signtutor_core::ingest::write_feature_sequences(&mut buf, &d.layout, std::slice::from_ref(s)).unwrap();
    String::from_utf8(buf).unwrap()
}

// ---------- vision fixtures ----------

pub const SNAPSHOT_FRAMES: [usize; 3] = [0, 20, 40];

pub fn disk(clip: &SmokeClip, t: usize, c: (f64, f64)) -> BinaryMask {
    let (w, h) = clip.frames[t].dimensions();
    let r = clip.radius;
    BinaryMask::from_fn(w, h, |x, y| (x as f64 - c.0).powi(2) + (y as f64 - c.1).powi(2) <= r * r)
}

fn glove(clip: &SmokeClip, centres: &[(f64, f64)]) -> GloveModel {
    let snaps: Vec<_> = SNAPSHOT_FRAMES
        .into_iter()
        .map(|t| (clip.frames[t].clone(), disk(clip, t, centres[t])))
        .collect();
    let hist = train_histogram(&snaps, DEFAULT_BINS).unwrap();
    let labeled: Vec<_> = snaps.iter().map(|(f, m)| LabeledFrame::from_snapshot(f, m).unwrap()).collect();
    let fit = fit_thresholds(&hist, &labeled, &ThresholdSearch::default()).unwrap();
    GloveModel::new(hist, fit.t_low, fit.t_high).unwrap()
}

pub fn smoke_vision() -> VisionModels {
    let clip = smoke_clip(60);
    VisionModels {
        gloves: GlovePair {
            left: glove(&clip, &clip.left),
            right: glove(&clip, &clip.right),
        },
        skin: None,
        library: None,
    }
}

pub fn clip_sequence(clip: &SmokeClip, label: &str) -> FrameSequence {
    FrameSequence {
        frames: clip.frames.clone(),
        fps: 30.0,
        face_boxes: Some(clip.face_boxes.iter().map(|b| Some(FaceBox::new(b[0], b[1], b[2], b[3]))).collect()),
        label: Some(label.to_string()),
        subject: None,
    }
}

/// `frame_/left_/right_NNNNN.png` snapshots for `train-gloves`.
pub fn write_snapshots(dir: &Path, clip: &SmokeClip) {
    std::fs::create_dir_all(dir).unwrap();
    for (i, t) in SNAPSHOT_FRAMES.into_iter().enumerate() {
        clip.frames[t].save(dir.join(format!("frame_{i:05}.png"))).unwrap();
        disk(clip, t, clip.left[t]).to_gray().save(dir.join(format!("left_{i:05}.png"))).unwrap();
        disk(clip, t, clip.right[t]).to_gray().save(dir.join(format!("right_{i:05}.png"))).unwrap();
    }
}

pub fn write_clip(dir: &Path, clip: &SmokeClip, label: &str) -> PathBuf {
    save_sequence(&clip_sequence(clip, label), dir).unwrap();
    dir.to_path_buf()
}

/// Tar archive of a sequence directory wrapped in one top-level folder.
pub fn tar_dir(dir: &Path) -> Vec<u8> {
    let mut b = tar::Builder::new(Vec::new());
    b.append_dir_all("attempt", dir).unwrap();
    b.into_inner().unwrap()
}

// ---------- HTTP ----------

pub const BOUNDARY: &str = "signtutor-test-boundary";

pub fn multipart(fields: &[(&str, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, data) in fields {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        body.extend_from_slice(
            format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{name}\"\r\n").as_bytes(),
        );
        body.extend_from_slice(b"Content-Type: application/octet-stream\r\n\r\n");
        body.extend_from_slice(data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}
