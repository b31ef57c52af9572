//! Loading recorded sequences, feature files and sign catalogs, and
//! generating labeled synthetic datasets.

mod catalog;
mod feature_file;
mod synthetic;

use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{SignCatalog, SignEntry};
pub use feature_file::{
    load_feature_sequences, read_feature_sequences, write_feature_sequences, LabeledSequence,
};
pub use synthetic::{
    generate_synthetic, Curve, HandTemplate, HeadPattern, NoiseSpec, SyntheticDataset,
    SyntheticSpec,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("frame {index}: missing from sequence directory")]
    MissingFrame { index: usize },
    #[error("frame {index}: size {found_w}x{found_h} differs from {expected_w}x{expected_h}")]
    FrameSize {
        index: usize,
        expected_w: u32,
        expected_h: u32,
        found_w: u32,
        found_h: u32,
    },
    #[error("frame {index}: {source}")]
    Image {
        index: usize,
        #[source]
        source: image::ImageError,
    },
    #[error("sidecar line {line}, column {column}: {message}")]
    Sidecar {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("feature file row {row}: {message}")]
    FeatureRow { row: u64, message: String },
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn sidecar(err: serde_json::Error) -> Self {
        Self::Sidecar {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

/// Axis-aligned rectangle in pixels. Serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct FaceBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl From<[u32; 4]> for FaceBox {
    fn from(v: [u32; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<FaceBox> for [u32; 4] {
    fn from(b: FaceBox) -> Self {
        [b.x, b.y, b.width, b.height]
    }
}

impl FaceBox {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    /// Center in pixel-index coordinates (the CoM of the filled box).
    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + (self.width as f64 - 1.0) / 2.0,
            self.y as f64 + (self.height as f64 - 1.0) / 2.0,
        )
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.x as u64 + self.width as u64 <= width as u64
            && self.y as u64 + self.height as u64 <= height as u64
    }
}

/// Ordered video frames with per-frame face boxes and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<RgbImage>,
    pub fps: f64,
    pub face_boxes: Option<Vec<Option<FaceBox>>>,
    pub label: Option<String>,
    pub subject: Option<String>,
}

impl FrameSequence {
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(IngestError::InvalidSequence(format!("fps must be positive, got {}", self.fps)));
        }
        if let Some(first) = self.frames.first() {
            for (index, f) in self.frames.iter().enumerate() {
                if f.dimensions() != first.dimensions() {
                    return Err(IngestError::FrameSize {
                        index,
                        expected_w: first.width(),
                        expected_h: first.height(),
                        found_w: f.width(),
                        found_h: f.height(),
                    });
                }
            }
        }
        if let Some(boxes) = &self.face_boxes {
            if boxes.len() != self.frames.len() {
                return Err(IngestError::InvalidSequence(format!(
                    "{} face boxes for {} frames",
                    boxes.len(),
                    self.frames.len()
                )));
            }
            let (w, h) = self.frames.first().map(|f| f.dimensions()).unwrap_or((0, 0));
            for (i, b) in boxes.iter().enumerate() {
                if let Some(b) = b {
                    if !b.fits(w, h) {
                        return Err(IngestError::InvalidSequence(format!(
                            "face box of frame {i} exceeds the {w}x{h} image"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn face_box(&self, frame: usize) -> Option<FaceBox> {
        self.face_boxes.as_ref().and_then(|b| b.get(frame).copied().flatten())
    }
}

/// `meta.json` next to the frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub fps: f64,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub subject: Option<String>,
    #[serde(default)]
    pub face_boxes: Option<Vec<Option<FaceBox>>>,
}

pub const META_FILE: &str = "meta.json";

fn frame_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    if digits.len() != 5 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

/// Reads `frame_%05d.png` files plus `meta.json` from a directory.
pub fn load_sequence(dir: &Path) -> Result<FrameSequence, IngestError> {
    let meta_path = dir.join(META_FILE);
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| IngestError::io(&meta_path, e))?;
    let meta: SequenceMeta = serde_json::from_str(&meta_text).map_err(IngestError::sidecar)?;

    let mut indices = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| IngestError::io(dir, e))? {
        let entry = entry.map_err(|e| IngestError::io(dir, e))?;
        if let Some(i) = entry.file_name().to_str().and_then(frame_index) {
            indices.push(i);
        }
    }
    indices.sort_unstable();
    for (expected, &found) in indices.iter().enumerate() {
        if found != expected {
            return Err(IngestError::MissingFrame { index: expected });
        }
    }

    let mut frames: Vec<RgbImage> = Vec::with_capacity(indices.len());
    for index in indices {
        let img = image::open(dir.join(frame_file_name(index)))
            .map_err(|source| IngestError::Image { index, source })?
            .to_rgb8();
        if let Some(first) = frames.first() {
            if img.dimensions() != first.dimensions() {
                return Err(IngestError::FrameSize {
                    index,
                    expected_w: first.width(),
                    expected_h: first.height(),
                    found_w: img.width(),
                    found_h: img.height(),
                });
            }
        }
        frames.push(img);
    }

    let seq = FrameSequence {
        frames,
        fps: meta.fps,
        face_boxes: meta.face_boxes,
        label: meta.label,
        subject: meta.subject,
    };
    seq.validate()?;
    Ok(seq)
}

/// Writes a sequence in the layout read by [`load_sequence`]. PNG is lossless.
pub fn save_sequence(seq: &FrameSequence, dir: &Path) -> Result<(), IngestError> {
    seq.validate()?;
    fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    for (index, frame) in seq.frames.iter().enumerate() {
        frame
            .save(dir.join(frame_file_name(index)))
            .map_err(|source| IngestError::Image { index, source })?;
    }
    let meta = SequenceMeta {
        fps: seq.fps,
        label: seq.label.clone(),
        subject: seq.subject.clone(),
        face_boxes: seq.face_boxes.clone(),
    };
    let path = dir.join(META_FILE);
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&path, text).map_err(|e| IngestError::io(&path, e))
}
