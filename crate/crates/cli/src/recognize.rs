//! One attempt in, one verdict out. Shared by `signtutor recognize` and the service.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use signtutor_core::features::AssemblyConfig;
use signtutor_core::ingest::{load_sequence, read_feature_sequences};
use signtutor_core::pipeline::{run_pipeline, PipelineConfig, VisionModels};
use signtutor_core::tutor::{assess, ReplayData};
use signtutor_core::{ClusterMap, FeatureSequence, FusionDecision, ModalityGroup, ModelBanks, Verdict};

use crate::models::ModelDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Features,
    Frames,
}

/// Raw attempt payload as uploaded.
#[derive(Debug, Clone)]
pub enum AttemptInput {
    /// Feature file text; the first sequence is used.
    Features(String),
    /// Tar archive of a sequence directory (`frame_%05d.png` + `meta.json`).
    FramesArchive(Vec<u8>),
}

impl AttemptInput {
    pub fn kind(&self) -> InputKind {
        match self {
            AttemptInput::Features(_) => InputKind::Features,
            AttemptInput::FramesArchive(_) => InputKind::Frames,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<FusionDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay: Option<ReplayData>,
    /// Why the attempt could not be analysed, if it could not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl Outcome {
    pub fn failure(diagnostic: String) -> Self {
        Self {
            verdict: Verdict::failure(&diagnostic),
            decision: None,
            replay: None,
            diagnostic: Some(diagnostic),
        }
    }
}

/// Read-only model state; safe to share between concurrent attempts.
#[derive(Debug, Clone)]
pub struct Recognizer {
    pub banks: ModelBanks,
    pub clusters: ClusterMap,
    pub vision: Option<VisionModels>,
    pub pipeline: PipelineConfig,
}

impl From<ModelDir> for Recognizer {
    fn from(m: ModelDir) -> Self {
        Self {
            banks: m.banks,
            clusters: m.clusters,
            vision: m.vision,
            pipeline: m.pipeline,
        }
    }
}

impl Recognizer {
    pub fn knows(&self, target: &str) -> bool {
        self.banks.combined.index_of(target).is_some()
    }

    /// Features from a sequence directory via the full vision pipeline.
    pub fn extract_frames(&self, dir: &Path) -> Result<FeatureSequence, String> {
        let vision = self.vision.as_ref().ok_or("no vision models loaded; only feature files can be recognized")?;
        let layout = self.banks.combined_layout().map_err(|e| e.to_string())?;
        let assembly = AssemblyConfig::for_layout(&layout, ModalityGroup::Combined)
            .ok_or("model layout cannot be produced by the vision pipeline")?;
        let cfg = PipelineConfig {
            assembly: AssemblyConfig {
                shape_ranges: self.pipeline.assembly.shape_ranges.clone(),
                ..assembly
            },
            ..self.pipeline.clone()
        };
        let seq = load_sequence(dir).map_err(|e| e.to_string())?;
        let out = run_pipeline(&seq, vision, &cfg, ModalityGroup::Combined).map_err(|e| e.to_string())?;
        Ok(out.features)
    }

    fn features(&self, input: &AttemptInput) -> Result<FeatureSequence, String> {
        match input {
            AttemptInput::Features(text) => read_feature_sequences(text)
                .map_err(|e| e.to_string())?
                .into_iter()
                .next()
                .map(|s| s.features)
                .ok_or_else(|| "feature file contains no sequence".to_string()),
            AttemptInput::FramesArchive(bytes) => {
                let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
                unpack(bytes.as_slice(), dir.path())?;
                self.extract_frames(&sequence_root(dir.path()))
            }
        }
    }

    /// Never fails: anything that goes wrong becomes a FALSE verdict with a diagnostic.
    pub fn recognize_features(&self, target: &str, seq: &FeatureSequence) -> Outcome {
        match assess(&self.banks, &self.clusters, target, seq) {
            Ok(a) => Outcome {
                verdict: a.verdict,
                decision: Some(a.decision),
                replay: Some(ReplayData::from_features(seq)),
                diagnostic: None,
            },
            Err(e) => Outcome::failure(e.to_string()),
        }
    }

    pub fn recognize(&self, target: &str, input: &AttemptInput) -> Outcome {
        match self.features(input) {
            Ok(seq) => self.recognize_features(target, &seq),
            Err(e) => Outcome::failure(e),
        }
    }
}


fn unpack(archive: impl Read, dest: &Path) -> Result<(), String> {
    // tar refuses entries that would escape `dest`
    tar::Archive::new(archive)
        .unpack(dest)
        .map_err(|e| format!("unreadable frames archive: {e}"))
}

/// Archives may wrap the sequence in a single top-level directory.
fn sequence_root(dir: &Path) -> std::path::PathBuf {
    if dir.join("meta.json").exists() {
        return dir.to_path_buf();
    }
    let subdirs: Vec<_> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter(|e| e.path().is_dir())
        .collect();
    match subdirs.as_slice() {
        [only] => only.path(),
        _ => dir.to_path_buf(),
    }
}
