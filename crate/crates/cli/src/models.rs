//! On-disk layout of a trained model directory and a generated data directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use signtutor_core::fusion::Split;
use signtutor_core::pipeline::{PipelineConfig, VisionModels};
use signtutor_core::{ClusterMap, ModelBanks, TemplateLibrary};

pub const BANKS_FILE: &str = "banks.json";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const SPLIT_FILE: &str = "split.json";
pub const VISION_FILE: &str = "vision.json";
pub const LIBRARY_FILE: &str = "library.json";
pub const PIPELINE_FILE: &str = "pipeline.json";

pub const FEATURES_FILE: &str = "features.csv";
pub const SUBJECTS_FILE: &str = "subjects.json";
pub const CATALOG_FILE: &str = "catalog.json";
pub const SPEC_FILE: &str = "spec.json";

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_optional<T: DeserializeOwned>(path: PathBuf) -> Result<Option<T>> {
    if path.exists() {
        read_json(&path).map(Some)
    } else {
        Ok(None)
    }
}

/// Everything `train` writes plus the optional vision front end.
#[derive(Debug, Clone)]
pub struct ModelDir {
    pub banks: ModelBanks,
    pub clusters: ClusterMap,
    pub split: Option<Split>,
    pub vision: Option<VisionModels>,
    pub pipeline: PipelineConfig,
}

impl ModelDir {
    pub fn load(dir: &Path) -> Result<Self> {
        let banks_path = dir.join(BANKS_FILE);
        if !banks_path.exists() {
            bail!("no trained models in {} (missing {BANKS_FILE}); run `signtutor train` first", dir.display());
        }
        let text = fs::read_to_string(&banks_path).with_context(|| format!("reading {}", banks_path.display()))?;
        let banks = ModelBanks::from_json(&text).with_context(|| format!("loading {}", banks_path.display()))?;
        let clusters = read_optional(dir.join(CLUSTERS_FILE))?.unwrap_or_else(|| ClusterMap::singletons(banks.ids()));
        for id in banks.ids() {
            clusters.cluster(id).with_context(|| format!("{CLUSTERS_FILE} does not cover {id}"))?;
        }
        let mut vision: Option<VisionModels> = read_optional(dir.join(VISION_FILE))?;
        if let Some(lib) = read_optional::<TemplateLibrary>(dir.join(LIBRARY_FILE))? {
            lib.validate()?;
            if let Some(v) = vision.as_mut() {
                v.library = Some(lib);
            }
        }
        Ok(Self {
            banks,
            clusters,
            split: read_optional(dir.join(SPLIT_FILE))?,
            vision,
            pipeline: read_optional(dir.join(PIPELINE_FILE))?.unwrap_or_default(),
        })
    }
}
