use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignEntry {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub manual: String,
    #[serde(default)]
    pub nonmanual: String,
    /// Signs sharing a manual form share a group.
    pub group: String,
    /// Reference clip file name, relative to the clip directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignCatalog {
    pub signs: Vec<SignEntry>,
}

const DEMO_CATALOG: &str = include_str!("../../assets/asl_demo_catalog.json");

impl SignCatalog {
    pub fn new(signs: Vec<SignEntry>) -> Result<Self, IngestError> {
        let c = Self { signs };
        c.validate()?;
        Ok(c)
    }

    /// The 19-sign ASL demo catalog.
    pub fn demo() -> Self {
        serde_json::from_str(DEMO_CATALOG).expect("bundled catalog is valid")
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        let c: Self = serde_json::from_str(&text).map_err(IngestError::sidecar)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let mut seen = BTreeSet::new();
        for s in &self.signs {
            if s.id.is_empty() || s.group.is_empty() {
                return Err(IngestError::InvalidCatalog("empty id or group".into()));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(IngestError::InvalidCatalog(format!("duplicate id {:?}", s.id)));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&SignEntry> {
        self.signs.iter().find(|s| s.id == id)
    }

    pub fn group_of(&self, id: &str) -> Option<&str> {
        self.get(id).map(|s| s.group.as_str())
    }

    pub fn groups(&self) -> BTreeSet<&str> {
        self.signs.iter().map(|s| s.group.as_str()).collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.signs.iter().map(|s| s.id.as_str())
    }
}
