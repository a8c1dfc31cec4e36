//! Per-object manifest. Paths on disk are relative to the manifest's directory
//! when possible; in memory they are resolved. Unknown fields survive a round trip.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::kinematics::Normalization;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartEntry {
    pub link: String,
    pub obj: PathBuf,
    /// Source OBJ basenames merged into this part.
    #[serde(default)]
    pub sources: Vec<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl PartEntry {
    pub fn new(link: String, obj: PathBuf, sources: Vec<String>) -> Self {
        Self {
            link,
            obj,
            sources,
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub object_id: String,
    #[serde(default)]
    pub urdf: Option<PathBuf>,
    #[serde(default)]
    pub parts: Vec<PartEntry>,
    /// Reference-pose normalization.
    #[serde(default)]
    pub normalization: Option<Normalization>,
    /// Joint values per pose mode.
    #[serde(default)]
    pub poses: BTreeMap<String, BTreeMap<String, f64>>,
    /// Unix seconds at which each stage last wrote the manifest.
    #[serde(default)]
    pub provenance: BTreeMap<String, u64>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Manifest {
    pub fn new(object_id: impl Into<String>) -> Self {
        Self {
            object_id: object_id.into(),
            urdf: None,
            parts: Vec::new(),
            normalization: None,
            poses: BTreeMap::new(),
            provenance: BTreeMap::new(),
            extra: Map::new(),
        }
    }

    pub fn stamp(&mut self, stage: &str) {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        self.provenance.insert(stage.to_string(), now);
    }

    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut m: Manifest =
            serde_json::from_str(text).map_err(|e| Error::Argument(format!("invalid manifest: {e}")))?;
        m.map_paths(|p| base.join(p));
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &super::manifest_dir(path))
    }

    /// Serialize with paths made relative to `base` where they lie beneath it.
    pub fn to_json(&self, base: &Path) -> String {
        let mut m = self.clone();
        let base_abs = absolute(base);
        m.map_paths(|p| {
            let abs = absolute(p);
            abs.strip_prefix(&base_abs).map(Path::to_path_buf).unwrap_or(abs)
        });
        serde_json::to_string_pretty(&m).expect("manifest serializes")
    }

    /// Write to `path`; every referenced file must exist.
    pub fn write(&self, path: &Path, base: &Path) -> Result<()> {
        for p in self.parts.iter().map(|p| &p.obj).chain(self.urdf.iter()) {
            if !p.exists() {
                return Err(Error::Processing(format!("manifest references missing file {}", p.display())));
            }
        }
        std::fs::write(path, self.to_json(base)).map_err(|e| Error::io(path, e))
    }

    fn map_paths(&mut self, f: impl Fn(&Path) -> PathBuf) {
        if let Some(u) = &self.urdf {
            self.urdf = Some(f(u));
        }
        for p in &mut self.parts {
            p.obj = f(&p.obj);
        }
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p)
        .or_else(|_| std::path::absolute(p))
        .unwrap_or_else(|_| p.to_path_buf())
}
