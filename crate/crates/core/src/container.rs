//! On-disk container: a `manifest.json` next to one little-endian `f64` file
//! per array.
//!
//! ```text
//! {
//!   "format": "mpibench",
//!   "version": 1,
//!   "kind": "raw_dataset",
//!   "arrays": {
//!     "system_rows": { "file": "system_rows.f64", "shape": [1530, 6859],
//!                      "dtype": "<f8", "sha256": "…" }
//!   },
//!   "metadata": { … }
//! }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "mpibench";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DTYPE: &str = "<f8";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayEntry {
    pub file: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub arrays: BTreeMap<String, ArrayEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn encode(values: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn decode(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect()
}

/// Collects arrays and metadata, then writes them in one go.
#[derive(Debug)]
pub struct ContainerWriter {
    kind: String,
    arrays: Vec<(String, Vec<usize>, Vec<u8>)>,
    metadata: serde_json::Value,
}

impl ContainerWriter {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            arrays: Vec::new(),
            metadata: serde_json::Value::Object(Default::default()),
        }
    }

    pub fn array(mut self, name: &str, shape: &[usize], values: &[f64]) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.arrays.push((name.to_string(), shape.to_vec(), encode(values)));
        self
    }

    pub fn metadata(mut self, metadata: serde_json::Value) -> Self {
        self.metadata = metadata;
        self
    }

    /// Writes the container and returns the SHA-256 of the manifest file.
    pub fn write(self, dir: impl AsRef<Path>) -> Result<String> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = BTreeMap::new();
        for (name, shape, bytes) in &self.arrays {
            let file = format!("{name}.f64");
            let path = dir.join(&file);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            entries.insert(
                name.clone(),
                ArrayEntry {
                    file,
                    shape: shape.clone(),
                    dtype: DTYPE.to_string(),
                    sha256: sha256_hex(bytes),
                },
            );
        }
        let manifest = Manifest {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            kind: self.kind,
            arrays: entries,
            metadata: self.metadata,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, text.as_bytes()).map_err(|e| Error::io(&path, e))?;
        Ok(sha256_hex(text.as_bytes()))
    }
}

/// An opened container; arrays are read and verified on demand.
#[derive(Debug, Clone)]
pub struct Container {
    dir: PathBuf,
    pub manifest: Manifest,
}

impl Container {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let raw: serde_json::Value = serde_json::from_slice(&text)?;
        match raw.get("format").and_then(|f| f.as_str()) {
            Some(FORMAT_NAME) => {}
            other => return Err(Error::UnknownFormat(other.unwrap_or("").to_string())),
        }
        let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let manifest: Manifest = serde_json::from_value(raw)?;
        Ok(Self { dir, manifest })
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.manifest.kind == kind {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "container holds {:?}, expected {kind:?}",
                self.manifest.kind
            )))
        }
    }

    pub fn has_array(&self, name: &str) -> bool {
        self.manifest.arrays.contains_key(name)
    }

    pub fn read_array(&self, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        let entry = self
            .manifest
            .arrays
            .get(name)
            .ok_or_else(|| Error::MissingArray { name: name.to_string() })?;
        let path = self.dir.join(&entry.file);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingArray { name: name.to_string() })
            }
            Err(e) => return Err(Error::io(&path, e)),
        };
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::ChecksumMismatch { file: path });
        }
        let expected: usize = entry.shape.iter().product();
        if bytes.len() != expected * 8 {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected,
                found: bytes.len() / 8,
            });
        }
        Ok((entry.shape.clone(), decode(&bytes)))
    }

    pub fn metadata(&self) -> &serde_json::Value {
        &self.manifest.metadata
    }

    pub fn metadata_field<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .manifest
            .metadata
            .get(key)
            .ok_or_else(|| Error::invalid(format!("metadata field {key:?} missing")))?;
        Ok(serde_json::from_value(v.clone())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let vals = [1.0, -0.0, f64::MIN_POSITIVE, 1e308, f64::INFINITY, 0.1];
        ContainerWriter::new("test")
            .array("a", &[2, 3], &vals)
            .metadata(serde_json::json!({"note": "x"}))
            .write(dir.path())
            .unwrap();
        let c = Container::open(dir.path()).unwrap();
        let (shape, back) = c.read_array("a").unwrap();
        assert_eq!(shape, vec![2, 3]);
        for (x, y) in vals.iter().zip(&back) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert!(matches!(c.read_array("b"), Err(Error::MissingArray { .. })));
    }

    #[test]
    fn truncated_file_is_a_checksum_error() {
        let dir = tempfile::tempdir().unwrap();
        ContainerWriter::new("test")
            .array("a", &[4], &[1.0, 2.0, 3.0, 4.0])
            .write(dir.path())
            .unwrap();
        let path = dir.path().join("a.f64");
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..20]).unwrap();
        let err = Container::open(dir.path()).unwrap().read_array("a").unwrap_err();
        match err {
            Error::ChecksumMismatch { file } => assert!(file.ends_with("a.f64")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_99_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        ContainerWriter::new("test").write(dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.replace("\"version\": 1", "\"version\": 99")).unwrap();
        assert!(matches!(
            Container::open(dir.path()),
            Err(Error::UnsupportedVersion { found: 99, .. })
        ));
    }
}
