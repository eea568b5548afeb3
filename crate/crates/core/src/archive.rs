//! Versioned JSON archives of a trained forest and its fiducial ensemble.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetFingerprint;
use crate::error::{Error, Result};
use crate::fiducial::{FiducialDraw, FiducialEnsemble, FiducialWeights};
use crate::tree::{ForestParams, HonestForest};

/// Archive layout version written by [`save_model`] and accepted by [`load_model`].
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArchive {
    pub format_version: u32,
    pub master_seed: u64,
    pub params: ForestParams,
    /// Fingerprint of the training data.
    pub dataset: DatasetFingerprint,
    pub forest: HonestForest,
    pub weights: FiducialWeights,
    pub draws: Vec<FiducialDraw>,
}

impl ModelArchive {
    pub fn new(ensemble: &FiducialEnsemble, master_seed: u64, dataset: DatasetFingerprint) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            master_seed,
            params: ensemble.forest().params.clone(),
            dataset,
            forest: (**ensemble.forest()).clone(),
            weights: ensemble.weights().clone(),
            draws: ensemble.draws().to_vec(),
        }
    }

    /// Rebuild the ensemble, validating every stored draw.
    pub fn ensemble(&self) -> Result<FiducialEnsemble> {
        FiducialEnsemble::from_parts(
            Arc::new(self.forest.clone()),
            self.draws.clone(),
            self.weights.clone(),
        )
    }
}

/// Write `bytes` to `path` through a sibling temporary file and a rename, so
/// readers never observe a partial file.
pub(crate) fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let write_error = |e: std::io::Error| Error::Write {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    let mut file = fs::File::create(&partial).map_err(write_error)?;
    file.write_all(bytes).map_err(write_error)?;
    file.sync_all().map_err(write_error)?;
    fs::rename(&partial, path).map_err(write_error)
}

pub fn save_model(archive: &ModelArchive, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(archive)
        .map_err(|e| Error::Parse(format!("cannot encode archive: {e}")))?;
    write_atomically(path.as_ref(), text.as_bytes())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelArchive> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_error = |e: serde_json::Error| Error::Parse(format!("{}: {e}", path.display()));
    // Check the version before the full layout so a newer archive reports
    // the version rather than whichever field changed.
    let value: serde_json::Value = serde_json::from_str(&text).map_err(parse_error)?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Parse(format!("{}: missing format_version", path.display())))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(Error::UnsupportedVersion {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let archive: ModelArchive = serde_json::from_value(value).map_err(parse_error)?;
    if archive.params != archive.forest.params {
        return Err(Error::Parse(format!(
            "{}: archive params disagree with the stored forest",
            path.display()
        )));
    }
    archive.ensemble()?;
    Ok(archive)
}
