use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::data::Metadata;
use crate::error::{Error, Result};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `seed=` followed by `input.<file name>.sha256=` for each input.
pub fn provenance(seed: u64, inputs: &[&Path]) -> Result<Metadata> {
    let mut meta = vec![("seed".to_string(), seed.to_string())];
    for path in inputs {
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        meta.push((format!("input.{name}.sha256"), sha256_file(path)?));
    }
    Ok(meta)
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".meta");
    artifact.with_file_name(name)
}

/// Writes `key=value` provenance lines next to an artifact that has no room
/// for a header of its own.
pub fn write_sidecar(artifact: &Path, meta: &Metadata) -> Result<()> {
    let path = sidecar_path(artifact);
    let text: String = meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
