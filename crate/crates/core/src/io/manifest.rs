use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{read_json, write_json};
use crate::error::{Error, Result};

pub const MANIFEST_FORMAT: &str = "gtr-run-manifest";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }

    /// `Ok(false)` when the file exists but its content changed.
    pub fn matches(&self) -> Result<bool> {
        Ok(sha256_file(&self.path)? == self.sha256)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(sha256_hex(&bytes))
}

/// Record of one command-line run, sufficient to repeat it: the argument
/// vector, the resolved configuration, and digests of every input and
/// output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub argv: Vec<String>,
    /// Directory relative paths in `argv` are resolved against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub working_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub code_version: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, argv: Vec<String>, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            command: command.into(),
            argv,
            working_dir: None,
            seed,
            code_version: env!("CARGO_PKG_VERSION").into(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    /// Inputs whose current content differs from the recorded digest.
    pub fn changed_inputs(&self) -> Result<Vec<PathBuf>> {
        let mut changed = Vec::new();
        for d in &self.inputs {
            if !d.matches()? {
                changed.push(d.path.clone());
            }
        }
        Ok(changed)
    }

    /// Outputs whose current content differs from the recorded digest.
    pub fn changed_outputs(&self) -> Result<Vec<PathBuf>> {
        let mut changed = Vec::new();
        for d in &self.outputs {
            if !d.matches()? {
                changed.push(d.path.clone());
            }
        }
        Ok(changed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Self = read_json(path)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Contract(format!("not a run manifest: format {:?}", m.format)));
        }
        Ok(m)
    }
}
