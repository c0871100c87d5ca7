//! Buffered output files and the run manifest.
//!
//! Everything a command emits is rendered in memory first. Files are written
//! only after the computation has succeeded, each through a temporary name
//! that is renamed into place.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::Failure;

pub const SCHEMA_VERSION: &str = "1.0";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub schema_version: &'static str,
    pub subcommand: String,
    pub inputs: Vec<FileDigest>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub output_dir: String,
    pub artifacts: Vec<FileDigest>,
}

/// Files waiting to be written into one directory.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report types serialize");
    out.push(b'\n');
    out
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        self.add(name, to_json(value));
    }

    fn write_all(&self, files: &[(String, Vec<u8>)]) -> Result<(), Failure> {
        fs::create_dir_all(&self.dir).map_err(|e| Failure::io(&self.dir, e))?;
        let mut staged = Vec::with_capacity(files.len());
        for (name, bytes) in files {
            let tmp = self.dir.join(format!(".{name}.partial"));
            fs::write(&tmp, bytes).map_err(|e| Failure::io(&tmp, e))?;
            staged.push((tmp, self.dir.join(name)));
        }
        for (tmp, dest) in staged {
            fs::rename(&tmp, &dest).map_err(|e| Failure::io(&dest, e))?;
        }
        Ok(())
    }

    /// Writes every file plus `manifest_name` listing their checksums.
    pub fn commit(
        mut self,
        manifest_name: &str,
        subcommand: &str,
        inputs: &[(&Path, &[u8])],
        config: serde_json::Value,
        seed: Option<u64>,
    ) -> Result<Manifest, Failure> {
        let digest = |path: String, bytes: &[u8]| FileDigest {
            path,
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        };
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            subcommand: subcommand.to_string(),
            inputs: inputs
                .iter()
                .map(|(p, b)| digest(p.display().to_string(), b))
                .collect(),
            config,
            seed,
            output_dir: self.dir.display().to_string(),
            artifacts: self.files.iter().map(|(n, b)| digest(n.clone(), b)).collect(),
        };
        self.files.push((manifest_name.to_string(), to_json(&manifest)));
        self.write_all(&self.files)?;
        Ok(manifest)
    }
}
