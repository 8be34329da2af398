//! Run manifests: each command writes `<name>.manifest.json` beside its
//! artifacts, recording the command, tool version, config hash, seed,
//! and the digest of every input and output file. Manifests carry no
//! timestamps so identical runs produce identical bytes.

use std::fs;
use std::path::Path;

use lpntk_core::data::LabeledDataset;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::formats::sha256_file;
use crate::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileStamp {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub inputs: Vec<FileStamp>,
    pub outputs: Vec<FileStamp>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: &str, seed: u64, threads: usize) -> Manifest {
        Manifest {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config_hash: config_hash.to_owned(),
            seed,
            threads,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Stamps use the file name only, so a run's manifest does not leak
    /// absolute paths and stays byte-identical across directories.
    fn stamp(path: &Path) -> CliResult<FileStamp> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Ok(FileStamp {
            path: name,
            sha256: hex::encode(sha256_file(path)?),
        })
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(Manifest::stamp(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> CliResult<()> {
        self.outputs.push(Manifest::stamp(path)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path, name: &str) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(dir.join(format!("{name}.manifest.json")), text + "\n")?;
        Ok(())
    }
}

/// Shape summary of the dataset a run worked on, written by `train` and
/// checked by `kernel --data`: sample count `n`, feature count `p`,
/// class count `K`, and how features reached the unit interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub n: usize,
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub normalization: String,
    pub source: String,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn describe(config: &ExperimentConfig, ds: &LabeledDataset) -> DatasetManifest {
        let (name, normalization, source) = if config.dataset.source == "idx" {
            let images = config.dataset.images.clone().unwrap_or_default();
            let stem = Path::new(&images)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "idx".to_owned());
            (stem, "div255".to_owned(), images)
        } else {
            (
                "synthetic".to_owned(),
                "clamp01".to_owned(),
                "synthetic".to_owned(),
            )
        };
        DatasetManifest {
            name,
            n: ds.len(),
            p: ds.dim(),
            k: ds.classes(),
            normalization,
            source,
            seed: config.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn manifest_is_reproducible_and_relative() {
        let dir = tempdir().unwrap();
        let artifact = dir.path().join("data.bin");
        fs::write(&artifact, b"payload").unwrap();
        let build = || {
            let mut m = Manifest::new("train", "hash", 3, 1);
            m.add_output(&artifact).unwrap();
            m.write(dir.path(), "train").unwrap();
            fs::read(dir.path().join("train.manifest.json")).unwrap()
        };
        let first = build();
        let second = build();
        assert_eq!(first, second);
        let parsed: Manifest = serde_json::from_slice(&first).unwrap();
        assert_eq!(parsed.outputs.len(), 1);
        assert_eq!(parsed.outputs[0].path, "data.bin");
        assert_eq!(parsed.outputs[0].sha256.len(), 64);
        assert!(!String::from_utf8(first).unwrap().contains("tmp"));
    }
}
