//! Run manifest: a deterministic record of what a subcommand consumed and
//! produced. No timestamps; reruns with identical inputs produce identical
//! manifests.

use anyhow::Context;
use rgbd_core::config::PipelineConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Serialize)]
pub struct Manifest {
    pub schema: &'static str,
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub seed: u64,
    pub config_sha256: String,
    /// Input file hashes keyed by path (sorted).
    pub inputs: BTreeMap<String, String>,
    /// Output files relative to the output directory (sorted).
    pub outputs: Vec<String>,
}

pub struct ManifestBuilder {
    subcommand: String,
    cfg_hash: String,
    seed: u64,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    out_root: PathBuf,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

impl ManifestBuilder {
    pub fn new(subcommand: &str, cfg: &PipelineConfig, out_root: &Path) -> anyhow::Result<Self> {
        let cfg_text = cfg.to_toml_string()?;
        Ok(Self {
            subcommand: subcommand.to_string(),
            cfg_hash: sha256_hex(cfg_text.as_bytes()),
            seed: cfg.seed,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            out_root: out_root.to_path_buf(),
        })
    }

    /// Hash one input file.
    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("hashing input {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    /// Hash every regular file under a directory (sorted traversal).
    pub fn input_tree(&mut self, root: &Path) -> anyhow::Result<()> {
        let mut files: Vec<PathBuf> = walkdir::WalkDir::new(root)
            .sort_by_file_name()
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file())
            .map(|e| e.into_path())
            .collect();
        files.sort();
        for f in files {
            self.input(&f)?;
        }
        Ok(())
    }

    /// Record an output file path (relative to the output root).
    pub fn output(&mut self, path: &Path) {
        let rel = path.strip_prefix(&self.out_root).unwrap_or(path);
        self.outputs.push(rel.display().to_string());
    }

    pub fn write(mut self) -> anyhow::Result<()> {
        self.outputs.sort();
        self.outputs.dedup();
        let manifest = Manifest {
            schema: "manifest.v1",
            tool: "rgbd",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            seed: self.seed,
            config_sha256: self.cfg_hash,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        rgbd_core::io::json::write_json(&self.out_root.join("manifest.json"), &manifest)?;
        Ok(())
    }
}
