use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{SecondsFormat, Utc};
use pricenet::config::RunConfig;
use serde::Serialize;

pub const OUT_ENV: &str = "PRICENET_OUT";
pub const DEFAULT_OUT: &str = "runs";
pub const METADATA_FILE: &str = "run.json";

#[derive(Serialize)]
pub struct RunMetadata {
    pub command: String,
    pub argv: Vec<String>,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<PathBuf>,
}

/// One artifact directory per invocation, holding a single `run.json`.
pub struct RunDir {
    pub path: PathBuf,
    command: String,
    argv: Vec<String>,
    started_at: String,
    seeds: BTreeMap<String, u64>,
    outputs: Vec<PathBuf>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunDir {
    /// `explicit` is used as-is (and must be empty if it exists); otherwise a
    /// timestamped directory is created under `root`.
    pub fn create(root: Option<&Path>, explicit: Option<&Path>, command: &str, argv: Vec<String>) -> Result<Self> {
        let path = match explicit {
            Some(dir) => {
                if dir.exists() && fs::read_dir(dir)?.next().is_some() {
                    bail!("output directory {} is not empty", dir.display());
                }
                dir.to_path_buf()
            }
            None => {
                let root = root.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
                let stamp = Utc::now().format("%Y%m%d-%H%M%S");
                let mut candidate = root.join(format!("{stamp}-{command}"));
                let mut k = 2;
                while candidate.exists() {
                    candidate = root.join(format!("{stamp}-{command}-{k}"));
                    k += 1;
                }
                candidate
            }
        };
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            path,
            command: command.into(),
            argv,
            started_at: now(),
            seeds: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    pub fn file(&mut self, name: &str) -> PathBuf {
        let p = self.path.join(name);
        self.outputs.push(p.clone());
        p
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.into(), value);
    }

    pub fn finish(self, config: &RunConfig) -> Result<PathBuf> {
        let meta = RunMetadata {
            command: self.command,
            argv: self.argv,
            config: config.clone(),
            seeds: self.seeds,
            code_version: env!("CARGO_PKG_VERSION").into(),
            started_at: self.started_at,
            finished_at: now(),
            outputs: self.outputs,
        };
        let path = self.path.join(METADATA_FILE);
        fs::write(&path, serde_json::to_string_pretty(&meta)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.path)
    }
}
