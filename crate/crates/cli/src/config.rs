//! Optional JSON config file. Keys mirror the long flags; flags win.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use patchcheck_core::equivalence::{SolverHook, SOLVER_ENV};
use patchcheck_core::invariant::Granularity;
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub granularity: Option<Granularity>,
    pub threshold: Option<f64>,
    pub no_semantic: Option<bool>,
    pub no_syntactic: Option<bool>,
    pub embeddings: Option<PathBuf>,
    pub dim: Option<usize>,
    pub solver: Option<String>,
    pub seed: Option<u64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub l2: Option<f64>,
    pub train_fraction: Option<f64>,
}

impl FileConfig {
    /// Relative paths in the file resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: FileConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if let (Some(e), Some(dir)) = (cfg.embeddings.as_mut(), path.parent()) {
            if e.is_relative() {
                *e = dir.join(&*e);
            }
        }
        Ok(cfg)
    }
}

/// Flag, then config file, then the environment.
pub fn solver_hook(flag: Option<&str>, file: &FileConfig) -> Option<SolverHook> {
    flag.or(file.solver.as_deref())
        .and_then(SolverHook::from_command_line)
        .or_else(|| {
            std::env::var(SOLVER_ENV)
                .ok()
                .and_then(|c| SolverHook::from_command_line(&c))
        })
}
