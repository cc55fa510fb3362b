//! Run manifest: a JSON record of every knob that shaped a run, hashes of the
//! files it consumed, the files it produced, and how the iteration ended.
//! Together with the seeded generators this is enough to reproduce the run
//! byte for byte; only `elapsed_seconds` varies between identical runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Nodes per side of the grid the run operated on.
    pub grid: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phantom: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forward_tol: Option<f64>,
    /// Input file name to sha256 of its content.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    /// Files this run wrote, relative to the run directory.
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSummary>,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_rel_change: Option<f64>,
    /// Relative error of the recovered conductivity outside the gradient
    /// floor, when ground truth was available.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_error: Option<f64>,
    pub floored_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, grid: usize) -> Self {
        RunManifest {
            command: command.to_string(),
            grid,
            phantom: None,
            boundary: None,
            lambda: None,
            tol: None,
            max_iters: None,
            algorithm: None,
            alpha0: None,
            rho: None,
            delta: None,
            seed: None,
            refine: None,
            forward_tol: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            convergence: None,
            elapsed_seconds: 0.0,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_NAME);
        let json = serde_json::to_string_pretty(self)?;
        fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let json =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&json).with_context(|| format!("parsing {}", path.display()))
    }
}
