//! Optional JSON configuration mirroring the CLI flags. Flags override file
//! values; file values override built-in defaults.

use std::path::Path;

use serde::Deserialize;

/// File-level settings; every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n: Option<u64>,
    pub p: Option<Vec<usize>>,
    pub t: Option<usize>,
    pub reps: Option<u64>,
    pub seed: Option<u64>,
    pub algo: Option<String>,
    pub d: Option<Vec<usize>>,
    pub nu: Option<f64>,
    pub mu: Option<f64>,
    pub eps: Option<f64>,
    pub tau: Option<u64>,
    pub su: Option<Vec<f64>>,
    pub out: Option<String>,
    pub worst_case: Option<bool>,
    pub cr_limit: Option<u64>,
    pub br_local: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg = serde_json::from_str(&text)?;
        Ok(cfg)
    }
}

/// Parses a comma-separated list of integers ("1,2,4,8").
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect()
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect()
}
