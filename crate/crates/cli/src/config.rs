//! Experiment settings from a TOML file.
//!
//! ```toml
//! experiment = "weak_limit"
//! process = "fbm"
//! H = "1/6"
//! f = "x3"
//! n_list = [64, 128, 256, 512]
//! t_list = [1.0]
//! paths = 20000
//! seed = 11
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::args::parse_real;
use crate::CliError;

/// A number given either as a TOML float/integer or as a string such as "1/6".
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Real {
    Number(f64),
    Text(String),
}

impl Real {
    pub fn value(&self) -> Result<f64, CliError> {
        match self {
            Real::Number(x) => Ok(*x),
            Real::Text(s) => parse_real(s).map_err(CliError::Usage),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub experiment: Option<String>,
    pub process: Option<String>,
    #[serde(rename = "H")]
    pub hurst: Option<Real>,
    #[serde(rename = "K")]
    pub k: Option<Real>,
    pub h: Option<Real>,
    pub f: Option<String>,
    pub n_list: Option<Vec<usize>>,
    pub t_list: Option<Vec<Real>>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub ks_threshold: Option<Real>,
    pub vanishing_ratio: Option<Real>,
}

impl ExperimentFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}
