//! Defaults file shared by all subcommands. Flags win over the file, the file
//! over built-in defaults.

use std::path::PathBuf;

use lofi_core::features::FeatureMode;
use lofi_core::Error;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub anchors: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub homography: Option<PathBuf>,
    pub csi: Option<PathBuf>,
    pub camera_rate: Option<f64>,
    pub csi_rate: Option<f64>,
    pub subcarriers: Option<usize>,
    pub target_label: Option<String>,
    pub person_id: Option<String>,
    pub max_gap: Option<f64>,
    pub window: Option<usize>,
    pub stride: Option<usize>,
    pub mode: Option<FeatureMode>,
    pub split: Option<f64>,
    pub classes: Option<usize>,
    pub knn: Option<usize>,
    pub region_x: Option<f64>,
    pub region_y: Option<f64>,
}

pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>, default: T) -> T {
    flag.or_else(|| file.clone()).unwrap_or(default)
}

pub fn require(flag: Option<PathBuf>, file: &Option<PathBuf>, name: &str) -> Result<PathBuf, Error> {
    flag.or_else(|| file.clone())
        .ok_or_else(|| Error::Config(format!("--{name} is required (flag or config file)")))
}

pub fn positive(name: &str, value: f64) -> Result<f64, Error> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::Config(format!("{name} must be a positive number, got {value}")))
    }
}
