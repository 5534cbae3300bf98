//! Pipeline configuration. Defaults pin the production constants: depth range
//! [0.1, 100] m with 100 m sky depth, a 3-frame LiDAR window, 0.1 m voxels,
//! hidden-point-removal exponent 2, a 2 px LiDAR priority radius, condition
//! offsets of ±2 (±4 for augmentation), a ±3 m lateral shift range, and
//! evaluation shifts of 1/2/4 m.
//!
//! Configuration is explicit-only: files are strict TOML (unknown keys are
//! rejected) and no environment variable overrides anything.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Metric depth limits in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthConfig {
    pub min: f64,
    pub max: f64,
    /// Depth assigned to sky pixels.
    pub sky: f64,
}

impl Default for DepthConfig {
    fn default() -> Self {
        Self { min: 0.1, max: 100.0, sky: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurationConfig {
    /// Frames aggregated per LiDAR sweep (odd).
    pub lidar_window: usize,
    /// Voxel edge length in meters for the merged cloud.
    pub voxel_resolution: f64,
    /// Hidden-point-removal radius exponent (radius = 10^gamma * max range).
    pub hpr_gamma: f64,
    /// Restrict hidden-point removal to an expanded camera frustum.
    pub hpr_frustum_cull: bool,
    /// Multiplicative image-bounds expansion for the frustum cull.
    pub hpr_frustum_margin: f64,
    /// Chebyshev pixel radius inside which MVS never overrides LiDAR.
    pub lidar_priority_radius: u32,
    /// Inflation in meters applied to dynamic-object boxes.
    pub box_margin: f64,
    /// MVS points below this ego-frame height are discarded (sensor height).
    pub mvs_height_floor: f64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            lidar_window: 3,
            voxel_resolution: 0.1,
            hpr_gamma: 2.0,
            hpr_frustum_cull: true,
            hpr_frustum_margin: 1.25,
            lidar_priority_radius: 2,
            box_margin: 0.1,
            mvs_height_floor: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NvsConfig {
    /// Temporal projection offsets for condition frames.
    pub offsets: Vec<i64>,
    /// Additional offsets used as data augmentation.
    pub augmentation_offsets: Vec<i64>,
    /// Lateral perturbation range in meters.
    pub tau_min: f64,
    pub tau_max: f64,
    /// Sample one tau per frame (true) or one per trajectory (false).
    pub per_frame_tau: bool,
}

impl Default for NvsConfig {
    fn default() -> Self {
        Self {
            offsets: vec![-2, 2],
            augmentation_offsets: vec![-4, 4],
            tau_min: -3.0,
            tau_max: 3.0,
            per_frame_tau: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Lateral shift magnitudes in meters for shifted-viewpoint evaluation.
    pub shift_magnitudes: Vec<f64>,
    /// Depth evaluation interval: gt in (min, max].
    pub range_min: f64,
    pub range_max: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { shift_magnitudes: vec![1.0, 2.0, 4.0], range_min: 0.1, range_max: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub depth: DepthConfig,
    pub curation: CurationConfig,
    pub nvs: NvsConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.depth.min > 0.0 && self.depth.min < self.depth.max) {
            return bad(format!("depth range [{}, {}]", self.depth.min, self.depth.max));
        }
        if !(self.depth.sky >= self.depth.min && self.depth.sky <= self.depth.max) {
            return bad(format!("sky depth {} outside depth range", self.depth.sky));
        }
        if self.curation.lidar_window == 0 || self.curation.lidar_window.is_multiple_of(2) {
            return bad(format!("lidar window {} must be odd", self.curation.lidar_window));
        }
        if !(self.curation.voxel_resolution > 0.0) {
            return bad(format!("voxel resolution {}", self.curation.voxel_resolution));
        }
        if !(self.curation.hpr_frustum_margin >= 1.0) {
            return bad(format!("frustum margin {}", self.curation.hpr_frustum_margin));
        }
        if !(self.curation.box_margin >= 0.0) {
            return bad(format!("box margin {}", self.curation.box_margin));
        }
        if !(self.nvs.tau_min <= self.nvs.tau_max)
            || !self.nvs.tau_min.is_finite()
            || !self.nvs.tau_max.is_finite()
        {
            return bad(format!("tau range [{}, {}]", self.nvs.tau_min, self.nvs.tau_max));
        }
        if !(self.eval.range_min >= 0.0 && self.eval.range_min < self.eval.range_max) {
            return bad(format!(
                "eval range ({}, {}]",
                self.eval.range_min, self.eval.range_max
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_pipeline_constants() {
        let c = PipelineConfig::default();
        assert_eq!(c.depth.min, 0.1);
        assert_eq!(c.depth.max, 100.0);
        assert_eq!(c.depth.sky, 100.0);
        assert_eq!(c.curation.lidar_window, 3);
        assert_eq!(c.curation.voxel_resolution, 0.1);
        assert_eq!(c.curation.hpr_gamma, 2.0);
        assert_eq!(c.curation.lidar_priority_radius, 2);
        assert_eq!(c.nvs.offsets, vec![-2, 2]);
        assert_eq!(c.nvs.augmentation_offsets, vec![-4, 4]);
        assert_eq!((c.nvs.tau_min, c.nvs.tau_max), (-3.0, 3.0));
        assert_eq!(c.eval.shift_magnitudes, vec![1.0, 2.0, 4.0]);
        c.validate().unwrap();
    }

    #[test]
    fn toml_roundtrip_preserves_defaults() {
        let c = PipelineConfig::default();
        let s = c.to_toml_string().unwrap();
        let back = PipelineConfig::from_toml_str(&s).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let s = "seed = 1\nturbo = true\n";
        assert!(PipelineConfig::from_toml_str(s).is_err());
    }

    #[test]
    fn partial_files_use_defaults() {
        let c = PipelineConfig::from_toml_str("seed = 9\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.curation.lidar_window, 3);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = PipelineConfig::default();
        c.curation.lidar_window = 2;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.depth.sky = 500.0;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.nvs.tau_min = 5.0;
        assert!(c.validate().is_err());
    }
}
