//! Pipeline configuration file.

use serde::{Deserialize, Serialize};

use crate::attention::CameraGeometry;
use crate::classifier::DEFAULT_TREES;
use crate::discovery::KMeansConfig;
use crate::error::{parse_json, Error, Result};
use crate::phrase::SegmenterConfig;
use crate::pose::JointSet;
use crate::scheduler::Mode;

/// Environment variable that overrides every seed in the configuration.
pub const SEED_ENV: &str = "ORATORIO_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub trees: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: DEFAULT_TREES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub segmenter: SegmenterConfig,
    pub geometry: CameraGeometry,
    pub kmeans: KMeansConfig,
    pub forest: ForestConfig,
    pub joints: JointSet,
    pub mode: Mode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            segmenter: SegmenterConfig::default(),
            geometry: CameraGeometry::default(),
            kmeans: KMeansConfig::default(),
            forest: ForestConfig::default(),
            joints: JointSet::default(),
            mode: Mode::Modulated,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(raw: &[u8]) -> Result<Self> {
        let cfg: PipelineConfig = parse_json(raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.segmenter.validate()?;
        self.geometry.validate()?;
        self.kmeans.validate()?;
        if self.forest.trees == 0 {
            return Err(Error::Config("forest.trees must be at least 1".into()));
        }
        if self.joints.0.is_empty() {
            return Err(Error::Config("joint set is empty".into()));
        }
        Ok(())
    }

    /// Replaces every seed with `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.kmeans.seed = seed;
        self.forest.seed = seed;
        self
    }

    /// Applies `ORATORIO_SEED` when it is set.
    pub fn with_env_seed(self) -> Result<Self> {
        match env_seed()? {
            Some(seed) => Ok(self.with_seed(seed)),
            None => Ok(self),
        }
    }
}

/// Parses `ORATORIO_SEED`, if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))
        }),
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = PipelineConfig::from_json(b"{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.kmeans.k, 10);
        assert_eq!(cfg.kmeans.eps, 0.001);
        assert_eq!(cfg.forest.trees, 500);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_json(br#"{"kmeans": {"k": 4, "kk": 1}}"#).is_err());
        assert!(PipelineConfig::from_json(br#"{"extra": true}"#).is_err());
    }

    #[test]
    fn nested_overrides_and_validation() {
        let cfg = PipelineConfig::from_json(
            br#"{"kmeans": {"k": 4}, "mode": 2, "joints": ["l_wrist", "r_wrist"]}"#,
        )
        .unwrap();
        assert_eq!(cfg.kmeans.k, 4);
        assert_eq!(cfg.kmeans.eps, 0.001);
        assert_eq!(cfg.mode, Mode::Windowed);
        assert_eq!(cfg.joints.dim(), 4);
        assert!(PipelineConfig::from_json(br#"{"mode": 7}"#).is_err());
        assert!(PipelineConfig::from_json(br#"{"forest": {"trees": 0}}"#).is_err());
    }

    #[test]
    fn seed_override() {
        let cfg = PipelineConfig::default().with_seed(42);
        assert_eq!((cfg.kmeans.seed, cfg.forest.seed), (42, 42));
    }
}
