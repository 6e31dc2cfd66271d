//! Engine configuration (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assembly::HeadVariant;
use crate::error::{Error, Result};
use crate::heads::AnchorConfig;
use crate::inference::{ClipPartitionConfig, InferenceConfig};
use crate::tracking::MatchScoreConfig;
use crate::training::{LossWeights, MatcherConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub prototypes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 32,
            prototypes: 8,
        }
    }
}

/// Every tunable of the engine. Missing sections fall back to defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub head_variant: HeadVariant,
    pub partition: ClipPartitionConfig,
    pub inference: InferenceConfig,
    pub tracking: MatchScoreConfig,
    pub matcher: MatcherConfig,
    pub loss_weights: LossWeights,
    pub anchors: AnchorConfig,
    pub model: ModelConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            head_variant: HeadVariant::Yolact,
            partition: ClipPartitionConfig::default(),
            inference: InferenceConfig::default(),
            tracking: MatchScoreConfig::default(),
            matcher: MatcherConfig::default(),
            loss_weights: LossWeights::default(),
            anchors: AnchorConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.partition.validate()?;
        self.inference.validate()?;
        self.tracking.validate()?;
        self.matcher.validate()?;
        self.loss_weights.validate()?;
        self.anchors.validate()?;
        if self.model.embed_dim == 0 || self.model.prototypes == 0 {
            return Err(Error::invalid("model.embed_dim and model.prototypes must be positive"));
        }
        if self.head_variant == HeadVariant::CondInst && self.model.prototypes != 8 {
            return Err(Error::invalid(format!(
                "the condinst head needs 8 prototypes, got {}",
                self.model.prototypes
            )));
        }
        Ok(())
    }

    /// Inference settings pinned to the configured head.
    pub fn inference_config(&self) -> InferenceConfig {
        InferenceConfig {
            head_variant: Some(self.head_variant),
            ..self.inference
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: EngineConfig = toml::from_str(text).map_err(|e| Error::format("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("config", e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| e.in_file(path))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}
