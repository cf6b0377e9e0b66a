use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformerConfig {
    pub layers: usize,
    pub latent_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefinementConfig {
    pub stages: usize,
    pub blocks_per_stage: usize,
    pub latent_dim: usize,
    pub dropout: f64,
    /// DCT coefficients kept per stage; `None` keeps all `H + F`.
    #[serde(default)]
    pub dct_keep: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub transformer: TransformerConfig,
    pub refinement: RefinementConfig,
    pub history: usize,
    pub future: usize,
    pub joints: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        GeneratorConfig::default().transformer
    }
}

impl Default for RefinementConfig {
    fn default() -> Self {
        GeneratorConfig::default().refinement
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::toy(16, 32, 6)
    }
}

impl GeneratorConfig {
    /// Desk-scale preset.
    pub fn toy(history: usize, future: usize, joints: usize) -> Self {
        GeneratorConfig {
            transformer: TransformerConfig {
                layers: 4,
                latent_dim: 64,
                heads: 4,
                ff_dim: 128,
                dropout: 0.1,
            },
            refinement: RefinementConfig {
                stages: 3,
                blocks_per_stage: 2,
                latent_dim: 64,
                dropout: 0.5,
                dct_keep: None,
            },
            history,
            future,
            joints,
        }
    }

    /// Full-size preset: 8 encoder layers of width 512, refinement width 256.
    pub fn full(history: usize, future: usize, joints: usize) -> Self {
        GeneratorConfig {
            transformer: TransformerConfig {
                layers: 8,
                latent_dim: 512,
                heads: 8,
                ff_dim: 1024,
                dropout: 0.1,
            },
            refinement: RefinementConfig {
                stages: 3,
                blocks_per_stage: 2,
                latent_dim: 256,
                dropout: 0.5,
                dct_keep: None,
            },
            history,
            future,
            joints,
        }
    }

    pub fn nodes(&self) -> usize {
        3 * self.joints
    }

    pub fn total_frames(&self) -> usize {
        self.history + self.future
    }

    pub fn dct_keep(&self) -> usize {
        self.refinement.dct_keep.unwrap_or(self.total_frames())
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.transformer;
        let r = &self.refinement;
        let checks: [(bool, &str); 10] = [
            (self.joints >= 1, "joints must be >= 1"),
            (self.history >= 1 && self.future >= 1, "history and future must be >= 1"),
            (t.layers >= 1, "transformer layers must be >= 1"),
            (t.heads >= 1 && t.latent_dim >= 1, "transformer heads and latent_dim must be >= 1"),
            (t.latent_dim % t.heads.max(1) == 0, "latent_dim must be divisible by heads"),
            (t.ff_dim >= 1, "ff_dim must be >= 1"),
            (r.stages >= 1 && r.blocks_per_stage >= 1, "stages and blocks_per_stage must be >= 1"),
            (r.latent_dim >= 1, "refinement latent_dim must be >= 1"),
            (
                (0.0..1.0).contains(&t.dropout) && (0.0..1.0).contains(&r.dropout),
                "dropout must lie in [0, 1)",
            ),
            (
                (1..=self.total_frames()).contains(&self.dct_keep()),
                "dct_keep must lie in 1..=history+future",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }
}
