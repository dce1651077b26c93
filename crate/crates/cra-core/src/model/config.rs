//! Model and training hyperparameters.

use crate::episodes::SampleMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

/// Shared molecule encoder. The MLP maps the feature vector through
/// `hidden` affine+activation layers and a bare final affine to width h.
/// The GIN runs message passing on the molecule's bond graph (every atom
/// starts from the molecule's feature vector) and sum-pools atom states;
/// records without a graph are treated as single-atom graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncoderConfig {
    Mlp { hidden: Vec<usize>, activation: Activation },
    Gin { layers: usize, epsilon: f64 },
}

/// Whether the matching logit is scaled by 1/sqrt(2h) before the sigmoid.
/// Cosine similarity already bounds each term, so the scale is optional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchingScale {
    Scaled,
    None,
}

/// Ablation path through the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Encoder embeddings matched directly.
    EncoderOnly,
    /// Attention over [support : query] rows without anchor columns.
    Am,
    /// Anchor-augmented attention with raw class-mean anchors.
    Aam,
    /// Anchors enriched over the reference batch first, then Aam.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::EncoderOnly, Variant::Am, Variant::Aam, Variant::Full];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::EncoderOnly => "encoder-only",
            Variant::Am => "am",
            Variant::Aam => "aam",
            Variant::Full => "full",
        }
    }

    /// Only the full variant consumes unlabeled reference batches.
    pub fn uses_reference(&self) -> bool {
        matches!(self, Variant::Full)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Input feature width.
    pub d: usize,
    /// Embedding width.
    pub h: usize,
    /// Attention head count.
    pub heads: usize,
    /// Per-head projection width for width-h attention; width-3h attention
    /// scales it by 3 so every projection stays square at the default
    /// d_k = h.
    pub d_k: usize,
    pub encoder: EncoderConfig,
    /// Reference batch size.
    pub m: usize,
    pub matching_scale: MatchingScale,
    /// Block query rows from attending other query rows in the joint
    /// attention pass, making each query's score independent of how the
    /// rest of the query set attends it.
    #[serde(default)]
    pub mask_queries: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// Defaults for everything but the input width.
    pub fn new(d: usize) -> ModelConfig {
        ModelConfig {
            d,
            h: 64,
            heads: 4,
            d_k: 64,
            encoder: EncoderConfig::Mlp { hidden: vec![128], activation: Activation::Relu },
            m: 512,
            matching_scale: MatchingScale::Scaled,
            mask_queries: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), super::ModelError> {
        let bad = |reason: &str| super::ModelError::InvalidConfig { reason: reason.to_string() };
        if self.d == 0 || self.h == 0 || self.d_k == 0 {
            return Err(bad("d, h, and d_k must be positive"));
        }
        if self.heads == 0 {
            return Err(bad("need at least one attention head"));
        }
        if self.m == 0 {
            return Err(bad("reference batch size must be positive"));
        }
        match &self.encoder {
            EncoderConfig::Mlp { hidden, .. } => {
                if hidden.contains(&0) {
                    return Err(bad("hidden layer widths must be positive"));
                }
            }
            EncoderConfig::Gin { layers, epsilon } => {
                if *layers == 0 {
                    return Err(bad("gin needs at least one layer"));
                }
                if !epsilon.is_finite() {
                    return Err(bad("gin epsilon must be finite"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_episodes: usize,
    /// Episodes between validation passes.
    pub validation_interval: usize,
    /// Validation rounds without improvement before stopping.
    pub patience: usize,
    pub n_support: usize,
    pub n_query: usize,
    pub mode: SampleMode,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_episodes: 2000,
            validation_interval: 100,
            patience: 5,
            n_support: 16,
            n_query: 16,
            mode: SampleMode::Stratified,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), super::ModelError> {
        let bad = |reason: &str| super::ModelError::InvalidConfig { reason: reason.to_string() };
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(bad("learning rate must be finite and non-negative"));
        }
        if self.max_episodes == 0 || self.validation_interval == 0 || self.patience == 0 {
            return Err(bad("episode counts and patience must be positive"));
        }
        if self.n_support < 2 || self.n_query == 0 {
            return Err(bad("need a support set of at least 2 and a non-empty query set"));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(bad("clip norm must be finite and positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert!(ModelConfig::new(32).validate().is_ok());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn invalid_configs_are_named() {
        let mut c = ModelConfig::new(32);
        c.heads = 0;
        let e = c.validate().unwrap_err();
        assert!(e.to_string().contains("head"));

        let t = TrainConfig {
            learning_rate: f64::NAN,
            ..TrainConfig::default()
        };
        assert!(t.validate().is_err());
        let t = TrainConfig {
            n_support: 1,
            ..TrainConfig::default()
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn variant_names_round_trip_through_serde() {
        for v in Variant::ALL {
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.name()));
            let back: Variant = serde_json::from_str(&json).unwrap();
            assert_eq!(back, v);
        }
    }

    #[test]
    fn encoder_config_serde_is_tagged() {
        let m = EncoderConfig::Mlp { hidden: vec![64], activation: Activation::Relu };
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"kind\":\"mlp\""));
        let g: EncoderConfig =
            serde_json::from_str(r#"{"kind":"gin","layers":2,"epsilon":0.0}"#).unwrap();
        assert_eq!(g, EncoderConfig::Gin { layers: 2, epsilon: 0.0 });
    }
}
