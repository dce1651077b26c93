//! Declarative run configuration: a JSON document of partial overrides
//! layered on top of an episode preset. Resolution order, weakest first:
//! preset defaults, config file keys, command-line flags. The fully
//! resolved result is echoed into the output directory, and that echo is
//! itself a valid config file.

use crate::error::{io_usage, CliError};
use cra_core::episodes::SampleMode;
use cra_core::model::{
    EncoderConfig, EvalConfig, MatchingScale, ModelConfig, TrainConfig, Variant,
};
use cra_core::rng::derive_seed;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Named episode-protocol bundles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Balanced support of 20, query 16.
    Moleculenet,
    /// Stratified support of 16, query 16.
    Fsmol,
    /// Library defaults; every knob comes from the config file.
    #[default]
    Custom,
}

impl Preset {
    fn train_base(self) -> TrainConfig {
        let mut t = TrainConfig::default();
        match self {
            Preset::Moleculenet => {
                t.n_support = 20;
                t.n_query = 16;
                t.mode = SampleMode::Balanced;
            }
            Preset::Fsmol => {
                t.n_support = 16;
                t.n_query = 16;
                t.mode = SampleMode::Stratified;
            }
            Preset::Custom => {}
        }
        t
    }

    fn eval_base(self) -> EvalConfig {
        let mut e = EvalConfig::default();
        match self {
            Preset::Moleculenet => {
                e.n_support = 20;
                e.n_query = 16;
                e.mode = SampleMode::Balanced;
            }
            Preset::Fsmol => {
                e.n_support = 16;
                e.n_query = 16;
                e.mode = SampleMode::Stratified;
            }
            Preset::Custom => {}
        }
        e
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPatch {
    /// Input width; inferred from the data when omitted.
    pub d: Option<usize>,
    pub h: Option<usize>,
    pub heads: Option<usize>,
    pub d_k: Option<usize>,
    pub encoder: Option<EncoderConfig>,
    pub m: Option<usize>,
    pub matching_scale: Option<MatchingScale>,
    pub mask_queries: Option<bool>,
    /// Kept so a resolved echo round-trips; the run seed wins regardless.
    pub seed: Option<u64>,
}

impl ModelPatch {
    fn resolve(&self, inferred_d: Option<usize>, seed: u64) -> Result<ModelConfig, CliError> {
        let d = self.d.or(inferred_d).ok_or_else(|| {
            CliError::usage("model.d is not set and no record carries features to infer it from")
        })?;
        let mut c = ModelConfig::new(d);
        if let Some(h) = self.h {
            c.h = h;
        }
        if let Some(heads) = self.heads {
            c.heads = heads;
        }
        if let Some(d_k) = self.d_k {
            c.d_k = d_k;
        }
        if let Some(encoder) = &self.encoder {
            c.encoder = encoder.clone();
        }
        if let Some(m) = self.m {
            c.m = m;
        }
        if let Some(scale) = self.matching_scale {
            c.matching_scale = scale;
        }
        if let Some(mask) = self.mask_queries {
            c.mask_queries = mask;
        }
        c.seed = seed;
        Ok(c)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainPatch {
    pub learning_rate: Option<f64>,
    pub max_episodes: Option<usize>,
    pub validation_interval: Option<usize>,
    pub patience: Option<usize>,
    pub n_support: Option<usize>,
    pub n_query: Option<usize>,
    pub mode: Option<SampleMode>,
    pub clip_norm: Option<f64>,
}

impl TrainPatch {
    fn resolve(&self, base: TrainConfig) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            max_episodes: self.max_episodes.unwrap_or(base.max_episodes),
            validation_interval: self.validation_interval.unwrap_or(base.validation_interval),
            patience: self.patience.unwrap_or(base.patience),
            n_support: self.n_support.unwrap_or(base.n_support),
            n_query: self.n_query.unwrap_or(base.n_query),
            mode: self.mode.unwrap_or(base.mode),
            clip_norm: self.clip_norm.unwrap_or(base.clip_norm),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPatch {
    pub n_support: Option<usize>,
    pub n_query: Option<usize>,
    pub mode: Option<SampleMode>,
    pub reruns: Option<usize>,
    pub support_draws: Option<usize>,
    pub reference_size: Option<usize>,
    /// Kept so a resolved echo round-trips; the run seed wins regardless.
    pub seed: Option<u64>,
}

impl EvalPatch {
    fn resolve(&self, base: EvalConfig, seed: u64) -> EvalConfig {
        EvalConfig {
            n_support: self.n_support.unwrap_or(base.n_support),
            n_query: self.n_query.unwrap_or(base.n_query),
            mode: self.mode.unwrap_or(base.mode),
            reruns: self.reruns.unwrap_or(base.reruns),
            support_draws: self.support_draws.unwrap_or(base.support_draws),
            reference_size: self.reference_size.or(base.reference_size),
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub tasks: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    /// Held-out evaluation tasks (the ablation command scores these).
    pub test: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub preset: Preset,
    pub variant: Option<Variant>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: ModelPatch,
    #[serde(default)]
    pub train: TrainPatch,
    #[serde(default)]
    pub eval: EvalPatch,
    #[serde(default)]
    pub paths: Paths,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_usage(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    /// Resolved model/train/eval configs plus variant, under `seed`.
    pub fn resolve(
        &self,
        seed: u64,
        inferred_d: Option<usize>,
    ) -> Result<(ModelConfig, TrainConfig, EvalConfig, Variant), CliError> {
        let model = self.model.resolve(inferred_d, seed)?;
        let train = self.train.resolve(self.preset.train_base());
        let eval = self.eval.resolve(self.preset.eval_base(), seed);
        let variant = self.variant.unwrap_or(Variant::Full);
        model.validate().map_err(CliError::from)?;
        train.validate().map_err(CliError::from)?;
        Ok((model, train, eval, variant))
    }
}

impl RunConfig {
    /// The fully resolved document echoed into an output directory; loading
    /// it back reproduces the run.
    pub fn resolved_echo(
        preset: Preset,
        variant: Variant,
        seed: u64,
        model: &ModelConfig,
        train: &TrainConfig,
        eval: &EvalConfig,
        paths: Paths,
    ) -> RunConfig {
        RunConfig {
            preset,
            variant: Some(variant),
            seed: Some(seed),
            model: ModelPatch {
                d: Some(model.d),
                h: Some(model.h),
                heads: Some(model.heads),
                d_k: Some(model.d_k),
                encoder: Some(model.encoder.clone()),
                m: Some(model.m),
                matching_scale: Some(model.matching_scale),
                mask_queries: Some(model.mask_queries),
                seed: Some(model.seed),
            },
            train: TrainPatch {
                learning_rate: Some(train.learning_rate),
                max_episodes: Some(train.max_episodes),
                validation_interval: Some(train.validation_interval),
                patience: Some(train.patience),
                n_support: Some(train.n_support),
                n_query: Some(train.n_query),
                mode: Some(train.mode),
                clip_norm: Some(train.clip_norm),
            },
            eval: EvalPatch {
                n_support: Some(eval.n_support),
                n_query: Some(eval.n_query),
                mode: Some(eval.mode),
                reruns: Some(eval.reruns),
                support_draws: Some(eval.support_draws),
                reference_size: eval.reference_size,
                seed: Some(eval.seed),
            },
            paths,
        }
    }
}

/// Seed precedence: command-line flag, then config file, then the CRA_SEED
/// environment variable, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = config {
        return Ok(s);
    }
    match std::env::var("CRA_SEED") {
        Ok(text) => text
            .parse::<u64>()
            .map_err(|_| CliError::usage(format!("CRA_SEED={text:?} is not a u64"))),
        Err(_) => Ok(0),
    }
}

/// Sub-seed for a named purpose, e.g. per-rerun training seeds.
pub fn sub_seed(seed: u64, purpose: &str, idx: u64) -> u64 {
    derive_seed(seed, purpose, idx)
}

/// Variant names as they appear in config files: encoder-only, am, aam, full.
pub fn parse_variant(text: &str) -> Result<Variant, CliError> {
    Variant::ALL
        .into_iter()
        .find(|v| v.name() == text)
        .ok_or_else(|| {
            CliError::usage(format!(
                "unknown variant {text:?}; expected encoder-only, am, aam, or full"
            ))
        })
}
