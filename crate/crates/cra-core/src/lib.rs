//! Few-shot molecular property prediction with contextual representation
//! anchors: class anchors computed from a support set are enriched by
//! attention over an unlabeled reference batch, then support and query
//! embeddings are enriched by attention over the anchors before a
//! cosine-matching classifier scores each query.
//!
//! The crate also houses everything the harness around that model needs:
//! SMILES parsing, fingerprint featurization, a small reverse-mode autodiff
//! tape, episodic samplers, a synthetic selection-bias task generator,
//! ranking metrics, and the evaluation protocol.

pub mod chem;
pub mod episodes;
pub mod featurize;
pub mod metrics;
pub mod model;
pub mod ndiff;
pub mod rng;

pub use rng::Rng;
