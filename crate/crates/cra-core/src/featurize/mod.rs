//! Molecule featurization: fingerprint bits plus z-normalized graph
//! descriptors, concatenated into the model's fixed-length input vector.

mod container;
mod fingerprint;

pub use container::{read_container, write_container, ContainerError, CRAF_VERSION};
pub use fingerprint::{atom_invariant, circular_fingerprint, set_bit_indices, tanimoto};

use crate::chem::MolGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_NBITS: usize = 2048;
pub const DEFAULT_RADIUS: usize = 2;
/// Number of graph descriptors.
pub const NUM_DESCRIPTORS: usize = 6;

#[derive(Debug, Error)]
pub enum FeaturizeError {
    #[error("cannot fit normalization stats on an empty training set")]
    EmptyTrainingSet,
}

/// Fingerprint bits plus raw (unnormalized) descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeatures {
    pub bits: Vec<u8>,
    pub descriptors: Vec<f64>,
}

/// Final model input: bits and train-normalized descriptors, concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub bits: Vec<u8>,
    pub descriptors: Vec<f64>,
    pub combined: Vec<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.combined.len()
    }
}

/// Descriptor means and stds fitted on training molecules only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Graph descriptors: [atom count, bond count, cycle rank, aromatic-atom
/// fraction, heteroatom (non C, H) fraction, mean degree].
pub fn descriptors(mol: &MolGraph) -> Vec<f64> {
    let n = mol.atoms.len() as f64;
    let aromatic = mol.atoms.iter().filter(|a| a.aromatic).count() as f64;
    let hetero = mol
        .atoms
        .iter()
        .filter(|a| a.element != "C" && a.element != "H")
        .count() as f64;
    vec![
        n,
        mol.bonds.len() as f64,
        mol.cycle_rank() as f64,
        aromatic / n,
        hetero / n,
        2.0 * mol.bonds.len() as f64 / n,
    ]
}

/// Fingerprint + descriptors with defaults.
pub fn featurize(mol: &MolGraph) -> RawFeatures {
    RawFeatures {
        bits: circular_fingerprint(mol, DEFAULT_RADIUS, DEFAULT_NBITS),
        descriptors: descriptors(mol),
    }
}

/// Population mean/std per descriptor over the training set; std floored at
/// 1e-8 so constant descriptors normalize to zero instead of dividing by 0.
pub fn fit_normalize(train: &[RawFeatures]) -> Result<NormStats, FeaturizeError> {
    if train.is_empty() {
        return Err(FeaturizeError::EmptyTrainingSet);
    }
    let d = train[0].descriptors.len();
    let n = train.len() as f64;
    let mut mean = vec![0.0; d];
    for raw in train {
        for (m, &x) in mean.iter_mut().zip(&raw.descriptors) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; d];
    for raw in train {
        for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(&raw.descriptors) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var.iter().map(|v| (v / n).sqrt().max(1e-8)).collect();
    Ok(NormStats { mean, std })
}

/// Z-scores descriptors with train stats; bits pass through unchanged.
pub fn apply_normalize(raw: &RawFeatures, stats: &NormStats) -> FeatureVector {
    assert_eq!(raw.descriptors.len(), stats.mean.len(), "descriptor arity");
    let descriptors: Vec<f64> = raw
        .descriptors
        .iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(&x, (&m, &s))| (x - m) / s)
        .collect();
    let mut combined = Vec::with_capacity(raw.bits.len() + descriptors.len());
    combined.extend(raw.bits.iter().map(|&b| b as f64));
    combined.extend_from_slice(&descriptors);
    FeatureVector { bits: raw.bits.clone(), descriptors, combined }
}
