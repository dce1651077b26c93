//! Numerical substrate: dense f64 tensors, a reverse-mode tape, Adam, and a
//! finite-difference gradient oracle for tests.

pub mod adam;
pub mod gradcheck;
mod tape;
mod tensor;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use tape::{NodeId, Tape, NORM_FLOOR};
pub use tensor::Tensor;
