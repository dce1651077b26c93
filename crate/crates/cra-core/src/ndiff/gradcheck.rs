//! Central finite-difference gradient oracle for testing analytic gradients.
//!
//! The oracle knows nothing about the tape: callers hand it a closure that
//! rebuilds the computation from plain tensors, and it perturbs one entry at
//! a time. Used by unit tests here and by the acceptance suite.

use super::tensor::Tensor;

/// Numerical gradient of `f` w.r.t. every entry of every input, by central
/// differences with the given step.
pub fn finite_difference<F>(f: &mut F, inputs: &[Tensor], step: f64) -> Vec<Tensor>
where
    F: FnMut(&[Tensor]) -> f64,
{
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let mut grad = Tensor::zeros(inputs[t].rows, inputs[t].cols);
        for k in 0..inputs[t].data.len() {
            let orig = work[t].data[k];
            work[t].data[k] = orig + step;
            let up = f(&work);
            work[t].data[k] = orig - step;
            let down = f(&work);
            work[t].data[k] = orig;
            grad.data[k] = (up - down) / (2.0 * step);
        }
        grads.push(grad);
    }
    grads
}

/// Worst relative error between two gradients, with |a|+|b| in the
/// denominator so tiny gradients compare on absolute terms.
pub fn max_rel_err(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes");
    analytic
        .data
        .iter()
        .zip(&numeric.data)
        .map(|(&a, &n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
