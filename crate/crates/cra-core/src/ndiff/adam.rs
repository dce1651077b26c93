//! Adam with bias correction, plus global-norm gradient clipping.

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    /// Moments shaped after the parameter list.
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect(),
            t: 0,
        }
    }

    /// One bias-corrected update, in place:
    /// θ -= lr · m̂ / (√v̂ + ε).
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], cfg: &AdamConfig) {
        let mut refs: Vec<&mut Tensor> = params.iter_mut().collect();
        self.step_refs(&mut refs, grads, cfg);
    }

    /// [`step`](Self::step) over borrowed parameter tensors, for callers
    /// whose parameters live inside a larger structure.
    pub fn step_refs(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], cfg: &AdamConfig) {
        assert_eq!(params.len(), self.m.len(), "adam: parameter count");
        assert_eq!(params.len(), grads.len(), "adam: gradient count");
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(&mut self.v))
        {
            assert_eq!(p.shape(), g.shape(), "adam: shape mismatch");
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m.data[k] = cfg.beta1 * m.data[k] + (1.0 - cfg.beta1) * gk;
                v.data[k] = cfg.beta2 * v.data[k] + (1.0 - cfg.beta2) * gk * gk;
                let m_hat = m.data[k] / bc1;
                let v_hat = v.data[k] / bc2;
                p.data[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
    }
}

/// Scales all gradients by max_norm/‖g‖ when the joint norm exceeds
/// max_norm; returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let total: f64 = grads.iter().map(|g| g.data.iter().map(|x| x * x).sum::<f64>()).sum();
    let norm = total.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for x in &mut g.data {
                *x *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![Tensor::from_vec(1, 2, vec![1.0, -2.0])];
        let grads = vec![Tensor::zeros(1, 2)];
        let mut state = AdamState::new(&params);
        let before = params.clone();
        state.step(&mut params, &grads, &AdamConfig::with_lr(0.1));
        assert_eq!(params, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_matches_closed_form() {
        // From fresh state, m̂ = g and v̂ = g², so the update is
        // -lr·g/(|g| + ε) regardless of the betas.
        let cfg = AdamConfig::with_lr(1e-3);
        for &g0 in &[0.5, -3.0, 1e-4] {
            let mut params = vec![Tensor::from_vec(1, 1, vec![2.0])];
            let grads = vec![Tensor::from_vec(1, 1, vec![g0])];
            let mut state = AdamState::new(&params);
            state.step(&mut params, &grads, &cfg);
            let expected = 2.0 - cfg.lr * g0 / (g0.abs() + cfg.eps);
            assert!(
                (params[0].data[0] - expected).abs() < 1e-15,
                "g={g0}: {} vs {expected}",
                params[0].data[0]
            );
        }
    }

    #[test]
    fn equal_gradients_get_identical_updates() {
        let mut params = vec![Tensor::from_vec(1, 2, vec![1.0, 1.0])];
        let grads = vec![Tensor::from_vec(1, 2, vec![0.7, 0.7])];
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig::with_lr(0.01);
        for _ in 0..5 {
            state.step(&mut params, &grads, &cfg);
            assert_eq!(params[0].data[0], params[0].data[1]);
        }
    }

    #[test]
    fn clip_rescales_only_above_threshold() {
        let mut grads = vec![
            Tensor::from_vec(1, 2, vec![3.0, 0.0]),
            Tensor::from_vec(1, 1, vec![4.0]),
        ];
        let norm = clip_global_norm(&mut grads, 5.0);
        assert_eq!(norm, 5.0);
        assert_eq!(grads[0].data, vec![3.0, 0.0]);

        let norm = clip_global_norm(&mut grads, 1.0);
        assert_eq!(norm, 5.0);
        let new_total: f64 = grads.iter().flat_map(|g| &g.data).map(|x| x * x).sum();
        assert!((new_total.sqrt() - 1.0).abs() < 1e-12);
        // Direction preserved.
        assert!((grads[0].data[0] - 0.6).abs() < 1e-12);
        assert!((grads[1].data[0] - 0.8).abs() < 1e-12);
    }
}
