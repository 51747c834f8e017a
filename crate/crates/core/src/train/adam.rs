use alloc::vec;
use alloc::vec::Vec;

/// Adam hyperparameters (defaults β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam over a fixed list of tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    /// One update of every tensor. Shapes must match those given to `new`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        assert_eq!(params.len(), self.first.len(), "tensor count");
        assert_eq!(grads.len(), self.first.len(), "gradient count");
        self.step += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(beta1, t);
        let c2 = 1.0 - libm::pow(beta2, t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            assert_eq!(p.len(), g.len(), "gradient shape");
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (libm::sqrt(v_hat) + epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        for g in [3.5, -0.02, 1e3] {
            let mut adam = Adam::new(AdamConfig::default(), &[1]);
            let mut theta = [1.0];
            adam.step(&mut [&mut theta], &[&[g]], 0.01);
            let expected = 1.0 - 0.01 * g.signum();
            assert!((theta[0] - expected).abs() < 1e-8, "{}", theta[0]);
            assert_eq!(adam.step_count(), 1);
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters_and_decays_moments() {
        let mut adam = Adam::new(AdamConfig::default(), &[2]);
        let mut theta = [0.5, -0.5];
        adam.step(&mut [&mut theta], &[&[0.0, 0.0]], 0.1);
        assert_eq!(theta, [0.5, -0.5]);
        assert_eq!(adam.first_moments()[0], vec![0.0, 0.0]);

        adam.first[0] = vec![1.0, 1.0];
        adam.second[0] = vec![1.0, 1.0];
        let mut theta = [0.0, 0.0];
        adam.step(&mut [&mut theta], &[&[0.0, 0.0]], 0.0);
        assert_eq!(theta, [0.0, 0.0]);
        assert!((adam.first_moments()[0][0] - 0.9).abs() < 1e-15);
        assert!((adam.second_moments()[0][0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn converges_on_quadratic() {
        // minimize (θ - 3)^2 from θ = 0
        let mut adam = Adam::new(AdamConfig::default(), &[1]);
        let mut theta = [0.0];
        for _ in 0..100 {
            let g = 2.0 * (theta[0] - 3.0);
            adam.step(&mut [&mut theta], &[&[g]], 0.1);
        }
        assert!((theta[0] - 3.0).abs() < 0.5, "{}", theta[0]);
    }
}
