use std::f64::consts::PI;

use super::Target;

/// Standard Gaussian, `U(q) = ½‖q‖²`.
#[derive(Debug, Clone)]
pub struct StdGaussian {
    dim: usize,
}

impl StdGaussian {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim }
    }
}

impl Target for StdGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> &str {
        "gaussian"
    }

    fn potential(&self, q: &[f64]) -> f64 {
        0.5 * q.iter().map(|x| x * x).sum::<f64>()
    }

    fn gradient(&self, q: &[f64], grad: &mut [f64]) {
        grad.copy_from_slice(q);
    }
}

/// Isotropic Gaussian mixture in two dimensions.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    means: Vec<[f64; 2]>,
    log_weights: Vec<f64>,
    std: f64,
}

impl GaussianMixture {
    pub fn new(means: Vec<[f64; 2]>, weights: Vec<f64>, std: f64) -> Self {
        assert_eq!(means.len(), weights.len());
        assert!(std > 0.0);
        let total: f64 = weights.iter().sum();
        Self {
            means,
            log_weights: weights.iter().map(|w| (w / total).ln()).collect(),
            std,
        }
    }

    /// Three components on the diagonal with standard deviation 0.25.
    pub fn three_component() -> Self {
        Self::new(
            vec![[-1.0, -1.0], [0.0, 0.0], [1.0, 1.0]],
            vec![0.25, 0.4, 0.35],
            0.25,
        )
    }

    fn component_logs(&self, q: &[f64]) -> Vec<f64> {
        let var = self.std * self.std;
        let log_norm = (2.0 * PI * var).ln();
        self.means
            .iter()
            .zip(&self.log_weights)
            .map(|(m, lw)| {
                let d0 = q[0] - m[0];
                let d1 = q[1] - m[1];
                lw - log_norm - (d0 * d0 + d1 * d1) / (2.0 * var)
            })
            .collect()
    }

    /// Posterior component probabilities at `q`.
    pub fn responsibilities(&self, q: &[f64]) -> Vec<f64> {
        let logs = self.component_logs(q);
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut r: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = r.iter().sum();
        r.iter_mut().for_each(|v| *v /= total);
        r
    }
}

impl Target for GaussianMixture {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &str {
        "gmm"
    }

    fn potential(&self, q: &[f64]) -> f64 {
        let logs = self.component_logs(q);
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        -(max + sum.ln())
    }

    fn gradient(&self, q: &[f64], grad: &mut [f64]) {
        let r = self.responsibilities(q);
        let var = self.std * self.std;
        grad[0] = 0.0;
        grad[1] = 0.0;
        for (rc, m) in r.iter().zip(&self.means) {
            grad[0] += rc * (q[0] - m[0]) / var;
            grad[1] += rc * (q[1] - m[1]) / var;
        }
    }
}

/// Rosenbrock potential `(1 − x₁)² + 10(x₂ − x₁²)²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Banana;

impl Target for Banana {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &str {
        "banana"
    }

    fn potential(&self, q: &[f64]) -> f64 {
        let a = 1.0 - q[0];
        let b = q[1] - q[0] * q[0];
        a * a + 10.0 * b * b
    }

    fn gradient(&self, q: &[f64], grad: &mut [f64]) {
        let b = q[1] - q[0] * q[0];
        grad[0] = -2.0 * (1.0 - q[0]) - 40.0 * q[0] * b;
        grad[1] = 20.0 * b;
    }
}
