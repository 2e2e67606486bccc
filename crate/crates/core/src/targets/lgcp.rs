//! Log-Gaussian Cox process on an `n × n` grid over the unit square.
//!
//! Counts `y_i ~ Poisson(a e^{x_i})` with cell area `a = n⁻²` and a Gaussian
//! process prior `x ~ N(μ1, Σ)`, `Σ_ij = s² exp(−|i − j| / (n b))`, where
//! `|i − j|` is the Euclidean distance between 2D cell indices.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::{Target, TargetError};

#[derive(Debug, Clone)]
pub struct LgcpConfig {
    pub side: usize,
    /// Counts in row-major cell order, cell `(i, j)` at `i * side + j`.
    pub counts: Vec<u32>,
    pub s2: f64,
    pub b: f64,
    pub mu: f64,
    chol: Cholesky<f64, Dyn>,
}

impl LgcpConfig {
    pub const DEFAULT_SIDE: usize = 16;
    pub const DEFAULT_S2: f64 = 1.91;
    pub const DEFAULT_B: f64 = 1.0 / 33.0;

    /// `μ = log(126) − s²/2`.
    pub fn default_mu() -> f64 {
        126f64.ln() - Self::DEFAULT_S2 / 2.0
    }

    pub fn new(
        side: usize,
        counts: Vec<u32>,
        s2: f64,
        b: f64,
        mu: f64,
    ) -> Result<Self, TargetError> {
        if side == 0 {
            return Err(TargetError::ZeroDimension);
        }
        if counts.len() != side * side {
            return Err(TargetError::DimensionMismatch {
                expected: side * side,
                got: counts.len(),
            });
        }
        for (key, v) in [("s2", s2), ("b", b)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TargetError::InvalidParameter {
                    key: key.into(),
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        if !mu.is_finite() {
            return Err(TargetError::InvalidParameter {
                key: "mu".into(),
                reason: "must be finite".into(),
            });
        }
        let sigma = covariance(side, s2, b);
        let chol = Cholesky::new(sigma).ok_or(TargetError::NotPositiveDefinite)?;
        Ok(Self {
            side,
            counts,
            s2,
            b,
            mu,
            chol,
        })
    }

    /// Default hyperparameters on a 16 × 16 grid.
    pub fn with_defaults(counts: Vec<u32>) -> Result<Self, TargetError> {
        Self::new(
            Self::DEFAULT_SIDE,
            counts,
            Self::DEFAULT_S2,
            Self::DEFAULT_B,
            Self::default_mu(),
        )
    }

    pub fn area(&self) -> f64 {
        1.0 / (self.side * self.side) as f64
    }

    pub fn dim(&self) -> usize {
        self.side * self.side
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        covariance(self.side, self.s2, self.b)
    }

    /// Lower-triangular factor `L` with `L Lᵀ = Σ`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

fn covariance(side: usize, s2: f64, b: f64) -> DMatrix<f64> {
    let d = side * side;
    let scale = side as f64 * b;
    DMatrix::from_fn(d, d, |r, c| {
        let (ri, rj) = ((r / side) as f64, (r % side) as f64);
        let (ci, cj) = ((c / side) as f64, (c % side) as f64);
        let dist = ((ri - ci).powi(2) + (rj - cj).powi(2)).sqrt();
        s2 * (-dist / scale).exp()
    })
}

/// Posterior over the latent log-intensity field.
#[derive(Debug, Clone)]
pub struct CoxProcess {
    config: LgcpConfig,
    counts: Vec<f64>,
}

pub fn build_lgcp_target(config: LgcpConfig) -> Result<CoxProcess, TargetError> {
    let counts = config.counts.iter().map(|&c| c as f64).collect();
    Ok(CoxProcess { config, counts })
}

impl CoxProcess {
    pub fn config(&self) -> &LgcpConfig {
        &self.config
    }

    /// `Σ⁻¹ (x − μ1)` through the stored factor.
    fn whitened(&self, x: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let centered = DVector::from_iterator(x.len(), x.iter().map(|v| v - self.config.mu));
        let solved = self.config.chol.solve(&centered);
        (centered, solved)
    }
}

impl Target for CoxProcess {
    fn dim(&self) -> usize {
        self.config.dim()
    }

    fn name(&self) -> &str {
        "lgcp"
    }

    fn potential(&self, x: &[f64]) -> f64 {
        let a = self.config.area();
        let lik: f64 = x
            .iter()
            .zip(&self.counts)
            .map(|(xi, yi)| yi * xi - a * xi.exp())
            .sum();
        let (centered, solved) = self.whitened(x);
        -lik + 0.5 * centered.dot(&solved)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.potential_and_gradient(x, grad);
    }

    fn potential_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let a = self.config.area();
        let (centered, solved) = self.whitened(x);
        let mut lik = 0.0;
        for (i, (xi, yi)) in x.iter().zip(&self.counts).enumerate() {
            let rate = a * xi.exp();
            lik += yi * xi - rate;
            grad[i] = -(yi - rate) + solved[i];
        }
        -lik + 0.5 * centered.dot(&solved)
    }
}

/// Bins `x,y` rows in the unit square onto an `n × n` grid. Cell `(i, j)` is
/// `(floor(n x), floor(n y))`; coordinates equal to 1 land in the last cell.
pub fn load_point_pattern(path: impl AsRef<Path>, side: usize) -> Result<Vec<u32>, TargetError> {
    let path = path.as_ref();
    if side == 0 {
        return Err(TargetError::ZeroDimension);
    }
    let text = std::fs::read_to_string(path).map_err(|source| TargetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut counts = vec![0u32; side * side];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| TargetError::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            reason,
        };
        let (xs, ys) = line
            .split_once(',')
            .ok_or_else(|| err(format!("expected `x,y`, got `{line}`")))?;
        let coord = |s: &str| -> Result<usize, TargetError> {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| err(format!("not a number: `{}`", s.trim())))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(err(format!("coordinate {v} outside [0, 1]")));
            }
            Ok(((side as f64 * v).floor() as usize).min(side - 1))
        };
        let i = coord(xs)?;
        let j = coord(ys)?;
        counts[i * side + j] += 1;
    }
    Ok(counts)
}

/// Draws a latent field from the prior and Poisson counts given it.
pub fn synthetic_counts<R: Rng + ?Sized>(
    side: usize,
    s2: f64,
    b: f64,
    mu: f64,
    rng: &mut R,
) -> Result<Vec<u32>, TargetError> {
    let placeholder = LgcpConfig::new(side, vec![0; side * side], s2, b, mu)?;
    let z = DVector::from_iterator(
        side * side,
        (0..side * side).map(|_| StandardNormal.sample(rng)),
    );
    let field = placeholder.cholesky_factor() * z;
    let area = placeholder.area();
    field
        .iter()
        .map(|x| {
            let rate = area * (mu + x).exp();
            if rate <= 0.0 {
                return Ok(0);
            }
            let pois = Poisson::new(rate).map_err(|e| TargetError::InvalidParameter {
                key: "rate".into(),
                reason: e.to_string(),
            })?;
            Ok(pois.sample(rng) as u32)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::testing::gradient_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    #[test]
    fn defaults() {
        assert_eq!(LgcpConfig::DEFAULT_SIDE, 16);
        assert_eq!(LgcpConfig::DEFAULT_S2, 1.91);
        assert_eq!(LgcpConfig::DEFAULT_B, 1.0 / 33.0);
        assert_eq!(LgcpConfig::default_mu(), 126f64.ln() - 1.91 / 2.0);
    }

    #[test]
    fn factor_reconstructs_covariance() {
        let cfg = LgcpConfig::with_defaults(vec![0; 256]).unwrap();
        let l = cfg.cholesky_factor();
        let sigma = cfg.covariance();
        let err = (&l * l.transpose() - &sigma).abs().max();
        assert!(err <= 1e-8, "{err}");
        for i in 0..256 {
            assert_eq!(sigma[(i, i)], 1.91);
        }
        assert!(l.upper_triangle().iter().enumerate().all(|(k, v)| {
            let (r, c) = (k % 256, k / 256);
            r == c || *v == 0.0
        }));
    }

    #[test]
    fn gradient_at_prior_mean() {
        let cfg = LgcpConfig::new(2, vec![0; 4], 1.91, 1.0 / 33.0, 1.3).unwrap();
        let a = cfg.area();
        let target = build_lgcp_target(cfg).unwrap();
        let mut g = vec![0.0; 4];
        target.gradient(&[1.3; 4], &mut g);
        for v in g {
            assert!((v - a * 1.3f64.exp()).abs() <= 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let counts: Vec<u32> = (0..16).map(|_| rng.random_range(0..5)).collect();
        let cfg = LgcpConfig::new(4, counts, 1.91, 1.0 / 33.0, LgcpConfig::default_mu()).unwrap();
        let target = build_lgcp_target(cfg).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..16)
                .map(|_| LgcpConfig::default_mu() + Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            assert!(gradient_error(&target, &x) <= 1e-5);
        }
    }

    #[test]
    fn hessian_is_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let counts: Vec<u32> = (0..16).map(|_| rng.random_range(0..5)).collect();
        let cfg = LgcpConfig::new(4, counts, 1.91, 1.0 / 33.0, 0.5).unwrap();
        let a = cfg.area();
        let inv = cfg.covariance().try_inverse().unwrap();
        let x: Vec<f64> = (0..16).map(|_| StandardNormal.sample(&mut rng)).collect();
        let hess = DMatrix::from_diagonal(&DVector::from_iterator(16, x.iter().map(|v| a * v.exp())))
            + inv;
        let sym = (&hess + hess.transpose()) * 0.5;
        let min = sym.symmetric_eigenvalues().min();
        assert!(min > 0.0, "{min}");
    }

    #[test]
    fn point_pattern_binning() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "0.5,0.5").unwrap();
        let counts = load_point_pattern(f.path(), 2).unwrap();
        assert_eq!(counts, vec![0, 0, 0, 1]);

        let empty = tempfile::NamedTempFile::new().unwrap();
        assert_eq!(load_point_pattern(empty.path(), 3).unwrap(), vec![0; 9]);

        let mut edge = tempfile::NamedTempFile::new().unwrap();
        writeln!(edge, "1.0,0.0\n0.0,1.0").unwrap();
        assert_eq!(load_point_pattern(edge.path(), 2).unwrap(), vec![0, 1, 1, 0]);
    }

    #[test]
    fn point_pattern_totals() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for _ in 0..126 {
            writeln!(f, "{},{}", rng.random::<f64>(), rng.random::<f64>()).unwrap();
        }
        let counts = load_point_pattern(f.path(), 16).unwrap();
        assert_eq!(counts.iter().sum::<u32>(), 126);
    }

    #[test]
    fn point_pattern_errors() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "0.1,0.2\n1.5,0.2").unwrap();
        assert!(matches!(
            load_point_pattern(f.path(), 4),
            Err(TargetError::Parse { line: 2, .. })
        ));
        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "0.1;0.2").unwrap();
        assert!(matches!(
            load_point_pattern(g.path(), 4),
            Err(TargetError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            load_point_pattern("/nonexistent/pines.csv", 4),
            Err(TargetError::Io { .. })
        ));
    }

    #[test]
    fn non_positive_definite_is_rejected() {
        assert!(matches!(
            LgcpConfig::new(2, vec![0; 4], -1.0, 0.1, 0.0),
            Err(TargetError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn synthetic_counts_have_grid_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let counts = synthetic_counts(8, 1.91, 1.0 / 33.0, LgcpConfig::default_mu(), &mut rng).unwrap();
        assert_eq!(counts.len(), 64);
        assert!(counts.iter().sum::<u32>() > 0);
    }
}
