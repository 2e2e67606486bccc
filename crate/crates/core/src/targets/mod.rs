//! Target distributions `π(q) ∝ exp(−U(q))`.
//!
//! A target supplies the potential `U` and its gradient. Targets are
//! immutable after construction and can be shared between threads.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

mod lgcp;
mod logistic;
mod toys;

pub use lgcp::{
    build_lgcp_target, load_point_pattern, synthetic_counts, CoxProcess, LgcpConfig,
};
pub use logistic::{
    build_logistic_target, load_german_credit, preprocess_design, synthetic_logistic_data,
    LogisticRegression, LogisticRegressionData, DEFAULT_PRIOR_RATE,
};
pub use toys::{Banana, GaussianMixture, StdGaussian};

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
    #[error("target `{name}` has fixed dimension {expected}, got {got}")]
    FixedDimension {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("unknown parameter `{key}` for target `{name}`")]
    UnknownParameter { name: String, key: String },
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("column {column} has zero variance")]
    ConstantColumn { column: String },
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
}

/// A differentiable log-density, up to an additive constant.
pub trait Target: Send + Sync {
    fn dim(&self) -> usize;

    fn name(&self) -> &str;

    /// `U(q) = −log π(q) + const`.
    fn potential(&self, q: &[f64]) -> f64;

    /// Writes `∇U(q)` into `grad`.
    fn gradient(&self, q: &[f64], grad: &mut [f64]);

    /// Potential and gradient in one pass. Override when the two share work.
    fn potential_and_gradient(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        self.gradient(q, grad);
        self.potential(q)
    }
}

/// Shared handle to a target.
pub type TargetModel = Arc<dyn Target>;

impl<T: Target + ?Sized> Target for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn name(&self) -> &str {
        (**self).name()
    }
    fn potential(&self, q: &[f64]) -> f64 {
        (**self).potential(q)
    }
    fn gradient(&self, q: &[f64], grad: &mut [f64]) {
        (**self).gradient(q, grad)
    }
    fn potential_and_gradient(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        (**self).potential_and_gradient(q, grad)
    }
}

impl<T: Target + ?Sized> Target for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn name(&self) -> &str {
        (**self).name()
    }
    fn potential(&self, q: &[f64]) -> f64 {
        (**self).potential(q)
    }
    fn gradient(&self, q: &[f64], grad: &mut [f64]) {
        (**self).gradient(q, grad)
    }
    fn potential_and_gradient(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        (**self).potential_and_gradient(q, grad)
    }
}

/// Builds one of the analytic targets: `gaussian` (any dimension), `gmm`
/// and `banana` (both two-dimensional). None of them take parameters, so
/// any key in `params` is rejected.
pub fn make_builtin_target(
    name: &str,
    dim: usize,
    params: &BTreeMap<String, f64>,
) -> Result<TargetModel, TargetError> {
    if let Some(key) = params.keys().next() {
        return Err(TargetError::UnknownParameter {
            name: name.to_string(),
            key: key.clone(),
        });
    }
    let fixed = |expected: usize| {
        if dim == expected {
            Ok(())
        } else {
            Err(TargetError::FixedDimension {
                name: name.to_string(),
                expected,
                got: dim,
            })
        }
    };
    match name {
        "gaussian" => {
            if dim == 0 {
                return Err(TargetError::ZeroDimension);
            }
            Ok(Arc::new(StdGaussian::new(dim)))
        }
        "gmm" => {
            fixed(2)?;
            Ok(Arc::new(GaussianMixture::three_component()))
        }
        "banana" => {
            fixed(2)?;
            Ok(Arc::new(Banana))
        }
        other => Err(TargetError::UnknownTarget(other.to_string())),
    }
}

/// `log(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::Target;

    /// Central differences with step `h·max(1, |q_i|)`.
    pub fn fd_gradient(target: &dyn Target, q: &[f64], h: f64) -> Vec<f64> {
        let mut x = q.to_vec();
        (0..q.len())
            .map(|i| {
                let step = h * q[i].abs().max(1.0);
                x[i] = q[i] + step;
                let up = target.potential(&x);
                x[i] = q[i] - step;
                let down = target.potential(&x);
                x[i] = q[i];
                (up - down) / (2.0 * step)
            })
            .collect()
    }

    /// Max relative error `|g − fd| / max(1, ‖fd‖∞)`.
    pub fn gradient_error(target: &dyn Target, q: &[f64]) -> f64 {
        let mut grad = vec![0.0; q.len()];
        target.gradient(q, &mut grad);
        let fd = fd_gradient(target, q, 1e-5);
        let scale = fd.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        grad.iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).abs() / scale)
            .fold(0.0, f64::max)
    }
}
