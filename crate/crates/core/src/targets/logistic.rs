//! Bayesian logistic regression with a hierarchical Gaussian prior.
//!
//! Parameters are `θ = (γ, a, b)` where `s² = e^γ` is the prior variance,
//! `a` the intercept and `b` the coefficient vector:
//!
//! ```text
//! s² ~ Exp(λ),  a ~ N(0, s²),  b ~ N(0, s² I),  y_i ~ Bernoulli(σ(a + x_iᵀb))
//! ```
//!
//! Sampling happens on `γ = log s²`, so the potential carries the log-Jacobian
//! term `−γ`.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{sigmoid, softplus, Target, TargetError};

/// Exponential prior rate used when none is given.
pub const DEFAULT_PRIOR_RATE: f64 = 0.01;

/// Number of raw attributes in the numeric German credit file.
const GERMAN_FEATURES: usize = 24;

#[derive(Debug, Clone)]
pub struct LogisticRegressionData {
    /// Row-major `rows × cols` design matrix.
    pub design: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    /// Labels in `{0, 1}`.
    pub labels: Vec<f64>,
    /// Rate of the exponential prior on `s²`.
    pub rate: f64,
}

impl LogisticRegressionData {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.design[i * self.cols + j])
    }
}

/// Standardizes the raw features, appends all pairwise products of the
/// standardized features (`i < j`, lexicographic) and standardizes those too.
///
/// `raw` is row-major with `features` columns. Returns the row-major design
/// and its column count.
pub fn preprocess_design(
    raw: &[f64],
    features: usize,
) -> Result<(Vec<f64>, usize), TargetError> {
    let rows = raw.len() / features;
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(features * (features + 1) / 2);
    for j in 0..features {
        let mut col: Vec<f64> = (0..rows).map(|i| raw[i * features + j]).collect();
        standardize(&mut col).map_err(|_| TargetError::ConstantColumn {
            column: format!("{}", j + 1),
        })?;
        columns.push(col);
    }
    for a in 0..features {
        for b in (a + 1)..features {
            let mut col: Vec<f64> = columns[a]
                .iter()
                .zip(&columns[b])
                .map(|(x, y)| x * y)
                .collect();
            standardize(&mut col).map_err(|_| TargetError::ConstantColumn {
                column: format!("{}*{}", a + 1, b + 1),
            })?;
            columns.push(col);
        }
    }
    let cols = columns.len();
    let mut design = vec![0.0; rows * cols];
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            design[i * cols + j] = *v;
        }
    }
    Ok((design, cols))
}

/// Centers and scales to unit sample standard deviation (denominator `N − 1`).
fn standardize(col: &mut [f64]) -> Result<(), ()> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    col.iter_mut().for_each(|v| *v -= mean);
    let var = col.iter().map(|v| v * v).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 1e-12 * (1.0 + mean.abs())) {
        return Err(());
    }
    col.iter_mut().for_each(|v| *v /= sd);
    Ok(())
}

/// Reads the whitespace-separated numeric German credit file: 24 attributes
/// followed by a class label in `{1, 2}` (recoded to `{0, 1}`).
pub fn load_german_credit(
    path: impl AsRef<Path>,
    rate: f64,
) -> Result<LogisticRegressionData, TargetError> {
    let path = path.as_ref();
    if !(rate > 0.0) {
        return Err(TargetError::InvalidParameter {
            key: "lambda".into(),
            reason: format!("rate must be positive, got {rate}"),
        });
    }
    let text = std::fs::read_to_string(path).map_err(|source| TargetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut raw = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| TargetError::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            reason,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != GERMAN_FEATURES + 1 {
            return Err(parse_err(format!(
                "expected {} columns, found {}",
                GERMAN_FEATURES + 1,
                fields.len()
            )));
        }
        for f in &fields[..GERMAN_FEATURES] {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(format!("not a number: `{f}`")))?;
            raw.push(v);
        }
        let label = match fields[GERMAN_FEATURES] {
            "1" => 0.0,
            "2" => 1.0,
            other => return Err(parse_err(format!("class label must be 1 or 2, got `{other}`"))),
        };
        labels.push(label);
    }
    if labels.len() < 2 {
        return Err(TargetError::Parse {
            path: path.to_path_buf(),
            line: labels.len(),
            reason: "need at least two rows".into(),
        });
    }
    let (design, cols) = preprocess_design(&raw, GERMAN_FEATURES)?;
    Ok(LogisticRegressionData {
        rows: labels.len(),
        design,
        cols,
        labels,
        rate,
    })
}

/// Synthetic stand-in with the German credit shape: `rows` observations of
/// `features` Gaussian attributes, labels drawn from a logistic model with
/// small random coefficients.
pub fn synthetic_logistic_data<R: Rng + ?Sized>(
    rows: usize,
    features: usize,
    rate: f64,
    rng: &mut R,
) -> Result<LogisticRegressionData, TargetError> {
    let raw: Vec<f64> = (0..rows * features)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let (design, cols) = preprocess_design(&raw, features)?;
    let intercept: f64 = -0.5;
    let coef: Vec<f64> = (0..cols)
        .map(|j| {
            let z: f64 = StandardNormal.sample(rng);
            if j < features {
                0.5 * z
            } else {
                0.05 * z
            }
        })
        .collect();
    let labels = (0..rows)
        .map(|i| {
            let eta = intercept
                + design[i * cols..(i + 1) * cols]
                    .iter()
                    .zip(&coef)
                    .map(|(x, b)| x * b)
                    .sum::<f64>();
            if rng.random::<f64>() < sigmoid(eta) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(LogisticRegressionData {
        design,
        rows,
        cols,
        labels,
        rate,
    })
}

#[derive(Debug, Clone)]
pub struct LogisticRegression {
    data: LogisticRegressionData,
}

pub fn build_logistic_target(
    data: LogisticRegressionData,
) -> Result<LogisticRegression, TargetError> {
    if data.design.len() != data.rows * data.cols {
        return Err(TargetError::DimensionMismatch {
            expected: data.rows * data.cols,
            got: data.design.len(),
        });
    }
    if data.labels.len() != data.rows {
        return Err(TargetError::DimensionMismatch {
            expected: data.rows,
            got: data.labels.len(),
        });
    }
    if !(data.rate > 0.0) {
        return Err(TargetError::InvalidParameter {
            key: "lambda".into(),
            reason: format!("rate must be positive, got {}", data.rate),
        });
    }
    Ok(LogisticRegression { data })
}

impl LogisticRegression {
    pub fn data(&self) -> &LogisticRegressionData {
        &self.data
    }

    fn linear_predictor(&self, theta: &[f64]) -> Vec<f64> {
        let a = theta[1];
        let b = &theta[2..];
        (0..self.data.rows)
            .map(|i| a + self.data.row(i).iter().zip(b).map(|(x, c)| x * c).sum::<f64>())
            .collect()
    }

    fn prior_potential(&self, theta: &[f64]) -> f64 {
        let gamma = theta[0];
        let s2 = gamma.exp();
        let sq: f64 = theta[1..].iter().map(|v| v * v).sum();
        let gaussians = (self.data.cols + 1) as f64;
        let lambda = self.data.rate;
        sq / (2.0 * s2) + 0.5 * gaussians * (2.0 * PI * s2).ln() + lambda * s2 - lambda.ln()
            - gamma
    }
}

impl Target for LogisticRegression {
    fn dim(&self) -> usize {
        self.data.cols + 2
    }

    fn name(&self) -> &str {
        "logistic"
    }

    fn potential(&self, theta: &[f64]) -> f64 {
        let eta = self.linear_predictor(theta);
        let nll: f64 = eta
            .iter()
            .zip(&self.data.labels)
            .map(|(e, y)| softplus(*e) - y * e)
            .sum();
        nll + self.prior_potential(theta)
    }

    fn gradient(&self, theta: &[f64], grad: &mut [f64]) {
        self.potential_and_gradient(theta, grad);
    }

    fn potential_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let eta = self.linear_predictor(theta);
        let gamma = theta[0];
        let s2 = gamma.exp();
        let mut nll = 0.0;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (i, (e, y)) in eta.iter().zip(&self.data.labels).enumerate() {
            nll += softplus(*e) - y * e;
            let resid = sigmoid(*e) - y;
            grad[1] += resid;
            for (g, x) in grad[2..].iter_mut().zip(self.data.row(i)) {
                *g += resid * x;
            }
        }
        let mut sq = 0.0;
        for (g, v) in grad[1..].iter_mut().zip(&theta[1..]) {
            *g += v / s2;
            sq += v * v;
        }
        let gaussians = (self.data.cols + 1) as f64;
        grad[0] = -sq / (2.0 * s2) + 0.5 * gaussians + self.data.rate * s2 - 1.0;
        nll + self.prior_potential(theta)
    }
}
