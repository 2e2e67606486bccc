use rand::Rng;

use super::{sample_categorical, CouplingError, ProbVector};

/// Weights within this distance of one are treated as exactly one.
pub const ALPHA_SNAP: f64 = 1e-12;

/// A joint `J°` mixed with an independent residual coupling so that the
/// mixture `α J° + (1 − α) μᵈ (νᵈ)ᵀ` has marginals exactly `(μ, ν)`.
#[derive(Debug, Clone)]
pub struct Debiased {
    pub k: usize,
    /// Largest weight on `J°` compatible with the target marginals.
    pub alpha: f64,
    pub joint: Vec<f64>,
    /// Residual marginals; only meaningful when `alpha < 1`.
    pub mu_residual: Vec<f64>,
    pub nu_residual: Vec<f64>,
}

impl Debiased {
    /// The induced coupling in closed form, row-major.
    pub fn induced_joint(&self) -> Vec<f64> {
        let k = self.k;
        let mut out: Vec<f64> = self.joint.iter().map(|v| self.alpha * v).collect();
        if self.alpha < 1.0 {
            let rest = 1.0 - self.alpha;
            for i in 0..k {
                for j in 0..k {
                    out[i * k + j] += rest * self.mu_residual[i] * self.nu_residual[j];
                }
            }
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let u: f64 = rng.random();
        if u < self.alpha {
            let flat = sample_categorical(&self.joint, rng);
            (flat / self.k, flat % self.k)
        } else {
            (
                sample_categorical(&self.mu_residual, rng),
                sample_categorical(&self.nu_residual, rng),
            )
        }
    }
}

/// Computes `α = min{1, μ_i/μ°_i, ν_j/ν°_j}` (ratios with `μ°_i = 0` or
/// `ν°_j = 0` skipped) and the residual marginals
/// `μᵈ = (μ − αμ°)/(1 − α)`, `νᵈ = (ν − αν°)/(1 − α)`.
///
/// `joint` is row-major `K × K`, nonnegative and summing to one; its
/// marginals may differ from `(μ, ν)`.
pub fn debias_joint(
    joint: &[f64],
    mu: &ProbVector,
    nu: &ProbVector,
) -> Result<Debiased, CouplingError> {
    let k = mu.len();
    if nu.len() != k {
        return Err(CouplingError::LengthMismatch(k, nu.len()));
    }
    if joint.len() != k * k {
        return Err(CouplingError::LengthMismatch(k * k, joint.len()));
    }
    for (index, &value) in joint.iter().enumerate() {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(CouplingError::InvalidEntry { index, value });
        }
    }
    let total: f64 = joint.iter().sum();
    if (total - 1.0).abs() > super::SUM_TOLERANCE {
        return Err(CouplingError::NotNormalized(total));
    }
    let mut row = vec![0.0; k];
    let mut col = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            let v = joint[i * k + j];
            row[i] += v;
            col[j] += v;
        }
    }
    let ratio_min = |target: &[f64], got: &[f64]| {
        target
            .iter()
            .zip(got)
            .filter(|(_, g)| **g > 0.0)
            .map(|(t, g)| t / g)
            .fold(f64::INFINITY, f64::min)
    };
    let mut alpha = 1f64
        .min(ratio_min(mu.as_slice(), &row))
        .min(ratio_min(nu.as_slice(), &col));
    if alpha.is_nan() {
        return Err(CouplingError::UndefinedDebiasWeight);
    }
    // Ratios of equal marginals can round just below one.
    if alpha >= 1.0 - ALPHA_SNAP {
        alpha = 1.0;
    }
    let residual = |target: &[f64], got: &[f64]| -> Vec<f64> {
        if alpha >= 1.0 {
            return target.to_vec();
        }
        let mut r: Vec<f64> = target
            .iter()
            .zip(got)
            .map(|(t, g)| ((t - alpha * g) / (1.0 - alpha)).max(0.0))
            .collect();
        let s: f64 = r.iter().sum();
        if s > 0.0 {
            r.iter_mut().for_each(|v| *v /= s);
        }
        r
    };
    Ok(Debiased {
        k,
        alpha,
        joint: joint.to_vec(),
        mu_residual: residual(mu.as_slice(), &row),
        nu_residual: residual(nu.as_slice(), &col),
    })
}

/// Samples `(i, j)` with `i ~ μ`, `j ~ ν` exactly while using `joint` with the
/// largest possible probability.
pub fn debiased_sample<R: Rng + ?Sized>(
    joint: &[f64],
    mu: &ProbVector,
    nu: &ProbVector,
    rng: &mut R,
) -> Result<(usize, usize), CouplingError> {
    Ok(debias_joint(joint, mu, nu)?.sample(rng))
}
