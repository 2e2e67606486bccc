//! Couplings of two categorical distributions over trajectory indices.
//!
//! Given the multinomial weights `μ` and `ν` of two aligned trajectories, a
//! coupled kernel draws a pair `(i, j)` with `i ~ μ` and `j ~ ν`. This module
//! provides the maximal coupling, the exact optimal transport (W2) coupling
//! and a debiasing step that repairs joints whose marginals are off.

use std::ops::Index;

use rand::Rng;
use thiserror::Error;

use crate::integrator::Trajectory;

mod debias;
mod transport;

pub use debias::{debias_joint, debiased_sample, Debiased, ALPHA_SNAP};
pub use transport::{solve_transport, transport_cost};

/// Tolerance on `Σ μ_i − 1` accepted by [`ProbVector::new`].
pub const SUM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("probability vector is empty")]
    Empty,
    #[error("entry {index} is negative or not finite: {value}")]
    InvalidEntry { index: usize, value: f64 },
    #[error("entries sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("distance matrix has a non-finite entry at ({0}, {1})")]
    NonFiniteCost(usize, usize),
    #[error("transport solver did not converge after {0} pivots")]
    NoConvergence(usize),
    #[error("debiasing weight is undefined (joint has no mass on the targets' support)")]
    UndefinedDebiasWeight,
}

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates the entries; a sum within [`SUM_TOLERANCE`] of one is
    /// renormalized once.
    pub fn new(weights: Vec<f64>) -> Result<Self, CouplingError> {
        if weights.is_empty() {
            return Err(CouplingError::Empty);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(CouplingError::InvalidEntry { index, value });
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(CouplingError::NotNormalized(total));
        }
        let mut weights = weights;
        if total != 1.0 {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        Ok(Self(weights))
    }

    pub(crate) fn from_normalized(weights: Vec<f64>) -> Self {
        debug_assert!((weights.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE);
        Self(weights)
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.0, rng)
    }
}

impl Index<usize> for ProbVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Dense `K × K` joint with its declared marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    k: usize,
    entries: Vec<f64>,
    row_marginal: ProbVector,
    col_marginal: ProbVector,
}

impl CouplingMatrix {
    /// Row-major entries of a joint for `(μ, ν)`; rejects negative entries
    /// and marginals off by more than `tolerance`.
    pub fn new(
        entries: Vec<f64>,
        row_marginal: ProbVector,
        col_marginal: ProbVector,
        tolerance: f64,
    ) -> Result<Self, CouplingError> {
        let k = row_marginal.len();
        if col_marginal.len() != k {
            return Err(CouplingError::LengthMismatch(k, col_marginal.len()));
        }
        if entries.len() != k * k {
            return Err(CouplingError::LengthMismatch(k * k, entries.len()));
        }
        for (index, &value) in entries.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(CouplingError::InvalidEntry { index, value });
            }
        }
        let m = Self {
            k,
            entries,
            row_marginal,
            col_marginal,
        };
        let err = m.marginal_error();
        if err > tolerance {
            return Err(CouplingError::NotNormalized(1.0 + err));
        }
        Ok(m)
    }

    pub(crate) fn from_parts(
        entries: Vec<f64>,
        row_marginal: ProbVector,
        col_marginal: ProbVector,
    ) -> Self {
        Self {
            k: row_marginal.len(),
            entries,
            row_marginal,
            col_marginal,
        }
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row_marginal(&self) -> &ProbVector {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &ProbVector {
        &self.col_marginal
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.chunks(self.k).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for row in self.entries.chunks(self.k) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// Largest deviation of a row or column sum from its declared marginal.
    pub fn marginal_error(&self) -> f64 {
        let rows = self
            .row_sums()
            .iter()
            .zip(self.row_marginal.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let cols = self
            .col_sums()
            .iter()
            .zip(self.col_marginal.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        rows.max(cols)
    }

    pub fn trace(&self) -> f64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    /// `Σ γ_ij D_ij`.
    pub fn cost(&self, d: &DistanceMatrix) -> f64 {
        self.entries.iter().zip(&d.entries).map(|(g, c)| g * c).sum()
    }

    /// Independent coupling `μ νᵀ`.
    pub fn independent(mu: &ProbVector, nu: &ProbVector) -> Result<Self, CouplingError> {
        if mu.len() != nu.len() {
            return Err(CouplingError::LengthMismatch(mu.len(), nu.len()));
        }
        let entries = mu
            .as_slice()
            .iter()
            .flat_map(|a| nu.as_slice().iter().map(move |b| a * b))
            .collect();
        Ok(Self::from_parts(entries, mu.clone(), nu.clone()))
    }
}

/// Squared Euclidean distances between positions of two trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    k: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(k: usize, entries: Vec<f64>) -> Result<Self, CouplingError> {
        if entries.len() != k * k {
            return Err(CouplingError::LengthMismatch(k * k, entries.len()));
        }
        for (idx, v) in entries.iter().enumerate() {
            if !v.is_finite() {
                return Err(CouplingError::NonFiniteCost(idx / k, idx % k));
            }
        }
        Ok(Self { k, entries })
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// `D_ij = ‖q¹_i − q²_j‖²`.
pub fn pairwise_sq_distances(
    t1: &Trajectory,
    t2: &Trajectory,
) -> Result<DistanceMatrix, CouplingError> {
    if t1.len() != t2.len() {
        return Err(CouplingError::LengthMismatch(t1.len(), t2.len()));
    }
    let k = t1.len();
    let mut entries = Vec::with_capacity(k * k);
    for a in &t1.points {
        for b in &t2.points {
            let d: f64 = a.q.iter().zip(&b.q).map(|(x, y)| (x - y) * (x - y)).sum();
            // A diverged position yields an infinite distance; cap it so the
            // transport problem stays finite.
            entries.push(if d.is_finite() { d } else { f64::MAX / 4.0 });
        }
    }
    Ok(DistanceMatrix { k, entries })
}

/// `½ Σ |μ_i − ν_i|`.
pub fn tv_distance(mu: &ProbVector, nu: &ProbVector) -> Result<f64, CouplingError> {
    if mu.len() != nu.len() {
        return Err(CouplingError::LengthMismatch(mu.len(), nu.len()));
    }
    Ok(0.5
        * mu.as_slice()
            .iter()
            .zip(nu.as_slice())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// Overlap `μ ∧ ν` and the two residuals `μ − μ∧ν`, `ν − μ∧ν`.
fn overlap(mu: &[f64], nu: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let common: Vec<f64> = mu.iter().zip(nu).map(|(a, b)| a.min(*b)).collect();
    let rest_mu = mu.iter().zip(&common).map(|(a, c)| a - c).collect();
    let rest_nu = nu.iter().zip(&common).map(|(b, c)| b - c).collect();
    (common, rest_mu, rest_nu)
}

/// The maximal coupling as a matrix: `diag(μ ∧ ν)` plus the normalized outer
/// product of the residuals.
pub fn maximal_coupling_joint(
    mu: &ProbVector,
    nu: &ProbVector,
) -> Result<CouplingMatrix, CouplingError> {
    if mu.len() != nu.len() {
        return Err(CouplingError::LengthMismatch(mu.len(), nu.len()));
    }
    let k = mu.len();
    let (common, rest_mu, rest_nu) = overlap(mu.as_slice(), nu.as_slice());
    let residual_mass: f64 = rest_mu.iter().sum();
    let mut entries = vec![0.0; k * k];
    if residual_mass > 0.0 {
        for i in 0..k {
            if rest_mu[i] == 0.0 {
                continue;
            }
            for j in 0..k {
                entries[i * k + j] = rest_mu[i] * rest_nu[j] / residual_mass;
            }
        }
    }
    for i in 0..k {
        entries[i * k + i] += common[i];
    }
    Ok(CouplingMatrix::from_parts(entries, mu.clone(), nu.clone()))
}

/// Draws `(i, j)` from the maximal coupling: a common index with probability
/// `1 − TV(μ, ν)`, otherwise independent draws from the residuals.
pub fn sample_maximal<R: Rng + ?Sized>(
    mu: &ProbVector,
    nu: &ProbVector,
    rng: &mut R,
) -> Result<(usize, usize), CouplingError> {
    if mu.len() != nu.len() {
        return Err(CouplingError::LengthMismatch(mu.len(), nu.len()));
    }
    let (common, rest_mu, rest_nu) = overlap(mu.as_slice(), nu.as_slice());
    let z: f64 = common.iter().sum();
    let u: f64 = rng.random();
    if u < z || rest_mu.iter().all(|r| *r <= 0.0) || rest_nu.iter().all(|r| *r <= 0.0) {
        let i = sample_categorical(&common, rng);
        Ok((i, i))
    } else {
        let i = sample_categorical(&rest_mu, rng);
        let j = sample_categorical(&rest_nu, rng);
        Ok((i, j))
    }
}

/// Draws `(i, j)` with probability `J_ij` by sampling the flattened matrix.
pub fn sample_joint<R: Rng + ?Sized>(joint: &CouplingMatrix, rng: &mut R) -> (usize, usize) {
    let flat = sample_categorical(&joint.entries, rng);
    (flat / joint.k, flat % joint.k)
}

/// Inverse-CDF draw from unnormalized nonnegative weights. Never returns an
/// index with zero weight unless every weight is zero.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            acc += w;
            last_positive = i;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{PhasePoint, Trajectory};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    fn traj(points: &[[f64; 2]]) -> Trajectory {
        Trajectory {
            points: points
                .iter()
                .map(|q| PhasePoint::new(q.to_vec(), vec![0.0; 2]))
                .collect(),
            energies: vec![0.0; points.len()],
            origin: 0,
            step_size: 0.1,
        }
    }

    #[test]
    fn prob_vector_validation() {
        assert!(matches!(ProbVector::new(vec![]), Err(CouplingError::Empty)));
        assert!(matches!(
            ProbVector::new(vec![0.5, -0.1, 0.6]),
            Err(CouplingError::InvalidEntry { index: 1, .. })
        ));
        assert!(matches!(
            ProbVector::new(vec![0.5, 0.6]),
            Err(CouplingError::NotNormalized(_))
        ));
        let p = ProbVector::new(vec![0.5, 0.5 + 5e-11]).unwrap();
        assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tv_examples() {
        let a = pv(&[0.2, 0.3, 0.5]);
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(tv_distance(&pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])).unwrap(), 1.0);
        assert!((tv_distance(&pv(&[0.6, 0.4]), &pv(&[0.4, 0.6])).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(
            tv_distance(&pv(&[1.0]), &pv(&[0.5, 0.5])),
            Err(CouplingError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn maximal_joint_examples() {
        let j = maximal_coupling_joint(&pv(&[0.5, 0.5]), &pv(&[0.5, 0.5])).unwrap();
        assert_eq!(j.entries(), &[0.5, 0.0, 0.0, 0.5]);

        let j = maximal_coupling_joint(&pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])).unwrap();
        assert_eq!(j.entries(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(j.trace(), 0.0);

        let j = maximal_coupling_joint(&pv(&[0.6, 0.4]), &pv(&[0.4, 0.6])).unwrap();
        let expected = [0.4, 0.2, 0.0, 0.4];
        for (a, b) in j.entries().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((j.trace() - 0.8).abs() < 1e-15);
        assert!(j.marginal_error() < 1e-15);
    }

    #[test]
    fn sample_maximal_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = pv(&[0.1, 0.2, 0.7]);
        for _ in 0..1000 {
            let (i, j) = sample_maximal(&a, &a, &mut rng).unwrap();
            assert_eq!(i, j);
        }
        let b = pv(&[0.5, 0.5, 0.0, 0.0]);
        let c = pv(&[0.0, 0.0, 0.3, 0.7]);
        for _ in 0..1000 {
            let (i, j) = sample_maximal(&b, &c, &mut rng).unwrap();
            assert_ne!(i, j);
            assert!(i < 2 && j >= 2);
        }
    }

    #[test]
    fn sample_joint_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut entries = vec![0.0; 16];
        entries[4 + 2] = 1.0;
        let mu = pv(&[0.0, 1.0, 0.0, 0.0]);
        let nu = pv(&[0.0, 0.0, 1.0, 0.0]);
        let j = CouplingMatrix::new(entries, mu, nu, 1e-12).unwrap();
        for _ in 0..100 {
            assert_eq!(sample_joint(&j, &mut rng), (1, 2));
        }
        let one = CouplingMatrix::new(vec![1.0], pv(&[1.0]), pv(&[1.0]), 1e-12).unwrap();
        assert_eq!(sample_joint(&one, &mut rng), (0, 0));
    }

    #[test]
    fn distance_examples() {
        let a = traj(&[[0.0, 0.0], [1.0, 2.0]]);
        let b = traj(&[[3.0, 0.0], [1.0, 1.0]]);
        let d = pairwise_sq_distances(&a, &b).unwrap();
        assert_eq!(d.entries(), &[9.0, 2.0, 8.0, 1.0]);

        let d = pairwise_sq_distances(&a, &a).unwrap();
        assert_eq!(d.get(0, 0), 0.0);
        assert_eq!(d.get(1, 1), 0.0);
        assert_eq!(d.get(0, 1), 5.0);

        let shifted = traj(&[[0.5, -1.0], [1.5, 1.0]]);
        let d = pairwise_sq_distances(&a, &shifted).unwrap();
        assert_eq!(d.get(0, 0), 1.25);
        assert_eq!(d.get(1, 1), 1.25);

        let c = traj(&[[0.0, 0.0]]);
        assert!(matches!(
            pairwise_sq_distances(&a, &c),
            Err(CouplingError::LengthMismatch(2, 1))
        ));
    }

    #[test]
    fn categorical_skips_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let i = sample_categorical(&[0.0, 0.3, 0.0, 0.7, 0.0], &mut rng);
            assert!(i == 1 || i == 3);
        }
    }
}
