use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_same_dim, KernelError};
use crate::targets::Target;

/// Iteration cap on the rejection loop of the coupled proposal.
pub const REJECTION_CAP: usize = 1_000_000;

fn propose<R: Rng + ?Sized>(x: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(rng);
            v + sigma * z
        })
        .collect()
}

/// Log proposal density up to the shared normalizing constant.
fn log_kernel(from: &[f64], to: &[f64], sigma: f64) -> f64 {
    let sq: f64 = from.iter().zip(to).map(|(a, b)| (a - b) * (a - b)).sum();
    -sq / (2.0 * sigma * sigma)
}

fn accept<T: Target + ?Sized>(target: &T, x: &[f64], proposal: Vec<f64>, log_u: f64) -> Vec<f64> {
    let delta = target.potential(x) - target.potential(&proposal);
    if log_u <= delta {
        proposal
    } else {
        x.to_vec()
    }
}

/// Random-walk Metropolis with `N(x, σ²I)` proposals.
pub fn rwmh_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    x: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Vec<f64> {
    let proposal = propose(x, sigma, rng);
    let u: f64 = rng.random();
    accept(target, x, proposal, u.ln())
}

/// Coupled random-walk Metropolis: maximally coupled proposals drawn by
/// rejection sampling, followed by a shared uniform in both accept tests.
pub fn coupled_rwmh_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    x: &[f64],
    y: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>), KernelError> {
    check_same_dim(x, y)?;
    let x_star = propose(x, sigma, rng);
    let u1: f64 = rng.random();
    let y_star = if log_kernel(x, &x_star, sigma) + u1.ln() <= log_kernel(y, &x_star, sigma) {
        x_star.clone()
    } else {
        let mut found = None;
        for _ in 0..REJECTION_CAP {
            let cand = propose(y, sigma, rng);
            let w: f64 = rng.random();
            if log_kernel(y, &cand, sigma) + w.ln() > log_kernel(x, &cand, sigma) {
                found = Some(cand);
                break;
            }
        }
        found.ok_or(KernelError::RejectionCap(REJECTION_CAP))?
    };
    let u: f64 = rng.random();
    let log_u = u.ln();
    Ok((accept(target, x, x_star, log_u), accept(target, y, y_star, log_u)))
}
