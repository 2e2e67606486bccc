use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_same_dim, CouplingKind, KernelConfig, KernelError, KernelKind, MomentumMode};
use crate::couplings::{
    maximal_coupling_joint, pairwise_sq_distances, sample_joint, sample_maximal, solve_transport,
    CouplingMatrix,
};
use crate::integrator::{build_trajectory, trajectory_weights, Trajectory};
use crate::targets::Target;

fn std_normal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// `log u < Δ` for `u ~ Unif(0, 1)`, i.e. acceptance with probability
/// `min{1, exp(Δ)}`.
fn accept_log(delta: f64, u: f64) -> bool {
    u.ln() < delta
}

fn end_point_delta(traj: &Trajectory) -> f64 {
    let start = traj.energies[traj.origin];
    let end = *traj.energies.last().unwrap();
    start - end
}

/// Metropolis HMC: propose the end of an `L`-step trajectory.
pub fn metropolis_hmc_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    q0: &[f64],
    cfg: &KernelConfig,
    rng: &mut R,
) -> Result<Vec<f64>, KernelError> {
    let p0 = std_normal(q0.len(), rng);
    let traj = build_trajectory(target, q0, &p0, cfg.step_size, cfg.steps, cfg.steps)?;
    let u: f64 = rng.random();
    if accept_log(end_point_delta(&traj), u) {
        Ok(traj.points.last().unwrap().q.clone())
    } else {
        Ok(q0.to_vec())
    }
}

/// Multinomial HMC: uniform forward/backward split, next state drawn from
/// the trajectory with weights `∝ exp(−H)`.
pub fn multinomial_hmc_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    q0: &[f64],
    cfg: &KernelConfig,
    rng: &mut R,
) -> Result<Vec<f64>, KernelError> {
    let p0 = std_normal(q0.len(), rng);
    let forward = rng.random_range(0..=cfg.steps);
    let traj = build_trajectory(target, q0, &p0, cfg.step_size, cfg.steps, forward)?;
    let i = trajectory_weights(&traj)?.sample(rng);
    Ok(traj.points[i].q.clone())
}

/// The marginal HMC kernel selected by `cfg.kernel`.
pub fn marginal_hmc_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    q0: &[f64],
    cfg: &KernelConfig,
    rng: &mut R,
) -> Result<Vec<f64>, KernelError> {
    match cfg.kernel {
        KernelKind::Metropolis => metropolis_hmc_step(target, q0, cfg, rng),
        KernelKind::Multinomial => multinomial_hmc_step(target, q0, cfg, rng),
    }
}

fn standard_normal_density_ratio(shifted: f64, base: f64) -> f64 {
    // φ(shifted) / φ(base)
    (0.5 * (base * base - shifted * shifted)).exp()
}

/// Initial momenta for two chains. Shared mode draws one `N(0, I)` vector.
/// Contractive mode draws `p1 ~ N(0, I)` and sets `p2 = p1 + κΔ` with
/// probability `min{1, φ(Δ̄ᵀp1 + κ‖Δ‖)/φ(Δ̄ᵀp1)}`, else reflects `p1` in the
/// hyperplane orthogonal to `Δ̄`, where `Δ = q1 − q2`. Both marginals are
/// standard normal.
pub fn sample_momentum_pair<R: Rng + ?Sized>(
    q1: &[f64],
    q2: &[f64],
    mode: MomentumMode,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>), KernelError> {
    check_same_dim(q1, q2)?;
    let p1 = std_normal(q1.len(), rng);
    let kappa = match mode {
        MomentumMode::Shared => return Ok((p1.clone(), p1)),
        MomentumMode::Contractive { kappa } => kappa,
    };
    let delta: Vec<f64> = q1.iter().zip(q2).map(|(a, b)| a - b).collect();
    let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok((p1.clone(), p1));
    }
    let proj: f64 = delta.iter().zip(&p1).map(|(d, p)| d * p).sum::<f64>() / norm;
    let ratio = standard_normal_density_ratio(proj + kappa * norm, proj).min(1.0);
    let u: f64 = rng.random();
    let p2 = if u < ratio {
        p1.iter().zip(&delta).map(|(p, d)| p + kappa * d).collect()
    } else {
        p1.iter()
            .zip(&delta)
            .map(|(p, d)| p - 2.0 * proj * d / norm)
            .collect()
    };
    Ok((p1, p2))
}

/// The joint over index pairs used by a multinomial coupling.
pub fn intra_trajectory_joint(
    t1: &Trajectory,
    t2: &Trajectory,
    coupling: CouplingKind,
) -> Result<CouplingMatrix, KernelError> {
    let mu = trajectory_weights(t1)?;
    let nu = trajectory_weights(t2)?;
    match coupling {
        CouplingKind::Maximal => Ok(maximal_coupling_joint(&mu, &nu)?),
        CouplingKind::W2 => {
            let d = pairwise_sq_distances(t1, t2)?;
            Ok(solve_transport(&mu, &nu, &d)?)
        }
        CouplingKind::Crn => Err(KernelError::Config(
            "crn does not define an index coupling".into(),
        )),
    }
}

/// One step of a coupled HMC kernel.
///
/// Chains that are exactly equal take a single marginal step and stay equal.
pub fn coupled_hmc_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    q1: &[f64],
    q2: &[f64],
    cfg: &KernelConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>), KernelError> {
    check_same_dim(q1, q2)?;
    if q1 == q2 {
        let next = marginal_hmc_step(target, q1, cfg, rng)?;
        return Ok((next.clone(), next));
    }
    let (p1, p2) = sample_momentum_pair(q1, q2, cfg.momentum, rng)?;
    let total = cfg.steps;
    match cfg.kernel {
        KernelKind::Metropolis => {
            let t1 = build_trajectory(target, q1, &p1, cfg.step_size, total, total)?;
            let t2 = build_trajectory(target, q2, &p2, cfg.step_size, total, total)?;
            let u: f64 = rng.random();
            let pick = |t: &Trajectory, q: &[f64]| {
                if accept_log(end_point_delta(t), u) {
                    t.points.last().unwrap().q.clone()
                } else {
                    q.to_vec()
                }
            };
            Ok((pick(&t1, q1), pick(&t2, q2)))
        }
        KernelKind::Multinomial => {
            let forward = rng.random_range(0..=total);
            let t1 = build_trajectory(target, q1, &p1, cfg.step_size, total, forward)?;
            let t2 = build_trajectory(target, q2, &p2, cfg.step_size, total, forward)?;
            let (i, j) = match cfg.coupling {
                CouplingKind::Maximal => {
                    let mu = trajectory_weights(&t1)?;
                    let nu = trajectory_weights(&t2)?;
                    sample_maximal(&mu, &nu, rng)?
                }
                CouplingKind::W2 => {
                    let joint = intra_trajectory_joint(&t1, &t2, CouplingKind::W2)?;
                    sample_joint(&joint, rng)
                }
                CouplingKind::Crn => {
                    return Err(KernelError::Config(
                        "crn coupling requires the metropolis kernel".into(),
                    ))
                }
            };
            Ok((t1.points[i].q.clone(), t2.points[j].q.clone()))
        }
    }
}
