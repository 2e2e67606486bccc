//! Leapfrog integration and multinomial trajectories.
//!
//! Kinetic energy is `K(p) = ½‖p‖²` (identity mass matrix). A trajectory is
//! stored in time order `−L_b, …, 0, …, L_f`; the backward half is integrated
//! from `(q, −p₀)` and keeps the momenta exactly as the integrator produced
//! them (they are not negated back).

use thiserror::Error;

use crate::couplings::ProbVector;
use crate::targets::Target;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("step size must be positive and finite, got {0}")]
    InvalidStepSize(f64),
    #[error("number of steps must be at least 1")]
    ZeroSteps,
    #[error("forward steps {forward} exceed total steps {total}")]
    InvalidSplit { forward: usize, total: usize },
    #[error("non-finite gradient at leapfrog step {step}")]
    NonFiniteGradient { step: usize },
    #[error("every trajectory point has infinite energy")]
    AllEnergiesInfinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Self {
        assert_eq!(q.len(), p.len(), "position and momentum lengths differ");
        Self { q, p }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn kinetic(&self) -> f64 {
        0.5 * self.p.iter().map(|v| v * v).sum::<f64>()
    }

    /// `(q, −p)`.
    pub fn reversed(&self) -> Self {
        Self {
            q: self.q.clone(),
            p: self.p.iter().map(|v| -v).collect(),
        }
    }
}

/// Leapfrog points in time order, each annotated with its Hamiltonian.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<PhasePoint>,
    /// `H(points[i])`, with `+∞` standing in for any non-finite value.
    pub energies: Vec<f64>,
    /// Index of the starting state, equal to the number of backward steps.
    pub origin: usize,
    pub step_size: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn backward_steps(&self) -> usize {
        self.origin
    }

    pub fn forward_steps(&self) -> usize {
        self.points.len() - 1 - self.origin
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.points[i].q
    }
}

/// `H(q, p) = U(q) + ½‖p‖²`.
pub fn hamiltonian<T: Target + ?Sized>(target: &T, z: &PhasePoint) -> Result<f64, IntegratorError> {
    check_dim(target.dim(), z.q.len())?;
    check_dim(target.dim(), z.p.len())?;
    Ok(target.potential(&z.q) + z.kinetic())
}

fn check_dim(expected: usize, got: usize) -> Result<(), IntegratorError> {
    if expected == got {
        Ok(())
    } else {
        Err(IntegratorError::DimensionMismatch { expected, got })
    }
}

fn check_step_size(eps: f64) -> Result<(), IntegratorError> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(IntegratorError::InvalidStepSize(eps))
    }
}

/// Mutable leapfrog state with the gradient at the current position cached.
struct Stepper<'a, T: ?Sized> {
    target: &'a T,
    half: f64,
    eps: f64,
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    potential: f64,
}

impl<'a, T: Target + ?Sized> Stepper<'a, T> {
    fn new(target: &'a T, eps: f64, q: &[f64], p: &[f64], potential: f64, grad: &[f64]) -> Self {
        Self {
            target,
            half: 0.5 * eps,
            eps,
            q: q.to_vec(),
            p: p.to_vec(),
            grad: grad.to_vec(),
            potential,
        }
    }

    /// Half kick, drift, gradient at the new position, half kick.
    fn step(&mut self) {
        for (p, g) in self.p.iter_mut().zip(&self.grad) {
            *p -= self.half * g;
        }
        for (q, p) in self.q.iter_mut().zip(&self.p) {
            *q += self.eps * p;
        }
        self.potential = self.target.potential_and_gradient(&self.q, &mut self.grad);
        for (p, g) in self.p.iter_mut().zip(&self.grad) {
            *p -= self.half * g;
        }
    }

    fn gradient_is_finite(&self) -> bool {
        self.grad.iter().all(|g| g.is_finite())
    }

    fn energy(&self) -> f64 {
        let e = self.potential + 0.5 * self.p.iter().map(|v| v * v).sum::<f64>();
        if e.is_finite() {
            e
        } else {
            f64::INFINITY
        }
    }

    fn point(&self) -> PhasePoint {
        PhasePoint {
            q: self.q.clone(),
            p: self.p.clone(),
        }
    }
}

/// Runs `n` leapfrog steps from `z0` and returns points `1..=n`.
///
/// Fails with the (1-based) step index if a gradient becomes non-finite.
pub fn leapfrog<T: Target + ?Sized>(
    target: &T,
    z0: &PhasePoint,
    eps: f64,
    n: usize,
) -> Result<Vec<PhasePoint>, IntegratorError> {
    check_dim(target.dim(), z0.q.len())?;
    check_dim(target.dim(), z0.p.len())?;
    check_step_size(eps)?;
    if n == 0 {
        return Err(IntegratorError::ZeroSteps);
    }
    let mut grad = vec![0.0; z0.q.len()];
    let u0 = target.potential_and_gradient(&z0.q, &mut grad);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(IntegratorError::NonFiniteGradient { step: 0 });
    }
    let mut stepper = Stepper::new(target, eps, &z0.q, &z0.p, u0, &grad);
    let mut out = Vec::with_capacity(n);
    for step in 1..=n {
        stepper.step();
        if !stepper.gradient_is_finite() {
            return Err(IntegratorError::NonFiniteGradient { step });
        }
        out.push(stepper.point());
    }
    Ok(out)
}

/// One integration segment. Once the energy turns non-finite the remaining
/// points repeat the divergent state with energy `+∞`.
fn segment<T: Target + ?Sized>(
    target: &T,
    eps: f64,
    q0: &[f64],
    p0: &[f64],
    u0: f64,
    g0: &[f64],
    n: usize,
) -> Vec<(PhasePoint, f64)> {
    let mut out = Vec::with_capacity(n);
    let mut stepper = Stepper::new(target, eps, q0, p0, u0, g0);
    while out.len() < n {
        stepper.step();
        let energy = stepper.energy();
        out.push((stepper.point(), energy));
        if !energy.is_finite() || !stepper.gradient_is_finite() {
            let last = out.last().unwrap().0.clone();
            while out.len() < n {
                out.push((last.clone(), f64::INFINITY));
            }
        }
    }
    out
}

/// Builds the trajectory from `(q, p0)` with `forward` steps along `+p0` and
/// `total − forward` steps along `−p0`.
pub fn build_trajectory<T: Target + ?Sized>(
    target: &T,
    q: &[f64],
    p0: &[f64],
    eps: f64,
    total: usize,
    forward: usize,
) -> Result<Trajectory, IntegratorError> {
    check_dim(target.dim(), q.len())?;
    check_dim(target.dim(), p0.len())?;
    check_step_size(eps)?;
    if forward > total {
        return Err(IntegratorError::InvalidSplit { forward, total });
    }
    let backward = total - forward;
    let mut grad = vec![0.0; q.len()];
    let u0 = target.potential_and_gradient(q, &mut grad);
    let origin = PhasePoint {
        q: q.to_vec(),
        p: p0.to_vec(),
    };
    let origin_energy = {
        let e = u0 + origin.kinetic();
        if e.is_finite() {
            e
        } else {
            f64::INFINITY
        }
    };

    let mut points = Vec::with_capacity(total + 1);
    let mut energies = Vec::with_capacity(total + 1);
    if backward > 0 {
        let neg: Vec<f64> = p0.iter().map(|v| -v).collect();
        let back = segment(target, eps, q, &neg, u0, &grad, backward);
        for (z, e) in back.into_iter().rev() {
            points.push(z);
            energies.push(e);
        }
    }
    points.push(origin);
    energies.push(origin_energy);
    if forward > 0 {
        for (z, e) in segment(target, eps, q, p0, u0, &grad, forward) {
            points.push(z);
            energies.push(e);
        }
    }
    Ok(Trajectory {
        points,
        energies,
        origin: backward,
        step_size: eps,
    })
}

/// Trajectories for two chains sharing the initial momentum and the
/// forward/backward split, so the two are aligned in time.
pub fn build_coupled_trajectories<T: Target + ?Sized>(
    target: &T,
    q1: &[f64],
    q2: &[f64],
    p0: &[f64],
    eps: f64,
    total: usize,
    forward: usize,
) -> Result<(Trajectory, Trajectory), IntegratorError> {
    let t1 = build_trajectory(target, q1, p0, eps, total, forward)?;
    let t2 = build_trajectory(target, q2, p0, eps, total, forward)?;
    Ok((t1, t2))
}

/// Multinomial weights `∝ exp(−H)` over the trajectory points.
pub fn trajectory_weights(traj: &Trajectory) -> Result<ProbVector, IntegratorError> {
    softmax_neg(&traj.energies)
}

/// `exp(−e_i) / Σ exp(−e_j)` with max subtraction; `+∞` energies get weight 0.
pub fn softmax_neg(energies: &[f64]) -> Result<ProbVector, IntegratorError> {
    let min = energies
        .iter()
        .cloned()
        .filter(|e| e.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(IntegratorError::AllEnergiesInfinite);
    }
    let mut w: Vec<f64> = energies
        .iter()
        .map(|e| if e.is_finite() { (min - e).exp() } else { 0.0 })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(ProbVector::from_normalized(w))
}
