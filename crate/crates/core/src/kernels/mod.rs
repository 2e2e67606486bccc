//! Marginal and coupled Markov kernels.
//!
//! All kernels take an explicit RNG and hold no state, so independent chain
//! pairs can run concurrently on one shared target.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::couplings::CouplingError;
use crate::integrator::IntegratorError;

mod hmc;
mod mixture;
mod rwmh;

pub use hmc::{
    coupled_hmc_step, intra_trajectory_joint, marginal_hmc_step, metropolis_hmc_step,
    multinomial_hmc_step, sample_momentum_pair,
};
pub use mixture::{marginal_mixture_step, mixture_step};
pub use rwmh::{coupled_rwmh_step, rwmh_step, REJECTION_CAP};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid kernel configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("coupled proposal rejection loop exceeded {0} iterations")]
    RejectionCap(usize),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// End-point proposal with a Metropolis correction.
    Metropolis,
    /// Next state drawn from all trajectory points.
    Multinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingKind {
    /// Common random numbers in the Metropolis test.
    Crn,
    Maximal,
    W2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum MomentumMode {
    Shared,
    /// Shift-or-reflect coupling of the two momentum draws.
    Contractive { kappa: f64 },
}

impl MomentumMode {
    pub fn label(&self) -> &'static str {
        match self {
            MomentumMode::Shared => "shared",
            MomentumMode::Contractive { .. } => "contractive",
        }
    }
}

macro_rules! string_enum {
    ($ty:ty, $($variant:path => $s:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $s),+ })
            }
        }
        impl FromStr for $ty {
            type Err = KernelError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($s => Ok($variant),)+
                    other => Err(KernelError::Config(format!("unknown value `{other}`"))),
                }
            }
        }
    };
}

string_enum!(KernelKind, KernelKind::Metropolis => "metropolis", KernelKind::Multinomial => "multinomial");
string_enum!(CouplingKind, CouplingKind::Crn => "crn", CouplingKind::Maximal => "maximal", CouplingKind::W2 => "w2");

impl CouplingKind {
    /// The HMC kernel each coupling is defined for.
    pub fn kernel(&self) -> KernelKind {
        match self {
            CouplingKind::Crn => KernelKind::Metropolis,
            CouplingKind::Maximal | CouplingKind::W2 => KernelKind::Multinomial,
        }
    }
}

/// Step size, trajectory length and coupling choices for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub step_size: f64,
    pub steps: usize,
    pub kernel: KernelKind,
    pub coupling: CouplingKind,
    pub momentum: MomentumMode,
    /// Proposal standard deviation of the random-walk component.
    pub rwmh_sigma: f64,
    /// Probability of using the random-walk component in the mixture.
    pub mixture_alpha: f64,
}

impl KernelConfig {
    pub const DEFAULT_SIGMA: f64 = 1e-3;
    pub const DEFAULT_ALPHA: f64 = 1.0 / 20.0;

    pub fn new(step_size: f64, steps: usize, coupling: CouplingKind) -> Self {
        Self {
            step_size,
            steps,
            kernel: coupling.kernel(),
            coupling,
            momentum: MomentumMode::Shared,
            rwmh_sigma: Self::DEFAULT_SIGMA,
            mixture_alpha: Self::DEFAULT_ALPHA,
        }
    }

    pub fn metropolis_crn(step_size: f64, steps: usize) -> Self {
        Self::new(step_size, steps, CouplingKind::Crn)
    }

    pub fn multinomial_maximal(step_size: f64, steps: usize) -> Self {
        Self::new(step_size, steps, CouplingKind::Maximal)
    }

    pub fn multinomial_w2(step_size: f64, steps: usize) -> Self {
        Self::new(step_size, steps, CouplingKind::W2)
    }

    pub fn with_momentum(mut self, momentum: MomentumMode) -> Self {
        self.momentum = momentum;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.rwmh_sigma = sigma;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.mixture_alpha = alpha;
        self
    }

    /// Short method label: `metropolis`, `maximal` or `w2`.
    pub fn method(&self) -> &'static str {
        match self.coupling {
            CouplingKind::Crn => "metropolis",
            CouplingKind::Maximal => "maximal",
            CouplingKind::W2 => "w2",
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let bad = |msg: String| Err(KernelError::Config(msg));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step size must be positive, got {}", self.step_size));
        }
        if !(self.rwmh_sigma > 0.0 && self.rwmh_sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.rwmh_sigma));
        }
        if !(0.0..=1.0).contains(&self.mixture_alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.mixture_alpha));
        }
        if let MomentumMode::Contractive { kappa } = self.momentum {
            if !(kappa > 0.0 && kappa.is_finite()) {
                return bad(format!("kappa must be positive, got {kappa}"));
            }
        }
        match (self.kernel, self.coupling) {
            (KernelKind::Metropolis, CouplingKind::Crn)
            | (KernelKind::Multinomial, CouplingKind::Maximal)
            | (KernelKind::Multinomial, CouplingKind::W2) => Ok(()),
            (k, c) => bad(format!("coupling `{c}` cannot be used with the `{k}` kernel")),
        }
    }
}

pub(crate) fn check_same_dim(a: &[f64], b: &[f64]) -> Result<(), KernelError> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(KernelError::DimensionMismatch(a.len(), b.len()))
    }
}
