use thiserror::Error;

use crate::couplings::CouplingError;
use crate::estimation::EstimationError;
use crate::integrator::IntegratorError;
use crate::kernels::KernelError;
use crate::targets::TargetError;

/// Top-level error for callers that do not care which layer failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error("invalid experiment: {0}")]
    Experiment(String),
}

impl Error {
    /// Short machine-readable category, used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Target(_) => "target",
            Error::Integrator(_) => "integrator",
            Error::Coupling(_) => "coupling",
            Error::Kernel(_) => "kernel",
            Error::Estimation(_) => "estimation",
            Error::Experiment(_) => "experiment",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
