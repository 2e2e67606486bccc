//! Coupled Hamiltonian Monte Carlo.
//!
//! This crate implements lag-one coupled Markov chains for unbiased MCMC
//! estimation with Hamiltonian kernels. The main building blocks are:
//!
//! - [`targets`]: potentials `U` with analytic gradients (Gaussian, Gaussian
//!   mixture, banana, Bayesian logistic regression, log-Gaussian Cox process).
//! - [`integrator`]: leapfrog integration and trajectory construction.
//! - [`couplings`]: couplings of two categorical distributions over
//!   trajectory indices: maximal coupling, the exact W2 optimal transport
//!   coupling, and debiasing of joints with wrong marginals.
//! - [`kernels`]: marginal and coupled Metropolis HMC, multinomial HMC,
//!   random-walk Metropolis and the mixture kernel that triggers exact meeting.
//! - [`estimation`]: the coupled-chain driver, the unbiased estimators
//!   `H_k` / `H_{k:m}` and cost / inefficiency diagnostics.
//! - [`experiments`]: batch protocols (meeting-time sweeps, estimation
//!   tables, the U-turn illustration and the two-dimensional toys).
//!
//! ## Example
//!
//! ```
//! use coupled_hmc::kernels::{KernelConfig, coupled_hmc_step};
//! use coupled_hmc::targets::StdGaussian;
//! use rand::SeedableRng;
//!
//! let target = StdGaussian::new(2);
//! let cfg = KernelConfig::multinomial_w2(0.2, 10);
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let (x, y) = coupled_hmc_step(&target, &[1.0, 0.0], &[-1.0, 0.5], &cfg, &mut rng).unwrap();
//! assert_eq!(x.len(), 2);
//! assert_eq!(y.len(), 2);
//! ```

pub mod couplings;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod integrator;
pub mod kernels;
pub mod rng;
pub mod targets;

pub use couplings::{CouplingMatrix, DistanceMatrix, ProbVector};
pub use error::{Error, Result};
pub use estimation::{CoupledRun, EstimateReport};
pub use integrator::{PhasePoint, Trajectory};
pub use kernels::{CouplingKind, KernelConfig, KernelKind, MomentumMode};
pub use targets::{Target, TargetModel};

/// Version string embedded in experiment artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
