use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coupled_hmc::estimation::{InitialDistribution, KRule};
use coupled_hmc::experiments::TargetSpec;
use coupled_hmc::kernels::{CouplingKind, KernelKind, MomentumMode};
use coupled_hmc::KernelConfig;

/// Invalid flag combination detected after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(name = "coupled-hmc", version, about = "Coupled HMC experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Meeting times over a grid of step sizes, step counts and couplings.
    Meet(MeetArgs),
    /// Unbiased estimates of first and second moments with inefficiencies.
    Estimate(EstimateArgs),
    /// Maximal vs W2 index couplings for two trajectories on a 2D Gaussian.
    Illustrate(IllustrateArgs),
    /// Two-dimensional toy studies (mixture and banana).
    Toys(ToysArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Momentum {
    Shared,
    Contractive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Gmm,
    Banana,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct TargetArgs {
    /// gaussian, gmm, banana, logistic or lgcp.
    #[arg(long, default_value = "gaussian")]
    pub target: String,
    /// Dimension (gaussian: any; logistic: f(f+1)/2 + 2; lgcp: a square).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Data file for logistic (German credit) or lgcp (point pattern).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Extra target parameter as KEY=VALUE; repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
}

impl TargetArgs {
    pub fn spec(&self) -> TargetSpec {
        TargetSpec {
            name: self.target.clone(),
            dim: self.dim,
            data: self.data.clone(),
            params: self.params.iter().cloned().collect::<BTreeMap<_, _>>(),
        }
    }
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let v: f64 = v.parse().map_err(|_| format!("invalid number `{v}` for `{k}`"))?;
    Ok((k.to_string(), v))
}

fn parse_init(s: &str) -> Result<InitialDistribution, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.parse::<f64>().map_err(|_| format!("invalid number `{t}`"));
    match parts.as_slice() {
        ["normal", scale] => Ok(InitialDistribution::Normal { scale: num(scale)? }),
        ["uniform", lo, hi] => Ok(InitialDistribution::Uniform { lo: num(lo)?, hi: num(hi)? }),
        _ => Err(format!("expected normal:SCALE or uniform:LO:HI, got `{s}`")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    /// Restricts the couplings to those of one kernel.
    #[arg(long, value_parser = parse_kernel)]
    pub kernel: Option<KernelKind>,
    /// Comma-separated couplings (crn, maximal, w2).
    #[arg(long, value_delimiter = ',', value_parser = parse_coupling)]
    pub coupling: Vec<CouplingKind>,
    /// Momentum coupling between the two chains.
    #[arg(long, value_enum, default_value = "shared")]
    pub momentum: Momentum,
    /// Contractive coupling parameter.
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    /// Random-walk proposal standard deviation.
    #[arg(long, default_value_t = KernelConfig::DEFAULT_SIGMA)]
    pub sigma: f64,
    /// Probability of the random-walk component.
    #[arg(long, default_value_t = KernelConfig::DEFAULT_ALPHA)]
    pub alpha: f64,
}

fn parse_m_mult(s: &str) -> Result<usize, String> {
    match s {
        "5" => Ok(5),
        "10" => Ok(10),
        other => Err(format!("expected 5 or 10, got `{other}`")),
    }
}

fn parse_kernel(s: &str) -> Result<KernelKind, String> {
    s.parse().map_err(|e: coupled_hmc::kernels::KernelError| e.to_string())
}

fn parse_coupling(s: &str) -> Result<CouplingKind, String> {
    s.parse().map_err(|e: coupled_hmc::kernels::KernelError| e.to_string())
}

impl KernelArgs {
    pub fn momentum_mode(&self) -> MomentumMode {
        match self.momentum {
            Momentum::Shared => MomentumMode::Shared,
            Momentum::Contractive => MomentumMode::Contractive { kappa: self.kappa },
        }
    }

    /// Couplings to run, honouring `--kernel`.
    pub fn couplings(&self, default: &[CouplingKind]) -> Result<Vec<CouplingKind>, UsageError> {
        let chosen: Vec<CouplingKind> = if self.coupling.is_empty() {
            default
                .iter()
                .copied()
                .filter(|c| self.kernel.is_none_or(|k| c.kernel() == k))
                .collect()
        } else {
            self.coupling.clone()
        };
        if let Some(k) = self.kernel {
            if let Some(bad) = chosen.iter().find(|c| c.kernel() != k) {
                return Err(UsageError(format!("coupling `{bad}` cannot be used with the `{k}` kernel")));
            }
        }
        if chosen.is_empty() {
            return Err(UsageError("no coupling selected".into()));
        }
        Ok(chosen)
    }

    pub fn config(&self, eps: f64, steps: usize, coupling: CouplingKind) -> KernelConfig {
        KernelConfig::new(eps, steps, coupling)
            .with_momentum(self.momentum_mode())
            .with_sigma(self.sigma)
            .with_alpha(self.alpha)
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Master seed recorded in every output.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct MeetArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Comma-separated step sizes.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4")]
    pub eps: Vec<f64>,
    /// Comma-separated leapfrog step counts.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub steps: Vec<usize>,
    /// Coupled pairs per grid cell.
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    /// Iteration cap; pairs that have not met are reported with tau = cap.
    #[arg(long = "max-iters", default_value_t = 1000)]
    pub max_iters: usize,
    /// Initial distribution: normal:SCALE or uniform:LO:HI.
    #[arg(long, default_value = "normal:1", value_parser = parse_init)]
    pub init: InitialDistribution,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Leapfrog step size.
    #[arg(long, default_value_t = 0.3)]
    pub eps: f64,
    /// Leapfrog steps per trajectory.
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Estimation runs R.
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    /// Preliminary meeting runs used to choose k.
    #[arg(long = "prelim-runs", default_value_t = 100)]
    pub prelim_runs: usize,
    /// Iteration cap per pair; unmet pairs are excluded from the estimates.
    #[arg(long = "max-iters", default_value_t = 1000)]
    pub max_iters: usize,
    /// k from the median or 90% quantile of preliminary meeting times.
    #[arg(long = "k-rule", default_value = "median")]
    pub k_rule: KRule,
    /// m = m-mult * k; 5 or 10.
    #[arg(long = "m-mult", default_value_t = 5, value_parser = parse_m_mult)]
    pub m_mult: usize,
    /// Fixed k (requires --m); skips the preliminary runs.
    #[arg(long, requires = "m")]
    pub k: Option<usize>,
    /// Fixed m (requires --k).
    #[arg(long, requires = "k")]
    pub m: Option<usize>,
    /// Reference chain length; 0 disables relative inefficiency.
    #[arg(long = "reference-samples", default_value_t = 10_000)]
    pub reference_samples: usize,
    /// Reference chain burn-in steps.
    #[arg(long = "burn-in", default_value_t = 1000)]
    pub burn_in: usize,
    /// Reference chain step size; defaults to --eps.
    #[arg(long = "reference-eps")]
    pub reference_eps: Option<f64>,
    /// Reference chain leapfrog steps; defaults to --steps.
    #[arg(long = "reference-steps")]
    pub reference_steps: Option<usize>,
    /// Initial distribution: normal:SCALE or uniform:LO:HI.
    #[arg(long, default_value = "normal:1", value_parser = parse_init)]
    pub init: InitialDistribution,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct IllustrateArgs {
    /// Leapfrog step size.
    #[arg(long, default_value_t = 0.45)]
    pub eps: f64,
    /// Forward leapfrog steps per trajectory.
    #[arg(long, default_value_t = 7)]
    pub steps: usize,
    /// Draws per coupling for the empirical joints.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ToysArgs {
    /// Which toy to run.
    #[arg(value_enum, default_value = "all")]
    pub which: Which,
    /// Coupled pairs per configuration.
    #[arg(long, default_value_t = 500)]
    pub runs: usize,
    /// Iteration cap; defaults to 100 (gmm) and 500 (banana).
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    /// Contractive momentum parameter for the banana study.
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}
