//! Lag-one coupled chains, unbiased estimators and efficiency diagnostics.
//!
//! A run samples `X_0, Y_0` independently, advances `X` once with the marginal
//! kernel and then moves both chains with the coupled kernel until
//! `X_τ = Y_{τ−1}`. The time-averaged estimator
//!
//! ```text
//! H_{k:m} = (m−k+1)⁻¹ Σ_{n=k}^{m} h(X_n)
//!         + Σ_{n=k+1}^{τ−1} min{1, (n−k)/(m−k+1)} (h(X_n) − h(Y_{n−1}))
//! ```
//!
//! is unbiased for `E_π[h]`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{marginal_hmc_step, marginal_mixture_step, mixture_step, KernelConfig, KernelError};
use crate::rng::{child_rng, SimRng};
use crate::targets::Target;

mod spectral;

pub use spectral::{ar_spectral_variance, fit_ar_yule_walker, ArFit, MIN_SERIES_LEN};

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("max_iter must be at least 1")]
    InvalidMaxIter,
    #[error("run did not meet within {0} iterations")]
    NotMet(usize),
    #[error("need X states up to index {needed}, only {recorded} recorded")]
    HorizonTooShort { needed: usize, recorded: usize },
    #[error("invalid estimator range k = {k}, m = {m}")]
    InvalidRange { k: usize, m: usize },
    #[error("meeting time list is empty")]
    EmptyTaus,
    #[error("meeting times must be at least 1")]
    InvalidTau,
    #[error("series of length {0} is too short for spectral estimation")]
    SeriesTooShort(usize),
    #[error("series is constant")]
    ConstantSeries,
    #[error("series contains non-finite values")]
    NonFiniteSeries,
    #[error("only {met} of {total} runs met; at least 2 are required")]
    TooFewMetRuns { met: usize, total: usize },
    #[error("test function returned {got} values, expected {expected}")]
    OutputMismatch { expected: usize, got: usize },
    #[error("kernel failed at iteration {iteration}: {source}")]
    Kernel {
        iteration: usize,
        #[source]
        source: KernelError,
    },
}

/// Law of `X_0` and `Y_0`; the two are drawn independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum InitialDistribution {
    /// `N(0, scale² I)`.
    Normal { scale: f64 },
    /// Independent `Unif[lo, hi]` coordinates.
    Uniform { lo: f64, hi: f64 },
}

impl InitialDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            InitialDistribution::Normal { scale } => (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    scale * z
                })
                .collect(),
            InitialDistribution::Uniform { lo, hi } => {
                (0..dim).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
            }
        }
    }
}

/// States and meeting time of one pair of lag-one coupled chains.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRun {
    /// `X_0, X_1, …`; extended past `τ` when a longer horizon is needed.
    pub x_states: Vec<Vec<f64>>,
    /// `Y_0, …, Y_{τ−1}`.
    pub y_states: Vec<Vec<f64>>,
    pub tau: Option<usize>,
    pub max_iter: usize,
    /// `‖X_n − Y_{n−1}‖` for `n = 1, 2, …`.
    pub distances: Vec<f64>,
}

impl CoupledRun {
    pub fn met(&self) -> bool {
        self.tau.is_some()
    }

    /// `τ`, or the iteration cap for runs that did not meet.
    pub fn tau_or_cap(&self) -> usize {
        self.tau.unwrap_or(self.max_iter)
    }

    /// Continues `X` with `step` until `X_m` is recorded.
    pub fn extend_to<F>(&mut self, m: usize, mut step: F) -> Result<(), EstimationError>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>, KernelError>,
    {
        while self.x_states.len() <= m {
            let iteration = self.x_states.len();
            let last = self.x_states.last().expect("at least X_0 is recorded");
            let next = step(last).map_err(|source| EstimationError::Kernel { iteration, source })?;
            self.x_states.push(next);
        }
        Ok(())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Runs lag-one coupled chains from `(x0, y0)` with arbitrary kernels.
///
/// `marginal` moves `X_0` to `X_1`; `coupled` maps `(X_n, Y_{n−1})` to
/// `(X_{n+1}, Y_n)`. Stops at the first exact meeting or after `X_max_iter`.
/// With `record == false` only the final pair and the distances are kept.
pub fn run_coupled_chains<M, C>(
    x0: Vec<f64>,
    y0: Vec<f64>,
    max_iter: usize,
    record: bool,
    mut marginal: M,
    mut coupled: C,
) -> Result<CoupledRun, EstimationError>
where
    M: FnMut(&[f64]) -> Result<Vec<f64>, KernelError>,
    C: FnMut(&[f64], &[f64]) -> Result<(Vec<f64>, Vec<f64>), KernelError>,
{
    if max_iter == 0 {
        return Err(EstimationError::InvalidMaxIter);
    }
    let x1 = marginal(&x0).map_err(|source| EstimationError::Kernel { iteration: 1, source })?;
    let mut distances = vec![euclidean(&x1, &y0)];
    let mut tau = (x1 == y0).then_some(1);
    let mut x_states = vec![x0, x1];
    let mut y_states = vec![y0];
    let mut n = 1;
    while tau.is_none() && n < max_iter {
        let (x_next, y_next) = coupled(&x_states[x_states.len() - 1], &y_states[y_states.len() - 1])
            .map_err(|source| EstimationError::Kernel { iteration: n + 1, source })?;
        n += 1;
        distances.push(euclidean(&x_next, &y_next));
        if x_next == y_next {
            tau = Some(n);
        }
        if record {
            x_states.push(x_next);
            y_states.push(y_next);
        } else {
            x_states.truncate(1);
            y_states.truncate(1);
            x_states.push(x_next);
            y_states[0] = y_next;
        }
    }
    Ok(CoupledRun {
        x_states,
        y_states,
        tau,
        max_iter,
        distances,
    })
}

/// One pair of chains under the coupled mixture kernel.
pub fn run_coupled_pair<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    cfg: &KernelConfig,
    init: &InitialDistribution,
    max_iter: usize,
    rng: &mut R,
) -> Result<CoupledRun, EstimationError> {
    cfg.validate().map_err(|source| EstimationError::Kernel { iteration: 0, source })?;
    let d = target.dim();
    let x0 = init.sample(d, rng);
    let y0 = init.sample(d, rng);
    let rng = std::cell::RefCell::new(rng);
    run_coupled_chains(
        x0,
        y0,
        max_iter,
        true,
        |x| marginal_mixture_step(target, x, cfg, &mut **rng.borrow_mut()),
        |x, y| mixture_step(target, x, y, cfg, &mut **rng.borrow_mut()),
    )
}

/// Meeting time only, without storing the chain paths.
pub fn meeting_time<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    cfg: &KernelConfig,
    init: &InitialDistribution,
    max_iter: usize,
    rng: &mut R,
) -> Result<Option<usize>, EstimationError> {
    cfg.validate().map_err(|source| EstimationError::Kernel { iteration: 0, source })?;
    let d = target.dim();
    let x0 = init.sample(d, rng);
    let y0 = init.sample(d, rng);
    let rng = std::cell::RefCell::new(rng);
    let run = run_coupled_chains(
        x0,
        y0,
        max_iter,
        false,
        |x| marginal_mixture_step(target, x, cfg, &mut **rng.borrow_mut()),
        |x, y| mixture_step(target, x, y, cfg, &mut **rng.borrow_mut()),
    )?;
    Ok(run.tau)
}

/// A coupled run whose `X` path is extended with the marginal mixture kernel
/// so that `X_m` is available.
pub fn run_estimation_pair<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    cfg: &KernelConfig,
    init: &InitialDistribution,
    max_iter: usize,
    m: usize,
    rng: &mut R,
) -> Result<CoupledRun, EstimationError> {
    let mut run = run_coupled_pair(target, cfg, init, max_iter, rng)?;
    if run.met() {
        run.extend_to(m, |x| marginal_mixture_step(target, x, cfg, rng))?;
    }
    Ok(run)
}

/// First `n ≥ 1` with `‖X_n − Y_{n−1}‖ ≤ δ`.
pub fn relaxed_meeting_time(run: &CoupledRun, delta: f64) -> Option<usize> {
    run.distances.iter().position(|&d| d <= delta).map(|i| i + 1)
}

/// `H_{k:m}` for a vector-valued test function.
pub fn unbiased_estimate_vec<H>(
    run: &CoupledRun,
    h: H,
    k: usize,
    m: usize,
) -> Result<Vec<f64>, EstimationError>
where
    H: Fn(&[f64]) -> Vec<f64>,
{
    if k > m {
        return Err(EstimationError::InvalidRange { k, m });
    }
    let tau = run.tau.ok_or(EstimationError::NotMet(run.max_iter))?;
    let needed = m.max(tau.saturating_sub(1));
    if run.x_states.len() <= needed {
        return Err(EstimationError::HorizonTooShort {
            needed,
            recorded: run.x_states.len().saturating_sub(1),
        });
    }
    let span = (m - k + 1) as f64;
    let mut acc = h(&run.x_states[k]);
    let width = acc.len();
    let add = |v: Vec<f64>, w: f64, acc: &mut Vec<f64>| -> Result<(), EstimationError> {
        if v.len() != width {
            return Err(EstimationError::OutputMismatch { expected: width, got: v.len() });
        }
        acc.iter_mut().zip(v).for_each(|(a, b)| *a += w * b);
        Ok(())
    };
    acc.iter_mut().for_each(|a| *a /= span);
    for n in k + 1..=m {
        add(h(&run.x_states[n]), 1.0 / span, &mut acc)?;
    }
    for n in k + 1..tau {
        let w = ((n - k) as f64 / span).min(1.0);
        add(h(&run.x_states[n]), w, &mut acc)?;
        add(h(&run.y_states[n - 1]), -w, &mut acc)?;
    }
    Ok(acc)
}

/// `H_{k:m}` for a scalar test function; `H_k` when `k == m`.
pub fn unbiased_estimate<H>(run: &CoupledRun, h: H, k: usize, m: usize) -> Result<f64, EstimationError>
where
    H: Fn(&[f64]) -> f64,
{
    Ok(unbiased_estimate_vec(run, |x| vec![h(x)], k, m)?[0])
}

/// First and second moments `(x_1, …, x_d, x_1², …, x_d²)`.
pub fn moments(x: &[f64]) -> Vec<f64> {
    x.iter().copied().chain(x.iter().map(|v| v * v)).collect()
}

/// Mean of `2(τ − 1) + max(1, m + 1 − τ)`.
pub fn expected_cost(taus: &[usize], m: usize) -> Result<f64, EstimationError> {
    if taus.is_empty() {
        return Err(EstimationError::EmptyTaus);
    }
    if taus.contains(&0) {
        return Err(EstimationError::InvalidTau);
    }
    let total: f64 = taus
        .iter()
        .map(|&t| (2 * (t - 1)) as f64 + ((m + 1).saturating_sub(t)).max(1) as f64)
        .sum();
    Ok(total / taus.len() as f64)
}

/// Rule for choosing `k` from preliminary meeting times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KRule {
    Median,
    Q90,
}

impl std::fmt::Display for KRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KRule::Median => "median",
            KRule::Q90 => "q90",
        })
    }
}

impl std::str::FromStr for KRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "median" => Ok(KRule::Median),
            "q90" => Ok(KRule::Q90),
            other => Err(format!("unknown k rule `{other}`")),
        }
    }
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(values: &[usize], p: f64) -> Result<f64, EstimationError> {
    if values.is_empty() {
        return Err(EstimationError::EmptyTaus);
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] as f64 + (h - lo as f64) * (sorted[hi] as f64 - sorted[lo] as f64))
}

/// `k` from preliminary meeting times (rounded quantile, at least 1) and
/// `m = multiplier · k`.
pub fn select_k_m(taus: &[usize], rule: KRule, multiplier: usize) -> Result<(usize, usize), EstimationError> {
    let p = match rule {
        KRule::Median => 0.5,
        KRule::Q90 => 0.9,
    };
    let k = (quantile(taus, p)?.round() as usize).max(1);
    Ok((k, multiplier * k))
}

/// Summary of `R` coupled estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub k: usize,
    pub m: usize,
    /// Runs used (met).
    pub runs: usize,
    /// Runs excluded because they did not meet.
    pub unmet: usize,
    pub estimates: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Sample variance `ν(h)` across runs.
    pub variances: Vec<f64>,
    pub expected_cost: f64,
    /// `i(h) = Ĉ ν(h)`.
    pub inefficiencies: Vec<f64>,
    /// Per-component AR asymptotic variance of the reference chain.
    pub reference_variances: Option<Vec<f64>>,
    pub relative_inefficiency: Option<f64>,
}

fn mean_and_variance(columns: &[Vec<f64>], width: usize) -> (Vec<f64>, Vec<f64>) {
    let r = columns.len() as f64;
    let mut mean = vec![0.0; width];
    for row in columns {
        mean.iter_mut().zip(row).for_each(|(a, b)| *a += b / r);
    }
    let mut var = vec![0.0; width];
    for row in columns {
        var.iter_mut()
            .zip(row.iter().zip(&mean))
            .for_each(|(v, (x, mu))| *v += (x - mu) * (x - mu) / (r - 1.0));
    }
    (mean, var)
}

/// Estimates, variances and inefficiencies over a set of runs. Runs that did
/// not meet are excluded and counted in `unmet`. With a reference chain,
/// the relative inefficiency is `Σ i(h) / Σ asymptotic variance(h)`.
pub fn inefficiency_report<H>(
    runs: &[CoupledRun],
    h: H,
    k: usize,
    m: usize,
    reference_chain: Option<&[Vec<f64>]>,
) -> Result<EstimateReport, EstimationError>
where
    H: Fn(&[f64]) -> Vec<f64>,
{
    let met: Vec<&CoupledRun> = runs.iter().filter(|r| r.met()).collect();
    if met.len() < 2 {
        return Err(EstimationError::TooFewMetRuns { met: met.len(), total: runs.len() });
    }
    let values = met
        .iter()
        .map(|r| unbiased_estimate_vec(r, &h, k, m))
        .collect::<Result<Vec<_>, _>>()?;
    let width = values[0].len();
    if let Some(bad) = values.iter().find(|v| v.len() != width) {
        return Err(EstimationError::OutputMismatch { expected: width, got: bad.len() });
    }
    let (estimates, variances) = mean_and_variance(&values, width);
    let taus: Vec<usize> = met.iter().filter_map(|r| r.tau).collect();
    let cost = expected_cost(&taus, m)?;
    let inefficiencies: Vec<f64> = variances.iter().map(|v| cost * v).collect();
    let standard_errors = variances.iter().map(|v| (v / met.len() as f64).sqrt()).collect();

    let (reference_variances, relative_inefficiency) = match reference_chain {
        Some(chain) => {
            let mapped: Vec<Vec<f64>> = chain.iter().map(|x| h(x)).collect();
            let mut asym = Vec::with_capacity(width);
            for c in 0..width {
                let series: Vec<f64> = mapped.iter().map(|v| v[c]).collect();
                asym.push(ar_spectral_variance(&series)?);
            }
            let rel = inefficiencies.iter().sum::<f64>() / asym.iter().sum::<f64>();
            (Some(asym), Some(rel))
        }
        None => (None, None),
    };

    Ok(EstimateReport {
        k,
        m,
        runs: met.len(),
        unmet: runs.len() - met.len(),
        estimates,
        standard_errors,
        variances,
        expected_cost: cost,
        inefficiencies,
        reference_variances,
        relative_inefficiency,
    })
}

/// A single marginal HMC chain: `burn_in` discarded steps, then `samples`
/// recorded states.
pub fn reference_chain<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    cfg: &KernelConfig,
    x0: Vec<f64>,
    burn_in: usize,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, EstimationError> {
    let mut x = x0;
    let mut out = Vec::with_capacity(samples);
    for iteration in 1..=burn_in + samples {
        x = marginal_hmc_step(target, &x, cfg, rng)
            .map_err(|source| EstimationError::Kernel { iteration, source })?;
        if iteration > burn_in {
            out.push(x.clone());
        }
    }
    Ok(out)
}

/// Runs `f(r, rng_r)` for `r = 0..runs` in parallel, where `rng_r` is stream
/// `r` of `seed`. Output order follows `r`.
pub fn parallel_runs<T, F>(runs: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut SimRng) -> T + Sync,
{
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = child_rng(seed, r as u64);
            f(r, &mut rng)
        })
        .collect()
}
