//! Batch experiment drivers shared by the command-line tool and the
//! acceptance tests.
//!
//! Every driver takes a master seed. Cell `c` of a grid uses the seed
//! `derive_seed(seed, c)`, and run `r` within that cell uses stream `r`, so
//! results are independent of thread scheduling.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::couplings::{sample_joint, CouplingMatrix};
use crate::error::{Error, Result};
use crate::estimation::{
    inefficiency_report, meeting_time, moments, reference_chain, run_coupled_pair,
    run_estimation_pair, select_k_m, EstimateReport, InitialDistribution, KRule,
};
use crate::integrator::{build_coupled_trajectories, trajectory_weights, Trajectory};
use crate::kernels::{intra_trajectory_joint, CouplingKind, KernelConfig, MomentumMode};
use crate::rng::{child_rng, derive_seed};
use crate::targets::{
    build_lgcp_target, build_logistic_target, load_german_credit, load_point_pattern,
    make_builtin_target, synthetic_counts, synthetic_logistic_data, LgcpConfig, StdGaussian,
    Target, TargetError, TargetModel, DEFAULT_PRIOR_RATE,
};

/// Names accepted by [`build_target`].
pub const TARGET_NAMES: [&str; 5] = ["gaussian", "gmm", "banana", "logistic", "lgcp"];

/// Stream used for synthetic data generation.
const DATA_STREAM: u64 = 0xDA7A;

/// Target description as given on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub dim: Option<usize>,
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl TargetSpec {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            dim: None,
            data: None,
            params: BTreeMap::new(),
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = Some(dim);
        self
    }
}

fn take_param(params: &mut BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.remove(key).unwrap_or(default)
}

fn reject_leftover(name: &str, params: &BTreeMap<String, f64>) -> Result<()> {
    match params.keys().next() {
        Some(key) => Err(TargetError::UnknownParameter {
            name: name.to_string(),
            key: key.clone(),
        }
        .into()),
        None => Ok(()),
    }
}

fn logistic_features_for_dim(dim: usize) -> Result<usize> {
    // dim = f + f(f − 1)/2 + 2
    (1..=dim)
        .find(|f| f * (f + 1) / 2 + 2 == dim)
        .ok_or_else(|| {
            TargetError::InvalidParameter {
                key: "dim".into(),
                reason: format!("{dim} is not of the form f(f+1)/2 + 2"),
            }
            .into()
        })
}

/// Builds a target by name. `logistic` and `lgcp` read `spec.data` when
/// given and otherwise generate synthetic data from `seed`.
///
/// Parameters: `logistic` takes `lambda` (prior rate) and `rows`
/// (synthetic only); `lgcp` takes `s2`, `b` and `mu`.
pub fn build_target(spec: &TargetSpec, seed: u64) -> Result<TargetModel> {
    let mut params = spec.params.clone();
    let mut rng = child_rng(seed, DATA_STREAM);
    match spec.name.as_str() {
        "gaussian" | "gmm" | "banana" => {
            let default_dim = if spec.name == "gaussian" { 10 } else { 2 };
            Ok(make_builtin_target(&spec.name, spec.dim.unwrap_or(default_dim), &params)?)
        }
        "logistic" => {
            let rate = take_param(&mut params, "lambda", DEFAULT_PRIOR_RATE);
            let rows = take_param(&mut params, "rows", 1000.0);
            reject_leftover(&spec.name, &params)?;
            let data = match &spec.data {
                Some(path) => load_german_credit(path, rate)?,
                None => {
                    let features = match spec.dim {
                        Some(d) => logistic_features_for_dim(d)?,
                        None => 24,
                    };
                    if !(rows >= 2.0 && rows.fract() == 0.0) {
                        return Err(TargetError::InvalidParameter {
                            key: "rows".into(),
                            reason: format!("expected an integer ≥ 2, got {rows}"),
                        }
                        .into());
                    }
                    synthetic_logistic_data(rows as usize, features, rate, &mut rng)?
                }
            };
            let target = build_logistic_target(data)?;
            if let Some(d) = spec.dim {
                if d != target.dim() {
                    return Err(TargetError::DimensionMismatch { expected: target.dim(), got: d }.into());
                }
            }
            Ok(Arc::new(target))
        }
        "lgcp" => {
            let side = match spec.dim {
                Some(d) => {
                    let s = (d as f64).sqrt().round() as usize;
                    if s == 0 || s * s != d {
                        return Err(TargetError::InvalidParameter {
                            key: "dim".into(),
                            reason: format!("{d} is not a square grid size"),
                        }
                        .into());
                    }
                    s
                }
                None => crate::targets::LgcpConfig::DEFAULT_SIDE,
            };
            let s2 = take_param(&mut params, "s2", LgcpConfig::DEFAULT_S2);
            let b = take_param(&mut params, "b", LgcpConfig::DEFAULT_B);
            let mu = take_param(&mut params, "mu", LgcpConfig::default_mu());
            reject_leftover(&spec.name, &params)?;
            let counts = match &spec.data {
                Some(path) => load_point_pattern(path, side)?,
                None => synthetic_counts(side, s2, b, mu, &mut rng)?,
            };
            Ok(Arc::new(build_lgcp_target(LgcpConfig::new(side, counts, s2, b, mu)?)?))
        }
        other => Err(TargetError::UnknownTarget(other.to_string()).into()),
    }
}

/// One `(ε, L, coupling, momentum)` combination of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub config: KernelConfig,
}

/// Meeting times of one cell; `None` marks runs that hit the cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config: KernelConfig,
    pub taus: Vec<Option<usize>>,
    pub max_iter: usize,
}

impl CellResult {
    pub fn met_count(&self) -> usize {
        self.taus.iter().filter(|t| t.is_some()).count()
    }

    /// Meeting times with unmet runs counted at the cap.
    pub fn capped_taus(&self) -> Vec<usize> {
        self.taus.iter().map(|t| t.unwrap_or(self.max_iter)).collect()
    }

    /// Mean and sample standard deviation of the capped meeting times.
    pub fn mean_std(&self) -> (f64, f64) {
        mean_std(&self.capped_taus())
    }
}

pub fn mean_std(values: &[usize]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<usize>() as f64 / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `runs` coupled pairs for every configuration in parallel.
pub fn meeting_sweep(
    target: &dyn Target,
    configs: &[KernelConfig],
    init: &InitialDistribution,
    runs: usize,
    max_iter: usize,
    seed: u64,
) -> Result<Vec<CellResult>> {
    for cfg in configs {
        cfg.validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..runs).map(move |r| (c, r)))
        .collect();
    let taus: Vec<Option<usize>> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let mut rng = child_rng(derive_seed(seed, c as u64), r as u64);
            meeting_time(target, &configs[c], init, max_iter, &mut rng)
        })
        .collect::<std::result::Result<_, _>>()?;
    Ok(configs
        .iter()
        .enumerate()
        .map(|(c, cfg)| CellResult {
            config: cfg.clone(),
            taus: taus[c * runs..(c + 1) * runs].to_vec(),
            max_iter,
        })
        .collect())
}

/// Settings for the two-stage estimation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationProtocol {
    pub config: KernelConfig,
    pub init: InitialDistribution,
    pub preliminary_runs: usize,
    pub runs: usize,
    pub max_iter: usize,
    pub k_rule: KRule,
    pub m_multiplier: usize,
    /// Overrides the `k`/`m` rule when set.
    pub fixed_k_m: Option<(usize, usize)>,
    pub reference: Option<ReferenceChainSpec>,
}

/// Marginal Metropolis HMC chain used for asymptotic variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceChainSpec {
    pub step_size: f64,
    pub steps: usize,
    pub burn_in: usize,
    pub samples: usize,
}

impl EstimationProtocol {
    pub fn new(config: KernelConfig, init: InitialDistribution) -> Self {
        let reference = ReferenceChainSpec {
            step_size: config.step_size,
            steps: config.steps,
            burn_in: 1000,
            samples: 10_000,
        };
        Self {
            config,
            init,
            preliminary_runs: 100,
            runs: 100,
            max_iter: 1000,
            k_rule: KRule::Median,
            m_multiplier: 5,
            fixed_k_m: None,
            reference: Some(reference),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationOutcome {
    pub preliminary_taus: Vec<Option<usize>>,
    pub k: usize,
    pub m: usize,
    pub report: EstimateReport,
}

/// Preliminary meeting runs, `k`/`m` selection, `R` estimation runs with
/// moments as test functions, and an optional reference chain.
pub fn run_estimation(target: &dyn Target, protocol: &EstimationProtocol, seed: u64) -> Result<EstimationOutcome> {
    let cfg = &protocol.config;
    cfg.validate()?;
    if protocol.runs < 2 {
        return Err(Error::Experiment("estimation needs at least 2 runs".into()));
    }
    let prelim_seed = derive_seed(seed, 0);
    let preliminary_taus: Vec<Option<usize>> = if protocol.fixed_k_m.is_some() {
        Vec::new()
    } else {
        (0..protocol.preliminary_runs)
            .into_par_iter()
            .map(|r| {
                let mut rng = child_rng(prelim_seed, r as u64);
                meeting_time(target, cfg, &protocol.init, protocol.max_iter, &mut rng)
            })
            .collect::<std::result::Result<_, _>>()?
    };
    let (k, m) = match protocol.fixed_k_m {
        Some(km) => km,
        None => {
            let met: Vec<usize> = preliminary_taus.iter().flatten().copied().collect();
            if met.is_empty() {
                return Err(Error::Experiment(format!(
                    "none of {} preliminary runs met within {} iterations",
                    preliminary_taus.len(),
                    protocol.max_iter
                )));
            }
            select_k_m(&met, protocol.k_rule, protocol.m_multiplier)?
        }
    };
    if k > m {
        return Err(Error::Experiment(format!("k = {k} exceeds m = {m}")));
    }
    let main_seed = derive_seed(seed, 1);
    let runs = (0..protocol.runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = child_rng(main_seed, r as u64);
            run_estimation_pair(target, cfg, &protocol.init, protocol.max_iter, m, &mut rng)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let chain = match protocol.reference {
        Some(spec) => {
            let mut rng = child_rng(derive_seed(seed, 2), 0);
            let x0 = protocol.init.sample(target.dim(), &mut rng);
            let ref_cfg = KernelConfig::metropolis_crn(spec.step_size, spec.steps);
            Some(reference_chain(target, &ref_cfg, x0, spec.burn_in, spec.samples, &mut rng)?)
        }
        None => None,
    };
    let report = inefficiency_report(&runs, moments, k, m, chain.as_deref())?;
    Ok(EstimationOutcome { preliminary_taus, k, m, report })
}

/// The two-trajectory coupling illustration on the 2D standard Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllustrationSpec {
    pub step_size: f64,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub p0: Vec<f64>,
    pub steps: usize,
    pub samples: usize,
}

impl Default for IllustrationSpec {
    fn default() -> Self {
        Self {
            step_size: 0.45,
            q1: vec![0.5, 2.0],
            q2: vec![0.5, -1.0],
            p0: vec![1.0, 1.0],
            steps: 7,
            samples: 100_000,
        }
    }
}

/// Published expected distances (W2, maximal) for the illustration.
pub const ILLUSTRATION_REFERENCE: (f64, f64) = (1.37, 1.97);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSummary {
    pub joint: Vec<Vec<f64>>,
    pub empirical: Vec<Vec<f64>>,
    pub expected_distance: f64,
    pub empirical_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllustrationResult {
    pub spec: IllustrationSpec,
    pub positions1: Vec<Vec<f64>>,
    pub positions2: Vec<Vec<f64>>,
    pub weights1: Vec<f64>,
    pub weights2: Vec<f64>,
    pub maximal: CouplingSummary,
    pub w2: CouplingSummary,
    pub reference_w2: f64,
    pub reference_maximal: f64,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn summarize<R: Rng + ?Sized>(
    joint: &CouplingMatrix,
    t1: &Trajectory,
    t2: &Trajectory,
    samples: usize,
    rng: &mut R,
) -> CouplingSummary {
    let k = joint.size();
    let dist: Vec<f64> = (0..k * k)
        .map(|ij| euclid(t1.position(ij / k), t2.position(ij % k)))
        .collect();
    let expected_distance = joint.entries().iter().zip(&dist).map(|(p, d)| p * d).sum();
    let mut counts = vec![0usize; k * k];
    for _ in 0..samples {
        let (i, j) = sample_joint(joint, rng);
        counts[i * k + j] += 1;
    }
    let n = samples.max(1) as f64;
    let empirical_distance = counts.iter().zip(&dist).map(|(c, d)| *c as f64 * d).sum::<f64>() / n;
    let rows = |v: &[f64]| v.chunks(k).map(|r| r.to_vec()).collect::<Vec<_>>();
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    CouplingSummary {
        joint: rows(joint.entries()),
        empirical: rows(&freq),
        expected_distance,
        empirical_distance,
    }
}

/// Builds both forward trajectories, the maximal and W2 joints, empirical
/// joints from `spec.samples` draws each, and expected position distances.
pub fn illustrate(spec: &IllustrationSpec, seed: u64) -> Result<IllustrationResult> {
    let target = StdGaussian::new(spec.q1.len());
    let (t1, t2) = build_coupled_trajectories(
        &target,
        &spec.q1,
        &spec.q2,
        &spec.p0,
        spec.step_size,
        spec.steps,
        spec.steps,
    )?;
    let mut rng = child_rng(seed, 0);
    let maximal = intra_trajectory_joint(&t1, &t2, CouplingKind::Maximal)?;
    let w2 = intra_trajectory_joint(&t1, &t2, CouplingKind::W2)?;
    let maximal = summarize(&maximal, &t1, &t2, spec.samples, &mut rng);
    let w2 = summarize(&w2, &t1, &t2, spec.samples, &mut rng);
    let positions = |t: &Trajectory| t.points.iter().map(|z| z.q.clone()).collect();
    Ok(IllustrationResult {
        spec: spec.clone(),
        positions1: positions(&t1),
        positions2: positions(&t2),
        weights1: trajectory_weights(&t1)?.into_vec(),
        weights2: trajectory_weights(&t2)?.into_vec(),
        maximal,
        w2,
        reference_w2: ILLUSTRATION_REFERENCE.0,
        reference_maximal: ILLUSTRATION_REFERENCE.1,
    })
}

/// Coupling methods in table order.
pub const METHODS: [CouplingKind; 3] = [CouplingKind::Crn, CouplingKind::Maximal, CouplingKind::W2];

pub fn method_label(c: CouplingKind) -> &'static str {
    match c {
        CouplingKind::Crn => "metropolis",
        CouplingKind::Maximal => "maximal",
        CouplingKind::W2 => "w2",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmRow {
    pub method: String,
    /// `eps` or `steps`: which quantity the sweep varies.
    pub mode: String,
    pub step_size: f64,
    pub steps: usize,
    pub total_length: f64,
    pub i_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmToySpec {
    pub runs: usize,
    pub max_iter: usize,
    pub step_sizes: Vec<f64>,
    pub steps: Vec<usize>,
    pub base_step_size: f64,
    pub base_steps: usize,
}

impl Default for GmmToySpec {
    fn default() -> Self {
        Self {
            runs: 500,
            max_iter: 100,
            step_sizes: vec![0.1, 0.15, 0.2, 0.25, 0.3],
            steps: vec![10, 15, 20, 25, 30],
            base_step_size: 0.1,
            base_steps: 10,
        }
    }
}

/// Fraction of pairs meeting within the cap on the three-component mixture,
/// sweeping either the step size or the number of steps.
pub fn gmm_toy(spec: &GmmToySpec, seed: u64) -> Result<Vec<GmmRow>> {
    let target = make_builtin_target("gmm", 2, &BTreeMap::new())?;
    let init = InitialDistribution::Uniform { lo: 0.0, hi: 1.0 };
    let mut configs = Vec::new();
    let mut meta = Vec::new();
    for &method in &METHODS {
        for &eps in &spec.step_sizes {
            configs.push(KernelConfig::new(eps, spec.base_steps, method));
            meta.push((method, "eps"));
        }
        for &l in &spec.steps {
            configs.push(KernelConfig::new(spec.base_step_size, l, method));
            meta.push((method, "steps"));
        }
    }
    let cells = meeting_sweep(target.as_ref(), &configs, &init, spec.runs, spec.max_iter, seed)?;
    Ok(cells
        .iter()
        .zip(meta)
        .map(|(cell, (method, mode))| GmmRow {
            method: method_label(method).to_string(),
            mode: mode.to_string(),
            step_size: cell.config.step_size,
            steps: cell.config.steps,
            total_length: cell.config.step_size * cell.config.steps as f64,
            i_tau: cell.met_count() as f64 / spec.runs as f64,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BananaRow {
    pub method: String,
    pub momentum: String,
    pub mean_tau: f64,
    pub std_tau: f64,
    pub met: usize,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BananaToySpec {
    pub runs: usize,
    pub max_iter: usize,
    pub step_size: f64,
    pub steps: usize,
    pub kappa: f64,
}

impl Default for BananaToySpec {
    fn default() -> Self {
        Self {
            runs: 500,
            max_iter: 500,
            step_size: 1.0 / 50.0,
            steps: 50,
            kappa: 1.0,
        }
    }
}

/// Mean and standard deviation of `τ` on the Rosenbrock target for every
/// method under shared and contractive momentum.
pub fn banana_toy(spec: &BananaToySpec, seed: u64) -> Result<Vec<BananaRow>> {
    let target = make_builtin_target("banana", 2, &BTreeMap::new())?;
    let init = InitialDistribution::Uniform { lo: 0.0, hi: 1.0 };
    let modes = [MomentumMode::Shared, MomentumMode::Contractive { kappa: spec.kappa }];
    let mut configs = Vec::new();
    for mode in modes {
        for &method in &METHODS {
            configs.push(KernelConfig::new(spec.step_size, spec.steps, method).with_momentum(mode));
        }
    }
    let cells = meeting_sweep(target.as_ref(), &configs, &init, spec.runs, spec.max_iter, seed)?;
    Ok(cells
        .iter()
        .map(|cell| {
            let (mean, std) = cell.mean_std();
            BananaRow {
                method: method_label(cell.config.coupling).to_string(),
                momentum: cell.config.momentum.label().to_string(),
                mean_tau: mean,
                std_tau: std,
                met: cell.met_count(),
                runs: cell.taus.len(),
            }
        })
        .collect())
}

/// A single coupled run from a fixed seed, for inspection.
pub fn single_run(
    target: &dyn Target,
    cfg: &KernelConfig,
    init: &InitialDistribution,
    max_iter: usize,
    seed: u64,
) -> Result<crate::estimation::CoupledRun> {
    let mut rng = child_rng(seed, 0);
    Ok(run_coupled_pair(target, cfg, init, max_iter, &mut rng)?)
}
