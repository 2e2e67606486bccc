use anyhow::Result;
use coupled_hmc::experiments::{
    banana_toy, build_target, gmm_toy, illustrate, meeting_sweep, run_estimation, BananaToySpec,
    EstimationProtocol, GmmToySpec, IllustrationSpec, ReferenceChainSpec,
};
use coupled_hmc::kernels::CouplingKind;
use serde_json::{json, Value};

use crate::args::{
    Cli, Command, EstimateArgs, Format, IllustrateArgs, MeetArgs, ToysArgs, UsageError, Which,
};
use crate::output::{num, write_tables, Metadata, Table};

const ALL_COUPLINGS: [CouplingKind; 3] = [CouplingKind::Crn, CouplingKind::Maximal, CouplingKind::W2];

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Meet(a) => meet(&a),
        Command::Estimate(a) => estimate(&a),
        Command::Illustrate(a) => illustrate_cmd(&a),
        Command::Toys(a) => toys(&a),
    }
}

fn lib<T, E: Into<coupled_hmc::Error>>(r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| anyhow::Error::new(e.into()))
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn meet(a: &MeetArgs) -> Result<()> {
    if a.eps.is_empty() || a.steps.is_empty() {
        return Err(usage("--eps and --steps must be nonempty"));
    }
    if a.runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }
    let couplings = a.kernel.couplings(&ALL_COUPLINGS)?;
    let spec = a.target.spec();
    let target = lib(build_target(&spec, a.output.seed))?;
    let mut configs = Vec::new();
    for &eps in &a.eps {
        for &steps in &a.steps {
            for &c in &couplings {
                configs.push(a.kernel.config(eps, steps, c));
            }
        }
    }
    let cells = lib(meeting_sweep(target.as_ref(), &configs, &a.init, a.runs, a.max_iters, a.output.seed))?;

    let mut rows = Table::new(&["run", "target", "kernel", "coupling", "momentum", "eps", "L", "tau", "met"]);
    let mut summary = Table::new(&[
        "target", "kernel", "coupling", "momentum", "eps", "L", "runs", "met", "mean_tau", "std_tau",
    ]);
    for cell in &cells {
        let c = &cell.config;
        for (r, tau) in cell.taus.iter().enumerate() {
            rows.push(vec![
                r.to_string(),
                spec.name.clone(),
                c.kernel.to_string(),
                c.coupling.to_string(),
                c.momentum.label().to_string(),
                num(c.step_size),
                c.steps.to_string(),
                tau.unwrap_or(a.max_iters).to_string(),
                tau.is_some().to_string(),
            ]);
        }
        let (mean, std) = cell.mean_std();
        summary.push(vec![
            spec.name.clone(),
            c.kernel.to_string(),
            c.coupling.to_string(),
            c.momentum.label().to_string(),
            num(c.step_size),
            c.steps.to_string(),
            cell.taus.len().to_string(),
            cell.met_count().to_string(),
            num(mean),
            num(std),
        ]);
    }
    let config = json!({
        "target": spec,
        "eps": a.eps,
        "L": a.steps,
        "couplings": couplings.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
        "momentum": a.kernel.momentum_mode(),
        "sigma": a.kernel.sigma,
        "alpha": a.kernel.alpha,
        "runs": a.runs,
        "max_iters": a.max_iters,
        "init": a.init,
    });
    let meta = Metadata::new("meet", a.output.seed, config);
    write_tables(
        &a.output.out,
        a.output.format == Format::Json,
        &meta,
        &[("meet", &rows), ("meet_summary", &summary)],
        Vec::new(),
    )?;
    Ok(())
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    let couplings = a.kernel.couplings(&[CouplingKind::W2])?;
    if couplings.len() != 1 {
        return Err(usage("estimate takes a single --coupling"));
    }
    let cfg = a.kernel.config(a.eps, a.steps, couplings[0]);
    let spec = a.target.spec();
    let target = lib(build_target(&spec, a.output.seed))?;
    let protocol = EstimationProtocol {
        config: cfg,
        init: a.init,
        preliminary_runs: a.prelim_runs,
        runs: a.runs,
        max_iter: a.max_iters,
        k_rule: a.k_rule,
        m_multiplier: a.m_mult,
        fixed_k_m: a.k.zip(a.m),
        reference: (a.reference_samples > 0).then_some(ReferenceChainSpec {
            step_size: a.reference_eps.unwrap_or(a.eps),
            steps: a.reference_steps.unwrap_or(a.steps),
            burn_in: a.burn_in,
            samples: a.reference_samples,
        }),
    };
    let outcome = lib(run_estimation(target.as_ref(), &protocol, a.output.seed))?;
    let rep = &outcome.report;
    let d = target.dim();

    let mut table = Table::new(&[
        "h", "estimate", "std_error", "variance", "inefficiency", "reference_variance",
    ]);
    for i in 0..rep.estimates.len() {
        let name = if i < d { format!("x{}", i + 1) } else { format!("x{}^2", i - d + 1) };
        let reference = rep.reference_variances.as_ref().map(|v| num(v[i])).unwrap_or_default();
        table.push(vec![
            name,
            num(rep.estimates[i]),
            num(rep.standard_errors[i]),
            num(rep.variances[i]),
            num(rep.inefficiencies[i]),
            reference,
        ]);
    }
    let mut summary = Table::new(&[
        "k", "m", "k_rule", "m_mult", "runs", "unmet", "expected_cost", "relative_inefficiency",
    ]);
    let (rule, mult) = if a.k.is_some() {
        ("fixed".to_string(), String::new())
    } else {
        (a.k_rule.to_string(), a.m_mult.to_string())
    };
    summary.push(vec![
        outcome.k.to_string(),
        outcome.m.to_string(),
        rule.clone(),
        mult.clone(),
        rep.runs.to_string(),
        rep.unmet.to_string(),
        num(rep.expected_cost),
        rep.relative_inefficiency.map(num).unwrap_or_default(),
    ]);
    let config = json!({
        "target": spec,
        "kernel": protocol.config,
        "runs": a.runs,
        "prelim_runs": a.prelim_runs,
        "max_iters": a.max_iters,
        "k_rule": rule,
        "m_mult": mult,
        "k": outcome.k,
        "m": outcome.m,
        "reference": protocol.reference,
        "init": a.init,
    });
    let meta = Metadata::new("estimate", a.output.seed, config);
    let prelim: Vec<Value> = outcome
        .preliminary_taus
        .iter()
        .map(|t| t.map(Value::from).unwrap_or(Value::Null))
        .collect();
    write_tables(
        &a.output.out,
        a.output.format == Format::Json,
        &meta,
        &[("estimate", &table), ("estimate_summary", &summary)],
        vec![("preliminary_taus", Value::Array(prelim))],
    )?;
    Ok(())
}

fn illustrate_cmd(a: &IllustrateArgs) -> Result<()> {
    let spec = IllustrationSpec {
        step_size: a.eps,
        steps: a.steps,
        samples: a.samples,
        ..Default::default()
    };
    let res = lib(illustrate(&spec, a.output.seed))?;
    let meta = Metadata::new("illustrate", a.output.seed, serde_json::to_value(&spec)?);
    let json_out = a.output.format == Format::Json;
    let mut joints = Table::new(&["coupling", "i", "j", "analytic", "empirical"]);
    let mut summary = Table::new(&["coupling", "expected_distance", "empirical_distance", "reference_distance"]);
    for (name, s, reference) in [
        ("maximal", &res.maximal, res.reference_maximal),
        ("w2", &res.w2, res.reference_w2),
    ] {
        for (i, (row, emp)) in s.joint.iter().zip(&s.empirical).enumerate() {
            for (j, (p, e)) in row.iter().zip(emp).enumerate() {
                joints.push(vec![name.into(), i.to_string(), j.to_string(), num(*p), num(*e)]);
            }
        }
        summary.push(vec![
            name.into(),
            num(s.expected_distance),
            num(s.empirical_distance),
            num(reference),
        ]);
    }
    if json_out {
        crate::output::ensure_dir(&a.output.out)?;
        crate::output::write_json(&a.output.out, "illustrate", &meta, vec![("result", serde_json::to_value(&res)?)])?;
    } else {
        write_tables(
            &a.output.out,
            false,
            &meta,
            &[("illustrate", &joints), ("illustrate_summary", &summary)],
            Vec::new(),
        )?;
    }
    Ok(())
}

fn toys(a: &ToysArgs) -> Result<()> {
    let json_out = a.output.format == Format::Json;
    if a.runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }
    if matches!(a.which, Which::Gmm | Which::All) {
        let spec = GmmToySpec {
            runs: a.runs,
            max_iter: a.max_iters.unwrap_or(100),
            ..Default::default()
        };
        let rows = lib(gmm_toy(&spec, a.output.seed))?;
        let mut t = Table::new(&["method", "mode", "total_length", "i_tau"]);
        for r in &rows {
            let mode = if r.mode == "eps" { "eps" } else { "L" };
            t.push(vec![r.method.clone(), mode.into(), num(r.total_length), num(r.i_tau)]);
        }
        let meta = Metadata::new("toys", a.output.seed, json!({ "toy": "gmm", "spec": spec }));
        write_tables(&a.output.out, json_out, &meta, &[("toys_gmm", &t)], Vec::new())?;
    }
    if matches!(a.which, Which::Banana | Which::All) {
        let spec = BananaToySpec {
            runs: a.runs,
            max_iter: a.max_iters.unwrap_or(500),
            kappa: a.kappa,
            ..Default::default()
        };
        let rows = lib(banana_toy(&spec, a.output.seed))?;
        let mut t = Table::new(&["method", "momentum", "mean_tau", "std_tau", "met", "runs"]);
        for r in &rows {
            t.push(vec![
                r.method.clone(),
                r.momentum.clone(),
                num(r.mean_tau),
                num(r.std_tau),
                r.met.to_string(),
                r.runs.to_string(),
            ]);
        }
        let meta = Metadata::new("toys", a.output.seed, json!({ "toy": "banana", "spec": spec }));
        write_tables(&a.output.out, json_out, &meta, &[("toys_banana", &t)], Vec::new())?;
    }
    Ok(())
}
