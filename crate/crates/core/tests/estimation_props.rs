use coupled_hmc::estimation::{
    expected_cost, meeting_time, select_k_m, unbiased_estimate, InitialDistribution, KRule,
};
use coupled_hmc::experiments::{illustrate, run_estimation, EstimationProtocol, IllustrationSpec, ReferenceChainSpec};
use coupled_hmc::rng::child_rng;
use coupled_hmc::targets::StdGaussian;
use coupled_hmc::{CoupledRun, KernelConfig};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

/// Scalar run with `X_0..X_m`, `Y_0..Y_{τ−1}` and `X_τ = Y_{τ−1}`.
fn scalar_run(xs: &[f64], ys: &[f64], tau: usize) -> CoupledRun {
    CoupledRun {
        x_states: xs.iter().map(|&v| vec![v]).collect(),
        y_states: ys.iter().map(|&v| vec![v]).collect(),
        tau: Some(tau),
        max_iter: 10_000,
        distances: Vec::new(),
    }
}

/// `H_k = h(X_k) + Σ_{n=k+1}^{τ−1} (h(X_n) − h(Y_{n−1}))`, written out directly.
fn h_k(xs: &[f64], ys: &[f64], tau: usize, k: usize) -> f64 {
    let mut v = xs[k];
    for n in k + 1..tau {
        v += xs[n] - ys[n - 1];
    }
    v
}

fn run_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize, usize, usize)> {
    (1usize..30, 0usize..30, 0usize..20).prop_flat_map(|(tau, k, span)| {
        let m = k + span;
        let len = m.max(tau) + 1;
        (
            prop::collection::vec(-5.0f64..5.0, len),
            prop::collection::vec(-5.0f64..5.0, tau),
            Just(tau),
            Just(k),
            Just(m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn time_average_is_mean_of_single_estimators((mut xs, ys, tau, k, m) in run_strategy()) {
        xs[tau] = ys[tau - 1];
        let run = scalar_run(&xs, &ys, tau);
        let direct = (k..=m).map(|i| h_k(&xs, &ys, tau, i)).sum::<f64>() / (m - k + 1) as f64;
        let got = unbiased_estimate(&run, |x| x[0], k, m).unwrap();
        prop_assert!((got - direct).abs() <= 1e-9 * (1.0 + direct.abs()), "{got} vs {direct}");
        let single = unbiased_estimate(&run, |x| x[0], k, k).unwrap();
        prop_assert!((single - h_k(&xs, &ys, tau, k)).abs() <= 1e-9);
    }

    #[test]
    fn expected_cost_is_at_least_one(taus in prop::collection::vec(1usize..500, 1..50), m in 0usize..500) {
        let c = expected_cost(&taus, m).unwrap();
        let direct = taus
            .iter()
            .map(|&t| 2.0 * (t as f64 - 1.0) + ((m as f64) + 1.0 - t as f64).max(1.0))
            .sum::<f64>()
            / taus.len() as f64;
        prop_assert!(c >= 1.0);
        prop_assert!((c - direct).abs() <= 1e-9);
    }

    #[test]
    fn m_is_a_multiple_of_k(taus in prop::collection::vec(1usize..500, 1..50), mult in prop::sample::select(vec![5usize, 10])) {
        for rule in [KRule::Median, KRule::Q90] {
            let (k, m) = select_k_m(&taus, rule, mult).unwrap();
            prop_assert!(k >= 1);
            prop_assert!(k <= *taus.iter().max().unwrap());
            prop_assert_eq!(m, mult * k);
        }
    }
}

#[test]
fn illustration_empirical_joints_match_analytic() {
    let spec = IllustrationSpec {
        samples: 100_000,
        ..Default::default()
    };
    let res = illustrate(&spec, 9).unwrap();
    let n = spec.samples as f64;
    for summary in [&res.maximal, &res.w2] {
        let cells: usize = summary.joint.iter().map(|r| r.iter().filter(|&&p| p > 0.0).count()).sum();
        // 3 standard errors for the whole table, Bonferroni-split over the cells.
        let family = 2.0 * (1.0 - Normal::standard().cdf(3.0));
        let z = Normal::standard().inverse_cdf(1.0 - family / (2.0 * cells as f64));
        for (row, emp) in summary.joint.iter().zip(&summary.empirical) {
            for (&p, &f) in row.iter().zip(emp) {
                if p == 0.0 {
                    assert_eq!(f, 0.0);
                    continue;
                }
                let se = (p * (1.0 - p) / n).sqrt();
                assert!((f - p).abs() <= z * se, "empirical {f} vs {p} (z {z}, se {se})");
            }
        }
    }
    assert!(res.w2.expected_distance < res.maximal.expected_distance);
}

#[test]
fn five_dim_gaussian_pairs_meet() {
    let target = StdGaussian::new(5);
    let cfg = KernelConfig::multinomial_maximal(0.3, 10);
    let init = InitialDistribution::Normal { scale: 1.0 };
    let met = (0..100)
        .filter(|&r| {
            let mut rng = child_rng(77, r);
            meeting_time(&target, &cfg, &init, 1000, &mut rng).unwrap().is_some()
        })
        .count();
    assert!(met >= 99, "{met} of 100 met");
}

#[test]
fn five_dim_relative_inefficiency_is_finite() {
    let target = StdGaussian::new(5);
    let mut protocol = EstimationProtocol::new(
        KernelConfig::multinomial_w2(0.2, 10),
        InitialDistribution::Normal { scale: 1.0 },
    );
    protocol.preliminary_runs = 20;
    protocol.runs = 40;
    protocol.reference = Some(ReferenceChainSpec {
        step_size: 0.2,
        steps: 10,
        burn_in: 200,
        samples: 2000,
    });
    let out = run_estimation(&target, &protocol, 5).unwrap();
    let rep = &out.report;
    assert_eq!(rep.estimates.len(), 10);
    assert!(rep.expected_cost >= 1.0);
    assert!(rep.variances.iter().all(|v| v.is_finite() && *v >= 0.0));
    let ri = rep.relative_inefficiency.unwrap();
    assert!(ri.is_finite() && ri > 0.0, "relative inefficiency {ri}");
    assert_eq!(out.m, 5 * out.k);
}
