use rand::Rng;

use super::{coupled_hmc_step, coupled_rwmh_step, marginal_hmc_step, rwmh_step, KernelConfig, KernelError};
use crate::targets::Target;

/// With probability `α` a random-walk step, otherwise an HMC step.
pub fn marginal_mixture_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    x: &[f64],
    cfg: &KernelConfig,
    rng: &mut R,
) -> Result<Vec<f64>, KernelError> {
    let u: f64 = rng.random();
    if u < cfg.mixture_alpha {
        Ok(rwmh_step(target, x, cfg.rwmh_sigma, rng))
    } else {
        marginal_hmc_step(target, x, cfg, rng)
    }
}

/// Coupled mixture kernel; both chains use the same component.
pub fn mixture_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    x: &[f64],
    y: &[f64],
    cfg: &KernelConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>), KernelError> {
    let u: f64 = rng.random();
    if u < cfg.mixture_alpha {
        coupled_rwmh_step(target, x, y, cfg.rwmh_sigma, rng)
    } else {
        coupled_hmc_step(target, x, y, cfg, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::StdGaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn alpha_zero_matches_hmc() {
        let t = StdGaussian::new(2);
        let cfg = KernelConfig::multinomial_w2(0.2, 5).with_alpha(0.0);
        let (x, y) = ([0.5, 0.1], [-0.3, 0.9]);
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let _: f64 = b.random();
        for _ in 0..20 {
            let m = mixture_step(&t, &x, &y, &cfg, &mut a).unwrap();
            let h = coupled_hmc_step(&t, &x, &y, &cfg, &mut b).unwrap();
            assert_eq!(m, h);
            let _: f64 = b.random();
        }
    }

    #[test]
    fn alpha_one_matches_rwmh() {
        let t = StdGaussian::new(2);
        let cfg = KernelConfig::multinomial_w2(0.2, 5).with_alpha(1.0).with_sigma(0.3);
        let (x, y) = ([0.5, 0.1], [0.5, 0.1001]);
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let _: f64 = b.random();
            let m = mixture_step(&t, &x, &y, &cfg, &mut a).unwrap();
            let r = coupled_rwmh_step(&t, &x, &y, 0.3, &mut b).unwrap();
            assert_eq!(m, r);
        }
    }

    #[test]
    fn marginal_alpha_one_is_rwmh() {
        let t = StdGaussian::new(1);
        let cfg = KernelConfig::metropolis_crn(0.2, 5).with_alpha(1.0).with_sigma(0.5);
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let _: f64 = b.random();
        let m = marginal_mixture_step(&t, &[0.2], &cfg, &mut a).unwrap();
        assert_eq!(m, rwmh_step(&t, &[0.2], 0.5, &mut b));
    }
}
