use super::EstimationError;

/// Minimum series length accepted by [`ar_spectral_variance`].
pub const MIN_SERIES_LEN: usize = 50;

/// Fitted autoregressive model.
#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    pub order: usize,
    pub coefficients: Vec<f64>,
    /// Innovation variance, with the small-sample correction `N/(N − order − 1)`.
    pub innovation_variance: f64,
}

impl ArFit {
    /// Spectral density at frequency zero, `σ²/(1 − Σφ)²`.
    pub fn spectrum_at_zero(&self) -> f64 {
        let s: f64 = self.coefficients.iter().sum();
        self.innovation_variance / ((1.0 - s) * (1.0 - s))
    }
}

/// Yule–Walker autoregression with AIC order selection up to
/// `min(N − 1, ⌊10 log10 N⌋)`.
pub fn fit_ar_yule_walker(samples: &[f64]) -> Result<ArFit, EstimationError> {
    let n = samples.len();
    if n < MIN_SERIES_LEN {
        return Err(EstimationError::SeriesTooShort(n));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(EstimationError::NonFiniteSeries);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = samples.iter().map(|v| v - mean).collect();
    let max_order = ((10.0 * (n as f64).log10()).floor() as usize).min(n - 1);
    let acov: Vec<f64> = (0..=max_order)
        .map(|lag| {
            centered[..n - lag]
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect();
    if !(acov[0] > 0.0) {
        return Err(EstimationError::ConstantSeries);
    }

    // Levinson–Durbin: coefficient sets and prediction variances per order.
    let mut coefs: Vec<Vec<f64>> = vec![Vec::new()];
    let mut vars = vec![acov[0]];
    let mut phi: Vec<f64> = Vec::new();
    let mut v = acov[0];
    for k in 1..=max_order {
        let mut num = acov[k];
        for (j, p) in phi.iter().enumerate() {
            num -= p * acov[k - 1 - j];
        }
        let refl = num / v;
        let mut next = vec![0.0; k];
        for j in 0..k - 1 {
            next[j] = phi[j] - refl * phi[k - 2 - j];
        }
        next[k - 1] = refl;
        v *= 1.0 - refl * refl;
        if !(v > 0.0) {
            break;
        }
        phi = next;
        coefs.push(phi.clone());
        vars.push(v);
    }

    let aic = |k: usize| n as f64 * vars[k].ln() + 2.0 * k as f64;
    let order = (0..vars.len())
        .min_by(|&a, &b| aic(a).total_cmp(&aic(b)))
        .unwrap_or(0);
    let innovation_variance = vars[order] * n as f64 / (n - (order + 1)) as f64;
    Ok(ArFit {
        order,
        coefficients: coefs[order].clone(),
        innovation_variance,
    })
}

/// Asymptotic variance of the sample mean of a stationary series, estimated
/// as the AR spectral density at zero.
pub fn ar_spectral_variance(samples: &[f64]) -> Result<f64, EstimationError> {
    Ok(fit_ar_yule_walker(samples)?.spectrum_at_zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = 0.0;
        let mut out = Vec::with_capacity(n);
        for _ in 0..(n + 1000) {
            let e: f64 = StandardNormal.sample(&mut rng);
            x = phi * x + e;
            out.push(x);
        }
        out.split_off(1000)
    }

    #[test]
    fn white_noise() {
        let v = ar_spectral_variance(&ar1(0.0, 100_000, 1)).unwrap();
        assert!((v - 1.0).abs() < 0.1, "{v}");
    }

    #[test]
    fn ar1_closed_form() {
        let v = ar_spectral_variance(&ar1(0.5, 100_000, 2)).unwrap();
        assert!((v - 4.0).abs() < 0.4, "{v}");
        let fit = fit_ar_yule_walker(&ar1(0.5, 100_000, 2)).unwrap();
        assert!(fit.order >= 1);
        assert!((fit.coefficients[0] - 0.5).abs() < 0.02);
    }

    #[test]
    fn sign_flip_invariant() {
        let x = ar1(0.3, 2000, 3);
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(ar_spectral_variance(&x).unwrap(), ar_spectral_variance(&y).unwrap());
    }

    #[test]
    fn max_order_rule() {
        // N = 100 allows orders up to 20; a strongly persistent series uses > 0.
        let fit = fit_ar_yule_walker(&ar1(0.9, 100, 4)).unwrap();
        assert!(fit.order >= 1 && fit.order <= 20);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            ar_spectral_variance(&[1.0; 10]),
            Err(EstimationError::SeriesTooShort(10))
        ));
        assert!(matches!(
            ar_spectral_variance(&[2.5; 100]),
            Err(EstimationError::ConstantSeries)
        ));
    }
}
