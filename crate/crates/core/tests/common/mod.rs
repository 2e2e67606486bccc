#![allow(dead_code)]

use rand::Rng;

/// Random probability vector; each entry is zero with probability `zero_prob`
/// (at least one entry stays positive).
pub fn random_simplex<R: Rng>(k: usize, zero_prob: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..k)
            .map(|_| if rng.random::<f64>() < zero_prob { 0.0 } else { -rng.random::<f64>().ln() })
            .collect();
        let s: f64 = raw.iter().sum();
        if s > 0.0 {
            return raw.into_iter().map(|v| v / s).collect();
        }
    }
}

/// Minimum of `Σ γ_ij c_ij` over couplings of `(mu, nu)` by enumerating every
/// basis of `2k − 1` cells, solving it by leaf elimination and keeping the
/// nonnegative ones. Exponential; intended for `k ≤ 4`.
pub fn brute_force_lp(mu: &[f64], nu: &[f64], cost: &[f64]) -> f64 {
    let k = mu.len();
    let cells = k * k;
    let basis = 2 * k - 1;
    let mut best = f64::INFINITY;
    let mut choose = vec![0usize; basis];
    fn next_combination(c: &mut [usize], n: usize) -> bool {
        let r = c.len();
        let mut i = r;
        while i > 0 {
            i -= 1;
            if c[i] < n - r + i {
                c[i] += 1;
                for j in i + 1..r {
                    c[j] = c[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }
    for (i, v) in choose.iter_mut().enumerate() {
        *v = i;
    }
    loop {
        if let Some(flow) = solve_basis(mu, nu, &choose, k) {
            if flow.iter().all(|&f| f >= -1e-13) {
                let c: f64 = choose.iter().zip(&flow).map(|(&cell, f)| f * cost[cell]).sum();
                best = best.min(c);
            }
        }
        if !next_combination(&mut choose, cells) {
            break;
        }
    }
    best
}

fn solve_basis(mu: &[f64], nu: &[f64], cells: &[usize], k: usize) -> Option<Vec<f64>> {
    let mut row_rest = mu.to_vec();
    let mut col_rest = nu.to_vec();
    let mut flow = vec![f64::NAN; cells.len()];
    let mut open = cells.len();
    while open > 0 {
        let mut progressed = false;
        // A row or column with exactly one open cell fixes that cell.
        for node in 0..2 * k {
            let incident: Vec<usize> = (0..cells.len())
                .filter(|&e| flow[e].is_nan())
                .filter(|&e| {
                    let (i, j) = (cells[e] / k, cells[e] % k);
                    if node < k { i == node } else { j == node - k }
                })
                .collect();
            if incident.len() == 1 {
                let e = incident[0];
                let (i, j) = (cells[e] / k, cells[e] % k);
                let value = if node < k { row_rest[i] } else { col_rest[j] };
                flow[e] = value;
                row_rest[i] -= value;
                col_rest[j] -= value;
                open -= 1;
                progressed = true;
            }
        }
        if !progressed {
            return None;
        }
    }
    let residual = row_rest.iter().chain(&col_rest).map(|v| v.abs()).fold(0.0, f64::max);
    (residual < 1e-12).then_some(flow)
}

/// Least-squares line `y = a + b x`; returns `(slope, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, sxy * sxy / (sxx * syy))
}
