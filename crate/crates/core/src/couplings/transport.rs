//! Exact solver for the balanced transportation problem
//!
//! ```text
//! min Σ γ_ij D_ij   subject to   Σ_j γ_ij = μ_i,  Σ_i γ_ij = ν_j,  γ ≥ 0
//! ```
//!
//! using the transportation simplex (MODI) method on a spanning-tree basis.
//! Costs are compared lexicographically as `(D_ij, [i ≠ j])`: among optimal
//! plans the one with the most mass on the diagonal is returned, so two
//! identical trajectories are always paired index by index.

use super::{CouplingError, CouplingMatrix, DistanceMatrix, ProbVector};

/// Pivots allowed per cell before giving up.
const PIVOTS_PER_CELL: usize = 50;

/// Consecutive degenerate pivots after which Bland's rule takes over.
const DEGENERATE_STREAK: usize = 64;

/// Returns an optimal plan for moving `μ` onto `ν` under cost `d`.
pub fn solve_transport(
    mu: &ProbVector,
    nu: &ProbVector,
    d: &DistanceMatrix,
) -> Result<CouplingMatrix, CouplingError> {
    let k = mu.len();
    if nu.len() != k {
        return Err(CouplingError::LengthMismatch(k, nu.len()));
    }
    if d.size() != k {
        return Err(CouplingError::LengthMismatch(k, d.size()));
    }
    if k == 1 {
        return Ok(CouplingMatrix::from_parts(vec![1.0], mu.clone(), nu.clone()));
    }
    let mut solver = Simplex::new(mu.as_slice(), nu.as_slice(), d.entries());
    solver.run()?;
    let flow = solver.flow.iter().map(|v| v.max(0.0)).collect();
    Ok(CouplingMatrix::from_parts(flow, mu.clone(), nu.clone()))
}

/// `Σ γ_ij D_ij`.
pub fn transport_cost(plan: &CouplingMatrix, d: &DistanceMatrix) -> f64 {
    plan.cost(d)
}

/// A reduced cost or dual value: primary cost and diagonal tie-break.
#[derive(Debug, Clone, Copy, Default)]
struct Lex(f64, f64);

impl Lex {
    fn sub(self, other: Lex) -> Lex {
        Lex(self.0 - other.0, self.1 - other.1)
    }
}

struct Simplex<'a> {
    k: usize,
    cost: &'a [f64],
    flow: Vec<f64>,
    basic: Vec<bool>,
    /// Basic columns of each row.
    row_adj: Vec<Vec<usize>>,
    /// Basic rows of each column.
    col_adj: Vec<Vec<usize>>,
    tol: f64,
    u: Vec<Lex>,
    v: Vec<Lex>,
}

impl<'a> Simplex<'a> {
    fn new(mu: &[f64], nu: &[f64], cost: &'a [f64]) -> Self {
        let k = mu.len();
        let scale = cost.iter().fold(0.0_f64, |m, c| m.max(c.abs())).max(1e-300);
        let mut s = Self {
            k,
            cost,
            flow: vec![0.0; k * k],
            basic: vec![false; k * k],
            row_adj: vec![Vec::new(); k],
            col_adj: vec![Vec::new(); k],
            tol: 1e-12 * scale,
            u: vec![Lex::default(); k],
            v: vec![Lex::default(); k],
        };
        s.northwest_corner(mu, nu);
        s
    }

    fn tie(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            1.0
        }
    }

    fn cell_cost(&self, i: usize, j: usize) -> Lex {
        Lex(self.cost[i * self.k + j], self.tie(i, j))
    }

    fn add_basic(&mut self, i: usize, j: usize) {
        self.basic[i * self.k + j] = true;
        self.row_adj[i].push(j);
        self.col_adj[j].push(i);
    }

    fn remove_basic(&mut self, i: usize, j: usize) {
        self.basic[i * self.k + j] = false;
        let r = self.row_adj[i].iter().position(|&c| c == j).unwrap();
        self.row_adj[i].swap_remove(r);
        let c = self.col_adj[j].iter().position(|&r| r == i).unwrap();
        self.col_adj[j].swap_remove(c);
    }

    /// Staircase start with exactly `2K − 1` basic cells forming a tree.
    fn northwest_corner(&mut self, mu: &[f64], nu: &[f64]) {
        let k = self.k;
        let mut supply = mu.to_vec();
        let mut demand = nu.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let x = supply[i].min(demand[j]);
            self.flow[i * k + j] = x;
            self.add_basic(i, j);
            supply[i] -= x;
            demand[j] -= x;
            if i == k - 1 && j == k - 1 {
                break;
            }
            if i == k - 1 {
                j += 1;
            } else if j == k - 1 || supply[i] <= demand[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    /// Solves `u_i + v_j = c_ij` on the basic tree with `u_0 = 0`.
    fn update_duals(&mut self) {
        let k = self.k;
        let mut seen_row = vec![false; k];
        let mut seen_col = vec![false; k];
        // Nodes `0..k` are rows, `k..2k` are columns.
        let mut stack = vec![0usize];
        seen_row[0] = true;
        self.u[0] = Lex::default();
        while let Some(node) = stack.pop() {
            if node < k {
                let i = node;
                for idx in 0..self.row_adj[i].len() {
                    let j = self.row_adj[i][idx];
                    if !seen_col[j] {
                        seen_col[j] = true;
                        self.v[j] = self.cell_cost(i, j).sub(self.u[i]);
                        stack.push(k + j);
                    }
                }
            } else {
                let j = node - k;
                for idx in 0..self.col_adj[j].len() {
                    let i = self.col_adj[j][idx];
                    if !seen_row[i] {
                        seen_row[i] = true;
                        self.u[i] = self.cell_cost(i, j).sub(self.v[j]);
                        stack.push(i);
                    }
                }
            }
        }
    }

    /// Negative in the lexicographic order, primary part up to tolerance.
    fn is_improving(&self, r: Lex) -> bool {
        r.0 < -self.tol || (r.0 <= self.tol && r.1 < -0.5)
    }

    /// `a` strictly better (more negative) than `b`.
    fn better(&self, a: Lex, b: Lex) -> bool {
        if a.0 < b.0 - self.tol {
            true
        } else if a.0 <= b.0 + self.tol {
            a.1 < b.1 - 0.5
        } else {
            false
        }
    }

    fn entering(&self, bland: bool) -> Option<(usize, usize)> {
        let k = self.k;
        let mut best: Option<((usize, usize), Lex)> = None;
        for i in 0..k {
            for j in 0..k {
                if self.basic[i * k + j] {
                    continue;
                }
                let r = self.cell_cost(i, j).sub(self.u[i]).sub(self.v[j]);
                if !self.is_improving(r) {
                    continue;
                }
                if bland {
                    return Some((i, j));
                }
                match best {
                    Some((_, b)) if !self.better(r, b) => {}
                    _ => best = Some(((i, j), r)),
                }
            }
        }
        best.map(|(cell, _)| cell)
    }

    /// Tree path from row `i` to column `j` as a list of basic cells.
    fn tree_path(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let k = self.k;
        let mut parent = vec![usize::MAX; 2 * k];
        let mut queue = std::collections::VecDeque::new();
        parent[i] = i;
        queue.push_back(i);
        let goal = k + j;
        while let Some(node) = queue.pop_front() {
            if node == goal {
                break;
            }
            if node < k {
                for &c in &self.row_adj[node] {
                    if parent[k + c] == usize::MAX {
                        parent[k + c] = node;
                        queue.push_back(k + c);
                    }
                }
            } else {
                for &r in &self.col_adj[node - k] {
                    if parent[r] == usize::MAX {
                        parent[r] = node;
                        queue.push_back(r);
                    }
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = goal;
        while node != i {
            let prev = parent[node];
            if node < k {
                cells.push((node, prev - k));
            } else {
                cells.push((prev, node - k));
            }
            node = prev;
        }
        cells.reverse();
        cells
    }

    /// Returns whether the pivot moved a positive amount of mass.
    fn pivot(&mut self, enter: (usize, usize), bland: bool) -> bool {
        let k = self.k;
        let path = self.tree_path(enter.0, enter.1);
        // Walking from the entering row, path edges alternate −, +, −, …
        let mut theta = f64::INFINITY;
        let mut leave = path[0];
        for (idx, &(r, c)) in path.iter().enumerate() {
            if idx % 2 == 0 {
                let x = self.flow[r * k + c];
                let pick = if bland {
                    x < theta || (x == theta && r * k + c < leave.0 * k + leave.1)
                } else {
                    x < theta
                };
                if pick {
                    theta = x;
                    leave = (r, c);
                }
            }
        }
        for (idx, &(r, c)) in path.iter().enumerate() {
            if idx % 2 == 0 {
                self.flow[r * k + c] = (self.flow[r * k + c] - theta).max(0.0);
            } else {
                self.flow[r * k + c] += theta;
            }
        }
        self.flow[leave.0 * k + leave.1] = 0.0;
        self.flow[enter.0 * k + enter.1] = theta;
        self.remove_basic(leave.0, leave.1);
        self.add_basic(enter.0, enter.1);
        theta > 0.0
    }

    fn run(&mut self) -> Result<(), CouplingError> {
        let limit = PIVOTS_PER_CELL * self.k * self.k;
        let mut degenerate = 0;
        for _ in 0..limit {
            self.update_duals();
            let bland = degenerate >= DEGENERATE_STREAK;
            let Some(enter) = self.entering(bland) else {
                return Ok(());
            };
            if self.pivot(enter, bland) {
                degenerate = 0;
            } else {
                degenerate += 1;
            }
        }
        Err(CouplingError::NoConvergence(limit))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_cost() {
        let d = DistanceMatrix::new(3, vec![0.0; 9]).unwrap();
        let plan = solve_transport(&pv(&[0.2, 0.3, 0.5]), &pv(&[0.6, 0.1, 0.3]), &d).unwrap();
        assert_eq!(plan.cost(&d), 0.0);
        assert!(plan.marginal_error() <= 1e-12);
    }

    #[test]
    fn two_by_two_examples() {
        let d = DistanceMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let plan = solve_transport(&pv(&[0.5, 0.5]), &pv(&[0.5, 0.5]), &d).unwrap();
        assert_eq!(plan.entries(), &[0.5, 0.0, 0.0, 0.5]);

        let plan = solve_transport(&pv(&[0.3, 0.7]), &pv(&[0.6, 0.4]), &d).unwrap();
        let expected = [0.3, 0.0, 0.3, 0.4];
        for (a, b) in plan.entries().iter().zip(expected) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!((plan.cost(&d) - 0.3).abs() <= 1e-12);
    }

    #[test]
    fn one_point() {
        let d = DistanceMatrix::new(1, vec![3.0]).unwrap();
        let plan = solve_transport(&pv(&[1.0]), &pv(&[1.0]), &d).unwrap();
        assert_eq!(plan.entries(), &[1.0]);
    }

    #[test]
    fn identical_supports_give_diagonal_plan() {
        // Zero diagonal, and a zero off-diagonal cost that ties with it.
        let d = DistanceMatrix::new(
            3,
            vec![0.0, 0.0, 4.0, 0.0, 0.0, 1.0, 4.0, 1.0, 0.0],
        )
        .unwrap();
        let mu = pv(&[0.5, 0.2, 0.3]);
        let plan = solve_transport(&mu, &mu, &d).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { mu[i] } else { 0.0 };
                assert_eq!(plan.get(i, j), want, "({i}, {j})");
            }
        }
    }

    #[test]
    fn length_mismatch() {
        let d = DistanceMatrix::new(2, vec![0.0; 4]).unwrap();
        assert!(matches!(
            solve_transport(&pv(&[1.0]), &pv(&[0.5, 0.5]), &d),
            Err(CouplingError::LengthMismatch(1, 2))
        ));
    }
}
