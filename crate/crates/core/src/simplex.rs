//! Dense two-phase primal simplex for small linear programs.
//!
//! Maximizes `c·x` subject to `A x {<=, =, >=} b` and `x >= 0`. Pricing is
//! Dantzig's rule, switching to Bland's rule after a run of degenerate
//! pivots so the method cannot cycle. The final basic solution is recomputed
//! from the original columns by Gaussian elimination, which removes most of
//! the round-off accumulated by the tableau updates.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("problem is infeasible (phase-one residual {0:.3e})")]
    Infeasible(f64),
    #[error("problem is unbounded")]
    Unbounded,
    #[error("iteration limit of {0} pivots reached")]
    IterationLimit(usize),
    #[error("constraint has {got} coefficients, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    LessEq,
    Equal,
    GreaterEq,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<f64>,
    relation: Relation,
    rhs: f64,
}

/// A linear program in maximization form over nonnegative variables.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;
const MAX_PIVOTS: usize = 200_000;

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn set_objective(&mut self, c: &[f64]) -> Result<(), LpError> {
        if c.len() != self.num_vars {
            return Err(LpError::Dimension { expected: self.num_vars, got: c.len() });
        }
        self.objective.copy_from_slice(c);
        Ok(())
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Result<(), LpError> {
        if coeffs.len() != self.num_vars {
            return Err(LpError::Dimension { expected: self.num_vars, got: coeffs.len() });
        }
        self.rows.push(Row { coeffs, relation, rhs });
        Ok(())
    }

    /// Adds a constraint given as `(variable, coefficient)` pairs.
    pub fn add_sparse_constraint(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) -> Result<(), LpError> {
        let mut coeffs = vec![0.0; self.num_vars];
        for &(j, v) in terms {
            if j >= self.num_vars {
                return Err(LpError::Dimension { expected: self.num_vars, got: j + 1 });
            }
            coeffs[j] += v;
        }
        self.add_constraint(coeffs, relation, rhs)
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self).solve(self)
    }
}

struct Tableau {
    m: usize,
    /// Structural + slack + artificial columns (the rhs is stored separately).
    cols: usize,
    first_artificial: usize,
    t: Vec<f64>,
    rhs: Vec<f64>,
    original: Vec<f64>,
    original_rhs: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let n = lp.num_vars;
        let m = lp.rows.len();
        let mut slack_count = 0;
        let mut art_count = 0;
        for row in &lp.rows {
            let relation = normalized_relation(row);
            if relation != Relation::Equal {
                slack_count += 1;
            }
            if relation != Relation::LessEq {
                art_count += 1;
            }
        }
        let cols = n + slack_count + art_count;
        let first_artificial = n + slack_count;
        let mut t = vec![0.0; m * cols];
        let mut rhs = vec![0.0; m];
        let mut basis = vec![0; m];
        let (mut next_slack, mut next_art) = (n, first_artificial);
        for (i, row) in lp.rows.iter().enumerate() {
            let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
            let relation = normalized_relation(row);
            let r = &mut t[i * cols..(i + 1) * cols];
            for (dst, &v) in r.iter_mut().zip(&row.coeffs) {
                *dst = sign * v;
            }
            rhs[i] = sign * row.rhs;
            match relation {
                Relation::LessEq => {
                    r[next_slack] = 1.0;
                    basis[i] = next_slack;
                    next_slack += 1;
                }
                Relation::GreaterEq => {
                    r[next_slack] = -1.0;
                    next_slack += 1;
                    r[next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
                Relation::Equal => {
                    r[next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
            }
        }
        Tableau {
            m,
            cols,
            first_artificial,
            original: t.clone(),
            original_rhs: rhs.clone(),
            t,
            rhs,
            basis,
            pivots: 0,
        }
    }

    fn solve(mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let n = lp.num_vars;
        if self.first_artificial < self.cols {
            let mut cost = vec![0.0; self.cols];
            for c in cost.iter_mut().skip(self.first_artificial) {
                *c = -1.0;
            }
            self.optimize(&cost, self.cols)?;
            let residual: f64 = (0..self.m)
                .filter(|&i| self.basis[i] >= self.first_artificial)
                .map(|i| self.rhs[i])
                .sum();
            if residual > FEAS_TOL {
                return Err(LpError::Infeasible(residual));
            }
            self.drive_out_artificials();
        }
        let mut cost = vec![0.0; self.cols];
        cost[..n].copy_from_slice(&lp.objective);
        self.optimize(&cost, self.first_artificial)?;
        self.polish();

        let mut x = vec![0.0; n];
        for i in 0..self.m {
            let j = self.basis[i];
            if j < n {
                x[j] = self.rhs[i].max(0.0);
            }
        }
        let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
        Ok(LpSolution { x, objective })
    }

    /// Primal simplex on the current basis, allowing only columns below
    /// `allowed` to enter.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<(), LpError> {
        let cols = self.cols;
        let mut z = vec![0.0; cols];
        let mut degenerate_run = 0;
        loop {
            // Reduced costs: z_j = c_B B^-1 A_j - c_j.
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = -cost[j];
            }
            for i in 0..self.m {
                let cb = cost[self.basis[i]];
                if cb != 0.0 {
                    let row = &self.t[i * cols..(i + 1) * cols];
                    for (zj, &a) in z.iter_mut().zip(row) {
                        *zj += cb * a;
                    }
                }
            }
            let bland = degenerate_run >= DEGENERATE_RUN;
            let mut entering = None;
            let mut best = -COST_TOL;
            for (j, &zj) in z.iter().enumerate().take(allowed) {
                if zj < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = zj;
                }
            }
            let Some(q) = entering else { return Ok(()) };

            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.t[i * cols + q];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[i] / a;
                    let better = match leaving {
                        None => true,
                        Some((l, r)) => ratio < r - 1e-15 || (ratio <= r + 1e-15 && self.basis[i] < self.basis[l]),
                    };
                    if better {
                        leaving = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leaving else { return Err(LpError::Unbounded) };
            degenerate_run = if ratio <= 1e-15 { degenerate_run + 1 } else { 0 };
            self.pivot(r, q);
            if self.pivots > MAX_PIVOTS {
                return Err(LpError::IterationLimit(MAX_PIVOTS));
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        self.pivots += 1;
        let inv = 1.0 / self.t[r * cols + q];
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v *= inv;
        }
        self.rhs[r] *= inv;
        let pivot_row: Vec<f64> = self.t[r * cols..(r + 1) * cols].to_vec();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * cols + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * cols..(i + 1) * cols];
            for (v, &p) in row.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            row[q] = 0.0;
            self.rhs[i] -= f * pivot_rhs;
            if self.rhs[i] < 0.0 && self.rhs[i] > -1e-13 {
                self.rhs[i] = 0.0;
            }
        }
        self.basis[r] = q;
    }

    /// Pivots basic artificials (all at level zero after phase one) out of
    /// the basis. Rows with no usable structural entry are redundant and keep
    /// their artificial, which can never re-enter.
    fn drive_out_artificials(&mut self) {
        for i in 0..self.m {
            if self.basis[i] < self.first_artificial {
                continue;
            }
            let row = &self.t[i * self.cols..(i + 1) * self.cols];
            let candidate = (0..self.first_artificial)
                .filter(|j| !self.basis.contains(j))
                .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()));
            if let Some(j) = candidate {
                if row[j].abs() > 1e-9 {
                    self.pivot(i, j);
                }
            }
        }
    }

    /// Recomputes basic values as the solution of `B x_B = b` on the original
    /// columns. Keeps the tableau values if the system is ill-conditioned or
    /// the result leaves the feasible region.
    fn polish(&mut self) {
        let m = self.m;
        if m == 0 {
            return;
        }
        let mut a = vec![0.0; m * (m + 1)];
        for i in 0..m {
            for (k, &j) in self.basis.iter().enumerate() {
                a[i * (m + 1) + k] = self.original[i * self.cols + j];
            }
            a[i * (m + 1) + m] = self.original_rhs[i];
        }
        let Some(sol) = gaussian_solve(&mut a, m) else { return };
        if sol.iter().any(|&v| !v.is_finite() || v < -1e-9) {
            return;
        }
        for (i, v) in sol.into_iter().enumerate() {
            self.rhs[i] = v.max(0.0);
        }
    }
}

fn normalized_relation(row: &Row) -> Relation {
    if row.rhs >= 0.0 {
        return row.relation;
    }
    match row.relation {
        Relation::LessEq => Relation::GreaterEq,
        Relation::GreaterEq => Relation::LessEq,
        Relation::Equal => Relation::Equal,
    }
}

/// Solves the `m x m` system stored row-major with an augmented column.
fn gaussian_solve(a: &mut [f64], m: usize) -> Option<Vec<f64>> {
    let w = m + 1;
    for col in 0..m {
        let pivot = (col..m).max_by(|&x, &y| a[x * w + col].abs().total_cmp(&a[y * w + col].abs()))?;
        if a[pivot * w + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for k in 0..w {
                a.swap(pivot * w + k, col * w + k);
            }
        }
        let d = a[col * w + col];
        for row in 0..m {
            if row == col {
                continue;
            }
            let f = a[row * w + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..w {
                a[row * w + k] -= f * a[col * w + k];
            }
        }
    }
    Some((0..m).map(|i| a[i * w + m] / a[i * w + i]).collect())
}
