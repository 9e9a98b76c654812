//! Dense two-phase primal simplex with sparse column storage.
//!
//! The solver maximizes `c'x` subject to equality rows `A_eq x = b_eq`,
//! inequality rows `A_in x <= b_in`, and per-variable bounds. It returns a
//! certified primal/dual pair: on `Optimal` the duality gap is reported in
//! [`LpSolution::duality_gap`] and callers can re-verify feasibility and
//! complementary slackness with [`check_optimality`].
//!
//! Basis inverse is kept explicitly (dense), columns are stored sparse, so
//! problems with few rows and very many columns stay cheap.

mod simplex;

use thiserror::Error;

/// Row-major sparse matrix used to declare constraint blocks.
#[derive(Debug, Clone, Default)]
pub struct SparseRows {
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseRows {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Appends one row given as (column, coefficient) pairs. Zero
    /// coefficients are skipped; duplicate columns are not allowed.
    pub fn push_row<I: IntoIterator<Item = (usize, f64)>>(&mut self, row: I) {
        let start = self.values.len();
        for (j, v) in row {
            debug_assert!(j < self.ncols, "column index out of range");
            if v != 0.0 {
                self.indices.push(j as u32);
                self.values.push(v);
            }
        }
        debug_assert!({
            let mut seen = self.indices[start..].to_vec();
            seen.sort_unstable();
            seen.windows(2).all(|w| w[0] != w[1])
        });
        self.indptr.push(self.values.len());
    }

    pub fn push_dense_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.ncols);
        self.push_row(row.iter().copied().enumerate());
    }

    pub fn from_dense(rows: &[Vec<f64>], ncols: usize) -> Self {
        let mut m = Self::new(ncols);
        for r in rows {
            m.push_dense_row(r);
        }
        m
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        self.indices[lo..hi]
            .iter()
            .zip(&self.values[lo..hi])
            .map(|(&j, &v)| (j as usize, v))
    }

    pub fn dot_row(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).map(|(j, v)| v * x[j]).sum()
    }
}

/// Linear program in `maximize` orientation.
///
/// Variables default to lower bound 0 and no upper bound; use
/// [`LpProblem::set_bounds`] or [`LpProblem::set_free`] to override.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub eq: SparseRows,
    pub eq_rhs: Vec<f64>,
    pub ineq: SparseRows,
    pub ineq_rhs: Vec<f64>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

impl LpProblem {
    pub fn maximize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            eq: SparseRows::new(n),
            eq_rhs: Vec::new(),
            ineq: SparseRows::new(n),
            ineq_rhs: Vec::new(),
            lower: vec![Some(0.0); n],
            upper: vec![None; n],
        }
    }

    pub fn nvars(&self) -> usize {
        self.objective.len()
    }

    pub fn nrows(&self) -> usize {
        self.eq_rhs.len() + self.ineq_rhs.len()
    }

    pub fn set_eq(&mut self, rows: SparseRows, rhs: Vec<f64>) -> &mut Self {
        self.eq = rows;
        self.eq_rhs = rhs;
        self
    }

    pub fn set_ineq(&mut self, rows: SparseRows, rhs: Vec<f64>) -> &mut Self {
        self.ineq = rows;
        self.ineq_rhs = rhs;
        self
    }

    pub fn set_bounds(&mut self, j: usize, lower: Option<f64>, upper: Option<f64>) -> &mut Self {
        self.lower[j] = lower;
        self.upper[j] = upper;
        self
    }

    pub fn set_free(&mut self, j: usize) -> &mut Self {
        self.set_bounds(j, None, None)
    }

    pub fn set_box(&mut self, j: usize, lower: f64, upper: f64) -> &mut Self {
        self.set_bounds(j, Some(lower), Some(upper))
    }

    /// Checks the structural invariants (dimension agreement, bound order).
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.nvars();
        if self.eq.ncols() != n || self.ineq.ncols() != n {
            return Err(LpError::InvalidProblem("matrix column count != nvars"));
        }
        if self.eq.nrows() != self.eq_rhs.len() || self.ineq.nrows() != self.ineq_rhs.len() {
            return Err(LpError::InvalidProblem("rhs length != row count"));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::InvalidProblem("bound vector length != nvars"));
        }
        for j in 0..n {
            if let (Some(l), Some(u)) = (self.lower[j], self.upper[j]) {
                if l > u {
                    return Err(LpError::InvalidProblem("lower bound above upper bound"));
                }
            }
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.objective)
            || !finite(&self.eq_rhs)
            || !finite(&self.ineq_rhs)
            || !finite(&self.eq.values)
            || !finite(&self.ineq.values)
        {
            return Err(LpError::InvalidProblem("non-finite coefficient"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solution of an [`LpProblem`].
///
/// On `Optimal`, `primal` and `dual` form a certified pair; `dual` holds one
/// multiplier per constraint row (equality rows first, then inequality rows;
/// inequality multipliers are nonnegative). On `Unbounded`, `primal` holds an
/// improving ray. On `Infeasible`, `dual` holds Farkas row multipliers
/// certifying that no feasible point exists.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    pub objective_value: f64,
    pub duality_gap: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LpError {
    #[error("numerical breakdown: pivot below 1e-12 after Bland-rule fallback")]
    NumericalBreakdown,
    #[error("invalid problem: {0}")]
    InvalidProblem(&'static str),
}

/// Feasibility tolerance used throughout the solver.
pub const FEAS_TOL: f64 = 1e-9;
/// Optimality (reduced cost) tolerance.
pub const OPT_TOL: f64 = 1e-9;
/// Hard floor on acceptable pivot magnitude.
pub const PIVOT_TOL: f64 = 1e-12;

/// Solves the program. `Infeasible`/`Unbounded` are reported in the status,
/// not as errors; `Err` is reserved for numerical breakdown or a malformed
/// problem.
pub fn solve(problem: &LpProblem) -> Result<LpSolution, LpError> {
    problem.validate()?;
    simplex::solve_transformed(problem)
}

/// Re-verifies an `Optimal` solution against the problem data: primal
/// feasibility, dual sign feasibility, complementary slackness, and the
/// primal/dual objective gap. Returns a description of the first violation.
pub fn check_optimality(problem: &LpProblem, sol: &LpSolution, tol: f64) -> Result<(), String> {
    if sol.status != LpStatus::Optimal {
        return Err("status is not Optimal".into());
    }
    let x = &sol.primal;
    for (i, &b) in problem.eq_rhs.iter().enumerate() {
        let lhs = problem.eq.dot_row(i, x);
        if (lhs - b).abs() > tol.max(1e-9 * (1.0 + b.abs())) {
            return Err(format!("eq row {i} violated: {lhs} != {b}"));
        }
    }
    for (i, &b) in problem.ineq_rhs.iter().enumerate() {
        let lhs = problem.ineq.dot_row(i, x);
        if lhs - b > tol.max(1e-9 * (1.0 + b.abs())) {
            return Err(format!("ineq row {i} violated: {lhs} > {b}"));
        }
        let y = sol.dual[problem.eq_rhs.len() + i];
        if y < -tol {
            return Err(format!("ineq dual {i} negative: {y}"));
        }
        // complementary slackness on rows
        if y.abs() > tol && (b - lhs).abs() > 1e-6 {
            return Err(format!("complementary slackness violated on ineq row {i}"));
        }
    }
    for j in 0..problem.nvars() {
        if let Some(l) = problem.lower[j] {
            if x[j] < l - tol {
                return Err(format!("lower bound violated on var {j}"));
            }
        }
        if let Some(u) = problem.upper[j] {
            if x[j] > u + tol {
                return Err(format!("upper bound violated on var {j}"));
            }
        }
    }
    if sol.duality_gap.abs() > tol.max(1e-8) {
        return Err(format!("duality gap {} above tolerance", sol.duality_gap));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
