//! The discrepancy function `T(theta)` of the critic/defender game, its
//! membership decision rule, grid scans, and the extremal-point variant.
//!
//! `T(theta)` is the value of the maximin game
//! `max_{phi in [0,1]^L} min_{p_W feasible} phi' (p* 1' - C~) p_W`,
//! equivalently the smallest one-sided total-variation deviation
//! `min_{p_W} sum_l (p*_l - (C~ p_W)_l)^+` over the constrained latent
//! polytope. The solver works on the second form, whose row count is
//! `R + L` regardless of how large the latent support gets; the game's
//! `(lambda, phi)` pair is recovered from the row duals, so the certified
//! primal/dual guarantees of the LP layer carry over unchanged.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::lp::{self, LpProblem, LpStatus, SparseRows};
use crate::model::{FiniteModel, RowTag, ThetaPoint};
use crate::par;
use crate::prob::{ProbError, ProbabilityVector};

/// Absolute membership tolerance on `T`.
pub const TOL_T: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum DiscrepancyError {
    #[error(transparent)]
    Lp(#[from] lp::LpError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
}

/// Critic strategy: a feature vector in `[0,1]^L` over the observable
/// support.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(phi: Vec<f64>) -> Result<Self, DiscrepancyError> {
        if phi.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DiscrepancyError::Dimension("feature outside [0,1]"));
        }
        Ok(Self(phi))
    }

    /// Clamps solver output into the box (round-off only).
    fn from_clamped(phi: Vec<f64>) -> Self {
        Self(phi.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Outcome of one `T(theta)` evaluation.
#[derive(Debug, Clone)]
pub struct DiscrepancyResult {
    /// Discrepancy value; `f64::INFINITY` when the latent polytope is empty
    /// (weak duality still excludes theta correctly).
    pub t: f64,
    pub phi_star: FeatureVector,
    pub dual_lambda: Vec<f64>,
    pub member: bool,
    pub solve_time: Duration,
}

/// Game matrix `C_theta = p* 1' - C~`, materialized densely. Diagnostic
/// surface for small models; the solver itself never forms it.
pub fn assemble_game_matrix(
    p_star: &ProbabilityVector,
    pushforward: &crate::model::PushforwardMatrix,
) -> Vec<Vec<f64>> {
    let l = pushforward.nrows();
    let m = pushforward.ncols();
    assert_eq!(p_star.len(), l, "dimension mismatch");
    (0..l)
        .map(|i| {
            (0..m)
                .map(|j| p_star[i] - pushforward.entry(i, j))
                .collect()
        })
        .collect()
}

/// Builds the row-compact LP: variables `(p_W, s)`, rows `A p = b` and
/// `C~ p + s >= p*` (stored as `-C~ p - s <= -p*`), objective `max -sum(c_l s_l)`.
/// `box_hi` rescales the critic's box `[0, c]`; the shipped decision rule
/// uses `c = 1`.
fn build_tv_lp(model: &FiniteModel, p_star: &ProbabilityVector, box_hi: f64) -> LpProblem {
    let m = model.nw();
    let l = model.nz();
    let nvars = m + l;

    let mut objective = vec![0.0; nvars];
    for j in 0..l {
        objective[m + j] = -box_hi;
    }
    let mut p = LpProblem::maximize(objective);

    // equality block: A p = b, padded with zero columns for s
    let mut eq = SparseRows::new(nvars);
    for i in 0..model.constraints.nrows() {
        eq.push_row(model.constraints.rows().row(i));
    }
    p.set_eq(eq, model.constraints.rhs().to_vec());

    // coverage block: -C~ p - s <= -p*
    let mut cols_by_row: Vec<Vec<usize>> = vec![Vec::new(); l];
    for j in 0..m {
        cols_by_row[model.pushforward.column_row(j)].push(j);
    }
    let mut ineq = SparseRows::new(nvars);
    let mut rhs = Vec::with_capacity(l);
    for (i, cols) in cols_by_row.iter().enumerate() {
        ineq.push_row(
            cols.iter()
                .map(|&j| (j, -1.0))
                .chain(std::iter::once((m + i, -1.0))),
        );
        rhs.push(-p_star[i]);
    }
    p.set_ineq(ineq, rhs);
    p
}

fn simplex_row_index(model: &FiniteModel) -> usize {
    model
        .constraints
        .tags()
        .iter()
        .position(|t| *t == RowTag::Simplex)
        .expect("constraint system always holds a simplex row")
}

/// Computes `T(theta)` with the critic box rescaled to `[0, box_hi]`.
/// Exposed for the scale-invariance checks; use [`compute_t`] for the
/// decision rule.
pub fn compute_t_with_box(
    model: &FiniteModel,
    p_star: &ProbabilityVector,
    box_hi: f64,
) -> Result<DiscrepancyResult, DiscrepancyError> {
    let started = Instant::now();
    model.validate()?;
    if p_star.len() != model.nz() {
        return Err(DiscrepancyError::Dimension("p_star length != |Z|"));
    }
    let l = model.nz();
    let r = model.constraints.nrows();

    let problem = build_tv_lp(model, p_star, box_hi);
    let sol = lp::solve(&problem)?;
    match sol.status {
        LpStatus::Infeasible => Ok(DiscrepancyResult {
            t: f64::INFINITY,
            phi_star: FeatureVector::zeros(l),
            dual_lambda: vec![0.0; r],
            member: false,
            solve_time: started.elapsed(),
        }),
        LpStatus::Unbounded => Err(DiscrepancyError::Lp(lp::LpError::NumericalBreakdown)),
        LpStatus::Optimal => {
            let t = (-sol.objective_value).max(0.0);
            // phi*: duals of the coverage rows, in [0, box_hi] up to round-off
            let phi: Vec<f64> = sol.dual[r..r + l].to_vec();
            let phi_p_star: f64 = phi.iter().zip(p_star.as_slice()).map(|(a, b)| a * b).sum();
            // lambda of the game LP: negated equality duals, shifted on the
            // simplex row so that lambda'b = T exactly.
            let mut dual_lambda: Vec<f64> = sol.dual[..r].iter().map(|y| -y).collect();
            dual_lambda[simplex_row_index(model)] += phi_p_star;
            let phi_star = if box_hi == 1.0 {
                FeatureVector::from_clamped(phi)
            } else {
                FeatureVector::from_clamped(phi.iter().map(|v| v / box_hi).collect())
            };
            Ok(DiscrepancyResult {
                t,
                phi_star,
                dual_lambda,
                member: t <= TOL_T * box_hi,
                solve_time: started.elapsed(),
            })
        }
    }
}

/// Discrepancy function at one parameter point, with membership verdict
/// `member = (T <= 1e-7)`.
pub fn compute_t(
    model: &FiniteModel,
    p_star: &ProbabilityVector,
) -> Result<DiscrepancyResult, DiscrepancyError> {
    compute_t_with_box(model, p_star, 1.0)
}

/// Extremal-point variant: `max z` subject to `z <= phi'(p* - p_i)` over
/// the enumerated extreme points, `phi in [0,1]^L`.
pub fn compute_t_extremal(
    p_star: &ProbabilityVector,
    extreme_points: &[ProbabilityVector],
) -> Result<DiscrepancyResult, DiscrepancyError> {
    let started = Instant::now();
    if extreme_points.is_empty() {
        return Err(DiscrepancyError::Dimension("no extreme points supplied"));
    }
    let l = p_star.len();
    if extreme_points.iter().any(|p| p.len() != l) {
        return Err(DiscrepancyError::Dimension("extreme point length != |Z|"));
    }
    // variables: (z, phi); objective z
    let mut objective = vec![0.0; 1 + l];
    objective[0] = 1.0;
    let mut problem = LpProblem::maximize(objective);
    problem.set_free(0);
    for j in 0..l {
        problem.set_box(1 + j, 0.0, 1.0);
    }
    let mut ineq = SparseRows::new(1 + l);
    for p_i in extreme_points {
        ineq.push_row(
            std::iter::once((0usize, 1.0)).chain(
                (0..l).map(|j| (1 + j, -(p_star[j] - p_i[j]))),
            ),
        );
    }
    problem.set_ineq(ineq, vec![0.0; extreme_points.len()]);
    let sol = lp::solve(&problem)?;
    if sol.status != LpStatus::Optimal {
        return Err(DiscrepancyError::Lp(lp::LpError::NumericalBreakdown));
    }
    let t = sol.objective_value.max(0.0);
    Ok(DiscrepancyResult {
        t,
        phi_star: FeatureVector::from_clamped(sol.primal[1..].to_vec()),
        dual_lambda: sol.dual.clone(),
        member: t <= TOL_T,
        solve_time: started.elapsed(),
    })
}

/// Maximal contiguous member intervals of one scanned coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateIntervals {
    pub name: String,
    pub intervals: Vec<(f64, f64)>,
}

/// A grid of theta points with per-point results and interval summaries.
#[derive(Debug, Clone)]
pub struct ThetaScan {
    pub grid: Vec<ThetaPoint>,
    pub results: Vec<DiscrepancyResult>,
    pub summary: Vec<CoordinateIntervals>,
}

impl ThetaScan {
    /// Total member-interval length for a scanned coordinate.
    pub fn member_width(&self, name: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.intervals.iter().map(|(a, b)| b - a).sum())
    }

    pub fn member_count(&self) -> usize {
        self.results.iter().filter(|r| r.member).count()
    }
}

/// Interval summary along grid order for every coordinate that varies.
/// A single non-member point flanked by members is a genuine gap.
fn summarize(grid: &[ThetaPoint], results: &[DiscrepancyResult]) -> Vec<CoordinateIntervals> {
    let Some(first) = grid.first() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (ci, name) in first.names.iter().enumerate() {
        let varies = grid.iter().any(|t| t.values[ci] != first.values[ci]);
        if !varies {
            continue;
        }
        let mut intervals: Vec<(f64, f64)> = Vec::new();
        let mut run: Option<(f64, f64)> = None;
        for (t, r) in grid.iter().zip(results) {
            let v = t.values[ci];
            if r.member {
                run = Some(match run {
                    None => (v, v),
                    Some((a, _)) => (a, v),
                });
            } else if let Some(done) = run.take() {
                intervals.push(done);
            }
        }
        if let Some(done) = run {
            intervals.push(done);
        }
        out.push(CoordinateIntervals {
            name: name.clone(),
            intervals,
        });
    }
    out
}

/// Scans a theta grid: one `compute_t` per point, distributed over the
/// worker pool, merged by grid index.
pub fn scan<F>(
    build_model: F,
    grid: &[ThetaPoint],
    p_star: &ProbabilityVector,
) -> Result<ThetaScan, DiscrepancyError>
where
    F: Fn(&ThetaPoint) -> Result<FiniteModel, DiscrepancyError> + Sync,
{
    if grid.is_empty() {
        return Err(DiscrepancyError::Dimension("empty theta grid"));
    }
    let results: Vec<Result<DiscrepancyResult, DiscrepancyError>> =
        par::map_indexed(grid.len(), |i| {
            let model = build_model(&grid[i])?;
            compute_t(&model, p_star)
        });
    let mut ok = Vec::with_capacity(results.len());
    for r in results {
        ok.push(r?);
    }
    let summary = summarize(grid, &ok);
    Ok(ThetaScan {
        grid: grid.to_vec(),
        results: ok,
        summary,
    })
}
