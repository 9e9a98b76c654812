//! Finite-support model declaration at one parameter point: supports, the
//! deterministic outcome map as a pushforward matrix, and the linear
//! constraint system on the latent pmf.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::SparseRows;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid outcome map: column {col} has {hits} matching outcomes (expected 1)")]
    InvalidOutcomeMap { col: usize, hits: usize },
    #[error("degenerate support: x-block {x:?} lacks {side} error mass points")]
    DegenerateSupport { x: Vec<f64>, side: &'static str },
    #[error("grid mismatch: v1 and v2 grids differ")]
    GridMismatch,
    #[error("unknown subpopulation mass: P(subpopulation) must be supplied")]
    UnknownSubpopulationMass,
    #[error("support points must be pairwise distinct")]
    DuplicatePoint,
    #[error("support points must share one arity")]
    MixedArity,
    #[error("constraint system must contain exactly one simplex row")]
    MissingSimplexRow,
}

/// Ordered finite support of labeled real tuples, with a label-to-position
/// index. Ordering is fixed by the declaration (builders emit lexicographic
/// order in the declared tuple coordinates).
#[derive(Debug, Clone)]
pub struct FiniteSupport {
    arity: usize,
    points: Vec<Vec<f64>>,
    index: HashMap<Vec<u64>, usize>,
}

fn key(point: &[f64]) -> Vec<u64> {
    point.iter().map(|v| v.to_bits()).collect()
}

impl FiniteSupport {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let arity = points.first().map_or(0, |p| p.len());
        let mut index = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if p.len() != arity {
                return Err(ModelError::MixedArity);
            }
            if index.insert(key(p), i).is_some() {
                return Err(ModelError::DuplicatePoint);
            }
        }
        Ok(Self {
            arity,
            points,
            index,
        })
    }

    /// Cartesian product of axes, lexicographic with the first axis slowest.
    pub fn from_product(axes: &[Vec<f64>]) -> Self {
        let mut points = vec![Vec::new()];
        for axis in axes {
            let mut next = Vec::with_capacity(points.len() * axis.len());
            for p in &points {
                for &v in axis {
                    let mut q = p.clone();
                    q.push(v);
                    next.push(q);
                }
            }
            points = next;
        }
        Self::new(points).expect("product grids are distinct by construction")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.iter().map(|p| p.as_slice())
    }

    pub fn position(&self, point: &[f64]) -> Option<usize> {
        self.index.get(&key(point)).copied()
    }
}

/// A named parameter point: structural coefficients plus any counterfactual
/// targets riding along on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl ThetaPoint {
    pub fn new(names: &[&str], values: Vec<f64>) -> Self {
        assert_eq!(names.len(), values.len());
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            values,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

/// Column-stochastic 0/1 matrix mapping a latent pmf to the model pmf of
/// observables. Each column is a unit vector, so only the hit row is stored.
#[derive(Debug, Clone)]
pub struct PushforwardMatrix {
    nrows: usize,
    row_of_col: Vec<u32>,
}

impl PushforwardMatrix {
    pub fn from_row_map(nrows: usize, row_of_col: Vec<u32>) -> Self {
        debug_assert!(row_of_col.iter().all(|&r| (r as usize) < nrows));
        Self { nrows, row_of_col }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.row_of_col.len()
    }

    pub fn entry(&self, l: usize, m: usize) -> f64 {
        if self.row_of_col[m] as usize == l {
            1.0
        } else {
            0.0
        }
    }

    /// Row index of the single 1 in column `m`.
    pub fn column_row(&self, m: usize) -> usize {
        self.row_of_col[m] as usize
    }

    /// p_Z = C~ p_W.
    pub fn apply(&self, latent: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        for (m, &r) in self.row_of_col.iter().enumerate() {
            out[r as usize] += latent[m];
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.nrows)
            .map(|l| (0..self.ncols()).map(|m| self.entry(l, m)).collect())
            .collect()
    }
}

/// Builds the pushforward matrix entry by entry from the outcome predicate
/// and verifies the column-sum invariant (each latent point maps to exactly
/// one observable point).
pub fn build_pushforward<F>(
    z_support: &FiniteSupport,
    w_support: &FiniteSupport,
    theta: &ThetaPoint,
    outcome: F,
) -> Result<PushforwardMatrix, ModelError>
where
    F: Fn(&[f64], &[f64], &ThetaPoint) -> bool,
{
    let nrows = z_support.len();
    let mut row_of_col = Vec::with_capacity(w_support.len());
    for (m, w) in w_support.iter().enumerate() {
        let mut hit = None;
        let mut hits = 0usize;
        for (l, z) in z_support.iter().enumerate() {
            if outcome(z, w, theta) {
                hits += 1;
                hit = Some(l);
            }
        }
        if hits != 1 {
            return Err(ModelError::InvalidOutcomeMap { col: m, hits });
        }
        row_of_col.push(hit.unwrap() as u32);
    }
    Ok(PushforwardMatrix { nrows, row_of_col })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowTag {
    Simplex,
    MedianZero,
    Moment,
    Stationarity,
    Counterfactual,
}

/// Linear equality system `A p_W = b` on the latent pmf, tagged per row.
/// Always holds exactly one simplex row.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    rows: SparseRows,
    rhs: Vec<f64>,
    tags: Vec<RowTag>,
}

impl ConstraintSystem {
    /// Starts the system with the simplex row (all ones, rhs 1).
    pub fn with_simplex(ncols: usize) -> Self {
        let mut rows = SparseRows::new(ncols);
        rows.push_row((0..ncols).map(|j| (j, 1.0)));
        Self {
            rows,
            rhs: vec![1.0],
            tags: vec![RowTag::Simplex],
        }
    }

    pub fn push_row<I: IntoIterator<Item = (usize, f64)>>(
        &mut self,
        row: I,
        rhs: f64,
        tag: RowTag,
    ) {
        self.rows.push_row(row);
        self.rhs.push(rhs);
        self.tags.push(tag);
    }

    pub fn nrows(&self) -> usize {
        self.rhs.len()
    }

    pub fn ncols(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &SparseRows {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn tags(&self) -> &[RowTag] {
        &self.tags
    }

    pub fn row_dense(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols()];
        for (j, v) in self.rows.row(i) {
            out[j] = v;
        }
        out
    }

    /// Max absolute residual of `A p - b`.
    pub fn residual(&self, p: &[f64]) -> f64 {
        (0..self.nrows())
            .map(|i| (self.rows.dot_row(i, p) - self.rhs[i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let simplex = self
            .tags
            .iter()
            .filter(|t| **t == RowTag::Simplex)
            .count();
        if simplex != 1 || self.tags.is_empty() {
            return Err(ModelError::MissingSimplexRow);
        }
        Ok(())
    }
}

/// The simplex row on its own: M ones with rhs 1.
pub fn simplex_row(m: usize) -> (Vec<f64>, f64) {
    (vec![1.0; m], 1.0)
}

fn x_block_key(point: &[f64], x_coords: &[usize]) -> Vec<u64> {
    x_coords.iter().map(|&c| point[c].to_bits()).collect()
}

/// Distinct x-blocks of a support, in first-appearance (declaration) order.
fn x_blocks(w: &FiniteSupport, x_coords: &[usize]) -> Vec<(Vec<f64>, Vec<usize>)> {
    let mut order: Vec<Vec<f64>> = Vec::new();
    let mut map: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for (m, p) in w.iter().enumerate() {
        let k = x_block_key(p, x_coords);
        let idx = *map.entry(k).or_insert_with(|| {
            order.push(x_coords.iter().map(|&c| p[c]).collect());
            blocks.push(Vec::new());
            blocks.len() - 1
        });
        blocks[idx].push(m);
    }
    order.into_iter().zip(blocks).collect()
}

/// Median-zero restriction rows, one per x-block: +1 on (x, u<0) columns,
/// -1 on (x, u>0) columns, rhs 0, implementing
/// `sum_{u<0} P(x,u) = sum_{u>0} P(x,u)`.
pub fn median_zero_rows(
    w: &FiniteSupport,
    x_coords: &[usize],
    u_coord: usize,
) -> Result<Vec<(Vec<(usize, f64)>, f64)>, ModelError> {
    let mut out = Vec::new();
    for (xval, cols) in x_blocks(w, x_coords) {
        let mut row = Vec::new();
        let (mut has_neg, mut has_pos) = (false, false);
        for &m in &cols {
            let u = w.point(m)[u_coord];
            if u < 0.0 {
                has_neg = true;
                row.push((m, 1.0));
            } else if u > 0.0 {
                has_pos = true;
                row.push((m, -1.0));
            }
        }
        if !has_neg {
            return Err(ModelError::DegenerateSupport {
                x: xval,
                side: "negative",
            });
        }
        if !has_pos {
            return Err(ModelError::DegenerateSupport {
                x: xval,
                side: "positive",
            });
        }
        out.push((row, 0.0));
    }
    Ok(out)
}

/// Stationarity rows for a panel support: one candidate row per (x-block, u)
/// pair with +1 on columns where `v1 = u != v2` and -1 where `v2 = u != v1`;
/// identically zero rows are dropped. The v1 and v2 grids must agree.
pub fn stationarity_rows(
    w: &FiniteSupport,
    x_coords: &[usize],
    v1_coord: usize,
    v2_coord: usize,
) -> Result<Vec<(Vec<(usize, f64)>, f64)>, ModelError> {
    let grid_of = |coord: usize| {
        let mut g: Vec<f64> = w.iter().map(|p| p[coord]).collect();
        g.sort_unstable_by(f64::total_cmp);
        g.dedup();
        g
    };
    let v_grid = grid_of(v1_coord);
    if v_grid != grid_of(v2_coord) {
        return Err(ModelError::GridMismatch);
    }
    let mut out = Vec::new();
    for (_, cols) in x_blocks(w, x_coords) {
        for &u in &v_grid {
            let mut row = Vec::new();
            for &m in &cols {
                let p = w.point(m);
                let (v1, v2) = (p[v1_coord], p[v2_coord]);
                if v1 == u && v2 != u {
                    row.push((m, 1.0));
                } else if v2 == u && v1 != u {
                    row.push((m, -1.0));
                }
            }
            if !row.is_empty() {
                out.push((row, 0.0));
            }
        }
    }
    Ok(out)
}

/// Counterfactual / partial-effect row: `coef(w)` on columns selected by
/// `subpop`, rhs `target * P(subpop)`. `coef` is the counterfactual outcome
/// indicator for choice probabilities, or the outcome difference for partial
/// effects.
pub fn counterfactual_row<C, S>(
    w: &FiniteSupport,
    coef: C,
    subpop: S,
    target: f64,
    subpop_mass: Option<f64>,
) -> Result<(Vec<(usize, f64)>, f64), ModelError>
where
    C: Fn(&[f64]) -> f64,
    S: Fn(&[f64]) -> bool,
{
    let mass = subpop_mass.ok_or(ModelError::UnknownSubpopulationMass)?;
    let mut row = Vec::new();
    for (m, p) in w.iter().enumerate() {
        if subpop(p) {
            let c = coef(p);
            if c != 0.0 {
                row.push((m, c));
            }
        }
    }
    Ok((row, target * mass))
}

/// A fully declared finite-support model at one parameter point.
#[derive(Debug, Clone)]
pub struct FiniteModel {
    pub z_support: FiniteSupport,
    pub w_support: FiniteSupport,
    pub theta: ThetaPoint,
    pub pushforward: PushforwardMatrix,
    pub constraints: ConstraintSystem,
}

impl FiniteModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        assert_eq!(self.pushforward.nrows(), self.z_support.len());
        assert_eq!(self.pushforward.ncols(), self.w_support.len());
        assert_eq!(self.constraints.ncols(), self.w_support.len());
        self.constraints.validate()
    }

    pub fn nz(&self) -> usize {
        self.z_support.len()
    }

    pub fn nw(&self) -> usize {
        self.w_support.len()
    }
}
