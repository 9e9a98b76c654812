//! Two-phase revised simplex with explicit dense basis inverse.
//!
//! Phase 1 drives artificial variables to zero; artificials that stay basic
//! at zero (redundant rows) are simply barred from re-entering, which keeps
//! degenerate equality systems (duplicate stationarity rows, etc.) safe
//! without row surgery. Pricing is Dantzig with a Bland fallback after a
//! stall, which guarantees termination on the heavily degenerate polytopes
//! that show up in identification problems.

use super::{LpError, LpProblem, LpSolution, LpStatus, FEAS_TOL, OPT_TOL, PIVOT_TOL};

const NONBASIC: usize = usize::MAX;
const REFACTOR_EVERY: u32 = 128;

/// How an original variable maps into the nonnegative transformed space.
#[derive(Clone, Copy)]
enum VarMap {
    /// x = shift + x'[col]
    Shifted { col: usize, shift: f64 },
    /// x = at - x'[col]
    Mirrored { col: usize, at: f64 },
    /// x = x'[pos] - x'[neg]
    Split { pos: usize, neg: usize },
}

struct Csc {
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl Csc {
    fn col(&self, j: usize) -> (&[u32], &[f64]) {
        let lo = self.indptr[j];
        let hi = self.indptr[j + 1];
        (&self.indices[lo..hi], &self.values[lo..hi])
    }
}

/// Transformed standard-form program: max c'x, Ax = b, x >= 0, with unit
/// slack/artificial columns tracked separately from structural ones.
struct Standard {
    m: usize,
    n_struct: usize,
    cols: Csc,
    /// slack column row and sign, one per inequality row (public + box rows)
    slacks: Vec<(usize, f64)>,
    b: Vec<f64>,
    c: Vec<f64>,
    /// rows needing an artificial in phase 1
    art_rows: Vec<usize>,
    var_map: Vec<VarMap>,
    /// per public row: +1.0 or -1.0 depending on sign flip during setup
    row_sign: Vec<f64>,
    n_public_rows: usize,
}

fn build_standard(p: &LpProblem) -> Standard {
    let n = p.nvars();
    let mut var_map = Vec::with_capacity(n);
    let mut n_struct = 0usize;
    // box rows: (transformed col, cap)
    let mut box_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        match (p.lower[j], p.upper[j]) {
            (Some(l), up) => {
                var_map.push(VarMap::Shifted {
                    col: n_struct,
                    shift: l,
                });
                if let Some(u) = up {
                    box_rows.push((n_struct, u - l));
                }
                n_struct += 1;
            }
            (None, Some(u)) => {
                var_map.push(VarMap::Mirrored { col: n_struct, at: u });
                n_struct += 1;
            }
            (None, None) => {
                var_map.push(VarMap::Split {
                    pos: n_struct,
                    neg: n_struct + 1,
                });
                n_struct += 2;
            }
        }
    }

    let n_eq = p.eq_rhs.len();
    let n_in = p.ineq_rhs.len();
    let m = n_eq + n_in + box_rows.len();

    // Assemble transformed rows as triplets, then transpose to CSC.
    let mut rhs = vec![0.0; m];
    let mut row_sign = vec![1.0; m];
    let mut triplets: Vec<(u32, u32, f64)> = Vec::with_capacity(p.eq.nnz() + p.ineq.nnz() + m);

    let mut emit_row = |r: usize, src: &super::SparseRows, i: usize, b0: f64, rhs: &mut [f64]| {
        rhs[r] = b0;
        for (j, a) in src.row(i) {
            match var_map[j] {
                VarMap::Shifted { col, shift } => {
                    triplets.push((r as u32, col as u32, a));
                    rhs[r] -= a * shift;
                }
                VarMap::Mirrored { col, at } => {
                    triplets.push((r as u32, col as u32, -a));
                    rhs[r] -= a * at;
                }
                VarMap::Split { pos, neg } => {
                    triplets.push((r as u32, pos as u32, a));
                    triplets.push((r as u32, neg as u32, -a));
                }
            }
        }
    };

    for i in 0..n_eq {
        emit_row(i, &p.eq, i, p.eq_rhs[i], &mut rhs);
    }
    for i in 0..n_in {
        emit_row(n_eq + i, &p.ineq, i, p.ineq_rhs[i], &mut rhs);
    }
    for (k, &(col, cap)) in box_rows.iter().enumerate() {
        let r = n_eq + n_in + k;
        rhs[r] = cap;
        triplets.push((r as u32, col as u32, 1.0));
    }

    // Flip rows with negative rhs so every initial basic value is >= 0.
    for r in 0..m {
        if rhs[r] < 0.0 {
            rhs[r] = -rhs[r];
            row_sign[r] = -1.0;
        }
    }
    for t in &mut triplets {
        t.2 *= row_sign[t.0 as usize];
    }

    // CSC from triplets.
    let mut counts = vec![0usize; n_struct + 1];
    for &(_, j, _) in &triplets {
        counts[j as usize + 1] += 1;
    }
    for j in 0..n_struct {
        counts[j + 1] += counts[j];
    }
    let mut indptr = counts.clone();
    let mut indices = vec![0u32; triplets.len()];
    let mut values = vec![0.0; triplets.len()];
    for &(r, j, v) in &triplets {
        let slot = indptr[j as usize];
        indices[slot] = r;
        values[slot] = v;
        indptr[j as usize] += 1;
    }
    let cols = Csc {
        indptr: counts,
        indices,
        values,
    };

    // Slack per inequality (public and box) row; artificials where the slack
    // points the wrong way or the row is an equality.
    let mut slacks = Vec::with_capacity(n_in + box_rows.len());
    let mut art_rows: Vec<usize> = (0..n_eq).collect();
    for r in n_eq..m {
        let sign = row_sign[r];
        slacks.push((r, sign));
        if sign < 0.0 {
            art_rows.push(r);
        }
    }

    let mut c = vec![0.0; n_struct];
    for j in 0..n {
        let cj = p.objective[j];
        match var_map[j] {
            VarMap::Shifted { col, .. } => c[col] += cj,
            VarMap::Mirrored { col, .. } => c[col] -= cj,
            VarMap::Split { pos, neg } => {
                c[pos] += cj;
                c[neg] -= cj;
            }
        }
    }

    Standard {
        m,
        n_struct,
        cols,
        slacks,
        b: rhs,
        c,
        art_rows,
        var_map,
        row_sign,
        n_public_rows: n_eq + n_in,
    }
}

/// Simplex working state over the standard form. Column indexing:
/// `0..n_struct` structural, then one slack per inequality row, then one
/// artificial per phase-1 row.
struct Engine<'a> {
    std: &'a Standard,
    n_slack: usize,
    n_art: usize,
    /// artificial column -> row
    art_row: Vec<usize>,
    basis: Vec<usize>,
    pos_in_basis: Vec<usize>,
    binv: Vec<f64>,
    x_basic: Vec<f64>,
    bland: bool,
    pivots_since_refactor: u32,
    stall: u32,
    stall_limit: u32,
    last_obj: f64,
}

impl<'a> Engine<'a> {
    fn new(std: &'a Standard) -> Self {
        let m = std.m;
        let n_slack = std.slacks.len();
        let n_art = std.art_rows.len();
        let ncols = std.n_struct + n_slack + n_art;
        let mut basis = vec![NONBASIC; m];
        let mut pos_in_basis = vec![NONBASIC; ncols];
        // slack basic where it has +1 coefficient, artificial elsewhere
        for (k, &(r, sign)) in std.slacks.iter().enumerate() {
            if sign > 0.0 {
                basis[r] = std.n_struct + k;
            }
        }
        let mut art_row = Vec::with_capacity(n_art);
        for (k, &r) in std.art_rows.iter().enumerate() {
            basis[r] = std.n_struct + n_slack + k;
            art_row.push(r);
        }
        for (r, &j) in basis.iter().enumerate() {
            debug_assert_ne!(j, NONBASIC, "row {r} lacks an initial basic column");
            pos_in_basis[j] = r;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let stall_limit = 5 * (m + ncols) as u32;
        Engine {
            std,
            n_slack,
            n_art,
            art_row,
            basis,
            pos_in_basis,
            binv,
            x_basic: std.b.clone(),
            bland: false,
            pivots_since_refactor: 0,
            stall: 0,
            stall_limit,
            last_obj: f64::NEG_INFINITY,
        }
    }

    fn ncols(&self) -> usize {
        self.std.n_struct + self.n_slack + self.n_art
    }

    /// y'A_j for a column of the standard form.
    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.std.n_struct {
            let (rows, vals) = self.std.cols.col(j);
            rows.iter()
                .zip(vals)
                .map(|(&r, &v)| v * y[r as usize])
                .sum()
        } else if j < self.std.n_struct + self.n_slack {
            let (r, sign) = self.std.slacks[j - self.std.n_struct];
            sign * y[r]
        } else {
            y[self.art_row[j - self.std.n_struct - self.n_slack]]
        }
    }

    /// d = B^-1 A_j.
    fn ftran(&self, j: usize, d: &mut [f64]) {
        let m = self.std.m;
        d.iter_mut().for_each(|v| *v = 0.0);
        let mut add_col = |k: usize, v: f64| {
            let col_start = k;
            for i in 0..m {
                d[i] += v * self.binv[i * m + col_start];
            }
        };
        if j < self.std.n_struct {
            let (rows, vals) = self.std.cols.col(j);
            for (&r, &v) in rows.iter().zip(vals) {
                add_col(r as usize, v);
            }
        } else if j < self.std.n_struct + self.n_slack {
            let (r, sign) = self.std.slacks[j - self.std.n_struct];
            add_col(r, sign);
        } else {
            add_col(self.art_row[j - self.std.n_struct - self.n_slack], 1.0);
        }
    }

    fn duals(&self, c: &[f64], y: &mut [f64]) {
        let m = self.std.m;
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = c[bj];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, &bk) in y.iter_mut().zip(row) {
                    *yk += cb * bk;
                }
            }
        }
    }

    fn objective(&self, c: &[f64]) -> f64 {
        self.basis
            .iter()
            .zip(&self.x_basic)
            .map(|(&j, &x)| c[j] * x)
            .sum()
    }

    fn refactorize(&mut self) -> Result<(), LpError> {
        let m = self.std.m;
        // Dense basis matrix, column per basic variable.
        let mut bmat = vec![0.0; m * m];
        for (i, &j) in self.basis.iter().enumerate() {
            if j < self.std.n_struct {
                let (rows, vals) = self.std.cols.col(j);
                for (&r, &v) in rows.iter().zip(vals) {
                    bmat[r as usize * m + i] = v;
                }
            } else if j < self.std.n_struct + self.n_slack {
                let (r, sign) = self.std.slacks[j - self.std.n_struct];
                bmat[r * m + i] = sign;
            } else {
                bmat[self.art_row[j - self.std.n_struct - self.n_slack] * m + i] = 1.0;
            }
        }
        // Gauss-Jordan inversion with partial pivoting.
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            let mut best = bmat[col * m + col].abs();
            for r in col + 1..m {
                let v = bmat[r * m + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < PIVOT_TOL {
                return Err(LpError::NumericalBreakdown);
            }
            if piv != col {
                for k in 0..m {
                    bmat.swap(piv * m + k, col * m + k);
                    inv.swap(piv * m + k, col * m + k);
                }
            }
            let p = bmat[col * m + col];
            for k in 0..m {
                bmat[col * m + k] /= p;
                inv[col * m + k] /= p;
            }
            for r in 0..m {
                if r != col {
                    let f = bmat[r * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            bmat[r * m + k] -= f * bmat[col * m + k];
                            inv[r * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        // Refresh basic values from scratch and clamp round-off.
        let mut xb = vec![0.0; m];
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            xb[i] = row.iter().zip(&self.std.b).map(|(&a, &b)| a * b).sum();
            if xb[i] < 0.0 && xb[i] > -FEAS_TOL * 10.0 {
                xb[i] = 0.0;
            }
        }
        self.x_basic = xb;
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// Runs simplex iterations for the given objective until optimal.
    /// `allow_art_entering` is true only in phase 1.
    fn run(&mut self, c: &[f64], allow_art_entering: bool) -> Result<RunOutcome, LpError> {
        let m = self.std.m;
        let ncols = self.ncols();
        let max_iters = 50_000 + 60 * m + ncols / 4;
        let mut y = vec![0.0; m];
        let mut d = vec![0.0; m];
        for _ in 0..max_iters {
            self.duals(c, &mut y);

            // Pricing.
            let price_limit = if allow_art_entering {
                ncols
            } else {
                self.std.n_struct + self.n_slack
            };
            let mut entering = NONBASIC;
            let mut best_rc = OPT_TOL;
            for j in 0..price_limit {
                if self.pos_in_basis[j] != NONBASIC {
                    continue;
                }
                let rc = c[j] - self.col_dot(j, &y);
                if rc > best_rc {
                    best_rc = rc;
                    entering = j;
                    if self.bland {
                        break;
                    }
                }
            }
            if entering == NONBASIC {
                return Ok(RunOutcome::Optimal);
            }

            self.ftran(entering, &mut d);

            // Two-pass ratio test: find the minimum ratio, then choose the
            // leaving row among near-ties (largest pivot for stability, or
            // smallest basis index under Bland).
            let mut best_t = f64::INFINITY;
            for i in 0..m {
                if d[i] > 1e-10 {
                    let t = self.x_basic[i].max(0.0) / d[i];
                    if t < best_t {
                        best_t = t;
                    }
                }
            }
            if !best_t.is_finite() {
                return Ok(RunOutcome::Unbounded { entering });
            }
            let tie_tol = 1e-9 * (1.0 + best_t);
            let mut leave = NONBASIC;
            for i in 0..m {
                if d[i] > 1e-10 && self.x_basic[i].max(0.0) / d[i] <= best_t + tie_tol {
                    let better = if leave == NONBASIC {
                        true
                    } else if self.bland {
                        self.basis[i] < self.basis[leave]
                    } else {
                        d[i] > d[leave]
                    };
                    if better {
                        leave = i;
                    }
                }
            }
            let pivot = d[leave];
            if pivot.abs() < PIVOT_TOL {
                if self.bland {
                    return Err(LpError::NumericalBreakdown);
                }
                self.bland = true;
                continue;
            }

            // Pivot: eta update of the inverse and the basic values.
            let t = (self.x_basic[leave].max(0.0)) / pivot;
            for i in 0..m {
                if i != leave {
                    self.x_basic[i] -= t * d[i];
                    if self.x_basic[i] < 0.0 && self.x_basic[i] > -FEAS_TOL * 10.0 {
                        self.x_basic[i] = 0.0;
                    }
                }
            }
            self.x_basic[leave] = t;
            {
                let (pre, rest) = self.binv.split_at_mut(leave * m);
                let (prow, post) = rest.split_at_mut(m);
                let inv_p = 1.0 / pivot;
                for v in prow.iter_mut() {
                    *v *= inv_p;
                }
                for (i, chunk) in pre.chunks_exact_mut(m).enumerate() {
                    let f = d[i];
                    if f != 0.0 {
                        for (a, &b) in chunk.iter_mut().zip(prow.iter()) {
                            *a -= f * b;
                        }
                    }
                }
                for (k, chunk) in post.chunks_exact_mut(m).enumerate() {
                    let f = d[leave + 1 + k];
                    if f != 0.0 {
                        for (a, &b) in chunk.iter_mut().zip(prow.iter()) {
                            *a -= f * b;
                        }
                    }
                }
            }
            let old = self.basis[leave];
            self.pos_in_basis[old] = NONBASIC;
            self.basis[leave] = entering;
            self.pos_in_basis[entering] = leave;

            // Stall detection drives the Bland fallback.
            let obj = self.objective(c);
            if obj > self.last_obj + 1e-12 * (1.0 + obj.abs()) {
                self.stall = 0;
                self.last_obj = obj;
            } else {
                self.stall += 1;
                if self.stall > self.stall_limit {
                    self.bland = true;
                }
            }

            self.pivots_since_refactor += 1;
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactorize()?;
            }
        }
        Err(LpError::NumericalBreakdown)
    }

    /// Values of structural columns in the transformed space.
    fn structural_values(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.std.n_struct];
        for (i, &j) in self.basis.iter().enumerate() {
            if j < self.std.n_struct {
                x[j] = self.x_basic[i].max(0.0);
            }
        }
        x
    }
}

enum RunOutcome {
    Optimal,
    Unbounded { entering: usize },
}

fn original_primal(std: &Standard, xs: &[f64]) -> Vec<f64> {
    std.var_map
        .iter()
        .map(|vm| match *vm {
            VarMap::Shifted { col, shift } => shift + xs[col],
            VarMap::Mirrored { col, at } => at - xs[col],
            VarMap::Split { pos, neg } => xs[pos] - xs[neg],
        })
        .collect()
}

/// Dual objective computed from public problem data and row duals, folding
/// in bound multipliers through reduced costs. Used for the certified gap.
fn public_dual_objective(p: &LpProblem, dual: &[f64]) -> f64 {
    let n_eq = p.eq_rhs.len();
    let mut val = 0.0;
    for (i, &b) in p.eq_rhs.iter().enumerate() {
        val += dual[i] * b;
    }
    for (i, &b) in p.ineq_rhs.iter().enumerate() {
        val += dual[n_eq + i] * b;
    }
    // reduced costs z = c - A'y
    let mut z = p.objective.clone();
    for i in 0..p.eq.nrows() {
        let y = dual[i];
        if y != 0.0 {
            for (j, a) in p.eq.row(i) {
                z[j] -= y * a;
            }
        }
    }
    for i in 0..p.ineq.nrows() {
        let y = dual[n_eq + i];
        if y != 0.0 {
            for (j, a) in p.ineq.row(i) {
                z[j] -= y * a;
            }
        }
    }
    for j in 0..p.nvars() {
        let zj = z[j];
        if zj > 0.0 {
            if let Some(u) = p.upper[j] {
                val += zj * u;
            }
        } else if let Some(l) = p.lower[j] {
            val += zj * l;
        }
    }
    val
}

pub(super) fn solve_transformed(p: &LpProblem) -> Result<LpSolution, LpError> {
    let std = build_standard(p);
    let m = std.m;
    let mut eng = Engine::new(&std);

    // Phase 1: drive artificials out.
    if eng.n_art > 0 {
        let ncols = eng.ncols();
        let mut c1 = vec![0.0; ncols];
        for k in 0..eng.n_art {
            c1[std.n_struct + eng.n_slack + k] = -1.0;
        }
        match eng.run(&c1, true)? {
            RunOutcome::Optimal => {}
            RunOutcome::Unbounded { .. } => return Err(LpError::NumericalBreakdown),
        }
        let infeas = -eng.objective(&c1);
        let scale = 1.0 + std.b.iter().map(|v| v.abs()).sum::<f64>();
        if infeas > FEAS_TOL * scale * 10.0 {
            // Farkas certificate from the phase-1 duals.
            let mut y = vec![0.0; m];
            eng.duals(&c1, &mut y);
            let mut pub_dual = vec![0.0; std.n_public_rows];
            for r in 0..std.n_public_rows {
                pub_dual[r] = y[r] * std.row_sign[r];
            }
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                primal: vec![0.0; p.nvars()],
                dual: pub_dual,
                objective_value: f64::NEG_INFINITY,
                duality_gap: f64::NAN,
            });
        }
        // Any artificial still basic sits at zero on a redundant row; it is
        // barred from re-entering in phase 2 and simply rides along.
    }

    // Phase 2.
    let ncols = eng.ncols();
    let mut c2 = vec![0.0; ncols];
    c2[..std.n_struct].copy_from_slice(&std.c);
    eng.bland = false;
    eng.stall = 0;
    eng.last_obj = f64::NEG_INFINITY;
    match eng.run(&c2, false)? {
        RunOutcome::Optimal => {}
        RunOutcome::Unbounded { entering } => {
            // Improving ray: entering column direction mapped to originals.
            let mut d = vec![0.0; m];
            eng.ftran(entering, &mut d);
            let mut xs = vec![0.0; std.n_struct];
            if entering < std.n_struct {
                xs[entering] = 1.0;
            }
            for (i, &j) in eng.basis.iter().enumerate() {
                if j < std.n_struct {
                    xs[j] -= d[i];
                }
            }
            let mut ray = original_primal(&std, &xs);
            // remove the constant part of the affine map: ray is a direction
            let at_zero = original_primal(&std, &vec![0.0; std.n_struct]);
            for (r, z) in ray.iter_mut().zip(at_zero) {
                *r -= z;
            }
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                primal: ray,
                dual: vec![0.0; std.n_public_rows],
                objective_value: f64::INFINITY,
                duality_gap: f64::NAN,
            });
        }
    }

    let xs = eng.structural_values();
    let primal = original_primal(&std, &xs);
    let mut y = vec![0.0; m];
    eng.duals(&c2, &mut y);
    let mut dual = vec![0.0; std.n_public_rows];
    for r in 0..std.n_public_rows {
        dual[r] = y[r] * std.row_sign[r];
    }
    let objective_value: f64 = p
        .objective
        .iter()
        .zip(&primal)
        .map(|(&c, &x)| c * x)
        .sum();
    let duality_gap = objective_value - public_dual_objective(p, &dual);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        primal,
        dual,
        objective_value,
        duality_gap,
    })
}
