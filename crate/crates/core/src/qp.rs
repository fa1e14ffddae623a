//! Dense convex QP solver.
//!
//! Solves
//!
//! ```text
//! minimize    ½ zᵀ H z + gᵀ z
//! subject to  A_eq z = b_eq
//!             lb ≤ A_in z ≤ ub
//! ```
//!
//! with the Goldfarb–Idnani dual active-set method. The method starts from the
//! unconstrained minimizer and adds violated constraints one at a time while
//! keeping dual feasibility, so the first primal-feasible iterate is optimal.
//! The factorization `J = L⁻ᵀ` (with `H = L Lᵀ`) and the triangular factor of
//! the active normals are updated with Givens rotations; each active-set change
//! costs `O(n²)`.
//!
//! Constraint rows are stored sparsely, which matters for the banded problems
//! the SCP planner builds.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Added to `H` when its smallest eigenvalue falls below this floor.
pub const REG_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct QProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QProblem {
    /// Unconstrained problem of dimension `n`.
    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        let n = g.len();
        QProblem {
            h,
            g,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            lb: DVector::zeros(0),
            ub: DVector::zeros(0),
        }
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        let dims_ok = self.h.nrows() == n
            && self.h.ncols() == n
            && self.a_eq.ncols() == n
            && self.a_eq.nrows() == self.b_eq.len()
            && self.a_in.ncols() == n
            && self.a_in.nrows() == self.lb.len()
            && self.a_in.nrows() == self.ub.len();
        if !dims_ok {
            return Err(Error::DimensionMismatch(format!(
                "H {}x{}, g {}, A_eq {}x{}, b_eq {}, A_in {}x{}, lb {}, ub {}",
                self.h.nrows(),
                self.h.ncols(),
                n,
                self.a_eq.nrows(),
                self.a_eq.ncols(),
                self.b_eq.len(),
                self.a_in.nrows(),
                self.a_in.ncols(),
                self.lb.len(),
                self.ub.len()
            )));
        }
        let scale = self.h.amax().max(1.0);
        if (&self.h - self.h.transpose()).amax() > 1e-10 * scale {
            return Err(Error::InvalidArgument("H is not symmetric".into()));
        }
        if self.lb.iter().zip(self.ub.iter()).any(|(l, u)| l > u || l.is_nan() || u.is_nan()) {
            return Err(Error::InvalidArgument("lb must not exceed ub".into()));
        }
        let finite = self.h.iter().chain(self.g.iter()).chain(self.a_eq.iter()).chain(self.b_eq.iter()).chain(self.a_in.iter());
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("QP data"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QSolution {
    pub z: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Multipliers with `H z + g + A_eqᵀ λ + A_inᵀ μ = 0`.
    pub lambda_eq: DVector<f64>,
    pub mu_in: DVector<f64>,
    pub objective: f64,
    /// Dual objective after every primal step; non-decreasing.
    pub dual_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings { tol: 1e-8, max_iter: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Eq(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Debug, Clone)]
struct Row {
    idx: Vec<usize>,
    val: Vec<f64>,
    b: f64,
    norm: f64,
    origin: Origin,
}

impl Row {
    fn from_dense(a: &DMatrix<f64>, i: usize, sign: f64, b: f64, origin: Origin) -> Row {
        let (mut idx, mut val) = (Vec::new(), Vec::new());
        for j in 0..a.ncols() {
            let v = a[(i, j)];
            if v != 0.0 {
                idx.push(j);
                val.push(sign * v);
            }
        }
        let norm = val.iter().map(|v| v * v).sum::<f64>().sqrt();
        Row { idx, val, b: sign * b, norm, origin }
    }

    #[inline]
    fn dot(&self, x: &DVector<f64>) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&j, v)| v * x[j]).sum()
    }

    fn is_eq(&self) -> bool {
        matches!(self.origin, Origin::Eq(_))
    }

    fn negate(&mut self) {
        self.val.iter_mut().for_each(|v| *v = -*v);
        self.b = -self.b;
    }
}

/// Factorization state of the dual active-set iteration.
struct Work {
    n: usize,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    q: usize,
}

impl Work {
    /// `d = Jᵀ n_p` for a sparse normal.
    fn project(&self, row: &Row) -> DVector<f64> {
        let mut d = DVector::zeros(self.n);
        for c in 0..self.n {
            let col = self.j.column(c);
            d[c] = row.idx.iter().zip(&row.val).map(|(&i, v)| v * col[i]).sum();
        }
        d
    }

    fn step_direction(&self, d: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (n, q) = (self.n, self.q);
        let z = self.j.columns(q, n - q) * d.rows(q, n - q);
        let r = if q == 0 {
            DVector::zeros(0)
        } else {
            let rq = self.r.view((0, 0), (q, q));
            rq.solve_upper_triangular(&d.rows(0, q).into_owned()).unwrap_or_else(|| DVector::from_element(q, f64::NAN))
        };
        (z, r)
    }

    /// Rotate columns `a < b` of `J`.
    fn rotate_j(&mut self, a: usize, b: usize, c: f64, s: f64) {
        let n = self.n;
        let (lo, hi) = self.j.as_mut_slice().split_at_mut(b * n);
        for (x, y) in lo[a * n..(a + 1) * n].iter_mut().zip(&mut hi[..n]) {
            let (ja, jb) = (*x, *y);
            *x = c * ja + s * jb;
            *y = -s * ja + c * jb;
        }
    }

    /// Append a normal whose projection is `d`. Returns false when it is
    /// numerically dependent on the active set.
    fn add(&mut self, mut d: DVector<f64>) -> bool {
        let (n, q) = (self.n, self.q);
        for i in (q + 1..n).rev() {
            let (a, b) = (d[i - 1], d[i]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            d[i - 1] = h;
            d[i] = 0.0;
            self.rotate_j(i - 1, i, c, s);
        }
        if d[q].abs() <= f64::EPSILON * d.amax() {
            return false;
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
        self.q += 1;
        true
    }

    /// Remove active column `k`, restoring triangularity.
    fn drop(&mut self, k: usize) {
        let q = self.q;
        for col in k..q - 1 {
            for i in 0..=col + 1 {
                self.r[(i, col)] = self.r[(i, col + 1)];
            }
        }
        for i in 0..q {
            self.r[(i, q - 1)] = 0.0;
        }
        for jj in k..q - 1 {
            let (a, b) = (self.r[(jj, jj)], self.r[(jj + 1, jj)]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for col in jj..q - 1 {
                let (ra, rb) = (self.r[(jj, col)], self.r[(jj + 1, col)]);
                self.r[(jj, col)] = c * ra + s * rb;
                self.r[(jj + 1, col)] = -s * ra + c * rb;
            }
            self.rotate_j(jj, jj + 1, c, s);
        }
        self.q -= 1;
    }
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    m.column_iter().enumerate().all(|(c, col)| col.iter().enumerate().all(|(r, v)| r == c || *v == 0.0))
}

/// Regularized Hessian, `J = L⁻ᵀ`, and the unconstrained minimizer.
fn factor(p: &QProblem) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let n = p.n();
    let mut h = p.h.clone();
    if is_diagonal(&h) {
        let d = h.diagonal();
        if d.iter().any(|v| *v < 0.0) {
            return Err(Error::NotPsd);
        }
        if d.iter().any(|v| *v - REG_FLOOR <= 0.0) {
            for i in 0..n {
                h[(i, i)] += REG_FLOOR;
            }
        }
        let d = h.diagonal();
        let jinv = DMatrix::from_diagonal(&d.map(|v| 1.0 / v.sqrt()));
        let x = -p.g.component_div(&d);
        return Ok((h, jinv, x));
    }
    let shifted = &h - DMatrix::identity(n, n) * REG_FLOOR;
    if shifted.cholesky().is_none() {
        h += DMatrix::identity(n, n) * REG_FLOOR;
    }
    let chol = h.clone().cholesky().ok_or(Error::NotPsd)?;
    let jinv = chol
        .l()
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::NotPsd)?;
    let x = -chol.solve(&p.g);
    Ok((h, jinv, x))
}

/// Solve with default settings and no warm start.
pub fn solve(p: &QProblem, tol: f64, max_iter: usize) -> Result<QSolution> {
    solve_warm(p, &QpSettings { tol, max_iter }, None)
}

/// Solve, optionally seeded with a previous solution. Constraints that were
/// active at `warm` are preferred when choosing which violated constraint to
/// add next, which shortens the active-set walk on receding-horizon problems.
pub fn solve_warm(p: &QProblem, settings: &QpSettings, warm: Option<&DVector<f64>>) -> Result<QSolution> {
    p.validate()?;
    let n = p.n();
    if let Some(w) = warm {
        if w.len() != n {
            return Err(Error::DimensionMismatch(format!("warm start has {} entries, expected {n}", w.len())));
        }
    }

    let (h, jinv, x0) = factor(p)?;

    let mut rows: Vec<Row> = Vec::with_capacity(p.b_eq.len() + 2 * p.lb.len());
    for i in 0..p.a_eq.nrows() {
        rows.push(Row::from_dense(&p.a_eq, i, 1.0, p.b_eq[i], Origin::Eq(i)));
    }
    for i in 0..p.a_in.nrows() {
        let (l, u) = (p.lb[i], p.ub[i]);
        if l == u {
            rows.push(Row::from_dense(&p.a_in, i, 1.0, l, Origin::Lower(i)));
            rows.last_mut().unwrap().origin = Origin::Eq(usize::MAX - i);
            continue;
        }
        if l.is_finite() {
            rows.push(Row::from_dense(&p.a_in, i, 1.0, l, Origin::Lower(i)));
        }
        if u.is_finite() {
            rows.push(Row::from_dense(&p.a_in, i, -1.0, u, Origin::Upper(i)));
        }
    }
    // Zero rows carry no direction: either trivially satisfied or infeasible.
    for row in &rows {
        if row.norm == 0.0 {
            let ok = if row.is_eq() { row.b.abs() <= settings.tol } else { row.b <= settings.tol };
            if !ok {
                return Ok(infeasible(p, DVector::zeros(n), 0));
            }
        }
    }
    let hinted: Vec<bool> = match warm {
        Some(w) => rows.iter().map(|r| !r.is_eq() && (r.dot(w) - r.b).abs() <= 1e-6 * (1.0 + r.b.abs())).collect(),
        None => vec![false; rows.len()],
    };

    let mut x = x0;
    let mut f = 0.5 * p.g.dot(&x);
    let mut work = Work { n, j: jinv, r: DMatrix::zeros(n, n), q: 0 };
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut is_active = vec![false; rows.len()];
    let mut eq_done = vec![false; rows.len()];
    let mut dual_trace = vec![f];
    let mut iterations = 0;
    let feas_tol = 1e-12;

    loop {
        // Equalities first, in order; then the most violated inequality.
        let mut pick = None;
        for (i, row) in rows.iter_mut().enumerate() {
            if row.is_eq() && !eq_done[i] {
                if row.dot(&x) - row.b > 0.0 {
                    row.negate();
                }
                pick = Some(i);
                break;
            }
        }
        if pick.is_none() {
            let mut best = (0.0, None, false);
            for (i, row) in rows.iter().enumerate() {
                if row.is_eq() || is_active[i] || row.norm == 0.0 {
                    continue;
                }
                let s = (row.dot(&x) - row.b) / row.norm;
                if s >= -feas_tol * (1.0 + row.b.abs() / row.norm) {
                    continue;
                }
                let better = match (hinted[i], best.2) {
                    (true, false) => true,
                    (false, true) => false,
                    _ => s < best.0,
                };
                if best.1.is_none() || better {
                    best = (s, Some(i), hinted[i]);
                }
            }
            pick = best.1;
        }
        let Some(pi) = pick else { break };
        if iterations >= settings.max_iter {
            return Ok(finish(p, &h, &rows, &active, &u, x, iterations, QpStatus::MaxIter, dual_trace));
        }

        let mut u_p = 0.0;
        loop {
            iterations += 1;
            if iterations > settings.max_iter {
                return Ok(finish(p, &h, &rows, &active, &u, x, iterations, QpStatus::MaxIter, dual_trace));
            }
            let row = &rows[pi];
            let d = work.project(row);
            let (z, r) = work.step_direction(&d);
            let s_p = row.dot(&x) - row.b;

            let mut t1 = f64::INFINITY;
            let mut k_drop = None;
            for (jj, &ci) in active.iter().enumerate() {
                if !rows[ci].is_eq() && r[jj] > 0.0 {
                    let ratio = u[jj] / r[jj];
                    if ratio < t1 {
                        t1 = ratio;
                        k_drop = Some(jj);
                    }
                }
            }
            let ztn = row.dot(&z);
            let z_small = z.amax() <= 1e-12 * (1.0 + x.amax()) || ztn <= 1e-14 * row.norm * row.norm;
            let t2 = if z_small { f64::INFINITY } else { -s_p / ztn };

            if z_small && t1.is_infinite() {
                if row.is_eq() && s_p.abs() <= settings.tol.max(1e-10) * (1.0 + row.b.abs()) {
                    // Dependent but consistent equality.
                    eq_done[pi] = true;
                    break;
                }
                return Ok(infeasible(p, x, iterations));
            }
            if z_small {
                // Dual-only step, then drop the blocking constraint.
                let k = k_drop.expect("finite t1 has a blocking index");
                for (jj, uj) in u.iter_mut().enumerate() {
                    *uj -= t1 * r[jj];
                }
                u_p += t1;
                drop_active(&mut work, &mut active, &mut u, &mut is_active, k);
                continue;
            }
            let t = t1.min(t2);
            x += &z * t;
            f += t * ztn * (0.5 * t + u_p);
            for (jj, uj) in u.iter_mut().enumerate() {
                *uj -= t * r[jj];
            }
            u_p += t;
            if t2 <= t1 {
                if !work.add(d) {
                    return Ok(infeasible(p, x, iterations));
                }
                active.push(pi);
                u.push(u_p);
                is_active[pi] = true;
                if rows[pi].is_eq() {
                    eq_done[pi] = true;
                }
                dual_trace.push(f);
                break;
            }
            let k = k_drop.expect("partial step has a blocking index");
            drop_active(&mut work, &mut active, &mut u, &mut is_active, k);
            dual_trace.push(f);
        }
    }

    let status = QpStatus::Optimal;
    let mut sol = finish(p, &h, &rows, &active, &u, x, iterations, status, dual_trace);
    if sol.primal_residual >= settings.tol || sol.dual_residual >= settings.tol {
        sol.status = QpStatus::MaxIter;
    }
    Ok(sol)
}

fn drop_active(work: &mut Work, active: &mut Vec<usize>, u: &mut Vec<f64>, is_active: &mut [bool], k: usize) {
    work.drop(k);
    is_active[active[k]] = false;
    active.remove(k);
    u.remove(k);
}

fn infeasible(p: &QProblem, z: DVector<f64>, iterations: usize) -> QSolution {
    let objective = p.objective(&z);
    QSolution {
        primal_residual: primal_residual(p, &z),
        dual_residual: f64::INFINITY,
        lambda_eq: DVector::zeros(p.b_eq.len()),
        mu_in: DVector::zeros(p.lb.len()),
        z,
        status: QpStatus::Infeasible,
        iterations,
        objective,
        dual_trace: Vec::new(),
    }
}

pub fn primal_residual(p: &QProblem, z: &DVector<f64>) -> f64 {
    let eq = (&p.a_eq * z - &p.b_eq).amax();
    let az = &p.a_in * z;
    let ineq = az
        .iter()
        .zip(p.lb.iter().zip(p.ub.iter()))
        .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
        .fold(0.0, f64::max);
    if p.b_eq.is_empty() && p.lb.is_empty() {
        0.0
    } else {
        eq.max(ineq)
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &QProblem,
    h: &DMatrix<f64>,
    rows: &[Row],
    active: &[usize],
    u: &[f64],
    z: DVector<f64>,
    iterations: usize,
    status: QpStatus,
    dual_trace: Vec<f64>,
) -> QSolution {
    let mut lambda_eq = DVector::zeros(p.b_eq.len());
    let mut mu_in = DVector::zeros(p.lb.len());
    for (&ci, &uj) in active.iter().zip(u) {
        let row = &rows[ci];
        match row.origin {
            Origin::Eq(i) if i < p.b_eq.len() => {
                // Row may have been negated; recover the sign from the stored normal.
                let sign = row.idx.first().map(|&j| (row.val[0] / p.a_eq[(i, j)]).signum()).unwrap_or(1.0);
                lambda_eq[i] -= sign * uj;
            }
            Origin::Eq(tag) => {
                let i = usize::MAX - tag;
                let sign = row.idx.first().map(|&j| (row.val[0] / p.a_in[(i, j)]).signum()).unwrap_or(1.0);
                mu_in[i] -= sign * uj;
            }
            Origin::Lower(i) => mu_in[i] -= uj,
            Origin::Upper(i) => mu_in[i] += uj,
        }
    }
    let stationarity = h * &z + &p.g + p.a_eq.transpose() * &lambda_eq + p.a_in.transpose() * &mu_in;
    QSolution {
        primal_residual: primal_residual(p, &z),
        dual_residual: stationarity.amax(),
        objective: 0.5 * z.dot(&(h * &z)) + p.g.dot(&z),
        z,
        status,
        iterations,
        lambda_eq,
        mu_in,
        dual_trace,
    }
}
