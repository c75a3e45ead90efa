//! Nonnegative least squares for the activation matrix.
//!
//! Given sources `W` (m x r) and data `M` (m x n), both quaternion, find a
//! real `H >= 0` minimizing `||M - W H||_F^2 = sum_l ||S_l(M) - S_l(W) H||_F^2`.
//! Everything reduces to the two real matrices
//!
//! ```text
//! A = sum_l S_l(W)^T S_l(W)    (r x r)
//! B = sum_l S_l(W)^T S_l(M)    (r x n)
//! ```
//!
//! which are the normal-equation blocks of the stacked real problem
//! `mat(M) ~ mat(W) H`.
//!
//! [`qnls`] solves `A H = B` and clamps to zero. Cost is roughly
//! `(8r^2 m + r^3) + (8rmn + 2r^2 n) + nr` flops.
//!
//! [`qhnls`] runs exact block-coordinate descent over the rows of `H`, each
//! row update being the closed-form minimizer over `[xi, inf)^n`. Cost is
//! roughly `(8r^2 m + rmn) + (2nr^2 + nr) k` flops for `k` sweeps.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqmfError};
use crate::quat::QuaternionMatrix;

/// Systems whose squared Cholesky pivot ratio (a lower bound on the condition
/// number) reaches `1 / eps` are treated as singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1.0 / f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnlsOptions {
    /// Lower bound used by the hierarchical solver's projection.
    pub xi: f64,
    pub max_iter: usize,
    /// Stop once the relative change `delta` drops below this.
    pub eps0: f64,
    pub record_trace: bool,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        NnlsOptions {
            xi: 1e-12,
            max_iter: 1000,
            eps0: 1e-4,
            record_trace: true,
        }
    }
}

impl NnlsOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0) {
            return Err(SqmfError::Domain(format!("xi must be positive, got {}", self.xi)));
        }
        if self.max_iter == 0 {
            return Err(SqmfError::Domain("max_iter must be at least 1".into()));
        }
        if !(self.eps0 > 0.0) {
            return Err(SqmfError::Domain(format!("eps0 must be positive, got {}", self.eps0)));
        }
        Ok(())
    }
}

/// Per-sweep history of an iterative solver. `objective[0]` is the value at
/// the starting point, `objective[k]` the value after sweep `k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub objective: Vec<f64>,
    /// `||H(k) - H(k-1)||_F / ||H(1) - H(0)||_F` after each sweep.
    pub delta: Vec<f64>,
    pub sweeps: usize,
}

impl ConvergenceTrace {
    /// Every step is at most `rel_slack * objective[0]` above its predecessor.
    pub fn is_nonincreasing(&self, rel_slack: f64) -> bool {
        let Some(&first) = self.objective.first() else {
            return true;
        };
        let slack = rel_slack * first.abs();
        self.objective.windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

fn check_shapes(m: &QuaternionMatrix, w: &QuaternionMatrix, h: Option<&DMatrix<f64>>) -> Result<()> {
    if m.rows() != w.rows() {
        return Err(SqmfError::dim("source rows", m.rows(), w.rows()));
    }
    if let Some(h) = h {
        if h.shape() != (w.cols(), m.cols()) {
            return Err(SqmfError::dim(
                "activation shape",
                format!("{}x{}", w.cols(), m.cols()),
                format!("{}x{}", h.nrows(), h.ncols()),
            ));
        }
    }
    Ok(())
}

/// `||M - W H||_F^2`, evaluated plane by plane.
pub fn objective(m: &QuaternionMatrix, w: &QuaternionMatrix, h: &DMatrix<f64>) -> Result<f64> {
    check_shapes(m, w, Some(h))?;
    Ok(m
        .planes()
        .iter()
        .zip(w.planes())
        .map(|(mp, wp)| (mp - wp * h).norm_squared())
        .sum())
}

/// `F(h_j) = sum_l ||S_l(m_j) - S_l(W) h_j||^2` for one column.
pub fn column_objective(m: &QuaternionMatrix, w: &QuaternionMatrix, h_j: &DVector<f64>, j: usize) -> f64 {
    m.planes()
        .iter()
        .zip(w.planes())
        .map(|(mp, wp)| (mp.column(j) - wp * h_j).norm_squared())
        .sum()
}

/// Cholesky factor of a symmetric positive definite matrix, rejecting
/// numerically singular ones.
pub(crate) fn spd_factor(a: &DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or(SqmfError::Singular { context, ratio: f64::INFINITY })?;
    let diag = chol.l_dirty().diagonal();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = if min > 0.0 { (max / min).powi(2) } else { f64::INFINITY };
    if !(ratio <= SINGULAR_PIVOT_RATIO) {
        return Err(SqmfError::Singular { context, ratio });
    }
    Ok(chol)
}

/// Unconstrained quaternion least squares `A^{-1} B`.
pub fn qnls_unprojected(m: &QuaternionMatrix, w: &QuaternionMatrix) -> Result<DMatrix<f64>> {
    check_shapes(m, w, None)?;
    let chol = spd_factor(&w.gram(), "quaternion least squares")?;
    Ok(chol.solve(&w.cross_gram(m)?))
}

/// Projected quaternion least squares: the unconstrained solution clamped at zero.
pub fn qnls(m: &QuaternionMatrix, w: &QuaternionMatrix) -> Result<DMatrix<f64>> {
    let mut h = qnls_unprojected(m, w)?;
    h.apply(|v| *v = v.max(0.0));
    Ok(h)
}

/// Hierarchical (row-wise block-coordinate) nonnegative least squares with
/// every entry floored at `opts.xi`.
pub fn qhnls(
    m: &QuaternionMatrix,
    w: &QuaternionMatrix,
    h0: &DMatrix<f64>,
    opts: &NnlsOptions,
) -> Result<(DMatrix<f64>, ConvergenceTrace)> {
    opts.validate()?;
    check_shapes(m, w, Some(h0))?;
    let a = w.gram();
    let b = w.cross_gram(m)?;
    check_sources(&a)?;

    let mut h = h0.clone();
    let mut trace = ConvergenceTrace::default();
    if opts.record_trace {
        trace.objective.push(objective(m, w, &h)?);
    }
    let mut first_change = None;
    for _ in 0..opts.max_iter {
        let prev = h.clone();
        hals_sweep(&a, &b, &mut h, opts.xi);
        trace.sweeps += 1;
        let change = (&h - &prev).norm();
        let denom = *first_change.get_or_insert(change);
        let delta = if denom > 0.0 { change / denom } else { 0.0 };
        trace.delta.push(delta);
        if opts.record_trace {
            trace.objective.push(objective(m, w, &h)?);
        }
        if delta < opts.eps0 {
            break;
        }
    }
    Ok((h, trace))
}

/// Sources whose squared norm is at most this fraction of the largest count as zero.
const ZERO_SOURCE_RATIO: f64 = 1e-14;

pub(crate) fn check_sources(a: &DMatrix<f64>) -> Result<()> {
    let max_diag = a.diagonal().iter().cloned().fold(0.0, f64::max);
    for p in 0..a.nrows() {
        let app = a[(p, p)];
        if !(app > ZERO_SOURCE_RATIO * max_diag) || app <= 0.0 {
            return Err(SqmfError::ZeroSource { index: p });
        }
    }
    Ok(())
}

/// One Gauss-Seidel pass over the rows of `h`:
/// `H[p,:] <- max(xi, (B[p,:] - sum_{i != p} a_pi H[i,:]) / a_pp)`.
/// Rows whose source vanishes do not affect the objective and are left as is.
pub(crate) fn hals_sweep(a: &DMatrix<f64>, b: &DMatrix<f64>, h: &mut DMatrix<f64>, xi: f64) {
    let r = a.nrows();
    let floor = ZERO_SOURCE_RATIO * a.diagonal().iter().cloned().fold(0.0, f64::max);
    for p in 0..r {
        let app = a[(p, p)];
        if !(app > floor) {
            continue;
        }
        let coupled = a.row(p) * &*h;
        let mut row = b.row(p) - coupled + h.row(p) * app;
        row.unscale_mut(app);
        row.apply(|v| *v = v.max(xi));
        h.set_row(p, &row);
    }
}

/// `dF/dh_pj = -2 sum_l S_l(w_p)^T (S_l(m_j) - S_l(W) h_j)`.
pub fn partial_derivative(m: &QuaternionMatrix, w: &QuaternionMatrix, h: &DMatrix<f64>, p: usize, j: usize) -> Result<f64> {
    check_shapes(m, w, Some(h))?;
    let h_j = h.column(j).into_owned();
    let mut acc = 0.0;
    for (mp, wp) in m.planes().iter().zip(w.planes()) {
        let resid = mp.column(j) - wp * &h_j;
        acc += wp.column(p).dot(&resid);
    }
    Ok(-2.0 * acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientProbe {
    pub analytic: f64,
    pub numeric: f64,
}

impl GradientProbe {
    pub fn relative_error(&self) -> f64 {
        let denom = self.analytic.abs().max(self.numeric.abs());
        if denom == 0.0 {
            0.0
        } else {
            (self.analytic - self.numeric).abs() / denom
        }
    }
}

/// Compares [`partial_derivative`] with a central difference of the column
/// objective (the only part of the objective that depends on `h_pj`), step
/// `1e-6 (1 + |h_pj|)`.
pub fn gradient_check(m: &QuaternionMatrix, w: &QuaternionMatrix, h: &DMatrix<f64>, p: usize, j: usize) -> Result<GradientProbe> {
    let analytic = partial_derivative(m, w, h, p, j)?;
    let base = h.column(j).into_owned();
    let step = 1e-6 * (1.0 + base[p].abs());
    let mut plus = base.clone();
    plus[p] += step;
    let mut minus = base;
    minus[p] -= step;
    let numeric = (column_objective(m, w, &plus, j) - column_objective(m, w, &minus, j)) / (2.0 * step);
    Ok(GradientProbe { analytic, numeric })
}

/// First-order optimality measure for `min ||M - WH||^2` over `H >= xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Largest `|grad|` over entries strictly above the floor.
    pub free_violation: f64,
    /// Largest `-grad` over entries at the floor (positive means violated).
    pub bound_violation: f64,
    /// Magnitude of the terms making up the gradient.
    pub scale: f64,
}

impl KktReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.free_violation < tol * self.scale && self.bound_violation <= tol * self.scale
    }
}

pub fn kkt_report(m: &QuaternionMatrix, w: &QuaternionMatrix, h: &DMatrix<f64>, xi: f64) -> Result<KktReport> {
    check_shapes(m, w, Some(h))?;
    let a = w.gram();
    let b = w.cross_gram(m)?;
    let grad = (&a * h - &b) * 2.0;
    let magnitude = a.abs() * h.abs() + b.abs();
    let scale = 2.0 * magnitude.max();
    let mut free_violation: f64 = 0.0;
    let mut bound_violation = f64::NEG_INFINITY;
    for (g, &v) in grad.iter().zip(h.iter()) {
        if v > xi {
            free_violation = free_violation.max(g.abs());
        } else {
            bound_violation = bound_violation.max(-g);
        }
    }
    Ok(KktReport {
        free_violation,
        bound_violation,
        scale,
    })
}
