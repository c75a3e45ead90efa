//! Factorization pipelines.
//!
//! * [`sqmf`]: select `K` with [`qspa`](crate::qspa::qspa), set `W = M(:, K)`,
//!   initialize `H` with [`qnls`] and refine with [`qhnls`].
//! * [`spa_star`]: the same, but `K` comes from successive projection on the
//!   intensity plane only.
//! * [`qnmf`]: alternating least squares with unconstrained quaternion `W`.
//!   The `H`-step is [`qnls`]; the `W`-step solves each plane's least squares
//!   problem `S_l(W) = S_l(M) H^T (H H^T)^{-1}` and projects the result into
//!   the Stokes set with [`project_hs`].
//! * [`imqnmf`]: as `qnmf` with the `H`-step replaced by warm-started
//!   hierarchical sweeps.
//!
//! The alternating methods run several random restarts and keep the one with
//! the smallest objective. A restart fails when one of its linear systems is
//! numerically singular.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqmfError};
use crate::nnls::{self, hals_sweep, qhnls, qnls, ConvergenceTrace, NnlsOptions};
use crate::qspa::{qspa_with, spa_real_with, SelectionOptions, SelectionResult};
use crate::quat::QuaternionMatrix;
use crate::stokes::settle_on_cone;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Sqmf,
    SpaStar,
    Qnmf,
    Imqnmf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Sqmf, Method::SpaStar, Method::Qnmf, Method::Imqnmf];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sqmf => "sqmf",
            Method::SpaStar => "spa-star",
            Method::Qnmf => "qnmf",
            Method::Imqnmf => "imqnmf",
        }
    }

    /// Whether `W` is a column subset of the input.
    pub fn is_selection(self) -> bool {
        matches!(self, Method::Sqmf | Method::SpaStar)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = SqmfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sqmf" | "qspa" => Ok(Method::Sqmf),
            "spa-star" | "spa_star" | "spastar" | "spa*" => Ok(Method::SpaStar),
            "qnmf" | "qals" => Ok(Method::Qnmf),
            "imqnmf" => Ok(Method::Imqnmf),
            other => Err(SqmfError::Parse(format!("unknown method '{other}'"))),
        }
    }
}

/// Objective values around one outer iteration of an alternating method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSteps {
    pub after_h: f64,
    /// After the unconstrained `W` solve, before projection.
    pub after_w_solve: f64,
    pub after_w_projection: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub method: Method,
    pub w: QuaternionMatrix,
    pub h: DMatrix<f64>,
    /// For alternating methods, one entry per outer iteration of the best restart.
    pub trace: ConvergenceTrace,
    pub selection: Option<SelectionResult>,
    pub half_steps: Vec<HalfSteps>,
    pub restarts: usize,
    pub failures: usize,
}

impl Factorization {
    pub fn objective(&self, m: &QuaternionMatrix) -> Result<f64> {
        nnls::objective(m, &self.w, &self.h)
    }

    pub fn reconstruction(&self) -> QuaternionMatrix {
        self.w.mul_real(&self.h).expect("factor shapes agree")
    }
}

/// Starting point for an alternating run. With only `h`, the first `W` is
/// obtained from a `W`-step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Init {
    pub w: Option<QuaternionMatrix>,
    pub h: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QnmfOptions {
    pub rank: usize,
    pub restarts: usize,
    pub nnls: NnlsOptions,
    pub seed: u64,
    /// Hierarchical sweeps per `H`-step in [`imqnmf`].
    pub hals_sweeps: usize,
    /// Replaces random initialization; every restart then starts here.
    pub init: Option<Init>,
}

impl QnmfOptions {
    pub fn new(rank: usize) -> Self {
        QnmfOptions {
            rank,
            restarts: 10,
            nnls: NnlsOptions::default(),
            seed: 0,
            hals_sweeps: 1,
            init: None,
        }
    }

    pub fn validate(&self, m: &QuaternionMatrix) -> Result<()> {
        self.nnls.validate()?;
        if self.restarts == 0 {
            return Err(SqmfError::Domain("restarts must be at least 1".into()));
        }
        if self.hals_sweeps == 0 {
            return Err(SqmfError::Domain("hals_sweeps must be at least 1".into()));
        }
        let (rows, cols) = m.shape();
        if self.rank == 0 || self.rank > rows.min(cols) {
            return Err(SqmfError::Domain(format!(
                "rank {} must lie in 1..={} for a {rows}x{cols} matrix",
                self.rank,
                rows.min(cols)
            )));
        }
        Ok(())
    }
}

pub fn sqmf(m: &QuaternionMatrix, r: usize, opts: &NnlsOptions) -> Result<Factorization> {
    sqmf_with(m, r, opts, &SelectionOptions::default())
}

pub fn sqmf_with(m: &QuaternionMatrix, r: usize, opts: &NnlsOptions, sel: &SelectionOptions) -> Result<Factorization> {
    opts.validate()?;
    let selection = qspa_with(m, r, sel)?;
    fit_selected(m, selection, Method::Sqmf, opts)
}

pub fn spa_star(m: &QuaternionMatrix, r: usize, opts: &NnlsOptions) -> Result<Factorization> {
    spa_star_with(m, r, opts, &SelectionOptions::default())
}

pub fn spa_star_with(m: &QuaternionMatrix, r: usize, opts: &NnlsOptions, sel: &SelectionOptions) -> Result<Factorization> {
    opts.validate()?;
    let selection = spa_real_with(m.component(0), r, sel)?;
    fit_selected(m, selection, Method::SpaStar, opts)
}

fn fit_selected(m: &QuaternionMatrix, selection: SelectionResult, method: Method, opts: &NnlsOptions) -> Result<Factorization> {
    let w = m.select_columns(&selection.indices);
    let r = w.cols();
    let h0 = match qnls(m, &w) {
        Ok(h) => h,
        Err(SqmfError::Singular { .. }) => DMatrix::from_element(r, m.cols(), 1.0 / r as f64),
        Err(e) => return Err(e),
    };
    let (h, trace) = qhnls(m, &w, &h0, opts)?;
    Ok(Factorization {
        method,
        w,
        h,
        trace,
        selection: Some(selection),
        half_steps: Vec::new(),
        restarts: 1,
        failures: 0,
    })
}

pub fn qnmf(m: &QuaternionMatrix, opts: &QnmfOptions) -> Result<Factorization> {
    alternating(m, opts, Method::Qnmf)
}

pub fn imqnmf(m: &QuaternionMatrix, opts: &QnmfOptions) -> Result<Factorization> {
    alternating(m, opts, Method::Imqnmf)
}

/// Runs `method` with defaults appropriate to its family.
pub fn run(m: &QuaternionMatrix, method: Method, opts: &QnmfOptions) -> Result<Factorization> {
    match method {
        Method::Sqmf => sqmf(m, opts.rank, &opts.nnls),
        Method::SpaStar => spa_star(m, opts.rank, &opts.nnls),
        Method::Qnmf => qnmf(m, opts),
        Method::Imqnmf => imqnmf(m, opts),
    }
}

struct Run {
    w: QuaternionMatrix,
    h: DMatrix<f64>,
    objective: f64,
    trace: ConvergenceTrace,
    half_steps: Vec<HalfSteps>,
}

fn alternating(m: &QuaternionMatrix, opts: &QnmfOptions, method: Method) -> Result<Factorization> {
    opts.validate(m)?;
    let mut best: Option<Run> = None;
    let mut failures = 0;
    for restart in 0..opts.restarts {
        let (w0, h0) = match &opts.init {
            Some(init) => explicit_init(m, opts.rank, init)?,
            None => random_init(m, opts.rank, opts.seed, restart as u64),
        };
        match alternate_once(m, w0, h0, opts, method) {
            Ok(run) => {
                if best.as_ref().is_none_or(|b| run.objective < b.objective) {
                    best = Some(run);
                }
            }
            Err(e) if e.is_numeric() => failures += 1,
            Err(e) => return Err(e),
        }
    }
    let best = best.ok_or(SqmfError::ConvergenceFailure {
        restarts: opts.restarts,
        failures,
    })?;
    Ok(Factorization {
        method,
        w: best.w,
        h: best.h,
        trace: best.trace,
        selection: None,
        half_steps: best.half_steps,
        restarts: opts.restarts,
        failures,
    })
}

/// `H` uniform on `(0, 1]` and `W` from `r` distinct random columns of `M`
/// projected into the Stokes set. Restart `k` uses stream `k` of the seed.
fn random_init(m: &QuaternionMatrix, r: usize, seed: u64, restart: u64) -> (QuaternionMatrix, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart);
    let cols = rand::seq::index::sample(&mut rng, m.cols(), r).into_vec();
    let w = project_hs(&m.select_columns(&cols));
    let h = DMatrix::from_fn(r, m.cols(), |_, _| 1.0 - rng.random::<f64>());
    (w, h)
}

fn explicit_init(m: &QuaternionMatrix, r: usize, init: &Init) -> Result<(QuaternionMatrix, DMatrix<f64>)> {
    let h = match &init.h {
        Some(h) if h.shape() != (r, m.cols()) => {
            return Err(SqmfError::dim("initial activations", format!("{r}x{}", m.cols()), format!("{}x{}", h.nrows(), h.ncols())))
        }
        Some(h) => h.clone(),
        None => DMatrix::from_element(r, m.cols(), 1.0 / r as f64),
    };
    let w = match &init.w {
        Some(w) if w.shape() != (m.rows(), r) => {
            return Err(SqmfError::dim("initial sources", format!("{}x{r}", m.rows()), format!("{}x{}", w.rows(), w.cols())))
        }
        Some(w) => w.clone(),
        None => project_hs(&w_solve(m, &h)?),
    };
    Ok((w, h))
}

/// Planewise least squares `S_l(W) = S_l(M) H^T (H H^T)^+`, the minimum-norm
/// solution computed from an SVD of `H^T`. Singular values at or below
/// `max(r, n) eps sigma_max` are dropped, so rows of `H` that vanish or
/// coincide yield zero or shared source columns instead of overflow.
fn w_solve(m: &QuaternionMatrix, h: &DMatrix<f64>) -> Result<QuaternionMatrix> {
    let svd = h.transpose().svd(true, true);
    let sv = &svd.singular_values;
    let max = sv.max();
    if !max.is_finite() || max == 0.0 {
        return Err(SqmfError::Singular {
            context: "source update",
            ratio: f64::INFINITY,
        });
    }
    let tol = h.nrows().max(h.ncols()) as f64 * f64::EPSILON * max;
    let u = svd.u.as_ref().expect("requested");
    let v_t = svd.v_t.as_ref().expect("requested");
    let mut scaled = u.clone();
    for (k, s) in sv.iter().enumerate() {
        if *s > tol {
            scaled.column_mut(k).unscale_mut(*s);
        } else {
            scaled.column_mut(k).fill(0.0);
        }
    }
    let pinv_t = scaled * v_t;
    let planes = m.planes().clone().map(|p| p * &pinv_t);
    QuaternionMatrix::from_planes(planes)
}

fn h_step(m: &QuaternionMatrix, w: &QuaternionMatrix, h: &mut DMatrix<f64>, opts: &QnmfOptions, method: Method) -> Result<()> {
    match method {
        Method::Qnmf => *h = qnls(m, w)?,
        _ => {
            let a = w.gram();
            let b = w.cross_gram(m)?;
            for _ in 0..opts.hals_sweeps {
                hals_sweep(&a, &b, h, opts.nnls.xi);
            }
        }
    }
    Ok(())
}

fn alternate_once(m: &QuaternionMatrix, mut w: QuaternionMatrix, mut h: DMatrix<f64>, opts: &QnmfOptions, method: Method) -> Result<Run> {
    let mut trace = ConvergenceTrace::default();
    let mut half_steps = Vec::new();
    let record = opts.nnls.record_trace;
    if record {
        trace.objective.push(nnls::objective(m, &w, &h)?);
    }
    let mut first_change = None;
    for _ in 0..opts.nnls.max_iter {
        let prev = h.clone();
        h_step(m, &w, &mut h, opts, method)?;
        let after_h = if record { nnls::objective(m, &w, &h)? } else { f64::NAN };
        let solved = w_solve(m, &h)?;
        let after_w_solve = if record { nnls::objective(m, &solved, &h)? } else { f64::NAN };
        w = project_hs(&solved);
        let after_w_projection = nnls::objective(m, &w, &h)?;
        if record {
            half_steps.push(HalfSteps {
                after_h,
                after_w_solve,
                after_w_projection,
            });
            trace.objective.push(after_w_projection);
        }
        trace.sweeps += 1;
        let change = (&h - &prev).norm();
        let denom = *first_change.get_or_insert(change);
        let delta = if denom > 0.0 { change / denom } else { 0.0 };
        trace.delta.push(delta);
        if delta < opts.nnls.eps0 {
            break;
        }
    }
    let objective = nnls::objective(m, &w, &h)?;
    if !objective.is_finite() {
        return Err(SqmfError::Singular {
            context: "alternating least squares",
            ratio: f64::INFINITY,
        });
    }
    Ok(Run {
        w,
        h,
        objective,
        trace,
        half_steps,
    })
}

/// Entrywise map into the Stokes set: clamp `S0` at zero, then shrink the
/// polarized part `(S1, S2, S3)` onto the boundary when it exceeds `S0`.
pub fn project_hs(w: &QuaternionMatrix) -> QuaternionMatrix {
    let [mut s0, mut s1, mut s2, mut s3] = w.clone().into_planes();
    for k in 0..s0.len() {
        let q0 = s0[k].max(0.0);
        s0[k] = q0;
        let imag = (s1[k] * s1[k] + s2[k] * s2[k] + s3[k] * s3[k]).sqrt();
        if imag > q0 {
            let f = if imag > 0.0 { q0 / imag } else { 0.0 };
            s1[k] *= f;
            s2[k] *= f;
            s3[k] *= f;
            settle_on_cone(q0, [&mut s1[k], &mut s2[k], &mut s3[k]]);
        }
    }
    QuaternionMatrix::new(s0, s1, s2, s3).expect("shapes preserved")
}
