//! Seeded synthetic spectro-polarimetric data with ground truth.
//!
//! All randomness comes from [`ChaCha8Rng`] seeded with `seed`, one stream per
//! purpose (intensities, angles, activations, permutation, noise), so a
//! config always reproduces the same bundle on every platform.
//!
//! The clean data is `M* = W* H*` with every `W*` entry a fully or partially
//! polarized Stokes vector, and the observation is `M = M* + N` with `N`
//! Gaussian, rescaled so `||N||_F = eps ||M*||_F`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Result, SqmfError};
use crate::quat::QuaternionMatrix;
use crate::stokes::settle_on_cone;

const STREAM_INTENSITY: u64 = 0;
const STREAM_ANGLES: u64 = 1;
const STREAM_ACTIVATIONS: u64 = 2;
const STREAM_PERMUTATION: u64 = 3;
const STREAM_NOISE: u64 = 4;

/// Angle draws per source before giving up on a full-rank source matrix.
const ANGLE_ATTEMPTS: usize = 10;
/// Smallest accepted `sigma_min / sigma_max` of the stacked source matrix.
const RANK_RATIO: f64 = 1e-8;

const ONE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub phi: f64,
    pub eps: f64,
    pub seed: u64,
    /// Per-source angles; drawn uniformly on `(-pi, pi)` when absent.
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    /// Scale each mixed activation column to an l1 sum of at most one.
    pub mixed_l1_le_one: bool,
}

impl SynthConfig {
    pub fn new(m: usize, n: usize, r: usize) -> Self {
        SynthConfig {
            m,
            n,
            r,
            phi: 1.0,
            eps: 0.0,
            seed: 0,
            alpha: None,
            beta: None,
            mixed_l1_le_one: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.phi) {
            return Err(SqmfError::Domain(format!("phi must lie in [0, 1], got {}", self.phi)));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(SqmfError::Domain(format!("eps must be a finite nonnegative number, got {}", self.eps)));
        }
        if self.r == 0 || self.r > self.m.min(self.n) {
            return Err(SqmfError::Domain(format!(
                "r = {} must lie in 1..={} for m = {}, n = {}",
                self.r,
                self.m.min(self.n),
                self.m,
                self.n
            )));
        }
        for (name, v) in [("alpha", &self.alpha), ("beta", &self.beta)] {
            if let Some(v) = v {
                if v.len() != self.r {
                    return Err(SqmfError::dim(name, self.r, v.len()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBundle {
    pub m: QuaternionMatrix,
    pub mstar: QuaternionMatrix,
    pub wstar: QuaternionMatrix,
    pub hstar: DMatrix<f64>,
    /// `kstar[i]` is a column of `M` where source `i` appears unmixed.
    pub kstar: Vec<usize>,
    pub config: SynthConfig,
}

impl SynthBundle {
    /// `||M - M*||_F / ||M*||_F`.
    pub fn measured_eps(&self) -> f64 {
        let clean = self.mstar.frobenius_norm();
        if clean == 0.0 {
            return 0.0;
        }
        self.m.sub(&self.mstar).expect("same shape").frobenius_norm() / clean
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_angle(rng: &mut ChaCha8Rng) -> f64 {
    (2.0 * rng.random::<f64>() - 1.0) * PI
}

/// Source column `i` gets `S1 = phi S0 cos a_i cos b_i`, `S2 = phi S0 sin a_i cos b_i`,
/// `S3 = phi S0 sin b_i`.
pub fn gen_polarized_sources(s0: &DMatrix<f64>, phi: f64, alpha: &[f64], beta: &[f64]) -> Result<QuaternionMatrix> {
    let r = s0.ncols();
    if alpha.len() != r {
        return Err(SqmfError::dim("alpha", r, alpha.len()));
    }
    if beta.len() != r {
        return Err(SqmfError::dim("beta", r, beta.len()));
    }
    if let Some(v) = s0.iter().find(|v| !(**v >= 0.0)) {
        return Err(SqmfError::Domain(format!("source intensities must be nonnegative, found {v}")));
    }
    let mut s1 = s0.clone();
    let mut s2 = s0.clone();
    let mut s3 = s0.clone();
    for i in 0..r {
        let (sa, ca) = alpha[i].sin_cos();
        let (sb, cb) = beta[i].sin_cos();
        s1.column_mut(i).scale_mut(phi * ca * cb);
        s2.column_mut(i).scale_mut(phi * sa * cb);
        s3.column_mut(i).scale_mut(phi * sb);
        for k in 0..s0.nrows() {
            settle_on_cone(s0[(k, i)], [&mut s1[(k, i)], &mut s2[(k, i)], &mut s3[(k, i)]]);
        }
    }
    QuaternionMatrix::new(s0.clone(), s1, s2, s3)
}

/// `M* + N` with standard normal `N` rescaled to `||N||_F = eps ||M*||_F`.
pub fn add_noise(mstar: &QuaternionMatrix, eps: f64, seed: u64) -> QuaternionMatrix {
    if eps == 0.0 {
        return mstar.clone();
    }
    let mut rng = rng_for(seed, STREAM_NOISE);
    let (m, n) = mstar.shape();
    let noise: [DMatrix<f64>; 4] = std::array::from_fn(|_| DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal)));
    let norm = noise.iter().map(|p| p.norm_squared()).sum::<f64>().sqrt();
    let scale = if norm > 0.0 { eps * mstar.frobenius_norm() / norm } else { 0.0 };
    let planes = std::array::from_fn(|l| &mstar.planes()[l] + &noise[l] * scale);
    QuaternionMatrix::from_planes(planes).expect("same shape")
}

/// Draws angles until the stacked sources have full column rank.
fn polarize_full_rank(s0: &DMatrix<f64>, cfg: &SynthConfig) -> Result<QuaternionMatrix> {
    let r = s0.ncols();
    let mut rng = rng_for(cfg.seed, STREAM_ANGLES);
    let fixed = cfg.alpha.is_some() && cfg.beta.is_some();
    let attempts = if fixed { 1 } else { ANGLE_ATTEMPTS };
    let mut last_ratio = 0.0;
    for _ in 0..attempts {
        let alpha = cfg.alpha.clone().unwrap_or_else(|| (0..r).map(|_| draw_angle(&mut rng)).collect());
        let beta = cfg.beta.clone().unwrap_or_else(|| (0..r).map(|_| draw_angle(&mut rng)).collect());
        let w = gen_polarized_sources(s0, cfg.phi, &alpha, &beta)?;
        last_ratio = rank_ratio(&w.mat_stack());
        if last_ratio > RANK_RATIO {
            return Ok(w);
        }
    }
    Err(SqmfError::Generation(format!(
        "stacked sources stayed rank deficient after {attempts} angle draws (sigma ratio {last_ratio:.3e})"
    )))
}

fn rank_ratio(x: &DMatrix<f64>) -> f64 {
    let sv = x.singular_values();
    let max = sv.max();
    if max > 0.0 {
        sv.min() / max
    } else {
        0.0
    }
}

/// `r` weights in `(0, 1]`, summing to a value in `(0, 1]` when `l1_le_one`.
fn mixed_weights(rng: &mut ChaCha8Rng, r: usize, l1_le_one: bool) -> Vec<f64> {
    let mut u: Vec<f64> = (0..r).map(|_| 1.0 - rng.random::<f64>()).collect();
    if l1_le_one {
        let total: f64 = u.iter().sum();
        let target = 1.0 - rng.random::<f64>();
        u.iter_mut().for_each(|v| *v *= target / total);
    }
    u
}

/// Separable data: intensities uniform on `(0.1, 1]`, `H* = [I_r, U] P` for a
/// seeded column permutation `P`, then noise.
pub fn gen_separable(cfg: &SynthConfig) -> Result<SynthBundle> {
    cfg.validate()?;
    let (m, n, r) = (cfg.m, cfg.n, cfg.r);
    let mut rng = rng_for(cfg.seed, STREAM_INTENSITY);
    let s0 = DMatrix::from_fn(m, r, |_, _| 1.0 - 0.9 * rng.random::<f64>());
    let wstar = polarize_full_rank(&s0, cfg)?;

    let mut rng = rng_for(cfg.seed, STREAM_ACTIVATIONS);
    let mut unpermuted = DMatrix::zeros(r, n);
    for i in 0..r {
        unpermuted[(i, i)] = 1.0;
    }
    for j in r..n {
        let w = mixed_weights(&mut rng, r, cfg.mixed_l1_le_one);
        for i in 0..r {
            unpermuted[(i, j)] = w[i];
        }
    }
    let (hstar, position) = permute_columns(&unpermuted, cfg.seed);
    let kstar = position[..r].to_vec();
    finish(cfg.clone(), wstar, hstar, kstar)
}

/// Returns `H P` and, for each original column, its new position.
fn permute_columns(h: &DMatrix<f64>, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let n = h.ncols();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, STREAM_PERMUTATION));
    let permuted = h.select_columns(&order);
    let mut position = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        position[old] = new;
    }
    (permuted, position)
}

fn finish(config: SynthConfig, wstar: QuaternionMatrix, hstar: DMatrix<f64>, kstar: Vec<usize>) -> Result<SynthBundle> {
    let mstar = wstar.mul_real(&hstar)?;
    let m = add_noise(&mstar, config.eps, config.seed);
    Ok(SynthBundle {
        m,
        mstar,
        wstar,
        hstar,
        kstar,
        config,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Take {
    First,
    Last,
}

/// Moves part of a parent activation row into a new row: the first or last
/// `ones` positions where the parent equals one, and the first or last
/// `fractional` positions where it lies strictly between zero and one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRule {
    pub parent: usize,
    pub take: Take,
    pub ones: usize,
    pub fractional: usize,
}

impl SplitRule {
    pub fn new(parent: usize, take: Take, ones: usize, fractional: usize) -> Self {
        SplitRule { parent, take, ones, fractional }
    }
}

/// Rules are applied in order, each appending one row, and each sees the
/// parent as left by the previous rules; siblings therefore have disjoint
/// supports and every group of siblings sums to its original parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitScheme {
    pub rules: Vec<SplitRule>,
}

impl SplitScheme {
    /// The ten-source split of a six-row abundance matrix: rows 7 and 8 from
    /// row 1, row 9 from row 3, row 10 from row 4 (one-based).
    pub fn urban() -> Self {
        SplitScheme {
            rules: vec![
                SplitRule::new(0, Take::Last, 500, 1000),
                SplitRule::new(0, Take::First, 500, 1000),
                SplitRule::new(2, Take::Last, 1000, 1000),
                SplitRule::new(3, Take::Last, 300, 1000),
            ],
        }
    }

    /// Same parents and directions as [`SplitScheme::urban`] with custom counts.
    pub fn urban_with_counts(ones: [usize; 4], fractional: [usize; 4]) -> Self {
        let mut s = SplitScheme::urban();
        for (k, rule) in s.rules.iter_mut().enumerate() {
            rule.ones = ones[k];
            rule.fractional = fractional[k];
        }
        s
    }

    pub fn parents(&self) -> Vec<usize> {
        self.rules.iter().map(|r| r.parent).collect()
    }
}

fn is_one(v: f64) -> bool {
    (v - 1.0).abs() <= ONE_TOL
}

fn is_fractional(v: f64) -> bool {
    v > 0.0 && v < 1.0 && !is_one(v)
}

pub fn split_sources(h0: &DMatrix<f64>, scheme: &SplitScheme) -> Result<DMatrix<f64>> {
    let (r0, n) = h0.shape();
    let mut rows: Vec<Vec<f64>> = (0..r0).map(|i| h0.row(i).iter().copied().collect()).collect();
    for rule in &scheme.rules {
        let p = rule.parent;
        if p >= r0 {
            return Err(SqmfError::Scheme {
                row: p,
                reason: format!("parent row out of range for {r0} rows"),
            });
        }
        if rule.ones == 0 && rule.fractional == 0 {
            return Err(SqmfError::Scheme {
                row: p,
                reason: "rule would append an all-zero row".into(),
            });
        }
        let pick = |pred: fn(f64) -> bool, count: usize, what: &str| -> Result<Vec<usize>> {
            let mut hits: Vec<usize> = (0..n).filter(|&j| pred(rows[p][j])).collect();
            if hits.len() < count {
                return Err(SqmfError::Scheme {
                    row: p,
                    reason: format!("needs {count} {what} positions, has {}", hits.len()),
                });
            }
            match rule.take {
                Take::First => hits.truncate(count),
                Take::Last => {
                    hits.drain(..hits.len() - count);
                }
            }
            Ok(hits)
        };
        let mut moved = pick(is_one, rule.ones, "unit")?;
        moved.extend(pick(is_fractional, rule.fractional, "fractional")?);
        let mut child = vec![0.0; n];
        for j in moved {
            child[j] = rows[p][j];
            rows[p][j] = 0.0;
        }
        rows.push(child);
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

/// An `r0 x n` abundance matrix whose row `i` has exactly `pure[i]` unit
/// columns; every other column has all `r0` entries in `(0, 1)`.
pub fn gen_abundance(pure: &[usize], n: usize, mixed_l1_le_one: bool, seed: u64) -> Result<DMatrix<f64>> {
    let r0 = pure.len();
    let npure: usize = pure.iter().sum();
    if r0 == 0 || npure > n {
        return Err(SqmfError::Domain(format!("{npure} pure columns do not fit in {n} columns")));
    }
    let mut rng = rng_for(seed, STREAM_ACTIVATIONS);
    let mut h = DMatrix::zeros(r0, n);
    let mut j = 0;
    for (i, &count) in pure.iter().enumerate() {
        for _ in 0..count {
            h[(i, j)] = 1.0;
            j += 1;
        }
    }
    for j in npure..n {
        let mut w = mixed_weights(&mut rng, r0, mixed_l1_le_one);
        if !mixed_l1_le_one {
            // Keep entries strictly fractional so splits see them.
            w.iter_mut().for_each(|v| *v = v.min(1.0 - 1e-6));
        }
        for i in 0..r0 {
            h[(i, j)] = w[i];
        }
    }
    let (h, _) = permute_columns(&h, seed);
    Ok(h)
}

/// Ten sources where the intensity planes of sources 7, 8, 9, 10 repeat those
/// of sources 1, 1, 3, 4, so `S0(W*)` has rank six and only the polarization
/// tells the twins apart. `cfg.r` must be 10. Each source has exactly one
/// unmixed column and every split rule moves `(n - 10) / 10` mixed entries.
pub fn gen_same_intensity(cfg: &SynthConfig) -> Result<SynthBundle> {
    cfg.validate()?;
    if cfg.r != 10 {
        return Err(SqmfError::Domain(format!("the same-intensity construction has 10 sources, got r = {}", cfg.r)));
    }
    let (m, n) = (cfg.m, cfg.n);
    let fractional = (n - 10) / 10;
    let scheme = SplitScheme::urban_with_counts([1; 4], [fractional; 4]);
    let h0 = gen_abundance(&[3, 1, 2, 2, 1, 1], n, cfg.mixed_l1_le_one, cfg.seed)?;
    let hstar = split_sources(&h0, &scheme)?;

    let mut rng = rng_for(cfg.seed, STREAM_INTENSITY);
    let w0 = DMatrix::from_fn(m, 6, |_, _| 1.0 - 0.9 * rng.random::<f64>());
    let mut cols: Vec<usize> = (0..6).collect();
    cols.extend(scheme.parents());
    let s0 = w0.select_columns(&cols);
    let wstar = polarize_full_rank(&s0, cfg)?;
    let kstar = unit_columns(&hstar)?;
    finish(cfg.clone(), wstar, hstar, kstar)
}

/// For each row, the unique column equal to that unit vector.
fn unit_columns(h: &DMatrix<f64>) -> Result<Vec<usize>> {
    (0..h.nrows())
        .map(|i| {
            let hits: Vec<usize> = (0..h.ncols())
                .filter(|&j| h.column(j).iter().enumerate().all(|(k, &v)| if k == i { v == 1.0 } else { v == 0.0 }))
                .collect();
            match hits.as_slice() {
                [j] => Ok(*j),
                _ => Err(SqmfError::Generation(format!("source {i} has {} unmixed columns", hits.len()))),
            }
        })
        .collect()
}

/// Builds a bundle from user-supplied intensity sources `w0` (m x r) and
/// activations `h0` (r x n), assigning `S0(W*) = w0` and `H* = h0`. The
/// planted column of source `i` is the column maximizing `h_ij / ||h_j||_1`
/// (first on ties).
pub fn bundle_from_ground_truth(w0: &DMatrix<f64>, h0: &DMatrix<f64>, mut cfg: SynthConfig) -> Result<SynthBundle> {
    if w0.ncols() != h0.nrows() {
        return Err(SqmfError::dim("ground truth rank", w0.ncols(), h0.nrows()));
    }
    cfg.m = w0.nrows();
    cfg.n = h0.ncols();
    cfg.r = w0.ncols();
    cfg.validate()?;
    if let Some(v) = h0.iter().find(|v| !(**v >= 0.0)) {
        return Err(SqmfError::Domain(format!("activations must be nonnegative, found {v}")));
    }
    let wstar = polarize_full_rank(w0, &cfg)?;
    let sums: Vec<f64> = (0..cfg.n).map(|j| h0.column(j).sum()).collect();
    let kstar = (0..cfg.r)
        .map(|i| {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for j in 0..cfg.n {
                let v = if sums[j] > 0.0 { h0[(i, j)] / sums[j] } else { 0.0 };
                if v > best_v {
                    best_v = v;
                    best = j;
                }
            }
            best
        })
        .collect();
    finish(cfg, wstar, h0.clone(), kstar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stokes::{degree_of_polarization, validate_matrix};

    #[test]
    fn polarized_sources_examples() {
        let s0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 0.0]);
        let q = gen_polarized_sources(&s0, 0.0, &[0.3, 1.0], &[0.1, -2.0]).unwrap();
        for l in 1..4 {
            assert!(q.component(l).iter().all(|&v| v == 0.0));
        }
        let q = gen_polarized_sources(&s0, 1.0, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(q.component(1), &s0);
        assert!(q.component(2).iter().chain(q.component(3).iter()).all(|&v| v == 0.0));
        assert!(gen_polarized_sources(&(-s0.clone()), 1.0, &[0.0; 2], &[0.0; 2]).is_err());
        assert!(gen_polarized_sources(&s0, 1.0, &[0.0; 3], &[0.0; 2]).is_err());
    }

    #[test]
    fn fully_polarized_sources() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s0 = DMatrix::from_fn(5, 4, |_, _| rng.random_range(0.1..1.0));
        let a: Vec<f64> = (0..4).map(|_| draw_angle(&mut rng)).collect();
        let b: Vec<f64> = (0..4).map(|_| draw_angle(&mut rng)).collect();
        let q = gen_polarized_sources(&s0, 1.0, &a, &b).unwrap();
        for j in 0..4 {
            for i in 0..5 {
                assert!((degree_of_polarization(q.get(i, j)).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn separable_bundle_invariants() {
        let b = gen_separable(&SynthConfig::new(12, 40, 4).with_seed(3)).unwrap();
        assert_eq!(b.m, b.mstar);
        assert_eq!(b.mstar, b.wstar.mul_real(&b.hstar).unwrap());
        assert_eq!(validate_matrix(&b.mstar, 0.0).violations, 0);
        for (i, &k) in b.kstar.iter().enumerate() {
            for l in 0..4 {
                assert_eq!(b.m.component(l).column(k), b.wstar.component(l).column(i));
            }
        }
        assert!(b.hstar.iter().all(|&v| v >= 0.0));
        for j in 0..40 {
            assert!(b.hstar.column(j).sum() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn rank_one_bundle() {
        let b = gen_separable(&SynthConfig::new(5, 9, 1).with_seed(2)).unwrap();
        assert_eq!(b.hstar[(0, b.kstar[0])], 1.0);
        assert!(b.hstar.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn noise_level_is_exact() {
        for eps in [0.05, 0.1, 0.3] {
            let b = gen_separable(&SynthConfig::new(10, 30, 3).with_seed(8).with_eps(eps)).unwrap();
            assert!((b.measured_eps() - eps).abs() < 1e-12);
        }
        let q = gen_separable(&SynthConfig::new(4, 6, 2)).unwrap().mstar;
        assert_eq!(add_noise(&q, 0.0, 1), q);
        assert_eq!(add_noise(&q, 0.1, 1), add_noise(&q, 0.1, 1));
        assert_ne!(add_noise(&q, 0.1, 1), add_noise(&q, 0.1, 2));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig::new(8, 20, 3).with_seed(99).with_eps(0.05);
        assert_eq!(gen_separable(&cfg).unwrap(), gen_separable(&cfg).unwrap());
        assert_ne!(gen_separable(&cfg).unwrap().m, gen_separable(&cfg.clone().with_seed(100)).unwrap().m);
    }

    #[test]
    fn config_validation() {
        let mut c = SynthConfig::new(3, 10, 4);
        assert!(c.validate().is_err());
        c.r = 2;
        c.phi = 1.5;
        assert!(c.validate().is_err());
        c.phi = 0.5;
        c.eps = -0.1;
        assert!(c.validate().is_err());
        c.eps = 0.0;
        c.alpha = Some(vec![0.0]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn fixed_angles_degenerate_sources_fail() {
        let w0 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.5, 0.5]);
        let h0 = DMatrix::<f64>::identity(2, 3);
        let mut c = SynthConfig::new(0, 0, 0);
        c.alpha = Some(vec![0.4, 0.4]);
        c.beta = Some(vec![-1.0, -1.0]);
        assert!(matches!(bundle_from_ground_truth(&w0, &h0, c.clone()), Err(SqmfError::Generation(_))));
        c.beta = Some(vec![-1.0, 1.0]);
        assert!(bundle_from_ground_truth(&w0, &h0, c).is_ok());
    }

    #[test]
    fn split_toy_row_conserves() {
        let h0 = DMatrix::from_row_slice(2, 10, &[
            1.0, 0.2, 1.0, 0.5, 0.0, 0.7, 1.0, 0.1, 0.9, 0.0,
            0.0, 0.8, 0.0, 0.5, 1.0, 0.3, 0.0, 0.9, 0.1, 1.0,
        ]);
        let scheme = SplitScheme {
            rules: vec![SplitRule::new(0, Take::Last, 2, 3), SplitRule::new(0, Take::First, 1, 1)],
        };
        let h = split_sources(&h0, &scheme).unwrap();
        assert_eq!(h.nrows(), 4);
        for j in 0..10 {
            assert_eq!(h[(0, j)] + h[(2, j)] + h[(3, j)], h0[(0, j)]);
            assert_eq!(h[(1, j)], h0[(1, j)]);
        }
        let ones2: Vec<usize> = (0..10).filter(|&j| h[(2, j)] == 1.0).collect();
        assert_eq!(ones2, vec![2, 6]);
        assert_eq!(h[(3, 0)], 1.0);
        assert_eq!(h[(3, 1)], 0.2);
    }

    #[test]
    fn split_errors() {
        let h0 = DMatrix::from_row_slice(1, 3, &[1.0, 0.5, 0.0]);
        let zero = SplitScheme { rules: vec![SplitRule::new(0, Take::First, 0, 0)] };
        assert!(matches!(split_sources(&h0, &zero), Err(SqmfError::Scheme { row: 0, .. })));
        let short = SplitScheme { rules: vec![SplitRule::new(0, Take::First, 2, 0)] };
        assert!(matches!(split_sources(&h0, &short), Err(SqmfError::Scheme { row: 0, .. })));
        let bad = SplitScheme { rules: vec![SplitRule::new(4, Take::First, 1, 0)] };
        assert!(matches!(split_sources(&h0, &bad), Err(SqmfError::Scheme { row: 4, .. })));
    }

    #[test]
    fn urban_scheme_on_synthetic_abundances() {
        let h0 = gen_abundance(&[120, 40, 80, 40, 40, 40], 2000, true, 12).unwrap();
        let scheme = SplitScheme::urban_with_counts([50, 50, 40, 15], [100, 100, 100, 100]);
        let h = split_sources(&h0, &scheme).unwrap();
        assert_eq!(h.nrows(), 10);
        for j in 0..2000 {
            assert!((h.column(j).sum() - h0.column(j).sum()).abs() < 1e-15);
            assert!(h[(6, j)] == 0.0 || h[(7, j)] == 0.0);
            assert!(h[(0, j)] == 0.0 || h[(6, j)] == 0.0);
        }
        let full = SplitScheme::urban();
        assert!(matches!(split_sources(&h0, &full), Err(SqmfError::Scheme { row: 0, .. })));
    }

    #[test]
    fn same_intensity_bundle() {
        let b = gen_same_intensity(&SynthConfig::new(30, 300, 10).with_seed(4)).unwrap();
        let s0 = b.wstar.component(0);
        assert_eq!(s0.column(6), s0.column(0));
        assert_eq!(s0.column(7), s0.column(0));
        assert_eq!(s0.column(8), s0.column(2));
        assert_eq!(s0.column(9), s0.column(3));
        assert!(rank_ratio(&b.wstar.mat_stack()) > RANK_RATIO);
        let mut k = b.kstar.clone();
        k.sort();
        k.dedup();
        assert_eq!(k.len(), 10);
        assert_eq!(validate_matrix(&b.mstar, 0.0).violations, 0);
        assert!(gen_same_intensity(&SynthConfig::new(30, 300, 6)).is_err());
    }

    #[test]
    fn ground_truth_bundle() {
        let w0 = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, 0.5, 0.9, 0.3, 0.4]);
        let h0 = DMatrix::from_row_slice(2, 4, &[0.5, 1.0, 0.0, 0.3, 0.5, 0.0, 2.0, 0.3]);
        let b = bundle_from_ground_truth(&w0, &h0, SynthConfig::new(0, 0, 0)).unwrap();
        assert_eq!(b.kstar, vec![1, 2]);
        assert_eq!(b.wstar.component(0), &w0);
        assert_eq!(b.hstar, h0);
    }
}
