//! Column-subset selection by successive projection.
//!
//! [`qspa`] normalizes every column by the l1 norm of its intensity plane,
//! then repeatedly picks the column of largest quaternion two-norm and
//! projects all columns onto the orthogonal complement of the pick. Each
//! step costs `O(mn)`, so selecting `r` columns is `O(mnr)`.
//!
//! [`spa_real`] is the same loop on a single real plane, used as the
//! intensity-only baseline.
//!
//! When the data has fewer than `r` independent directions (the activation
//! matrix is then not unique, but the source set may still be), the residual
//! vanishes before `r` picks. Under [`DegeneratePolicy::ConicResidual`] the
//! remaining picks maximize the distance of a normalized column to the cone
//! spanned by the columns already chosen; a column that is a nonnegative
//! mixture of them has distance zero and can never be picked.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::nnls_gram;
use crate::error::{Result, SqmfError};
use crate::quat::QuaternionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DegeneratePolicy {
    /// Fail with [`SqmfError::RankDeficient`] as soon as the residual vanishes.
    Error,
    /// Continue with the cone-distance criterion, failing only when that vanishes too.
    ConicResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionOptions {
    /// Residual norms at or below `rank_tol * initial max norm` count as zero.
    pub rank_tol: f64,
    /// Columns with intensity l1 norm at or below `deadzone * max` are skipped.
    pub deadzone: f64,
    /// Cone distances at or below `conic_tol * initial max norm` count as zero.
    pub conic_tol: f64,
    pub degenerate: DegeneratePolicy,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions {
            rank_tol: 1e-10,
            deadzone: 1e-12,
            conic_tol: 1e-8,
            degenerate: DegeneratePolicy::ConicResidual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected column indices in pick order.
    pub indices: Vec<usize>,
    /// Residual norm of the picked column at each step.
    pub step_norms: Vec<f64>,
    /// Columns excluded because their intensity l1 norm was in the deadzone.
    pub skipped: Vec<usize>,
    /// How many picks used the cone-distance fallback.
    pub conic_steps: usize,
}

/// Output of [`normalize_columns`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub matrix: QuaternionMatrix,
    /// `||S0(m_j)||_1` for every column.
    pub scales: Vec<f64>,
    pub skipped: Vec<usize>,
}

/// Divides every column by the l1 norm of its intensity plane. Columns whose
/// norm is at most `1e-12` times the largest one are left untouched and
/// reported as skipped.
pub fn normalize_columns(m: &QuaternionMatrix) -> Normalized {
    normalize_columns_with(m, SelectionOptions::default().deadzone)
}

pub fn normalize_columns_with(m: &QuaternionMatrix, deadzone: f64) -> Normalized {
    let mut planes = m.clone().into_planes();
    let (scales, skipped) = normalize_planes(&mut planes, deadzone);
    Normalized {
        matrix: QuaternionMatrix::from_planes(planes).expect("shapes preserved"),
        scales,
        skipped,
    }
}

pub fn qspa(m: &QuaternionMatrix, r: usize) -> Result<SelectionResult> {
    qspa_with(m, r, &SelectionOptions::default())
}

pub fn qspa_with(m: &QuaternionMatrix, r: usize, opts: &SelectionOptions) -> Result<SelectionResult> {
    successive_projection(m.planes(), r, opts).map(|(sel, _)| sel)
}

/// Successive projection on a real nonnegative matrix, normalized by column l1 norms.
pub fn spa_real(x: &DMatrix<f64>, r: usize) -> Result<SelectionResult> {
    spa_real_with(x, r, &SelectionOptions::default())
}

pub fn spa_real_with(x: &DMatrix<f64>, r: usize, opts: &SelectionOptions) -> Result<SelectionResult> {
    successive_projection(&[x.clone()], r, opts).map(|(sel, _)| sel)
}

fn normalize_planes(planes: &mut [DMatrix<f64>], deadzone: f64) -> (Vec<f64>, Vec<usize>) {
    let n = planes[0].ncols();
    let scales: Vec<f64> = (0..n).map(|j| planes[0].column(j).lp_norm(1)).collect();
    let max = scales.iter().cloned().fold(0.0, f64::max);
    let floor = deadzone * max;
    let mut skipped = Vec::new();
    for (j, &s) in scales.iter().enumerate() {
        if s <= floor || s == 0.0 {
            skipped.push(j);
            continue;
        }
        for p in planes.iter_mut() {
            p.column_mut(j).unscale_mut(s);
        }
    }
    (scales, skipped)
}

fn column_norms_sq(planes: &[DMatrix<f64>]) -> Vec<f64> {
    let n = planes[0].ncols();
    (0..n)
        .map(|j| planes.iter().map(|p| p.column(j).norm_squared()).sum())
        .collect()
}

/// Runs the selection loop on a working copy of `input`; also returns the
/// final residual planes.
fn successive_projection<const P: usize>(
    input: &[DMatrix<f64>; P],
    r: usize,
    opts: &SelectionOptions,
) -> Result<(SelectionResult, [DMatrix<f64>; P])> {
    let n = input[0].ncols();
    if r == 0 || r > n {
        return Err(SqmfError::RankDeficient {
            step: 0,
            requested: r,
            reason: format!("need 1 <= r <= n = {n}"),
        });
    }
    let mut work = input.clone();
    let planes = &mut work;
    let (scales, skipped) = normalize_planes(planes, opts.deadzone);
    let mut usable = vec![true; n];
    for &j in &skipped {
        usable[j] = false;
    }
    let usable_count = usable.iter().filter(|&&u| u).count();
    if usable_count < r {
        return Err(SqmfError::RankDeficient {
            step: 0,
            requested: r,
            reason: format!("only {usable_count} columns have nonzero intensity"),
        });
    }

    let mut indices = Vec::with_capacity(r);
    let mut step_norms = Vec::with_capacity(r);
    let mut conic_steps = 0;
    let mut chosen = vec![false; n];
    let mut norms = column_norms_sq(planes);
    let initial_max = (0..n)
        .filter(|&j| usable[j])
        .map(|j| norms[j])
        .fold(0.0, f64::max)
        .sqrt();

    for step in 0..r {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..n).filter(|&j| usable[j]) {
            if best.is_none_or(|(_, b)| norms[j] > b) {
                best = Some((j, norms[j]));
            }
        }
        let (k, nk2) = best.expect("at least r usable columns");
        let nk = nk2.sqrt();

        if nk <= opts.rank_tol * initial_max {
            if opts.degenerate == DegeneratePolicy::Error {
                return Err(SqmfError::RankDeficient {
                    step,
                    requested: r,
                    reason: format!("residual norm {nk:.3e} vanished"),
                });
            }
            let (k, dist) = conic_pick(input, &scales, &indices, &usable, &chosen);
            if k.is_none() || dist <= opts.conic_tol * initial_max {
                return Err(SqmfError::RankDeficient {
                    step,
                    requested: r,
                    reason: format!("residual and cone distance ({dist:.3e}) both vanished"),
                });
            }
            let k = k.unwrap();
            indices.push(k);
            step_norms.push(dist);
            chosen[k] = true;
            conic_steps += 1;
            continue;
        }

        // z_j <- z_j - z_k <z_k, z_j> / ||z_k||^2, one column at a time so that
        // each column is read once per step.
        let zk: Vec<DVector<f64>> = planes.iter().map(|p| p.column(k).into_owned()).collect();
        for (j, norm) in norms.iter_mut().enumerate() {
            let pj: f64 = planes.iter().zip(&zk).map(|(plane, z)| plane.column(j).dot(z)).sum();
            let c = pj / nk2;
            let mut nj = 0.0;
            for (plane, z) in planes.iter_mut().zip(&zk) {
                let mut col = plane.column_mut(j);
                col.axpy(-c, z, 1.0);
                nj += col.norm_squared();
            }
            *norm = nj;
        }

        indices.push(k);
        step_norms.push(nk);
        chosen[k] = true;
    }

    Ok((
        SelectionResult {
            indices,
            step_norms,
            skipped,
            conic_steps,
        },
        work,
    ))
}

/// Normalized column farthest from the cone generated by the already-selected
/// normalized columns.
fn conic_pick(
    orig: &[DMatrix<f64>],
    scales: &[f64],
    selected: &[usize],
    usable: &[bool],
    chosen: &[bool],
) -> (Option<usize>, f64) {
    let stacked = |cols: &[usize]| -> DMatrix<f64> {
        let parts: Vec<DMatrix<f64>> = orig
            .iter()
            .map(|p| {
                let mut sub = p.select_columns(cols);
                for (c, &j) in cols.iter().enumerate() {
                    sub.column_mut(c).unscale_mut(scales[j]);
                }
                sub
            })
            .collect();
        let rows: usize = parts.iter().map(|p| p.nrows()).sum();
        let mut out = DMatrix::zeros(rows, cols.len());
        let mut off = 0;
        for p in parts {
            out.view_mut((off, 0), (p.nrows(), p.ncols())).copy_from(&p);
            off += p.nrows();
        }
        out
    };
    let basis = stacked(selected);
    let g = basis.tr_mul(&basis);
    let mut best: (Option<usize>, f64) = (None, f64::NEG_INFINITY);
    for j in 0..chosen.len() {
        if !usable[j] || chosen[j] {
            continue;
        }
        let x = stacked(&[j]).column(0).into_owned();
        let dist = if selected.is_empty() {
            x.norm()
        } else {
            let h = nnls_gram(&g, &basis.tr_mul(&x));
            (&basis * h - &x).norm()
        };
        if dist > best.1 {
            best = (Some(j), dist);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::example_one;
    use crate::quat::Quaternion;

    fn sorted(mut v: Vec<usize>) -> Vec<usize> {
        v.sort_unstable();
        v
    }

    #[test]
    fn normalization_examples() {
        let mut m = QuaternionMatrix::zeros(2, 3);
        m.set(0, 0, Quaternion::new(0.5, 0.0, 0.0, 0.0));
        m.set(1, 0, Quaternion::new(0.5, 0.0, 0.0, 0.0));
        m.set(0, 1, Quaternion::new(2.0, 1.0, 0.0, 0.0));
        m.set(1, 1, Quaternion::new(2.0, 0.0, 0.0, 0.0));
        let out = normalize_columns(&m);
        assert_eq!(out.matrix.get(0, 0).q0, 0.5);
        assert_eq!(out.matrix.get(0, 1), Quaternion::new(0.5, 0.25, 0.0, 0.0));
        assert_eq!(out.matrix.get(1, 1).q0, 0.5);
        assert_eq!(out.scales, vec![1.0, 4.0, 0.0]);
        assert_eq!(out.skipped, vec![2]);
        assert!(out.matrix.column(2).norm2() == 0.0);
    }

    #[test]
    fn identity_sources_are_recovered() {
        let w = QuaternionMatrix::from_fn(4, 3, |i, j| {
            if i == j {
                Quaternion::new(1.0, 0.3, -0.2, 0.1)
            } else {
                Quaternion::new(0.1 * (i + j) as f64, 0.0, 0.05, 0.0)
            }
        });
        let sel = qspa(&w, 3).unwrap();
        assert_eq!(sorted(sel.indices), vec![0, 1, 2]);
        assert_eq!(sel.conic_steps, 0);
    }

    #[test]
    fn example_one_selects_first_four_columns() {
        let sel = qspa(&example_one(), 4).unwrap();
        assert_eq!(sorted(sel.indices.clone()), vec![0, 1, 2, 3]);
        assert_eq!(sel.conic_steps, 1);
        let strict = SelectionOptions {
            degenerate: DegeneratePolicy::Error,
            ..SelectionOptions::default()
        };
        match qspa_with(&example_one(), 4, &strict) {
            Err(SqmfError::RankDeficient { step, requested, .. }) => assert_eq!((step, requested), (3, 4)),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_rank_requests() {
        let m = example_one();
        assert!(matches!(qspa(&m, 6), Err(SqmfError::RankDeficient { step: 0, .. })));
        assert!(matches!(qspa(&m, 0), Err(SqmfError::RankDeficient { .. })));
        let mut dark = QuaternionMatrix::zeros(3, 3);
        dark.set(0, 0, Quaternion::new(1.0, 0.0, 0.0, 0.0));
        assert!(matches!(qspa(&dark, 2), Err(SqmfError::RankDeficient { .. })));
    }

    #[test]
    fn spa_real_on_identity() {
        let sel = spa_real(&DMatrix::identity(2, 2), 2).unwrap();
        assert_eq!(sorted(sel.indices), vec![0, 1]);
    }

    #[test]
    fn spa_real_fails_on_repeated_columns() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(spa_real(&x, 3), Err(SqmfError::RankDeficient { step: 2, .. })));
    }

    #[test]
    fn selected_residuals_are_annihilated() {
        let m = example_one();
        let (sel, planes) = successive_projection(m.planes(), 3, &SelectionOptions::default()).unwrap();
        let z = QuaternionMatrix::from_planes(planes).unwrap();
        let init = normalize_columns(&m);
        let max0 = (0..5).map(|j| init.matrix.column_norm(j)).fold(0.0, f64::max);
        for &k in &sel.indices {
            assert!(z.column_norm(k) <= 1e-10 * max0);
        }
    }

    #[test]
    fn ties_break_to_smallest_index() {
        let m = QuaternionMatrix::from_fn(2, 3, |i, j| {
            let v = if (i + j) % 2 == 0 { 1.0 } else { 0.0 };
            Quaternion::new(v, 0.0, 0.0, 0.0)
        });
        // Columns 0 and 2 are identical unit vectors.
        let sel = qspa(&m, 1).unwrap();
        assert_eq!(sel.indices, vec![0]);
    }
}
