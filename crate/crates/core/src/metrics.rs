//! Approximation quality, ground-truth recovery and selection accuracy.
//!
//! Every score except [`accuracy`] is a percentage of the form
//! `100 - 100 * ||reference - estimate||_F / ||reference||_F`. Ground-truth
//! scores minimize over permutations of the estimated sources; the optimal
//! permutation is found exhaustively for up to eight sources and by the
//! Hungarian method beyond that.

use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqmfError};
use crate::factorize::{Factorization, Method};
use crate::quat::QuaternionMatrix;

/// Largest rank for which permutations are enumerated.
pub const EXHAUSTIVE_MAX: usize = 8;

fn percent(err: f64, reference: f64) -> f64 {
    100.0 - 100.0 * err / reference
}

/// `100 - 100 ||M - WH||_F / ||M||_F`.
pub fn appro(m: &QuaternionMatrix, w: &QuaternionMatrix, h: &DMatrix<f64>) -> Result<f64> {
    let reference = m.frobenius_norm();
    if reference == 0.0 {
        return Err(SqmfError::Domain("relative approximation of a zero matrix".into()));
    }
    let err = crate::nnls::objective(m, w, h)?.sqrt();
    Ok(percent(err, reference))
}

/// The same score on plane `l` alone; `None` when that plane of `M` is zero.
pub fn appro_component(m: &QuaternionMatrix, w: &QuaternionMatrix, h: &DMatrix<f64>, l: usize) -> Result<Option<f64>> {
    if l > 3 {
        return Err(SqmfError::Domain(format!("component index {l} out of range")));
    }
    crate::nnls::objective(m, w, h)?;
    let reference = m.component(l).norm();
    if reference == 0.0 {
        return Ok(None);
    }
    let err = (m.component(l) - w.component(l) * h).norm();
    Ok(Some(percent(err, reference)))
}

/// `cost[(i, j)]`: squared distance between reference item `i` and estimate item `j`.
fn column_costs(reference: &QuaternionMatrix, estimate: &QuaternionMatrix) -> DMatrix<f64> {
    let r = reference.cols();
    DMatrix::from_fn(r, r, |i, j| {
        (0..4)
            .map(|l| (reference.component(l).column(i) - estimate.component(l).column(j)).norm_squared())
            .sum()
    })
}

fn row_costs(reference: &DMatrix<f64>, estimate: &DMatrix<f64>) -> DMatrix<f64> {
    let r = reference.nrows();
    DMatrix::from_fn(r, r, |i, j| (reference.row(i) - estimate.row(j)).norm_squared())
}

/// Assignment `perm` minimizing `sum_i cost[(i, perm[i])]`.
pub fn best_permutation(cost: &DMatrix<f64>) -> Vec<usize> {
    let r = cost.nrows();
    if r <= EXHAUSTIVE_MAX {
        exhaustive_assignment(cost)
    } else {
        hungarian(cost)
    }
}

pub fn assignment_cost(cost: &DMatrix<f64>, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum()
}

fn exhaustive_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    fn recurse(cost: &DMatrix<f64>, row: usize, used: &mut [bool], cur: &mut Vec<usize>, acc: f64, best: &mut (f64, Vec<usize>)) {
        let r = cost.nrows();
        if acc >= best.0 {
            return;
        }
        if row == r {
            *best = (acc, cur.clone());
            return;
        }
        for j in 0..r {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                recurse(cost, row + 1, used, cur, acc + cost[(row, j)], best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let r = cost.nrows();
    let mut best = (f64::INFINITY, (0..r).collect());
    recurse(cost, 0, &mut vec![false; r], &mut Vec::with_capacity(r), 0.0, &mut best);
    best.1
}

/// Shortest augmenting path Hungarian method, `O(r^3)`.
fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let r = cost.nrows();
    // One-based potentials and matching, column 0 is the virtual start.
    let mut u = vec![0.0; r + 1];
    let mut v = vec![0.0; r + 1];
    let mut owner = vec![0usize; r + 1];
    let mut way = vec![0usize; r + 1];
    for i in 1..=r {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; r + 1];
        let mut used = vec![false; r + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=r {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=r {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; r];
    for j in 1..=r {
        perm[owner[j] - 1] = j - 1;
    }
    perm
}

fn check_rank(context: &'static str, expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(SqmfError::dim(context, format!("{}x{}", expected.0, expected.1), format!("{}x{}", got.0, got.1)));
    }
    Ok(())
}

/// `100 - 100 min_pi ||W* - W(:, pi)||_F / ||W*||_F`.
pub fn app_w(wstar: &QuaternionMatrix, w: &QuaternionMatrix) -> Result<f64> {
    check_rank("source matrices", wstar.shape(), w.shape())?;
    let cost = column_costs(wstar, w);
    let perm = best_permutation(&cost);
    Ok(percent(assignment_cost(&cost, &perm).max(0.0).sqrt(), wstar.frobenius_norm()))
}

/// `100 - 100 min_pi ||H* - H(pi, :)||_F / ||H*||_F`.
pub fn app_h(hstar: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
    check_rank("activation matrices", hstar.shape(), h.shape())?;
    let cost = row_costs(hstar, h);
    let perm = best_permutation(&cost);
    Ok(percent(assignment_cost(&cost, &perm).max(0.0).sqrt(), hstar.norm()))
}

/// Both scores under one shared permutation, chosen to minimize the sum of
/// the two relative squared errors. Returns `(appW, appH, perm)`.
pub fn app_joint(wstar: &QuaternionMatrix, w: &QuaternionMatrix, hstar: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<(f64, f64, Vec<usize>)> {
    check_rank("source matrices", wstar.shape(), w.shape())?;
    check_rank("activation matrices", hstar.shape(), h.shape())?;
    let (nw, nh) = (wstar.frobenius_norm_squared(), hstar.norm_squared());
    let cw = column_costs(wstar, w);
    let ch = row_costs(hstar, h);
    let joint = cw.clone() / nw + ch.clone() / nh;
    let perm = best_permutation(&joint);
    let aw = percent(assignment_cost(&cw, &perm).max(0.0).sqrt(), nw.sqrt());
    let ah = percent(assignment_cost(&ch, &perm).max(0.0).sqrt(), nh.sqrt());
    Ok((aw, ah, perm))
}

/// `|K* ∩ K| / |K*|`.
pub fn accuracy(kstar: &[usize], k: &[usize]) -> f64 {
    let truth: BTreeSet<usize> = kstar.iter().copied().collect();
    if truth.is_empty() {
        return 0.0;
    }
    let found: BTreeSet<usize> = k.iter().copied().collect();
    truth.intersection(&found).count() as f64 / truth.len() as f64
}

/// Whether every column of `w` equals, bit for bit, column `indices[c]` of `m`.
pub fn selection_consistent(m: &QuaternionMatrix, w: &QuaternionMatrix, indices: &[usize]) -> bool {
    if w.rows() != m.rows() || w.cols() != indices.len() || indices.iter().any(|&j| j >= m.cols()) {
        return false;
    }
    indices.iter().enumerate().all(|(c, &j)| (0..4).all(|l| w.component(l).column(c) == m.component(l).column(j)))
}

/// Ground truth accepted by [`evaluate`].
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    pub wstar: &'a QuaternionMatrix,
    pub hstar: &'a DMatrix<f64>,
    pub kstar: Option<&'a [usize]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub eps: Option<f64>,
    pub appro: f64,
    /// `None` marks a zero plane in the data.
    pub app_s: [Option<f64>; 4],
    pub app_w: Option<f64>,
    pub app_h: Option<f64>,
    pub accuracy: Option<f64>,
    /// `Some(false)` when `W` is not a copy of the selected data columns.
    pub selection_consistent: Option<bool>,
    pub time_s: f64,
}

pub const CSV_HEADER: [&str; 12] = [
    "method", "eps", "Appro", "app-s0", "app-s1", "app-s2", "app-s3", "appW", "appH", "accuracy", "consistent", "time",
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

impl EvalReport {
    pub fn csv_record(&self) -> Vec<String> {
        let mut rec = vec![self.method.to_string(), cell(self.eps), format!("{:.6}", self.appro)];
        rec.extend(self.app_s.iter().map(|v| cell(*v)));
        rec.push(cell(self.app_w));
        rec.push(cell(self.app_h));
        rec.push(cell(self.accuracy));
        rec.push(self.selection_consistent.map_or("NA".into(), |b| b.to_string()));
        rec.push(format!("{:.6}", self.time_s));
        rec
    }

    /// Header plus one row per report, six decimals.
    pub fn write_csv<W: Write>(reports: &[EvalReport], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER).map_err(csv_io)?;
        for r in reports {
            w.write_record(r.csv_record()).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub(crate) fn csv_io(e: csv::Error) -> SqmfError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SqmfError::Io(io),
        other => SqmfError::Parse(format!("{other:?}")),
    }
}

/// Scores a factorization of `m`, with ground-truth recovery when `truth` is given.
pub fn evaluate(m: &QuaternionMatrix, f: &Factorization, truth: Option<Truth<'_>>, time_s: f64) -> Result<EvalReport> {
    let appro = appro(m, &f.w, &f.h)?;
    let mut app_s = [None; 4];
    for (l, slot) in app_s.iter_mut().enumerate() {
        *slot = appro_component(m, &f.w, &f.h, l)?;
    }
    let (mut aw, mut ah, mut acc) = (None, None, None);
    if let Some(t) = truth {
        aw = Some(app_w(t.wstar, &f.w)?);
        ah = Some(app_h(t.hstar, &f.h)?);
        if let (Some(kstar), Some(sel)) = (t.kstar, &f.selection) {
            acc = Some(accuracy(kstar, &sel.indices));
        }
    }
    let consistent = f.selection.as_ref().map(|s| selection_consistent(m, &f.w, &s.indices));
    Ok(EvalReport {
        method: f.method,
        eps: None,
        appro,
        app_s,
        app_w: aw,
        app_h: ah,
        accuracy: acc,
        selection_consistent: consistent,
        time_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quat::Quaternion;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_qmat(rng: &mut ChaCha8Rng, m: usize, n: usize) -> QuaternionMatrix {
        QuaternionMatrix::from_fn(m, n, |_, _| Quaternion::new(rng.random(), rng.random(), rng.random(), rng.random()))
    }

    fn brute_force_min(cost: &DMatrix<f64>) -> f64 {
        fn perms(k: usize) -> Vec<Vec<usize>> {
            if k == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in perms(k - 1) {
                for pos in 0..=p.len() {
                    let mut q = p.clone();
                    q.insert(pos, k - 1);
                    out.push(q);
                }
            }
            out
        }
        perms(cost.nrows()).iter().map(|p| assignment_cost(cost, p)).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn appro_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_qmat(&mut rng, 5, 2);
        let h = DMatrix::from_fn(2, 4, |_, _| rng.random());
        let m = w.mul_real(&h).unwrap();
        assert!((appro(&m, &w, &h).unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(appro(&m, &w, &DMatrix::zeros(2, 4)).unwrap(), 0.0);
        assert!(appro(&QuaternionMatrix::zeros(5, 4), &w, &h).is_err());
        for l in 0..4 {
            assert!((appro_component(&m, &w, &h, l).unwrap().unwrap() - 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_plane_is_not_applicable() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut w = random_qmat(&mut rng, 4, 2);
        w.planes_mut()[3].fill(0.0);
        let h = DMatrix::from_element(2, 3, 0.5);
        let m = w.mul_real(&h).unwrap();
        assert_eq!(appro_component(&m, &w, &h, 3).unwrap(), None);
        assert!(appro_component(&m, &w, &h, 0).unwrap().is_some());
    }

    #[test]
    fn single_plane_noise_only_hits_that_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_qmat(&mut rng, 6, 2);
        let h = DMatrix::from_fn(2, 5, |_, _| rng.random());
        for l in 0..4 {
            let mut m = w.mul_real(&h).unwrap();
            m.planes_mut()[l].iter_mut().for_each(|v| *v += 0.1 * (rng.random::<f64>() - 0.5));
            for k in 0..4 {
                let s = appro_component(&m, &w, &h, k).unwrap().unwrap();
                if k == l {
                    assert!(s < 100.0);
                } else {
                    assert!((s - 100.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn app_w_under_shuffle_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = random_qmat(&mut rng, 7, 5);
        let shuffled = w.select_columns(&[3, 0, 4, 1, 2]);
        assert!((app_w(&w, &shuffled).unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(app_w(&w, &QuaternionMatrix::zeros(7, 5)).unwrap(), 0.0);
        assert!(app_w(&w, &QuaternionMatrix::zeros(7, 4)).is_err());
        let h = DMatrix::from_fn(5, 9, |_, _| rng.random());
        let hs = DMatrix::from_fn(5, 9, |i, j| h[([2, 4, 0, 1, 3][i], j)]);
        assert!((app_h(&h, &hs).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn app_w_rank_three_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_qmat(&mut rng, 4, 3);
            let b = random_qmat(&mut rng, 4, 3);
            let cost = column_costs(&a, &b);
            let expected = percent(brute_force_min(&cost).sqrt(), a.frobenius_norm());
            assert!((app_w(&a, &b).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = random_qmat(&mut rng, 4, 4);
        let h = DMatrix::from_fn(4, 6, |_, _| rng.random());
        let order = [1, 3, 0, 2];
        let ws = w.select_columns(&order);
        let hs = DMatrix::from_fn(4, 6, |i, j| h[(order[i], j)]);
        let (aw, ah, perm) = app_joint(&w, &ws, &h, &hs).unwrap();
        assert!((aw - 100.0).abs() < 1e-12 && (ah - 100.0).abs() < 1e-12);
        for i in 0..4 {
            assert_eq!(order[perm[i]], i);
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[3, 1, 2]), 1.0);
        assert_eq!(accuracy(&[1, 2], &[3, 4]), 0.0);
        let kstar: Vec<usize> = (0..10).collect();
        let k = [0, 1, 2, 3, 4, 5, 6, 20, 21, 22];
        assert!((accuracy(&kstar, &k) - 0.7).abs() < 1e-15);
        assert_eq!(accuracy(&kstar, &[0, 1, 2, 3, 4, 5, 6, 30, 31, 32]), accuracy(&kstar, &k));
    }

    #[test]
    fn csv_layout() {
        let rep = EvalReport {
            method: Method::Sqmf,
            eps: Some(0.05),
            appro: 99.5,
            app_s: [Some(100.0), Some(1.0 / 3.0), None, Some(0.0)],
            app_w: None,
            app_h: Some(12.0),
            accuracy: Some(1.0),
            selection_consistent: Some(true),
            time_s: 0.25,
        };
        let mut buf = Vec::new();
        EvalReport::write_csv(&[rep.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "method,eps,Appro,app-s0,app-s1,app-s2,app-s3,appW,appH,accuracy,consistent,time\n\
             sqmf,0.050000,99.500000,100.000000,0.333333,NA,0.000000,NA,12.000000,1.000000,true,0.250000\n"
        );
        let back: EvalReport = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(back, rep);
    }

    proptest! {
        #[test]
        fn assignment_is_optimal(seed in 0u64..1000, r in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cost = DMatrix::from_fn(r, r, |_, _| rng.random::<f64>());
            let best = brute_force_min(&cost);
            prop_assert!((assignment_cost(&cost, &exhaustive_assignment(&cost)) - best).abs() < 1e-12);
            prop_assert!((assignment_cost(&cost, &hungarian(&cost)) - best).abs() < 1e-12);
        }

        #[test]
        fn hungarian_returns_a_permutation(seed in 0u64..1000, r in 1usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cost = DMatrix::from_fn(r, r, |_, _| rng.random::<f64>());
            let mut p = hungarian(&cost);
            p.sort();
            prop_assert_eq!(p, (0..r).collect::<Vec<_>>());
        }

        #[test]
        fn app_w_ignores_column_order(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_qmat(&mut rng, 3, 10);
            let b = random_qmat(&mut rng, 3, 10);
            let mut order: Vec<usize> = (0..10).collect();
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
            let x = app_w(&a, &b).unwrap();
            let y = app_w(&a, &b.select_columns(&order)).unwrap();
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}
