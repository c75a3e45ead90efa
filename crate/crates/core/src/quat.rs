//! Quaternion scalars, vectors and matrices stored as four real planes.
//!
//! A quaternion array `Q = S0 + i S1 + j S2 + k S3` is kept as four aligned
//! real arrays, one per component. Every algorithm in this crate works
//! planewise, so there is no interleaved storage and no general
//! quaternion-by-quaternion matrix product: quaternion arrays are only ever
//! multiplied by real matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqmfError};

/// A single quaternion `q0 + i q1 + j q2 + k q3`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quaternion {
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl Quaternion {
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(q0: f64, q1: f64, q2: f64, q3: f64) -> Self {
        Quaternion { q0, q1, q2, q3 }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.q0, self.q1, self.q2, self.q3]
    }

    /// Component `l` (0 = real part).
    pub fn component(self, l: usize) -> f64 {
        self.to_array()[l]
    }

    pub fn real(self) -> f64 {
        self.q0
    }

    pub fn conjugate(self) -> Self {
        Quaternion::new(self.q0, -self.q1, -self.q2, -self.q3)
    }

    pub fn modulus_squared(self) -> f64 {
        self.q0 * self.q0 + self.q1 * self.q1 + self.q2 * self.q2 + self.q3 * self.q3
    }

    /// `|q| = sqrt(q * conj(q))`; the product is real and equals the sum of squares.
    pub fn modulus(self) -> f64 {
        self.modulus_squared().sqrt()
    }

    /// Squared modulus of the imaginary triple `(q1, q2, q3)`.
    pub fn imag_norm_squared(self) -> f64 {
        self.q1 * self.q1 + self.q2 * self.q2 + self.q3 * self.q3
    }
}

/// A quaternion column vector of length `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuaternionVector {
    planes: [DVector<f64>; 4],
}

impl QuaternionVector {
    pub fn new(s0: DVector<f64>, s1: DVector<f64>, s2: DVector<f64>, s3: DVector<f64>) -> Result<Self> {
        let m = s0.len();
        for (l, p) in [&s1, &s2, &s3].iter().enumerate() {
            if p.len() != m {
                return Err(SqmfError::dim("quaternion vector plane", m, format!("{} (plane {})", p.len(), l + 1)));
            }
        }
        Ok(QuaternionVector { planes: [s0, s1, s2, s3] })
    }

    pub fn zeros(m: usize) -> Self {
        QuaternionVector {
            planes: std::array::from_fn(|_| DVector::zeros(m)),
        }
    }

    pub fn from_entries(entries: &[Quaternion]) -> Self {
        QuaternionVector {
            planes: std::array::from_fn(|l| DVector::from_iterator(entries.len(), entries.iter().map(|q| q.component(l)))),
        }
    }

    pub fn len(&self) -> usize {
        self.planes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn component(&self, l: usize) -> &DVector<f64> {
        &self.planes[l]
    }

    pub fn get(&self, i: usize) -> Quaternion {
        Quaternion::from_array(std::array::from_fn(|l| self.planes[l][i]))
    }

    /// `<a, b> = sum_l S_l(a)^T S_l(b)`.
    pub fn inner(&self, other: &QuaternionVector) -> Result<f64> {
        if self.len() != other.len() {
            return Err(SqmfError::dim("inner product", self.len(), other.len()));
        }
        Ok(self.planes.iter().zip(other.planes.iter()).map(|(a, b)| a.dot(b)).sum())
    }

    pub fn norm2(&self) -> f64 {
        self.planes.iter().map(|p| p.norm_squared()).sum::<f64>().sqrt()
    }

    /// The `m x 4` arrangement `[S0 S1 S2 S3]`.
    pub fn mat_stack(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.planes)
    }
}

/// Convenience wrapper around [`QuaternionVector::inner`].
pub fn inner(a: &QuaternionVector, b: &QuaternionVector) -> Result<f64> {
    a.inner(b)
}

/// Convenience wrapper around [`QuaternionVector::norm2`].
pub fn norm2(q: &QuaternionVector) -> f64 {
    q.norm2()
}

/// An `m x n` quaternion matrix as four `m x n` real planes `S0..S3`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuaternionMatrix {
    planes: [DMatrix<f64>; 4],
}

impl QuaternionMatrix {
    pub fn new(s0: DMatrix<f64>, s1: DMatrix<f64>, s2: DMatrix<f64>, s3: DMatrix<f64>) -> Result<Self> {
        Self::from_planes([s0, s1, s2, s3])
    }

    pub fn from_planes(planes: [DMatrix<f64>; 4]) -> Result<Self> {
        let shape = planes[0].shape();
        for (l, p) in planes.iter().enumerate().skip(1) {
            if p.shape() != shape {
                return Err(SqmfError::dim(
                    "quaternion matrix plane",
                    format!("{}x{}", shape.0, shape.1),
                    format!("{}x{} (plane {l})", p.nrows(), p.ncols()),
                ));
            }
        }
        Ok(QuaternionMatrix { planes })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        QuaternionMatrix {
            planes: std::array::from_fn(|_| DMatrix::zeros(m, n)),
        }
    }

    /// Purely real matrix: `S0 = x`, imaginary planes zero.
    pub fn from_real(x: DMatrix<f64>) -> Self {
        let (m, n) = x.shape();
        QuaternionMatrix {
            planes: [x, DMatrix::zeros(m, n), DMatrix::zeros(m, n), DMatrix::zeros(m, n)],
        }
    }

    /// Builds a matrix entry by entry from `f(i, j)`.
    pub fn from_fn(m: usize, n: usize, mut f: impl FnMut(usize, usize) -> Quaternion) -> Self {
        let mut out = QuaternionMatrix::zeros(m, n);
        for j in 0..n {
            for i in 0..m {
                out.set(i, j, f(i, j));
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.planes[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.planes[0].ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.planes[0].shape()
    }

    /// `S_l(Q)`.
    pub fn component(&self, l: usize) -> &DMatrix<f64> {
        &self.planes[l]
    }

    pub fn planes(&self) -> &[DMatrix<f64>; 4] {
        &self.planes
    }

    pub fn into_planes(self) -> [DMatrix<f64>; 4] {
        self.planes
    }

    pub fn planes_mut(&mut self) -> &mut [DMatrix<f64>; 4] {
        &mut self.planes
    }

    pub fn get(&self, i: usize, j: usize) -> Quaternion {
        Quaternion::from_array(std::array::from_fn(|l| self.planes[l][(i, j)]))
    }

    pub fn set(&mut self, i: usize, j: usize, q: Quaternion) {
        for (l, v) in q.to_array().into_iter().enumerate() {
            self.planes[l][(i, j)] = v;
        }
    }

    pub fn column(&self, j: usize) -> QuaternionVector {
        QuaternionVector {
            planes: std::array::from_fn(|l| self.planes[l].column(j).into_owned()),
        }
    }

    /// Columns at `indices`, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> QuaternionMatrix {
        QuaternionMatrix {
            planes: std::array::from_fn(|l| self.planes[l].select_columns(indices)),
        }
    }

    /// Vertical stack `[S0; S1; S2; S3]`, a `4m x n` real matrix.
    pub fn mat_stack(&self) -> DMatrix<f64> {
        let (m, n) = self.shape();
        let mut out = DMatrix::zeros(4 * m, n);
        for (l, p) in self.planes.iter().enumerate() {
            out.view_mut((l * m, 0), (m, n)).copy_from(p);
        }
        out
    }

    /// Inverse of [`mat_stack`](Self::mat_stack).
    pub fn from_stack(x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() % 4 != 0 {
            return Err(SqmfError::dim("stacked rows", "multiple of 4", x.nrows()));
        }
        let m = x.nrows() / 4;
        Ok(QuaternionMatrix {
            planes: std::array::from_fn(|l| x.rows(l * m, m).into_owned()),
        })
    }

    /// `Q H` for a real `H`: each plane is `S_l(Q) H`.
    pub fn mul_real(&self, h: &DMatrix<f64>) -> Result<QuaternionMatrix> {
        if self.cols() != h.nrows() {
            return Err(SqmfError::dim("quaternion-by-real product", self.cols(), h.nrows()));
        }
        Ok(QuaternionMatrix {
            planes: std::array::from_fn(|l| &self.planes[l] * h),
        })
    }

    pub fn sub(&self, other: &QuaternionMatrix) -> Result<QuaternionMatrix> {
        if self.shape() != other.shape() {
            return Err(SqmfError::dim(
                "quaternion subtraction",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(QuaternionMatrix {
            planes: std::array::from_fn(|l| &self.planes[l] - &other.planes[l]),
        })
    }

    pub fn frobenius_norm_squared(&self) -> f64 {
        self.planes.iter().map(|p| p.norm_squared()).sum()
    }

    /// Frobenius norm, identical to the Frobenius norm of the stacked real matrix.
    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_squared().sqrt()
    }

    /// Quaternion two-norm of column `j`.
    pub fn column_norm(&self, j: usize) -> f64 {
        self.planes.iter().map(|p| p.column(j).norm_squared()).sum::<f64>().sqrt()
    }

    pub fn scale_column(&mut self, j: usize, factor: f64) {
        for p in self.planes.iter_mut() {
            p.column_mut(j).scale_mut(factor);
        }
    }

    /// Real matrix `sum_l S_l(self)^T S_l(other)`.
    pub fn cross_gram(&self, other: &QuaternionMatrix) -> Result<DMatrix<f64>> {
        if self.rows() != other.rows() {
            return Err(SqmfError::dim("cross gram", self.rows(), other.rows()));
        }
        let mut acc = DMatrix::zeros(self.cols(), other.cols());
        for (a, b) in self.planes.iter().zip(other.planes.iter()) {
            acc.gemm_tr(1.0, a, b, 1.0);
        }
        Ok(acc)
    }

    /// `sum_l S_l^T S_l`, the normal-equation matrix of the stacked problem.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.cols(), self.cols());
        for a in self.planes.iter() {
            acc.gemm_tr(1.0, a, a, 1.0);
        }
        acc
    }
}

/// Free-function form of [`QuaternionMatrix::mat_stack`].
pub fn mat_stack(q: &QuaternionMatrix) -> DMatrix<f64> {
    q.mat_stack()
}

/// Free-function form of [`QuaternionMatrix::mul_real`].
pub fn mul_real(q: &QuaternionMatrix, h: &DMatrix<f64>) -> Result<QuaternionMatrix> {
    q.mul_real(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::example_one;
    use proptest::prelude::*;

    #[test]
    fn inner_of_ones_is_length() {
        let a = QuaternionVector::from_entries(&[Quaternion::new(1.0, 0.0, 0.0, 0.0); 2]);
        assert_eq!(a.inner(&a).unwrap(), 2.0);
    }

    #[test]
    fn inner_of_full_unit_entry() {
        let a = QuaternionVector::from_entries(&[Quaternion::new(1.0, 1.0, 1.0, 1.0)]);
        assert_eq!(inner(&a, &a).unwrap(), 4.0);
    }

    #[test]
    fn inner_rejects_length_mismatch() {
        let a = QuaternionVector::zeros(2);
        let b = QuaternionVector::zeros(3);
        assert!(matches!(a.inner(&b), Err(SqmfError::Dimension { .. })));
    }

    #[test]
    fn norm2_examples() {
        assert_eq!(QuaternionVector::zeros(3).norm2(), 0.0);
        let q = QuaternionVector::from_entries(&[Quaternion::new(3.0, 4.0, 0.0, 0.0)]);
        assert_eq!(norm2(&q), 5.0);
    }

    #[test]
    fn stack_of_single_entry() {
        let q = QuaternionMatrix::from_fn(1, 1, |_, _| Quaternion::new(1.0, 2.0, 3.0, 4.0));
        let s = q.mat_stack();
        assert_eq!(s.shape(), (4, 1));
        assert_eq!(s.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn stack_of_identity_like() {
        let q = QuaternionMatrix::from_real(DMatrix::identity(2, 2));
        let s = mat_stack(&q);
        assert_eq!(s.shape(), (8, 2));
        assert_eq!(s.rows(0, 2), DMatrix::<f64>::identity(2, 2));
        assert!(s.rows(2, 6).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stack_of_example_one_keeps_intensity_on_top() {
        let m = example_one();
        let s = m.mat_stack();
        assert_eq!(s.shape(), (12, 5));
        assert_eq!(s.rows(0, 3).into_owned(), *m.component(0));
        assert_eq!(QuaternionMatrix::from_stack(&s).unwrap(), m);
    }

    #[test]
    fn vector_stack_is_m_by_four() {
        let q = QuaternionVector::from_entries(&[Quaternion::new(1.0, 2.0, 3.0, 4.0), Quaternion::new(5.0, 6.0, 7.0, 8.0)]);
        let s = q.mat_stack();
        assert_eq!(s.shape(), (2, 4));
        assert_eq!(s[(1, 2)], 7.0);
        assert!((s.norm() - q.norm2()).abs() < 1e-14);
    }

    #[test]
    fn mul_real_identity_and_mismatch() {
        let m = example_one();
        assert_eq!(m.mul_real(&DMatrix::identity(5, 5)).unwrap(), m);
        assert!(m.mul_real(&DMatrix::identity(4, 4)).is_err());
    }

    #[test]
    fn example_one_both_activations_reconstruct() {
        let m = example_one();
        let w = m.select_columns(&[0, 1, 2, 3]);
        for h in crate::fixtures::example_one_activations() {
            let rec = mul_real(&w, &h).unwrap();
            assert!(rec.sub(&m).unwrap().frobenius_norm() < 1e-12);
        }
    }

    #[test]
    fn conjugate_and_modulus() {
        let q = Quaternion::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(q.conjugate(), Quaternion::new(1.0, -2.0, -3.0, -4.0));
        assert_eq!(q.conjugate().conjugate(), q);
        assert_eq!(q.modulus(), 30f64.sqrt());
        assert_eq!(Quaternion::ZERO.modulus(), 0.0);
    }

    #[test]
    fn plane_dimension_check() {
        let r = QuaternionMatrix::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 2), DMatrix::zeros(2, 3), DMatrix::zeros(2, 2));
        assert!(r.is_err());
    }

    fn arb_qvec(len: usize) -> impl Strategy<Value = QuaternionVector> {
        proptest::collection::vec(-10.0f64..10.0, 4 * len).prop_map(move |v| {
            let entries: Vec<_> = v.chunks(4).map(|c| Quaternion::new(c[0], c[1], c[2], c[3])).collect();
            QuaternionVector::from_entries(&entries)
        })
    }

    proptest! {
        #[test]
        fn inner_matches_plane_dot_products(a in arb_qvec(5), b in arb_qvec(5)) {
            let mut brute = 0.0;
            for l in 0..4 {
                for i in 0..5 {
                    brute += a.component(l)[i] * b.component(l)[i];
                }
            }
            let v = a.inner(&b).unwrap();
            prop_assert!((v - brute).abs() <= 1e-12 * (1.0 + brute.abs()));
            prop_assert!((v - b.inner(&a).unwrap()).abs() <= 1e-12 * (1.0 + v.abs()));
        }

        #[test]
        fn norm2_is_frobenius_of_stack(q in arb_qvec(6)) {
            let frob = q.mat_stack().iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((q.norm2() - frob).abs() <= 1e-12 * (1.0 + frob));
        }

        #[test]
        fn inner_reduces_to_real_dot(x in proptest::collection::vec(-5.0f64..5.0, 4), y in proptest::collection::vec(-5.0f64..5.0, 4)) {
            let zero = DVector::zeros(4);
            let a = QuaternionVector::new(DVector::from_vec(x.clone()), zero.clone(), zero.clone(), zero.clone()).unwrap();
            let b = QuaternionVector::new(DVector::from_vec(y.clone()), zero.clone(), zero.clone(), zero).unwrap();
            let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
            prop_assert!((a.inner(&b).unwrap() - dot).abs() < 1e-12);
        }

        #[test]
        fn mul_real_commutes_with_components(
            q in proptest::collection::vec(-1.0f64..1.0, 4 * 3 * 2),
            h in proptest::collection::vec(-1.0f64..1.0, 2 * 4),
            g in proptest::collection::vec(-1.0f64..1.0, 2 * 4),
        ) {
            let planes: [DMatrix<f64>; 4] = std::array::from_fn(|l| DMatrix::from_column_slice(3, 2, &q[l * 6..(l + 1) * 6]));
            let qm = QuaternionMatrix::from_planes(planes).unwrap();
            let hm = DMatrix::from_column_slice(2, 4, &h);
            let gm = DMatrix::from_column_slice(2, 4, &g);
            let prod = qm.mul_real(&hm).unwrap();
            for l in 0..4 {
                let direct = qm.component(l) * &hm;
                prop_assert!((prod.component(l) - direct).norm() < 1e-12);
            }
            let sum = qm.mul_real(&(&hm + &gm)).unwrap();
            let split = qm.mul_real(&gm).unwrap();
            for l in 0..4 {
                prop_assert!((sum.component(l) - prod.component(l) - split.component(l)).norm() < 1e-12);
            }
        }
    }
}
