//! Stokes-parameter semantics for quaternion entries.
//!
//! A Stokes vector `(S0, S1, S2, S3)` is physically valid when `S0 >= 0` and
//! `S1^2 + S2^2 + S3^2 <= S0^2`. The set of quaternions satisfying this is a
//! convex cone, so nonnegative mixtures of valid sources stay valid.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SqmfError};
use crate::quat::{Quaternion, QuaternionMatrix};

/// Default absolute tolerance for constraint membership.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub fn new(s0: f64, s1: f64, s2: f64, s3: f64) -> Self {
        StokesVector { s0, s1, s2, s3 }
    }

    pub fn to_quaternion(self) -> Quaternion {
        Quaternion::new(self.s0, self.s1, self.s2, self.s3)
    }

    pub fn is_valid(self, tol: f64) -> bool {
        is_constrained(self.to_quaternion(), tol)
    }
}

impl From<Quaternion> for StokesVector {
    fn from(q: Quaternion) -> Self {
        StokesVector::new(q.q0, q.q1, q.q2, q.q3)
    }
}

impl From<StokesVector> for Quaternion {
    fn from(s: StokesVector) -> Self {
        s.to_quaternion()
    }
}

/// Polarization-ellipse parameterization of a Stokes vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseParams {
    /// Total intensity.
    pub s0: f64,
    /// Degree of polarization in `[0, 1]`.
    pub phi: f64,
    /// Orientation angle (radians).
    pub psi: f64,
    /// Ellipticity angle (radians).
    pub chi: f64,
}

/// Entrywise scan of a quaternion matrix against the Stokes constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub total: usize,
    pub violations: usize,
    /// Largest `S1^2 + S2^2 + S3^2 - S0^2` over all entries.
    pub worst_excess: f64,
    pub negative_intensity: usize,
}

impl ConstraintReport {
    pub fn is_clean(&self) -> bool {
        self.violations == 0
    }
}

/// The coherency matrix `J = 1/2 [[S0+S2, S3+iS1], [S3-iS1, S0-S2]]`, stored
/// as its two real diagonal entries and the upper off-diagonal entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coherency {
    pub j11: f64,
    pub j22: f64,
    pub re_j12: f64,
    pub im_j12: f64,
}

impl Coherency {
    pub fn trace(&self) -> f64 {
        self.j11 + self.j22
    }

    /// `j11 j22 - |j12|^2`.
    pub fn det(&self) -> f64 {
        self.j11 * self.j22 - (self.re_j12 * self.re_j12 + self.im_j12 * self.im_j12)
    }

    /// Positive semi-definiteness of a 2x2 Hermitian matrix.
    pub fn is_psd(&self) -> bool {
        self.trace() >= 0.0 && self.det() >= 0.0
    }
}

/// `q0 >= -tol` and `q1^2 + q2^2 + q3^2 <= q0^2 + tol`.
pub fn is_constrained(q: Quaternion, tol: f64) -> bool {
    q.q0 >= -tol && q.imag_norm_squared() <= q.q0 * q.q0 + tol
}

/// Ratio of polarized to total intensity.
pub fn degree_of_polarization(q: Quaternion) -> Result<f64> {
    if q.q0 <= 0.0 {
        return Err(SqmfError::Domain(format!(
            "degree of polarization needs positive intensity, got {}",
            q.q0
        )));
    }
    Ok(q.imag_norm_squared().sqrt() / q.q0)
}

pub fn coherency_matrix(q: Quaternion) -> Coherency {
    Coherency {
        j11: 0.5 * (q.q0 + q.q2),
        j22: 0.5 * (q.q0 - q.q2),
        re_j12: 0.5 * q.q3,
        im_j12: 0.5 * q.q1,
    }
}

pub fn from_ellipse(p: EllipseParams) -> StokesVector {
    let amp = p.phi * p.s0;
    let (s2psi, c2psi) = (2.0 * p.psi).sin_cos();
    let (s2chi, c2chi) = (2.0 * p.chi).sin_cos();
    StokesVector::new(p.s0, amp * c2psi * c2chi, amp * s2psi * c2chi, amp * s2chi)
}

/// Scales `(q1, q2, q3)` down by whole ulps until it satisfies the cone
/// inequality in floating point. Meant for triples already on the boundary
/// up to rounding.
pub(crate) fn settle_on_cone(q0: f64, imag: [&mut f64; 3]) {
    let [a, b, c] = imag;
    let mut shrink = 1.0;
    while *a * *a + *b * *b + *c * *c > q0 * q0 {
        shrink *= 1.0 - 2.0 * f64::EPSILON;
        *a *= shrink;
        *b *= shrink;
        *c *= shrink;
    }
}

pub fn validate_matrix(q: &QuaternionMatrix, tol: f64) -> ConstraintReport {
    let (m, n) = q.shape();
    let mut report = ConstraintReport {
        total: m * n,
        violations: 0,
        worst_excess: f64::NEG_INFINITY,
        negative_intensity: 0,
    };
    for j in 0..n {
        for i in 0..m {
            let e = q.get(i, j);
            let excess = e.imag_norm_squared() - e.q0 * e.q0;
            report.worst_excess = report.worst_excess.max(excess);
            if e.q0 < -tol {
                report.negative_intensity += 1;
            }
            if !is_constrained(e, tol) {
                report.violations += 1;
            }
        }
    }
    if report.total == 0 {
        report.worst_excess = 0.0;
    }
    report
}
