//! Small hand-checked matrices used by tests and the CLI self-check.

use nalgebra::DMatrix;

use crate::quat::QuaternionMatrix;

/// The 3x5 constrained quaternion matrix that is 4-separable with
/// `W = M(:, 0..4)` while `rank(mat(M)) = 3`, so its activation matrix is not
/// unique.
pub fn example_one() -> QuaternionMatrix {
    let s0 = DMatrix::from_row_slice(3, 5, &[
        1.0, 1.0, 1.0, 0.5, 0.9,
        0.5, 1.0, 1.0, 0.75, 0.85,
        0.5, 0.5, 1.0, 0.5, 0.65,
    ]);
    let s1 = DMatrix::from_row_slice(3, 5, &[
        0.45, 0.4, 0.1, 0.025, 0.245,
        -0.05, 0.3, 0.4, 0.375, 0.275,
        0.15, 0.15, 0.25, 0.125, 0.175,
    ]);
    let s2 = DMatrix::from_row_slice(3, 5, &[
        -0.1, 0.2, 0.3, 0.3, 0.19,
        0.04, -0.5, -0.6, -0.57, -0.436,
        0.07, 0.08, 0.9, 0.455, 0.399,
    ]) * 0.5;
    let s3 = DMatrix::from_row_slice(3, 5, &[
        0.1, -0.4, 0.7, 0.1, 0.13,
        -0.02, 0.5, 0.8, 0.66, 0.518,
        0.03, 0.06, 0.9, 0.465, 0.387,
    ]) * 0.5;
    QuaternionMatrix::new(s0, s1, s2, s3).expect("fixture planes share a shape")
}

/// Two different nonnegative activations that both reconstruct
/// [`example_one`] from its first four columns.
pub fn example_one_activations() -> [DMatrix<f64>; 2] {
    let a = DMatrix::from_row_slice(4, 5, &[
        1.0, 0.0, 0.0, 0.0, 0.1,
        0.0, 1.0, 0.0, 0.0, 0.4,
        0.0, 0.0, 1.0, 0.0, 0.4,
        0.0, 0.0, 0.0, 1.0, 0.0,
    ]);
    let b = DMatrix::from_row_slice(4, 5, &[
        1.0, 0.0, 0.0, 0.0, 0.3,
        0.0, 1.0, 0.0, 0.0, 0.2,
        0.0, 0.0, 1.0, 0.0, 0.2,
        0.0, 0.0, 0.0, 1.0, 0.4,
    ]);
    [a, b]
}
