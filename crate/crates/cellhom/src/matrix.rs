//! Strain-gradient matrices and small helpers on them.
//!
//! Fields map a `d`-dimensional point to an `m`-vector, so gradients are
//! `m x d`. The Frobenius norm is the only matrix norm used anywhere; the
//! 2x2 determinant and trace are spelled out so the hyperelastic example's
//! inequality chain is evaluated with the exact arithmetic its tests freeze.

use nalgebra::DMatrix;
use rand::Rng;

/// Dense `m x d` matrix of strain-gradient entries.
pub type Matrix = DMatrix<f64>;

/// Frobenius norm `sqrt(sum xi_ij^2)`.
pub fn frobenius(xi: &Matrix) -> f64 {
    xi.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Trace of a square matrix.
pub fn trace(xi: &Matrix) -> f64 {
    assert_eq!(xi.nrows(), xi.ncols(), "trace of a non-square matrix");
    (0..xi.nrows()).map(|i| xi[(i, i)]).sum()
}

/// Determinant of a 2x2 matrix, by the closed formula.
pub fn det2(xi: &Matrix) -> f64 {
    assert_eq!((xi.nrows(), xi.ncols()), (2, 2));
    xi[(0, 0)] * xi[(1, 1)] - xi[(0, 1)] * xi[(1, 0)]
}

/// `I + xi` for square `xi`.
pub fn plus_identity(xi: &Matrix) -> Matrix {
    assert_eq!(xi.nrows(), xi.ncols());
    let mut m = xi.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += 1.0;
    }
    m
}

/// All entries finite (the basic well-formedness invariant).
pub fn entries_finite(xi: &Matrix) -> bool {
    xi.iter().all(|v| v.is_finite())
}

/// Random matrix with i.i.d. uniform entries in `[-radius, radius]`.
pub fn random_matrix<R: Rng>(rng: &mut R, m: usize, d: usize, radius: f64) -> Matrix {
    Matrix::from_fn(m, d, |_, _| rng.gen_range(-radius..=radius))
}

/// Quantizes entries to multiples of `quantum`; used as a memo key.
pub fn quantize(xi: &Matrix, quantum: f64) -> Vec<i64> {
    xi.iter().map(|v| (v / quantum).round() as i64).collect()
}
