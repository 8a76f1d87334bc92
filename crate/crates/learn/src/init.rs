//! Orthogonal weight initialization.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::real::Real;

/// Row-major `rows × cols` matrix with orthonormal rows or columns
/// (whichever is fewer), scaled by `gain`.
pub fn orthogonal<T: Real, R: Rng>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<T> {
    let (big, small) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(big, small, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign fix makes the distribution uniform over orthogonal matrices
    for j in 0..small {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
            out.push(T::of(gain * v));
        }
    }
    out
}
