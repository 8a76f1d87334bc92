//! Layers with hand-written backward passes. Each layer only stores the
//! indices of its tensors inside a [`ParamSet`]; forward passes return the
//! cache their backward pass needs.
//!
//! Dense activations are sample-major (`batch × features`). Convolutions use
//! channel-major activations (`channels × batch × h × w`) so one im2col GEMM
//! covers the whole batch.

use rand::Rng;

use crate::init::orthogonal;
use crate::params::ParamSet;
use crate::real::{matmul, Real};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<T: Real, R: Rng>(ps: &mut ParamSet<T>, name: &str, input: usize, output: usize, gain: f64, rng: &mut R) -> Self {
        let w = ps.add(format!("{name}.weight"), vec![output, input], orthogonal(output, input, gain, rng));
        let b = ps.add(format!("{name}.bias"), vec![output], vec![T::zero(); output]);
        Self { w, b, input, output }
    }

    pub fn forward<T: Real>(&self, ps: &ParamSet<T>, x: &[T], batch: usize) -> Vec<T> {
        let mut y = vec![T::zero(); batch * self.output];
        matmul(batch, self.input, self.output, x, false, ps.get(self.w), true, &mut y, T::zero());
        let b = ps.get(self.b);
        for row in y.chunks_mut(self.output) {
            for (v, &bb) in row.iter_mut().zip(b) {
                *v += bb;
            }
        }
        y
    }

    /// Accumulates parameter gradients (when `grads` is given) and returns `dL/dx`.
    pub fn backward<T: Real>(&self, ps: &ParamSet<T>, grads: Option<&mut ParamSet<T>>, x: &[T], dy: &[T], batch: usize) -> Vec<T> {
        if let Some(g) = grads {
            matmul(self.output, batch, self.input, dy, true, x, false, g.get_mut(self.w), T::one());
            let gb = g.get_mut(self.b);
            for row in dy.chunks(self.output) {
                for (acc, &d) in gb.iter_mut().zip(row) {
                    *acc += d;
                }
            }
        }
        let mut dx = vec![T::zero(); batch * self.input];
        matmul(batch, self.output, self.input, dy, false, ps.get(self.w), false, &mut dx, T::zero());
        dx
    }
}

/// 3×3, stride 1, no padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3 {
    pub w: usize,
    pub b: usize,
    pub cin: usize,
    pub cout: usize,
}

pub struct ConvCache<T> {
    cols: Vec<T>,
    h: usize,
    w: usize,
}

impl Conv3x3 {
    pub fn new<T: Real, R: Rng>(ps: &mut ParamSet<T>, name: &str, cin: usize, cout: usize, gain: f64, rng: &mut R) -> Self {
        let w = ps.add(format!("{name}.weight"), vec![cout, cin, 3, 3], orthogonal(cout, cin * 9, gain, rng));
        let b = ps.add(format!("{name}.bias"), vec![cout], vec![T::zero(); cout]);
        Self { w, b, cin, cout }
    }

    /// `x`: `cin × batch × h × w`; returns `cout × batch × (h−2) × (w−2)`.
    pub fn forward<T: Real>(&self, ps: &ParamSet<T>, x: &[T], batch: usize, h: usize, w: usize) -> (Vec<T>, ConvCache<T>) {
        assert_eq!(x.len(), self.cin * batch * h * w, "conv input size");
        let (ho, wo) = (h - 2, w - 2);
        let n = batch * ho * wo;
        let rows = self.cin * 9;
        let mut cols = vec![T::zero(); rows * n];
        for c in 0..self.cin {
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = &mut cols[((c * 9) + ky * 3 + kx) * n..][..n];
                    for b in 0..batch {
                        let plane = &x[(c * batch + b) * h * w..][..h * w];
                        let dst = &mut row[b * ho * wo..][..ho * wo];
                        for oy in 0..ho {
                            dst[oy * wo..(oy + 1) * wo].copy_from_slice(&plane[(oy + ky) * w + kx..][..wo]);
                        }
                    }
                }
            }
        }
        let mut out = vec![T::zero(); self.cout * n];
        matmul(self.cout, rows, n, ps.get(self.w), false, &cols, false, &mut out, T::zero());
        for (row, &bb) in out.chunks_mut(n).zip(ps.get(self.b)) {
            row.iter_mut().for_each(|v| *v += bb);
        }
        (out, ConvCache { cols, h, w })
    }

    /// Returns `dL/dx` when `need_dx`.
    pub fn backward<T: Real>(&self, ps: &ParamSet<T>, grads: &mut ParamSet<T>, cache: &ConvCache<T>, dout: &[T], batch: usize, need_dx: bool) -> Option<Vec<T>> {
        let (h, w) = (cache.h, cache.w);
        let (ho, wo) = (h - 2, w - 2);
        let n = batch * ho * wo;
        let rows = self.cin * 9;
        matmul(self.cout, n, rows, dout, false, &cache.cols, true, grads.get_mut(self.w), T::one());
        for (acc, row) in grads.get_mut(self.b).iter_mut().zip(dout.chunks(n)) {
            *acc += row.iter().copied().sum();
        }
        if !need_dx {
            return None;
        }
        let mut dcols = vec![T::zero(); rows * n];
        matmul(rows, self.cout, n, ps.get(self.w), true, dout, false, &mut dcols, T::zero());
        let mut dx = vec![T::zero(); self.cin * batch * h * w];
        for c in 0..self.cin {
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = &dcols[((c * 9) + ky * 3 + kx) * n..][..n];
                    for b in 0..batch {
                        let plane = &mut dx[(c * batch + b) * h * w..][..h * w];
                        let src = &row[b * ho * wo..][..ho * wo];
                        for oy in 0..ho {
                            let dst = &mut plane[(oy + ky) * w + kx..][..wo];
                            for (d, &s) in dst.iter_mut().zip(&src[oy * wo..(oy + 1) * wo]) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
        Some(dx)
    }
}

/// Per-sample layer normalization with learned gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub g: usize,
    pub b: usize,
    pub dim: usize,
}

pub struct LnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl LayerNorm {
    pub fn new<T: Real>(ps: &mut ParamSet<T>, name: &str, dim: usize) -> Self {
        let g = ps.add(format!("{name}.gain"), vec![dim], vec![T::one(); dim]);
        let b = ps.add(format!("{name}.bias"), vec![dim], vec![T::zero(); dim]);
        Self { g, b, dim }
    }

    pub fn forward<T: Real>(&self, ps: &ParamSet<T>, x: &[T]) -> (Vec<T>, LnCache<T>) {
        let d = self.dim;
        let dn = T::of(d as f64);
        let (g, bias) = (ps.get(self.g), ps.get(self.b));
        let mut y = vec![T::zero(); x.len()];
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std = Vec::with_capacity(x.len() / d);
        for ((row, yrow), hrow) in x.chunks(d).zip(y.chunks_mut(d)).zip(xhat.chunks_mut(d)) {
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let is = T::one() / (var + T::of(LN_EPS)).sqrt();
            for i in 0..d {
                hrow[i] = (row[i] - mean) * is;
                yrow[i] = hrow[i] * g[i] + bias[i];
            }
            inv_std.push(is);
        }
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward<T: Real>(&self, ps: &ParamSet<T>, grads: Option<&mut ParamSet<T>>, cache: &LnCache<T>, dy: &[T]) -> Vec<T> {
        let d = self.dim;
        let dn = T::of(d as f64);
        let g = ps.get(self.g);
        if let Some(gr) = grads {
            let mut dg = vec![T::zero(); d];
            let mut db = vec![T::zero(); d];
            for (drow, hrow) in dy.chunks(d).zip(cache.xhat.chunks(d)) {
                for i in 0..d {
                    dg[i] += drow[i] * hrow[i];
                    db[i] += drow[i];
                }
            }
            gr.get_mut(self.g).iter_mut().zip(dg).for_each(|(a, v)| *a += v);
            gr.get_mut(self.b).iter_mut().zip(db).for_each(|(a, v)| *a += v);
        }
        let mut dx = vec![T::zero(); dy.len()];
        for (((drow, hrow), xrow), &is) in dy.chunks(d).zip(cache.xhat.chunks(d)).zip(dx.chunks_mut(d)).zip(&cache.inv_std) {
            let dh: Vec<T> = (0..d).map(|i| drow[i] * g[i]).collect();
            let mean_dh = dh.iter().copied().sum::<T>() / dn;
            let mean_dh_h = dh.iter().zip(hrow).map(|(&a, &b)| a * b).sum::<T>() / dn;
            for i in 0..d {
                xrow[i] = is * (dh[i] - mean_dh - hrow[i] * mean_dh_h);
            }
        }
        dx
    }
}

pub fn relu<T: Real>(x: &mut [T]) {
    x.iter_mut().for_each(|v| *v = v.max(T::zero()));
}

/// Zeroes `dy` where the (post-activation) output was not positive.
pub fn relu_backward<T: Real>(out: &[T], dy: &mut [T]) {
    for (d, &o) in dy.iter_mut().zip(out) {
        if o <= T::zero() {
            *d = T::zero();
        }
    }
}

pub fn tanh<T: Real>(x: &mut [T]) {
    x.iter_mut().for_each(|v| *v = v.tanh());
}

pub fn tanh_backward<T: Real>(out: &[T], dy: &mut [T]) {
    for (d, &o) in dy.iter_mut().zip(out) {
        *d *= T::one() - o * o;
    }
}

pub fn sigmoid<T: Real>(x: &mut [T]) {
    x.iter_mut().for_each(|v| *v = T::one() / (T::one() + (-*v).exp()));
}

pub fn sigmoid_backward<T: Real>(out: &[T], dy: &mut [T]) {
    for (d, &o) in dy.iter_mut().zip(out) {
        *d *= o * (T::one() - o);
    }
}

/// Row-wise concatenation of two sample-major matrices.
pub fn concat<T: Real>(a: &[T], a_dim: usize, b: &[T], b_dim: usize, batch: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(batch * (a_dim + b_dim));
    for i in 0..batch {
        out.extend_from_slice(&a[i * a_dim..(i + 1) * a_dim]);
        out.extend_from_slice(&b[i * b_dim..(i + 1) * b_dim]);
    }
    out
}

/// Inverse of [`concat`].
pub fn split<T: Real>(x: &[T], a_dim: usize, b_dim: usize, batch: usize) -> (Vec<T>, Vec<T>) {
    let mut a = Vec::with_capacity(batch * a_dim);
    let mut b = Vec::with_capacity(batch * b_dim);
    for row in x.chunks(a_dim + b_dim) {
        a.extend_from_slice(&row[..a_dim]);
        b.extend_from_slice(&row[a_dim..]);
    }
    (a, b)
}
