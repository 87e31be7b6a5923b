//! Dense reference implementations shared by the integration tests.
#![allow(dead_code)]

use didweak_core::data::Categorical;
use didweak_core::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type M = DMatrix<f64>;
pub type V = DVector<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(g: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| g.sample(StandardNormal)).collect()
}

pub fn cols(n: usize, c: &[&[f64]]) -> M {
    M::from_fn(n, c.len(), |i, j| c[j][i])
}

/// Indicator columns for each level, dropping the first when `drop_first`.
pub fn dummies(codes: &[u32], n_levels: usize, drop_first: bool) -> Vec<Vec<f64>> {
    let start = if drop_first { 1 } else { 0 };
    (start..n_levels)
        .map(|l| codes.iter().map(|&c| if c as usize == l { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// `(X'WX)^{-1}` and the normal-equation solution, by LU.
pub fn normal_equations(x: &M, y: &[f64], w: Option<&[f64]>) -> (V, M) {
    let n = x.nrows();
    let wv: Vec<f64> = w.map_or(vec![1.0; n], |w| w.to_vec());
    let mut xw = x.clone();
    for i in 0..n {
        for j in 0..x.ncols() {
            xw[(i, j)] *= wv[i];
        }
    }
    let xtx = x.transpose() * &xw;
    let inv = xtx.clone().lu().try_inverse().expect("singular oracle design");
    let beta = &inv * (xw.transpose() * V::from_column_slice(y));
    (beta, inv)
}

/// CR1 sandwich computed observation by observation.
pub fn sandwich(x: &M, bread: &M, e: &[f64], w: Option<&[f64]>, cl: &[u32], k: usize) -> M {
    let n = x.nrows();
    let g = *cl.iter().max().unwrap() as usize + 1;
    let mut meat = M::zeros(x.ncols(), x.ncols());
    for c in 0..g {
        let mut s = V::zeros(x.ncols());
        for i in 0..n {
            if cl[i] as usize == c {
                let wi = w.map_or(1.0, |w| w[i]);
                for j in 0..x.ncols() {
                    s[j] += wi * x[(i, j)] * e[i];
                }
            }
        }
        meat += &s * s.transpose();
    }
    let present = {
        let mut v = cl.to_vec();
        v.sort();
        v.dedup();
        v.len() as f64
    };
    let f = present / (present - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64);
    bread * meat * bread * f
}

pub fn codes(data: &Dataset, name: &str) -> Categorical {
    data.codes(name).unwrap()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!(close(a, b, tol), "{what}: {a} vs {b}");
}
