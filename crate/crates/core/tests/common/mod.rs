#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// `I − D^{-1/2} S D^{-1/2}` for a dense random affinity `S`.
pub fn random_laplacian(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng(seed);
    let mut s = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
    s = (&s + s.transpose()) * 0.5;
    s.fill_diagonal(0.0);
    let d: Vec<f64> = (0..n).map(|i| s.row(i).sum().sqrt()).collect();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - s[(i, j)] / (d[i] * d[j]))
}

/// Ascending eigenvalues straight from nalgebra.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `‖UUᵀ‖₁` written out entrywise.
pub fn l1(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x.abs()).sum()
}
