//! Nonsmooth toolbox: the ℓ1 penalty, its proximal maps, the Huber-type
//! smoothing `g_σ` and the entropy-regularized simplex minimizer.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SscError};

/// Strictly positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(SscError::EmptyInput("simplex weights".into()));
        }
        let sum: f64 = w.iter().sum();
        if w.iter().any(|&x| !(x > 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(SscError::InvalidParameter(format!(
                "weights must be positive and sum to 1 (sum = {sum})"
            )));
        }
        Ok(Self(w))
    }

    pub fn uniform(t: usize) -> Self {
        Self(vec![1.0 / t as f64; t])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `Σ w log w` with `0 log 0 = 0`.
    pub fn neg_entropy(&self) -> f64 {
        self.0
            .iter()
            .map(|&w| if w > 0.0 { w * w.ln() } else { 0.0 })
            .sum()
    }

    pub fn l1_distance(&self, other: &SimplexWeights) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// `λ‖Z‖₁`.
pub fn h_value(z: &DMatrix<f64>, lambda: f64) -> f64 {
    lambda * z.iter().map(|x| x.abs()).sum::<f64>()
}

#[inline]
pub fn soft_threshold(z: f64, tau: f64) -> f64 {
    if z > tau {
        z - tau
    } else if z < -tau {
        z + tau
    } else {
        0.0
    }
}

/// Proximal map of `τ‖·‖₁` (entrywise soft threshold).
pub fn prox_l1(z: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    z.map(|x| soft_threshold(x, tau))
}

/// Proximal map of `h*/β` for `h = λ‖·‖₁`: projection onto the ℓ∞ ball of
/// radius λ. `β` drops out because `h*` is an indicator.
pub fn prox_l1_conj(z: &DMatrix<f64>, lambda: f64, beta: f64) -> DMatrix<f64> {
    debug_assert!(beta > 0.0);
    z.map(|x| x.clamp(-lambda, lambda))
}

/// Smoothed ℓ1: value and gradient of `g_σ(P) = max_{‖Z‖∞≤λ} ⟨P,Z⟩ − σ‖Z‖²/2`.
pub fn g_sigma(p: &DMatrix<f64>, lambda: f64, sigma: f64) -> Result<(f64, DMatrix<f64>)> {
    if !(sigma > 0.0) {
        return Err(SscError::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    let cut = sigma * lambda;
    let value = p
        .iter()
        .map(|&x| {
            if x.abs() <= cut {
                x * x / (2.0 * sigma)
            } else {
                lambda * x.abs() - sigma * lambda * lambda / 2.0
            }
        })
        .sum();
    let grad = p.map(|x| (x / sigma).clamp(-lambda, lambda));
    Ok((value, grad))
}

/// Minimizer of `cᵀw + ρ Σ w log w` over the probability simplex,
/// `w ∝ exp(−c/ρ)`, evaluated with max-subtraction.
pub fn entropy_simplex_argmin(c: &[f64], rho: f64) -> Result<SimplexWeights> {
    if !(rho > 0.0) {
        return Err(SscError::InvalidParameter(format!("rho must be > 0, got {rho}")));
    }
    if c.is_empty() {
        return Err(SscError::EmptyInput("kernel cost vector".into()));
    }
    let logits: Vec<f64> = c.iter().map(|&x| -x / rho).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logits
        .iter()
        .map(|&l| (l - max).exp().max(f64::MIN_POSITIVE))
        .collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    SimplexWeights::new(w)
}

/// Objective of the weight subproblem, `cᵀw + ρ Σ w log w`.
pub fn simplex_objective(c: &[f64], w: &[f64], rho: f64) -> f64 {
    c.iter()
        .zip(w)
        .map(|(&ci, &wi)| ci * wi + if wi > 0.0 { rho * wi * wi.ln() } else { 0.0 })
        .sum()
}
