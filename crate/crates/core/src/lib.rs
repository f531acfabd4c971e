//! Sparse spectral clustering on the Stiefel manifold.
//!
//! The manifold proximal linear method ([`manpl`]) and its multiple-kernel
//! alternating variant ([`amanpl`]) solve
//! `min ⟨UUᵀ, L⟩ + λ‖UUᵀ‖₁` over orthonormal `U`. Each step solves a convex
//! tangent-space subproblem with a proximal point loop whose inner problem
//! is handled by a semismooth Newton method ([`subsolver`]).

pub mod amanpl;
pub mod baselines;
pub mod error;
pub mod evalsynth;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod manpl;
pub mod prox;
pub mod stiefel;
pub mod subsolver;

pub use error::{Result, SscError};
