//! Stiefel manifold primitives.
//!
//! Points are `n × C` matrices with orthonormal columns; tangent vectors at `U`
//! satisfy `VᵀU + UᵀV = 0`. The embedded (Euclidean) metric is used throughout.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SscError};
use crate::linalg::{check_same_shape, inv_sqrt_spd, sym};

/// Tolerance on `‖UᵀU − I‖_F` accepted for a point.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// A point on the Stiefel manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    u: DMatrix<f64>,
}

impl StiefelPoint {
    pub fn new(u: DMatrix<f64>) -> Result<Self> {
        let (n, c) = u.shape();
        if c == 0 || n < c {
            return Err(SscError::InvalidParameter(format!(
                "Stiefel point needs n >= C >= 1, got n={n}, C={c}"
            )));
        }
        let err = orthonormality_error(&u);
        if !(err <= ORTHONORMALITY_TOL) {
            return Err(SscError::Numerical {
                method: "stiefel point",
                detail: format!("‖UᵀU − I‖_F = {err:.3e}"),
            });
        }
        Ok(Self { u })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.u
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn c(&self) -> usize {
        self.u.ncols()
    }

    /// `U Uᵀ`.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.u * self.u.transpose()
    }
}

pub fn orthonormality_error(u: &DMatrix<f64>) -> f64 {
    let c = u.ncols();
    (u.transpose() * u - DMatrix::<f64>::identity(c, c)).norm()
}

/// A tangent vector. The base point is not stored; operations that take a
/// tangent direction also take the point it is attached to and re-check tangency.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentDirection {
    v: DMatrix<f64>,
}

impl TangentDirection {
    pub fn new(base: &StiefelPoint, v: DMatrix<f64>) -> Result<Self> {
        check_same_shape("tangent direction", base.matrix(), &v)?;
        let residual = a_operator(base, &v)?.norm();
        let scale = v.norm().max(1.0);
        if residual > 1e-8 * scale {
            return Err(SscError::Numerical {
                method: "tangent direction",
                detail: format!("‖VᵀU + UᵀV‖_F = {residual:.3e} is not tangent"),
            });
        }
        Ok(Self { v })
    }

    pub fn zero(base: &StiefelPoint) -> Self {
        Self {
            v: DMatrix::zeros(base.n(), base.c()),
        }
    }

    /// Skips the tangency check. Used where `V` is tangent by construction.
    pub(crate) fn from_tangent_unchecked(v: DMatrix<f64>) -> Self {
        Self { v }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.v
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { v: &self.v * s }
    }

    pub fn norm(&self) -> f64 {
        self.v.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Retraction {
    #[default]
    Polar,
    Qr,
    Cayley,
}

impl Retraction {
    pub const ALL: [Retraction; 3] = [Retraction::Polar, Retraction::Qr, Retraction::Cayley];

    pub fn name(self) -> &'static str {
        match self {
            Retraction::Polar => "polar",
            Retraction::Qr => "qr",
            Retraction::Cayley => "cayley",
        }
    }
}

impl std::str::FromStr for Retraction {
    type Err = SscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polar" => Ok(Retraction::Polar),
            "qr" => Ok(Retraction::Qr),
            "cayley" => Ok(Retraction::Cayley),
            other => Err(SscError::InvalidParameter(format!("unknown retraction {other:?}"))),
        }
    }
}

/// Orthogonal projection onto the tangent space: `Z − U sym(UᵀZ)`.
pub fn project_tangent(u: &StiefelPoint, z: &DMatrix<f64>) -> Result<TangentDirection> {
    check_same_shape("project_tangent", u.matrix(), z)?;
    Ok(TangentDirection {
        v: project_tangent_raw(u.matrix(), z),
    })
}

pub(crate) fn project_tangent_raw(u: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let utz = u.transpose() * z;
    z - u * sym(&utz)
}

/// The constraint operator `V ↦ VᵀU + UᵀV`.
pub fn a_operator(u: &StiefelPoint, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_same_shape("a_operator", u.matrix(), v)?;
    Ok(a_operator_raw(u.matrix(), v))
}

pub(crate) fn a_operator_raw(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let utv = u.transpose() * v;
    &utv + utv.transpose()
}

/// Adjoint of [`a_operator`]: `Γ ↦ U(Γ + Γᵀ)`.
pub fn a_adjoint(u: &StiefelPoint, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = u.c();
    if gamma.shape() != (c, c) {
        return Err(SscError::dim(
            "a_adjoint",
            format!("({c}, {c})"),
            format!("{:?}", gamma.shape()),
        ));
    }
    Ok(a_adjoint_raw(u.matrix(), gamma))
}

pub(crate) fn a_adjoint_raw(u: &DMatrix<f64>, gamma: &DMatrix<f64>) -> DMatrix<f64> {
    u * (gamma + gamma.transpose())
}

/// Maps a tangent vector back onto the manifold.
pub fn retract(u: &StiefelPoint, xi: &TangentDirection, method: Retraction) -> Result<StiefelPoint> {
    check_same_shape("retract", u.matrix(), xi.matrix())?;
    let x = u.matrix();
    let v = xi.matrix();
    let out = match method {
        Retraction::Polar => {
            // (U+ξ)ᵀ(U+ξ) equals I + ξᵀξ on the manifold; using the Gram
            // matrix itself also removes rounding drift in UᵀU.
            let y = x + v;
            let m = y.transpose() * &y;
            y * inv_sqrt_spd(&m)?
        }
        Retraction::Qr => q_factor(x + v),
        Retraction::Cayley => {
            let y = cayley(x, v)?;
            let m = y.transpose() * &y;
            y * inv_sqrt_spd(&m)?
        }
    };
    StiefelPoint::new(out).map_err(|e| match e {
        SscError::Numerical { detail, .. } => SscError::Numerical {
            method: method.name(),
            detail,
        },
        other => other,
    })
}

/// Q factor of a thin QR with the sign convention `diag(R) > 0`.
fn q_factor(a: DMatrix<f64>) -> DMatrix<f64> {
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn cayley(x: &DMatrix<f64>, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    // W = A − Aᵀ with A = (I − ½XXᵀ) ξ Xᵀ.
    let xt_xi = x.transpose() * xi;
    let left = xi - x * (xt_xi * 0.5);
    let a = left * x.transpose();
    let w = &a - a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let lhs = &eye - &w * 0.5;
    let rhs = (&eye + &w * 0.5) * x;
    let lu = lhs.lu();
    lu.solve(&rhs).ok_or_else(|| SscError::Numerical {
        method: "cayley",
        detail: "I − W/2 is singular; retry with the polar retraction".into(),
    })
}

/// Deterministic random point: orthonormalized standard-Gaussian matrix.
pub fn random_point(n: usize, c: usize, seed: u64) -> Result<StiefelPoint> {
    if c == 0 || n < c {
        return Err(SscError::InvalidParameter(format!(
            "random_point needs n >= C >= 1, got n={n}, C={c}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, c, |_, _| StandardNormal.sample(&mut rng));
    StiefelPoint::new(q_factor(g))
}
