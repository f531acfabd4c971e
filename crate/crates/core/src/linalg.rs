//! Small dense helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SscError};

/// Frobenius inner product.
#[inline]
pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Symmetric part `(A + Aᵀ)/2`.
pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn l1_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).norm()
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted ascending
/// and eigenvectors in matching column order.
pub fn sorted_eigh(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = a.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(a.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvectors of the `k` smallest eigenvalues, as an `n × k` matrix.
pub fn smallest_eigenvectors(a: &DMatrix<f64>, k: usize) -> (DVector<f64>, DMatrix<f64>) {
    let (values, vectors) = sorted_eigh(a);
    (
        values.rows(0, k).into_owned(),
        vectors.columns(0, k).into_owned(),
    )
}

/// Eigenvectors of the `k` largest eigenvalues, largest first.
pub fn largest_eigenvectors(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (_, vectors) = sorted_eigh(a);
    let n = vectors.ncols();
    let mut out = DMatrix::zeros(a.nrows(), k);
    for j in 0..k {
        out.set_column(j, &vectors.column(n - 1 - j));
    }
    out
}

/// Spectral norm of a symmetric matrix.
pub fn sym_spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `A^{-1/2}` for a symmetric positive definite matrix.
pub fn inv_sqrt_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = sorted_eigh(a);
    if values[0] <= 0.0 {
        return Err(SscError::Numerical {
            method: "inverse square root",
            detail: format!("matrix not positive definite (min eigenvalue {:.3e})", values[0]),
        });
    }
    let scaled = DMatrix::from_fn(vectors.nrows(), vectors.ncols(), |i, j| {
        vectors[(i, j)] / values[j].sqrt()
    });
    Ok(scaled * vectors.transpose())
}

/// Re-orthonormalizes nearly orthonormal columns so the strict Stiefel
/// tolerance holds.
pub(crate) fn orthonormalize(u: DMatrix<f64>) -> DMatrix<f64> {
    let g = u.transpose() * &u;
    match inv_sqrt_spd(&g) {
        Ok(s) => u * s,
        Err(_) => u,
    }
}

/// `U Uᵀ`.
pub fn outer_gram(u: &DMatrix<f64>) -> DMatrix<f64> {
    u * u.transpose()
}

pub(crate) fn check_same_shape(
    context: &'static str,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(SscError::dim(
            context,
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    Ok(())
}

pub(crate) fn check_square(context: &'static str, a: &DMatrix<f64>, n: usize) -> Result<()> {
    if a.nrows() != n || a.ncols() != n {
        return Err(SscError::dim(
            context,
            format!("({n}, {n})"),
            format!("{:?}", a.shape()),
        ));
    }
    Ok(())
}
