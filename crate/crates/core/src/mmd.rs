//! Maximum mean discrepancy: the coefficient matrix `L`, the kernel trace
//! form `tr(KL)` and the direct latent-space form.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TlrError};
use crate::kernel::JointKernel;

/// Rounding slack below zero tolerated by [`mmd_trace`], relative to
/// `max(1, max|K|)`.
pub const NEGATIVE_TRACE_TOL: f64 = 1e-10;

/// `L = v vᵀ` with `v_i = 1/n1` on source rows and `-1/n2` on target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MmdMatrix {
    matrix: DMatrix<f64>,
    n_source: usize,
    n_target: usize,
}

impl MmdMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    pub fn n_target(&self) -> usize {
        self.n_target
    }

    pub fn size(&self) -> usize {
        self.n_source + self.n_target
    }

    /// The signed mean-difference vector whose outer product is `L`.
    pub fn coefficient_vector(&self) -> DVector<f64> {
        mean_difference_vector(self.n_source, self.n_target)
    }
}

fn mean_difference_vector(n1: usize, n2: usize) -> DVector<f64> {
    DVector::from_fn(n1 + n2, |i, _| if i < n1 { 1.0 / n1 as f64 } else { -1.0 / n2 as f64 })
}

pub fn mmd_matrix(n_source: usize, n_target: usize) -> Result<MmdMatrix> {
    if n_source == 0 || n_target == 0 {
        return Err(TlrError::InvalidArgument(format!(
            "MMD matrix needs non-empty domains, got n1={n_source}, n2={n_target}"
        )));
    }
    let (a, b) = (n_source as f64, n_target as f64);
    let ss = 1.0 / (a * a);
    let tt = 1.0 / (b * b);
    let st = -1.0 / (a * b);
    let m = n_source + n_target;
    let matrix = DMatrix::from_fn(m, m, |i, j| match (i < n_source, j < n_source) {
        (true, true) => ss,
        (false, false) => tt,
        _ => st,
    });
    Ok(MmdMatrix {
        matrix,
        n_source,
        n_target,
    })
}

/// `tr(K L)`, the squared RKHS distance between the domain means.
///
/// Small negative values from rounding are clamped to zero; anything more
/// negative means `K` was not positive semidefinite.
pub fn mmd_trace(k: &JointKernel, l: &MmdMatrix) -> Result<f64> {
    if k.n_source() != l.n_source() || k.n_target() != l.n_target() {
        return Err(TlrError::DimensionMismatch(format!(
            "kernel is ({}, {}), MMD matrix is ({}, {})",
            k.n_source(),
            k.n_target(),
            l.n_source(),
            l.n_target()
        )));
    }
    let t = k.matrix().dot(l.matrix());
    let tol = NEGATIVE_TRACE_TOL * k.matrix().amax().max(1.0);
    if t >= 0.0 {
        Ok(t)
    } else if t >= -tol {
        Ok(0.0)
    } else {
        Err(TlrError::NotPsd(t))
    }
}

/// Squared distance between the column means of two latent representations
/// (MMD under a linear kernel).
pub fn mmd_latent(p_source: &DMatrix<f64>, p_target: &DMatrix<f64>) -> Result<f64> {
    if p_source.ncols() != p_target.ncols() {
        return Err(TlrError::DimensionMismatch(format!(
            "latent widths differ: {} vs {}",
            p_source.ncols(),
            p_target.ncols()
        )));
    }
    if p_source.nrows() == 0 || p_target.nrows() == 0 {
        return Err(TlrError::InvalidArgument("latent representation has no rows".into()));
    }
    Ok((p_source.row_mean() - p_target.row_mean()).norm_squared())
}

/// Kernel MMD divided by the total variance of the pooled sample under the
/// same kernel: `tr(KL) / (tr(K)/n - 1ᵀK1/n²)`.
///
/// Scale free, so gaps measured in different spaces can be compared.
pub fn relative_mmd(k: &JointKernel, l: &MmdMatrix) -> Result<f64> {
    let gap = mmd_trace(k, l)?;
    Ok(gap / pooled_variance(k.matrix()))
}

/// [`relative_mmd`] for latent representations under the linear kernel.
pub fn relative_mmd_latent(p_source: &DMatrix<f64>, p_target: &DMatrix<f64>) -> Result<f64> {
    let gap = mmd_latent(p_source, p_target)?;
    let n = (p_source.nrows() + p_target.nrows()) as f64;
    let mean = (p_source.row_sum() + p_target.row_sum()) / n;
    let spread: f64 = p_source
        .row_iter()
        .chain(p_target.row_iter())
        .map(|r| (r - &mean).norm_squared())
        .sum();
    Ok(gap / (spread / n))
}

fn pooled_variance(k: &DMatrix<f64>) -> f64 {
    let n = k.nrows() as f64;
    k.trace() / n - k.sum() / (n * n)
}
