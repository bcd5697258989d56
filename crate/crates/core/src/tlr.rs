//! The transfer latent representation solver.
//!
//! Given the joint kernel `K` and MMD matrix `L`, the projection `W` spans
//! the leading eigenvectors of `(I + B)⁻¹ A` with
//!
//! ```text
//!     A = K M K,   B = K L K,   M = diag(alpha·1_{n1}, beta·1_{n2})
//! ```
//!
//! The pencil is reduced to a symmetric problem through the Cholesky factor
//! `I + B = C Cᵀ`: the eigenvectors `y` of `C⁻¹ A C⁻ᵀ` map back to
//! `w = C⁻ᵀ y`, which leaves every column normalized to `wᵀ(I + B)w = 1`.
//! Latent representations are `P_S = H_S W` and `P_T = H_T W`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::dataset::{stack_rows, DomainPair};
use crate::error::{io_err, Result, TlrError};
use crate::kernel::{build_joint_kernel, gram, symmetrize, JointKernel, Kernel, KernelSpec};
use crate::mmd::{mmd_latent, mmd_matrix, MmdMatrix};

/// Trade-off weights and latent dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlrHyperparams {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
}

impl TlrHyperparams {
    pub fn new(alpha: f64, beta: f64, k: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(TlrError::InvalidArgument(format!(
                "alpha and beta must be positive and finite, got alpha={alpha}, beta={beta}"
            )));
        }
        if k == 0 {
            return Err(TlrError::InvalidArgument("latent dimension k must be at least 1".into()));
        }
        Ok(Self { alpha, beta, k })
    }
}

/// How the columns of `W` are scaled once their directions are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `Wᵀ(I + B)W = I`. Always well defined.
    #[default]
    IdentityPlusB,
    /// `WᵀAW = I`. Needs every retained eigenvalue to be positive; a ridge
    /// on `A` makes that hold.
    ConstraintA,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveOptions {
    /// `ridge · I` is added to `A` before solving.
    pub ridge: f64,
    pub normalization: Normalization,
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(TlrError::InvalidArgument(format!("ridge must be >= 0, got {}", self.ridge)));
        }
        Ok(())
    }
}

/// Diagonal of `M`: `alpha` on the first `n1` entries, `beta` on the rest.
pub fn build_m(n_source: usize, n_target: usize, alpha: f64, beta: f64) -> DVector<f64> {
    DVector::from_fn(n_source + n_target, |i, _| if i < n_source { alpha } else { beta })
}

/// `A = K M K`, `B = K L K` and the diagonal of `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub m_diag: DVector<f64>,
}

impl SolverMatrices {
    pub fn size(&self) -> usize {
        self.a.nrows()
    }

    /// `I + B`
    pub fn constraint(&self) -> DMatrix<f64> {
        &self.b + DMatrix::identity(self.size(), self.size())
    }
}

pub fn build_ab(k: &JointKernel, l: &MmdMatrix, m_diag: &DVector<f64>) -> Result<SolverMatrices> {
    let size = k.size();
    if l.size() != size || m_diag.len() != size {
        return Err(TlrError::DimensionMismatch(format!(
            "K is {size}x{size}, L is {0}x{0}, M has {1} entries",
            l.size(),
            m_diag.len()
        )));
    }
    let k = k.matrix();
    let mut km = k.clone();
    for (mut col, &w) in km.column_iter_mut().zip(m_diag.iter()) {
        col *= w;
    }
    let a = symmetrize(&km * k);
    let b = symmetrize(k * l.matrix() * k);
    Ok(SolverMatrices {
        a,
        b,
        m_diag: m_diag.clone(),
    })
}

/// Leading generalized eigenpairs: `A w = λ (I + B) w`, columns sorted by
/// descending `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenbasis {
    pub projection: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
}

impl Eigenbasis {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The first `k` columns.
    pub fn truncate(&self, k: usize) -> Eigenbasis {
        Eigenbasis {
            projection: self.projection.columns(0, k).into_owned(),
            eigenvalues: self.eigenvalues.rows(0, k).into_owned(),
        }
    }
}

fn check_k(k: usize, size: usize) -> Result<()> {
    if k == 0 || k >= size {
        return Err(TlrError::InvalidArgument(format!(
            "latent dimension k={k} must satisfy 1 <= k < n1+n2 = {size}"
        )));
    }
    Ok(())
}

fn factor_constraint(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = b + DMatrix::identity(b.nrows(), b.ncols());
    Cholesky::new(c).map(|c| c.unpack()).ok_or(TlrError::CholeskyFailure)
}

/// `C⁻¹ X C⁻ᵀ` for lower-triangular `C`, symmetrized.
fn congruence(chol: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let left = chol.solve_lower_triangular(x).expect("Cholesky factor has a positive diagonal");
    let both = chol
        .solve_lower_triangular(&left.transpose())
        .expect("Cholesky factor has a positive diagonal");
    symmetrize(both)
}

/// Eigen-solves the reduced symmetric matrix and maps the `k` leading
/// eigenvectors back through `C⁻ᵀ`.
fn leading_eigenbasis(reduced: DMatrix<f64>, chol: &DMatrix<f64>, k: usize) -> Eigenbasis {
    let eig = SymmetricEigen::new(reduced);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    order.truncate(k);

    let eigenvalues = DVector::from_iterator(k, order.iter().map(|&i| eig.eigenvalues[i]));
    let leading = eig.eigenvectors.select_columns(&order);
    let mut projection = chol
        .tr_solve_lower_triangular(&leading)
        .expect("Cholesky factor has a positive diagonal");
    for mut col in projection.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    Eigenbasis {
        projection,
        eigenvalues,
    }
}

fn add_ridge(mut reduced: DMatrix<f64>, chol: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    if ridge > 0.0 {
        let n = chol.nrows();
        reduced += congruence(chol, &DMatrix::identity(n, n)) * ridge;
    }
    reduced
}

fn renormalize(mut basis: Eigenbasis, opts: &SolveOptions, a_quadratic: impl Fn(usize, &DMatrix<f64>) -> f64) -> Result<Eigenbasis> {
    if opts.normalization == Normalization::ConstraintA {
        for j in 0..basis.k() {
            let q = a_quadratic(j, &basis.projection) + opts.ridge * basis.projection.column(j).norm_squared();
            if q.is_nan() || q <= f64::EPSILON {
                return Err(TlrError::InvalidArgument(format!(
                    "wᵀAw = {q:e} for column {j}; the WᵀAW = I normalization needs a positive ridge"
                )));
            }
            basis.projection.column_mut(j).unscale_mut(q.sqrt());
        }
    }
    Ok(basis)
}

/// Leading `k` eigenvectors of `(I + B)⁻¹ A`, normalized to `Wᵀ(I+B)W = I`.
pub fn solve_w(mats: &SolverMatrices, k: usize) -> Result<Eigenbasis> {
    solve_w_with(mats, k, &SolveOptions::default())
}

pub fn solve_w_with(mats: &SolverMatrices, k: usize, opts: &SolveOptions) -> Result<Eigenbasis> {
    opts.validate()?;
    check_k(k, mats.size())?;
    if mats.a.shape() != mats.b.shape() || !mats.a.is_square() {
        return Err(TlrError::DimensionMismatch(format!(
            "A is {:?}, B is {:?}",
            mats.a.shape(),
            mats.b.shape()
        )));
    }
    let chol = factor_constraint(&mats.b)?;
    let reduced = add_ridge(congruence(&chol, &mats.a), &chol, opts.ridge);
    let basis = leading_eigenbasis(reduced, &chol, k);
    renormalize(basis, opts, |j, w| {
        let col = w.column(j);
        col.dot(&(&mats.a * col))
    })
}

/// Everything about one source/target pair that does not depend on
/// `alpha`, `beta` or `k`.
///
/// `A` is linear in the weights, `A = alpha·H_Sᵀ H_S + beta·H_Tᵀ H_T`, so
/// the reduced matrices of both terms are formed once and each solve only
/// combines them and runs one symmetric eigendecomposition.
#[derive(Debug, Clone)]
pub struct TlrProblem {
    kernel: JointKernel,
    mmd: MmdMatrix,
    b: DMatrix<f64>,
    chol: DMatrix<f64>,
    reduced_source: DMatrix<f64>,
    reduced_target: DMatrix<f64>,
}

impl TlrProblem {
    pub fn new(kernel: JointKernel) -> Result<Self> {
        let mmd = mmd_matrix(kernel.n_source(), kernel.n_target())?;
        let b = symmetrize(kernel.matrix() * mmd.matrix() * kernel.matrix());
        let chol = factor_constraint(&b)?;
        let hs = kernel.source_rows();
        let ht = kernel.target_rows();
        let reduced_source = congruence(&chol, &symmetrize(hs.transpose() * hs));
        let reduced_target = congruence(&chol, &symmetrize(ht.transpose() * ht));
        Ok(Self {
            kernel,
            mmd,
            b,
            chol,
            reduced_source,
            reduced_target,
        })
    }

    pub fn from_pair(pair: &DomainPair, spec: &KernelSpec) -> Result<Self> {
        Self::new(build_joint_kernel(pair.source().features(), pair.target().features(), spec)?)
    }

    pub fn kernel(&self) -> &JointKernel {
        &self.kernel
    }

    pub fn mmd(&self) -> &MmdMatrix {
        &self.mmd
    }

    pub fn size(&self) -> usize {
        self.kernel.size()
    }

    /// Explicit `A`, `B` and `M` for the given weights.
    pub fn solver_matrices(&self, alpha: f64, beta: f64) -> Result<SolverMatrices> {
        build_ab(
            &self.kernel,
            &self.mmd,
            &build_m(self.kernel.n_source(), self.kernel.n_target(), alpha, beta),
        )
    }

    pub fn solve(&self, hyper: &TlrHyperparams) -> Result<Eigenbasis> {
        self.solve_with(hyper, &SolveOptions::default())
    }

    pub fn solve_with(&self, hyper: &TlrHyperparams, opts: &SolveOptions) -> Result<Eigenbasis> {
        opts.validate()?;
        check_k(hyper.k, self.size())?;
        let reduced = symmetrize(&self.reduced_source * hyper.alpha + &self.reduced_target * hyper.beta);
        let reduced = add_ridge(reduced, &self.chol, opts.ridge);
        let basis = leading_eigenbasis(reduced, &self.chol, hyper.k);
        renormalize(basis, opts, |j, w| {
            let col = w.column(j);
            hyper.alpha * (self.kernel.source_rows() * col).norm_squared()
                + hyper.beta * (self.kernel.target_rows() * col).norm_squared()
        })
    }

    /// `(H_S W, H_T W)`
    pub fn embed(&self, w: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.kernel.source_rows() * w, self.kernel.target_rows() * w)
    }

    /// `B = K L K`
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

/// A fitted projection together with what is needed to embed new samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TlrModel {
    basis: Eigenbasis,
    hyper: TlrHyperparams,
    options: SolveOptions,
    kernel: Kernel,
    n_source: usize,
    /// Source rows stacked over target rows, as used to build `K`.
    training: DMatrix<f64>,
}

/// Output of [`fit`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: TlrModel,
    pub p_source: DMatrix<f64>,
    pub p_target: DMatrix<f64>,
    pub diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    /// Diagonal of `WᵀAW`; equals the eigenvalues under the default
    /// normalization.
    pub wt_a_w: DVector<f64>,
    /// Retained eigenvalues below `1e-10 · λ_max`: a sign of rank
    /// deficiency in `A`.
    pub near_zero_eigenvalues: usize,
    pub latent_mmd: f64,
}

/// Runs the full pipeline on an already standardized pair.
pub fn fit(pair: &DomainPair, spec: &KernelSpec, hyper: &TlrHyperparams) -> Result<FitResult> {
    fit_with(pair, spec, hyper, &SolveOptions::default())
}

pub fn fit_with(pair: &DomainPair, spec: &KernelSpec, hyper: &TlrHyperparams, opts: &SolveOptions) -> Result<FitResult> {
    let problem = TlrProblem::from_pair(pair, spec)?;
    let basis = problem.solve_with(hyper, opts)?;
    let (p_source, p_target) = problem.embed(&basis.projection);

    let wt_a_w = DVector::from_iterator(
        basis.k(),
        p_source
            .column_iter()
            .zip(p_target.column_iter())
            .map(|(s, t)| hyper.alpha * s.norm_squared() + hyper.beta * t.norm_squared()),
    );
    let top = basis.eigenvalues.iter().copied().fold(0.0, f64::max);
    let near_zero_eigenvalues = basis.eigenvalues.iter().filter(|&&v| v <= 1e-10 * top).count();
    let diagnostics = FitDiagnostics {
        wt_a_w,
        near_zero_eigenvalues,
        latent_mmd: mmd_latent(&p_source, &p_target)?,
    };

    let model = TlrModel {
        basis,
        hyper: *hyper,
        options: *opts,
        kernel: problem.kernel().kernel(),
        n_source: pair.source().nrows(),
        training: stack_rows(pair.source().features(), pair.target().features()),
    };
    Ok(FitResult {
        model,
        p_source,
        p_target,
        diagnostics,
    })
}

/// `tr(WᵀKLKW) + alpha·|H_S W Wᵀ - H_S|² + beta·|H_T W Wᵀ - H_T|²`
pub fn objective_raw(w: &DMatrix<f64>, k: &JointKernel, l: &MmdMatrix, hyper: &TlrHyperparams) -> Result<f64> {
    if w.nrows() != k.size() || l.size() != k.size() {
        return Err(TlrError::DimensionMismatch(format!(
            "W has {} rows, K is {}x{1}, L is {2}x{2}",
            w.nrows(),
            k.size(),
            l.size()
        )));
    }
    let kw = k.matrix() * w;
    let mmd = (kw.transpose() * l.matrix() * &kw).trace();
    let wwt = w * w.transpose();
    let recon = |h: nalgebra::DMatrixView<'_, f64>| (h * &wwt - h).norm_squared();
    Ok(mmd + hyper.alpha * recon(k.source_rows()) + hyper.beta * recon(k.target_rows()))
}

/// `tr(WWᵀAWWᵀ + WᵀBW - 2WᵀAW + A)`
pub fn objective_expanded(w: &DMatrix<f64>, mats: &SolverMatrices) -> Result<f64> {
    if w.nrows() != mats.size() {
        return Err(TlrError::DimensionMismatch(format!(
            "W has {} rows, A is {}x{1}",
            w.nrows(),
            mats.size()
        )));
    }
    let wta_w = w.transpose() * &mats.a * w;
    let wtw = w.transpose() * w;
    let quartic = (&wtw * &wta_w).trace();
    let mmd = (w.transpose() * &mats.b * w).trace();
    Ok(quartic + mmd - 2.0 * wta_w.trace() + mats.a.trace())
}

/// `tr((Wᵀ(I+B)W)⁻¹ WᵀAW)`
pub fn trace_ratio(w: &DMatrix<f64>, mats: &SolverMatrices) -> Result<f64> {
    if w.nrows() != mats.size() {
        return Err(TlrError::DimensionMismatch("W and A sizes differ".into()));
    }
    let denom = w.transpose() * mats.constraint() * w;
    let num = w.transpose() * &mats.a * w;
    let chol: Cholesky<f64, Dyn> = Cholesky::new(denom)
        .ok_or_else(|| TlrError::InvalidArgument("Wᵀ(I+B)W is singular; W is rank deficient".into()))?;
    Ok(chol.solve(&num).trace())
}

/// `|(I+B) W diag(λ) - A W|_F / |A W|_F`: zero exactly at generalized
/// eigenpairs.
pub fn stationarity_residual(basis: &Eigenbasis, mats: &SolverMatrices) -> f64 {
    let aw = &mats.a * &basis.projection;
    let mut lhs = mats.constraint() * &basis.projection;
    for (mut col, &lambda) in lhs.column_iter_mut().zip(basis.eigenvalues.iter()) {
        col *= lambda;
    }
    (lhs - &aw).norm() / aw.norm().max(1e-300)
}

const MODEL_MAGIC: &[u8; 8] = b"TLRMODEL";
const MODEL_VERSION: u32 = 1;

impl TlrModel {
    pub fn basis(&self) -> &Eigenbasis {
        &self.basis
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.basis.projection
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.basis.eigenvalues
    }

    pub fn hyper(&self) -> &TlrHyperparams {
        &self.hyper
    }

    pub fn options(&self) -> &SolveOptions {
        &self.options
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    pub fn n_target(&self) -> usize {
        self.training.nrows() - self.n_source
    }

    pub fn training(&self) -> &DMatrix<f64> {
        &self.training
    }

    /// Latent coordinates of arbitrary samples: their kernel row against the
    /// training samples, times `W`. On the training rows this reproduces
    /// `P_S` and `P_T`.
    pub fn embed(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(gram(x, &self.training, &self.kernel)? * &self.basis.projection)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let (m, d) = self.training.shape();
        out.write_all(MODEL_MAGIC)?;
        out.write_all(&MODEL_VERSION.to_le_bytes())?;
        let put_f = |out: &mut W, v: f64| out.write_all(&v.to_le_bytes());
        put_f(&mut out, self.hyper.alpha)?;
        put_f(&mut out, self.hyper.beta)?;
        put_f(&mut out, self.options.ridge)?;
        let norm_tag: u8 = match self.options.normalization {
            Normalization::IdentityPlusB => 0,
            Normalization::ConstraintA => 1,
        };
        let (kernel_tag, sigma) = match self.kernel {
            Kernel::Linear => (0u8, 0.0),
            Kernel::Rbf { sigma } => (1u8, sigma),
        };
        out.write_all(&[norm_tag, kernel_tag])?;
        out.write_all(&sigma.to_le_bytes())?;
        for v in [self.hyper.k, self.n_source, m, d] {
            out.write_all(&(v as u64).to_le_bytes())?;
        }
        // Row-major payloads.
        for v in self.training.transpose().iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in self.basis.projection.transpose().iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in self.basis.eigenvalues.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut buf = Vec::new();
        input
            .read_to_end(&mut buf)
            .map_err(|e| TlrError::Format(format!("read failed: {e}")))?;
        let mut cur = ByteCursor { buf: &buf, pos: 0 };

        if cur.take(8)? != MODEL_MAGIC {
            return Err(TlrError::Format("missing TLRMODEL magic".into()));
        }
        let version = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes"));
        if version != MODEL_VERSION {
            return Err(TlrError::Format(format!("unsupported model version {version}")));
        }
        let alpha = cur.f64()?;
        let beta = cur.f64()?;
        let ridge = cur.f64()?;
        let tags = cur.take(2)?;
        let normalization = match tags[0] {
            0 => Normalization::IdentityPlusB,
            1 => Normalization::ConstraintA,
            t => return Err(TlrError::Format(format!("unknown normalization tag {t}"))),
        };
        let kernel_tag = tags[1];
        let sigma = cur.f64()?;
        let kernel = match kernel_tag {
            0 => Kernel::Linear,
            1 => Kernel::rbf(sigma).map_err(|e| TlrError::Format(e.to_string()))?,
            t => return Err(TlrError::Format(format!("unknown kernel tag {t}"))),
        };
        let k = cur.usize()?;
        let n_source = cur.usize()?;
        let m = cur.usize()?;
        let d = cur.usize()?;
        if n_source == 0 || n_source >= m || k == 0 || k >= m || d == 0 {
            return Err(TlrError::Format(format!(
                "inconsistent sizes k={k}, n1={n_source}, m={m}, d={d}"
            )));
        }
        let expected = m
            .checked_mul(d)
            .and_then(|t| t.checked_add(m.checked_mul(k)?))
            .and_then(|t| t.checked_add(k))
            .and_then(|t| t.checked_mul(8))
            .ok_or_else(|| TlrError::Format("size overflow".into()))?;
        if buf.len() - cur.pos != expected {
            return Err(TlrError::Format(format!(
                "payload is {} bytes, expected {expected}",
                buf.len() - cur.pos
            )));
        }
        let training = DMatrix::from_row_slice(m, d, &cur.f64s(m * d)?);
        let projection = DMatrix::from_row_slice(m, k, &cur.f64s(m * k)?);
        let eigenvalues = DVector::from_vec(cur.f64s(k)?);
        let hyper = TlrHyperparams::new(alpha, beta, k).map_err(|e| TlrError::Format(e.to_string()))?;
        Ok(Self {
            basis: Eigenbasis {
                projection,
                eigenvalues,
            },
            hyper,
            options: SolveOptions { ridge, normalization },
            kernel,
            n_source,
            training,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(io_err(path))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(io_err(path))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

struct ByteCursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| TlrError::Format("truncated model file".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| TlrError::Format(format!("size {v} too large")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledMatrix;
    use approx::assert_relative_eq;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn m_examples() {
        assert_eq!(build_m(1, 1, 2.0, 3.0), DVector::from_column_slice(&[2.0, 3.0]));
        assert_eq!(build_m(2, 3, 1.0, 1.0), DVector::from_element(5, 1.0));
        assert_eq!(build_m(4, 6, 0.5, 2.0).sum(), 4.0 * 0.5 + 6.0 * 2.0);
    }

    #[test]
    fn identity_kernel_gives_m_and_l() {
        let k = JointKernel::from_matrix(DMatrix::identity(4, 4), 2, 2, Kernel::Linear).unwrap();
        let l = mmd_matrix(2, 2).unwrap();
        let m = build_m(2, 2, 0.3, 0.7);
        let mats = build_ab(&k, &l, &m).unwrap();
        assert_eq!(mats.a, DMatrix::from_diagonal(&m));
        assert_eq!(&mats.b, l.matrix());
    }

    #[test]
    fn hyperparams_reject_zero_weights() {
        assert!(TlrHyperparams::new(0.0, 0.0, 1).is_err());
        assert!(TlrHyperparams::new(1.0, -1.0, 1).is_err());
        assert!(TlrHyperparams::new(1.0, 1.0, 0).is_err());
    }

    fn diagonal_case() -> SolverMatrices {
        SolverMatrices {
            a: diag(&[3.0, 2.0, 1.0]),
            b: DMatrix::zeros(3, 3),
            m_diag: DVector::from_element(3, 1.0),
        }
    }

    #[test]
    fn diagonal_pencil() {
        let mats = diagonal_case();
        let basis = solve_w(&mats, 2).unwrap();
        assert_eq!(basis.eigenvalues.as_slice(), &[3.0, 2.0]);
        assert_eq!(basis.projection, DMatrix::identity(3, 3).columns(0, 2));
        assert!(stationarity_residual(&basis, &mats) <= 1e-12);
    }

    #[test]
    fn degenerate_spectrum_passes_residual() {
        let mats = SolverMatrices {
            a: DMatrix::identity(4, 4),
            b: DMatrix::zeros(4, 4),
            m_diag: DVector::from_element(4, 1.0),
        };
        let basis = solve_w(&mats, 3).unwrap();
        assert!(basis.eigenvalues.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert!(stationarity_residual(&basis, &mats) <= 1e-12);
        let gram = basis.projection.transpose() * &basis.projection;
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn k_out_of_range() {
        let mats = diagonal_case();
        assert!(solve_w(&mats, 0).is_err());
        assert!(solve_w(&mats, 3).is_err());
    }

    #[test]
    fn non_psd_b_fails_cholesky() {
        let mut mats = diagonal_case();
        mats.b = diag(&[-2.0, 0.0, 0.0]);
        assert!(matches!(solve_w(&mats, 1), Err(TlrError::CholeskyFailure)));
    }

    #[test]
    fn constraint_a_normalization() {
        let mats = SolverMatrices {
            a: diag(&[4.0, 1.0, 0.0]),
            b: diag(&[1.0, 0.0, 0.0]),
            m_diag: DVector::from_element(3, 1.0),
        };
        let opts = SolveOptions {
            ridge: 0.0,
            normalization: Normalization::ConstraintA,
        };
        let basis = solve_w_with(&mats, 2, &opts).unwrap();
        let wtaw = basis.projection.transpose() * &mats.a * &basis.projection;
        assert!((wtaw - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert_relative_eq!(basis.eigenvalues[0], 2.0, max_relative = 1e-14);
        assert_relative_eq!(basis.eigenvalues[1], 1.0, max_relative = 1e-14);
        // The null direction of A cannot be normalized without a ridge.
        let mats_singular = SolverMatrices {
            a: diag(&[1.0, 0.0, 0.0]),
            ..mats.clone()
        };
        assert!(solve_w_with(&mats_singular, 2, &opts).is_err());
        let ridged = SolveOptions { ridge: 1e-3, ..opts };
        let basis = solve_w_with(&mats_singular, 2, &ridged).unwrap();
        let wtaw = basis.projection.transpose() * (&mats_singular.a + DMatrix::identity(3, 3) * 1e-3) * &basis.projection;
        assert!((wtaw - DMatrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn objectives_at_zero() {
        let k = JointKernel::from_matrix(
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]),
            1,
            1,
            Kernel::Linear,
        )
        .unwrap();
        let l = mmd_matrix(1, 1).unwrap();
        let hyper = TlrHyperparams::new(0.5, 2.0, 1).unwrap();
        let w = DMatrix::zeros(2, 1);
        // alpha·|H_S|² + beta·|H_T|² = 0.5·5 + 2·10
        assert_relative_eq!(objective_raw(&w, &k, &l, &hyper).unwrap(), 22.5);
        let mats = build_ab(&k, &l, &build_m(1, 1, 0.5, 2.0)).unwrap();
        assert_relative_eq!(objective_expanded(&w, &mats).unwrap(), mats.a.trace());
        assert_relative_eq!(mats.a.trace(), 22.5);
    }

    #[test]
    fn objective_raw_identity_reconstruction() {
        let k = JointKernel::from_matrix(DMatrix::identity(2, 2), 1, 1, Kernel::Linear).unwrap();
        let hyper = TlrHyperparams::new(1.0, 1.0, 2).unwrap();
        let v = objective_raw(&DMatrix::identity(2, 2), &k, &mmd_matrix(1, 1).unwrap(), &hyper).unwrap();
        assert_relative_eq!(v, 2.0);
    }

    #[test]
    fn objective_expanded_orthonormal_frame() {
        let m = 5;
        let mats = SolverMatrices {
            a: DMatrix::identity(m, m),
            b: DMatrix::zeros(m, m),
            m_diag: DVector::from_element(m, 1.0),
        };
        let q = DMatrix::from_fn(m, m, |i, j| ((i * 3 + j * 5) as f64).sin() + if i == j { 2.0 } else { 0.0 }).qr().q();
        let w = q.columns(0, 2).into_owned();
        assert_relative_eq!(objective_expanded(&w, &mats).unwrap(), (m - 2) as f64, max_relative = 1e-12);
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let s = LabeledMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.5], vec![2.0, -1.0]], Some(vec![0, 1, 0])).unwrap();
        let t = LabeledMatrix::from_rows(&[vec![0.3, 1.1], vec![1.7, 0.0]], None).unwrap();
        let pair = DomainPair::new(s, t).unwrap();
        let spec = KernelSpec::Rbf(crate::kernel::Bandwidth::Auto);
        let fitted = fit(&pair, &spec, &TlrHyperparams::new(0.1, 1.0, 3).unwrap()).unwrap();

        let mut bytes = Vec::new();
        fitted.model.write_to(&mut bytes).unwrap();
        let back = TlrModel::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, fitted.model);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(bytes, again);

        assert!(TlrModel::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(TlrModel::read_from(bad.as_slice()).is_err());
    }

    #[test]
    fn embed_reproduces_training_latents() {
        let s = LabeledMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.5], vec![2.0, -1.0]], Some(vec![0, 1, 0])).unwrap();
        let t = LabeledMatrix::from_rows(&[vec![0.3, 1.1], vec![1.7, 0.0]], None).unwrap();
        let pair = DomainPair::new(s, t).unwrap();
        let fitted = fit(&pair, &KernelSpec::Linear, &TlrHyperparams::new(1.0, 1.0, 2).unwrap()).unwrap();
        let ps = fitted.model.embed(pair.source().features()).unwrap();
        assert!((ps - &fitted.p_source).norm() < 1e-12);
        assert_eq!(fitted.p_target.shape(), (2, 2));
        assert_eq!(fitted.model.n_target(), 2);
    }
}
