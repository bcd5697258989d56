//! Gram matrices and the joint source/target kernel matrix.
//!
//! The joint matrix stacks the source block over the target block:
//!
//! ```text
//!     K = [ K_SS  K_ST ]  = [ H_S ]
//!         [ K_TS  K_TT ]    [ H_T ]
//! ```
//!
//! Its rows are the empirical kernel maps of the pooled samples: `H_S` holds
//! the first `n1` rows and `H_T` the remaining `n2`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DMatrixView};

use crate::dataset::stack_rows;
use crate::error::{Result, TlrError};

/// Smallest bandwidth the median heuristic will return.
pub const BANDWIDTH_FLOOR: f64 = 1e-8;
/// Pooled samples beyond this count are strided down before the median
/// heuristic runs.
pub const MEDIAN_MAX_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Median pairwise distance of the pooled sample.
    Auto,
    Fixed(f64),
}

/// Kernel family as configured by the user; RBF bandwidth may still be
/// unresolved.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum KernelSpec {
    #[default]
    Linear,
    Rbf(Bandwidth),
}

/// A fully specified kernel function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    /// `exp(-|x - y|^2 / (2 sigma^2))`
    Rbf { sigma: f64 },
}

impl KernelSpec {
    pub fn resolve(&self, source: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<Kernel> {
        match *self {
            KernelSpec::Linear => Ok(Kernel::Linear),
            KernelSpec::Rbf(Bandwidth::Fixed(sigma)) => Kernel::rbf(sigma),
            KernelSpec::Rbf(Bandwidth::Auto) => Kernel::rbf(median_bandwidth(source, target)?),
        }
    }
}

impl Kernel {
    pub fn rbf(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(TlrError::InvalidArgument(format!("rbf bandwidth must be positive, got {sigma}")));
        }
        Ok(Kernel::Rbf { sigma })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            Kernel::Rbf { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => f.write_str("linear"),
            KernelSpec::Rbf(Bandwidth::Auto) => f.write_str("rbf(auto)"),
            KernelSpec::Rbf(Bandwidth::Fixed(s)) => write!(f, "rbf({s})"),
        }
    }
}

impl FromStr for Bandwidth {
    type Err = TlrError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Bandwidth::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| TlrError::InvalidArgument(format!("bandwidth {s:?} is neither 'auto' nor a number")))?;
        Kernel::rbf(v)?;
        Ok(Bandwidth::Fixed(v))
    }
}

/// `out[i][j] = k(x_i, y_j)` over the rows of `x` and `y`.
pub fn gram(x: &DMatrix<f64>, y: &DMatrix<f64>, kernel: &Kernel) -> Result<DMatrix<f64>> {
    if x.ncols() != y.ncols() {
        return Err(TlrError::DimensionMismatch(format!(
            "gram inputs have {} and {} columns",
            x.ncols(),
            y.ncols()
        )));
    }
    match kernel {
        Kernel::Linear => Ok(x * y.transpose()),
        Kernel::Rbf { .. } => {
            // Row-major copies keep each sample contiguous.
            let xr = x.transpose();
            let yr = y.transpose();
            Ok(DMatrix::from_fn(x.nrows(), y.nrows(), |i, j| {
                kernel.eval(xr.column(i).as_slice(), yr.column(j).as_slice())
            }))
        }
    }
}

/// The joint kernel matrix over stacked source and target samples.
#[derive(Debug, Clone, PartialEq)]
pub struct JointKernel {
    matrix: DMatrix<f64>,
    n_source: usize,
    n_target: usize,
    kernel: Kernel,
}

impl JointKernel {
    /// Wraps an already assembled matrix; symmetry is enforced by averaging
    /// with the transpose.
    pub fn from_matrix(matrix: DMatrix<f64>, n_source: usize, n_target: usize, kernel: Kernel) -> Result<Self> {
        let m = n_source + n_target;
        if n_source == 0 || n_target == 0 || matrix.shape() != (m, m) {
            return Err(TlrError::DimensionMismatch(format!(
                "kernel matrix {:?} does not match n1={n_source}, n2={n_target}",
                matrix.shape()
            )));
        }
        Ok(Self {
            matrix: symmetrize(matrix),
            n_source,
            n_target,
            kernel,
        })
    }

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

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    /// `H_S`: the first `n1` rows.
    pub fn source_rows(&self) -> DMatrixView<'_, f64> {
        self.matrix.rows(0, self.n_source)
    }

    /// `H_T`: the last `n2` rows.
    pub fn target_rows(&self) -> DMatrixView<'_, f64> {
        self.matrix.rows(self.n_source, self.n_target)
    }
}

pub fn build_joint_kernel(source: &DMatrix<f64>, target: &DMatrix<f64>, spec: &KernelSpec) -> Result<JointKernel> {
    if source.ncols() != target.ncols() {
        return Err(TlrError::DimensionMismatch(format!(
            "source has {} features, target has {}",
            source.ncols(),
            target.ncols()
        )));
    }
    let kernel = spec.resolve(source, target)?;
    let pooled = stack_rows(source, target);
    let k = gram(&pooled, &pooled, &kernel)?;
    JointKernel::from_matrix(k, source.nrows(), target.nrows(), kernel)
}

/// `(A + Aᵀ) / 2`
pub(crate) fn symmetrize(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

/// Median pairwise Euclidean distance over the pooled sample, floored at
/// [`BANDWIDTH_FLOOR`]. Pools larger than [`MEDIAN_MAX_POINTS`] are reduced
/// to evenly strided rows first.
pub fn median_bandwidth(source: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<f64> {
    if source.ncols() != target.ncols() {
        return Err(TlrError::DimensionMismatch("source and target widths differ".into()));
    }
    let pooled = stack_rows(source, target);
    let n = pooled.nrows();
    if n < 2 {
        return Err(TlrError::InvalidArgument("median bandwidth needs at least 2 samples".into()));
    }
    let keep: Vec<usize> = if n > MEDIAN_MAX_POINTS {
        (0..MEDIAN_MAX_POINTS).map(|i| i * n / MEDIAN_MAX_POINTS).collect()
    } else {
        (0..n).collect()
    };
    let rows = pooled.select_rows(&keep).transpose();
    let mut dists = Vec::with_capacity(keep.len() * (keep.len() - 1) / 2);
    for i in 0..keep.len() {
        for j in (i + 1)..keep.len() {
            dists.push((rows.column(i) - rows.column(j)).norm());
        }
    }
    Ok(median(&mut dists).max(BANDWIDTH_FLOOR))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn linear_gram_examples() {
        let id = DMatrix::identity(2, 2);
        assert_eq!(gram(&id, &id, &Kernel::Linear).unwrap(), id);
        let g = gram(&m(1, 2, &[1.0, 2.0]), &m(1, 2, &[3.0, 4.0]), &Kernel::Linear).unwrap();
        assert_eq!(g[(0, 0)], 11.0);
    }

    #[test]
    fn rbf_diagonal_is_exactly_one() {
        let x = m(3, 2, &[0.3, -1.0, 2.0, 5.0, -7.5, 0.1]);
        let g = gram(&x, &x, &Kernel::rbf(0.7).unwrap()).unwrap();
        for i in 0..3 {
            assert_eq!(g[(i, i)], 1.0);
        }
        assert_relative_eq!(g[(0, 1)], (-(1.7f64.powi(2) + 36.0) / (2.0 * 0.49)).exp(), max_relative = 1e-14);
    }

    #[test]
    fn gram_dimension_mismatch() {
        let r = gram(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 3), &Kernel::Linear);
        assert!(matches!(r, Err(TlrError::DimensionMismatch(_))));
    }

    #[test]
    fn joint_kernel_shapes_and_views() {
        let s = m(2, 1, &[1.0, 2.0]);
        let t = m(3, 1, &[3.0, 4.0, 5.0]);
        let k = build_joint_kernel(&s, &t, &KernelSpec::Linear).unwrap();
        assert_eq!(k.matrix().shape(), (5, 5));
        assert_eq!(k.source_rows().shape(), (2, 5));
        assert_eq!(k.target_rows().shape(), (3, 5));
        assert_eq!(k.target_rows()[(0, 1)], 6.0);
    }

    #[test]
    fn joint_kernel_single_sample() {
        let one = m(1, 1, &[1.0]);
        let k = build_joint_kernel(&one, &one, &KernelSpec::Linear).unwrap();
        assert_eq!(k.matrix(), &DMatrix::from_element(2, 2, 1.0));
    }

    #[test]
    fn joint_kernel_orthonormal_rows_give_identity() {
        let s = m(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let t = m(1, 3, &[0.0, 0.0, 1.0]);
        let k = build_joint_kernel(&s, &t, &KernelSpec::Linear).unwrap();
        assert_eq!(k.matrix(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn median_bandwidth_examples() {
        let b = median_bandwidth(&m(1, 1, &[0.0]), &m(1, 1, &[2.0])).unwrap();
        assert_eq!(b, 2.0);
        let b = median_bandwidth(&m(2, 2, &[1.0, 1.0, 1.0, 1.0]), &m(1, 2, &[1.0, 1.0])).unwrap();
        assert_eq!(b, BANDWIDTH_FLOOR);
        let b = median_bandwidth(&m(2, 1, &[0.0, 1.0]), &m(1, 1, &[3.0])).unwrap();
        assert_eq!(b, 2.0);
        assert!(median_bandwidth(&m(1, 1, &[0.0]), &DMatrix::zeros(0, 1)).is_err());
    }

    #[test]
    fn auto_rbf_resolves_bandwidth() {
        let k = build_joint_kernel(&m(1, 1, &[0.0]), &m(1, 1, &[2.0]), &KernelSpec::Rbf(Bandwidth::Auto)).unwrap();
        assert_eq!(k.kernel(), Kernel::Rbf { sigma: 2.0 });
        assert_relative_eq!(k.matrix()[(0, 1)], (-0.5f64).exp());
    }

    #[test]
    fn bandwidth_parsing() {
        assert_eq!("auto".parse::<Bandwidth>().unwrap(), Bandwidth::Auto);
        assert_eq!("0.5".parse::<Bandwidth>().unwrap(), Bandwidth::Fixed(0.5));
        assert!("-1".parse::<Bandwidth>().is_err());
        assert!("wide".parse::<Bandwidth>().is_err());
    }
}
