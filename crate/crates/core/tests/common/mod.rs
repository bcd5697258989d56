//! Independent reference computations for the integration suites.
//!
//! Nothing here calls into the solver path it is used to check: products are
//! triple loops, spectra come from a dense inverse and a general (Schur)
//! eigenvalue routine.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// `G Gᵀ` for a random `n × rank` factor.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let g = gaussian(rng, n, rank);
    naive_mul(&g, &g.transpose())
}

pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

pub fn naive_mul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), b.ncols());
    for i in 0..a.nrows() {
        for j in 0..b.ncols() {
            let mut s = 0.0;
            for t in 0..a.ncols() {
                s += a[(i, t)] * b[(t, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// All eigenvalues of `(I + B)⁻¹ A`, formed densely, sorted descending.
/// The spectrum is real for symmetric `A` and SPD `I + B`; imaginary parts
/// from rounding are checked and dropped.
pub fn dense_pencil_spectrum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let inv = (b + DMatrix::identity(n, n)).try_inverse().expect("I + B invertible");
    let prod = naive_mul(&inv, a);
    let mut ev: Vec<f64> = prod
        .complex_eigenvalues()
        .iter()
        .map(|z| {
            assert!(z.im.abs() < 1e-8 * (1.0 + z.re.abs()), "complex eigenvalue {z}");
            z.re
        })
        .collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigenvalues().min()
}

/// Singular values, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// A random `m × k` frame normalized to `Wᵀ C W = I`.
pub fn random_c_orthonormal(rng: &mut ChaCha8Rng, c: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let g = gaussian(rng, c.nrows(), k);
    let gram = naive_mul(&naive_mul(&g.transpose(), c), &g);
    let chol = gram.cholesky().expect("random frame has full rank");
    let r = chol.l().transpose();
    g * r.try_inverse().expect("triangular factor invertible")
}

/// Cosines of the principal angles between the column spans of `a` and `b`.
pub fn principal_cosines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    singular_values(&(qa.transpose() * qb))
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()))
}
