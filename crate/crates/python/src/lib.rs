//! Python bindings. Matrices cross the boundary as 2-D float64 numpy arrays
//! with samples as rows; labels as 1-D integer sequences.

use nalgebra::DMatrix;
use numpy::ndarray::{Array1, Array2};
use numpy::{IntoPyArray, PyArray1, PyArray2, PyReadonlyArray2};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tlr_adapt::bench::{grid_search as core_grid_search, BenchConfig, GridSpec};
use tlr_adapt::dataset::{standardize_pair, DomainPair, LabeledMatrix, SynthConfig, ZScoreMode};
use tlr_adapt::kernel::{Bandwidth, KernelSpec};
use tlr_adapt::tlr::{fit_with, Normalization, SolveOptions, TlrHyperparams};
use tlr_adapt::TlrError;

fn to_py(e: TlrError) -> PyErr {
    match e {
        TlrError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_matrix(a: &PyReadonlyArray2<'_, f64>) -> DMatrix<f64> {
    let view = a.as_array();
    let (r, c) = view.dim();
    DMatrix::from_fn(r, c, |i, j| view[[i, j]])
}

fn to_numpy<'py>(py: Python<'py>, m: &DMatrix<f64>) -> Bound<'py, PyArray2<f64>> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)]).into_pyarray(py)
}

fn labels_to_numpy<'py>(py: Python<'py>, labels: &[usize]) -> Bound<'py, PyArray1<i64>> {
    Array1::from_iter(labels.iter().map(|&l| l as i64)).into_pyarray(py)
}

fn kernel_spec(kernel: &str, bandwidth: Option<f64>) -> PyResult<KernelSpec> {
    match kernel {
        "linear" => Ok(KernelSpec::Linear),
        "rbf" => Ok(KernelSpec::Rbf(bandwidth.map_or(Bandwidth::Auto, Bandwidth::Fixed))),
        other => Err(PyValueError::new_err(format!("unknown kernel {other:?}; use 'linear' or 'rbf'"))),
    }
}

fn zscore_mode(mode: &str) -> PyResult<Option<ZScoreMode>> {
    match mode {
        "per-domain" => Ok(Some(ZScoreMode::PerDomain)),
        "pooled" => Ok(Some(ZScoreMode::Pooled)),
        "none" => Ok(None),
        other => Err(PyValueError::new_err(format!("unknown zscore mode {other:?}"))),
    }
}

fn make_pair(
    xs: &PyReadonlyArray2<'_, f64>,
    ys: Vec<usize>,
    xt: &PyReadonlyArray2<'_, f64>,
    yt: Option<Vec<usize>>,
    zscore: &str,
) -> PyResult<DomainPair> {
    let s = LabeledMatrix::new(to_matrix(xs), Some(ys)).map_err(to_py)?;
    let t = LabeledMatrix::new(to_matrix(xt), yt).map_err(to_py)?;
    let pair = DomainPair::new(s, t).map_err(to_py)?;
    match zscore_mode(zscore)? {
        Some(mode) => standardize_pair(&pair, mode).map_err(to_py),
        None => Ok(pair),
    }
}

/// A fitted projection with the latent training representations.
#[pyclass(module = "pytlr", frozen)]
struct TlrModel {
    inner: tlr_adapt::tlr::TlrModel,
    p_source: DMatrix<f64>,
    p_target: DMatrix<f64>,
    latent_mmd: f64,
}

#[pymethods]
impl TlrModel {
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.hyper().alpha
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.hyper().beta
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.hyper().k
    }

    #[getter]
    fn latent_mmd(&self) -> f64 {
        self.latent_mmd
    }

    #[getter]
    fn projection<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_numpy(py, self.inner.projection())
    }

    #[getter]
    fn eigenvalues<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        Array1::from_iter(self.inner.eigenvalues().iter().copied()).into_pyarray(py)
    }

    #[getter]
    fn p_source<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_numpy(py, &self.p_source)
    }

    #[getter]
    fn p_target<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_numpy(py, &self.p_target)
    }

    /// Latent coordinates of new samples, standardized like the training data.
    fn embed<'py>(&self, py: Python<'py>, x: PyReadonlyArray2<'py, f64>) -> PyResult<Bound<'py, PyArray2<f64>>> {
        let out = self.inner.embed(&to_matrix(&x)).map_err(to_py)?;
        Ok(to_numpy(py, &out))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    /// Loads a saved model. Latent training representations are recomputed.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = tlr_adapt::tlr::TlrModel::load(path).map_err(to_py)?;
        let all = inner.embed(inner.training()).map_err(to_py)?;
        let n1 = inner.n_source();
        let p_source = all.rows(0, n1).into_owned();
        let p_target = all.rows(n1, all.nrows() - n1).into_owned();
        let latent_mmd = tlr_adapt::mmd::mmd_latent(&p_source, &p_target).map_err(to_py)?;
        Ok(Self {
            inner,
            p_source,
            p_target,
            latent_mmd,
        })
    }

    fn __repr__(&self) -> String {
        let h = self.inner.hyper();
        format!(
            "TlrModel(alpha={}, beta={}, k={}, n_source={}, n_target={})",
            h.alpha,
            h.beta,
            h.k,
            self.inner.n_source(),
            self.inner.n_target()
        )
    }
}

/// Fits the projection on a source/target pair. Features are standardized
/// first according to `zscore` ('per-domain', 'pooled' or 'none').
#[pyfunction]
#[pyo3(signature = (xs, ys, xt, alpha, beta, k, kernel="linear", bandwidth=None, zscore="per-domain", ridge=0.0, normalize_a=false))]
#[allow(clippy::too_many_arguments)]
fn fit(
    xs: PyReadonlyArray2<'_, f64>,
    ys: Vec<usize>,
    xt: PyReadonlyArray2<'_, f64>,
    alpha: f64,
    beta: f64,
    k: usize,
    kernel: &str,
    bandwidth: Option<f64>,
    zscore: &str,
    ridge: f64,
    normalize_a: bool,
) -> PyResult<TlrModel> {
    let pair = make_pair(&xs, ys, &xt, None, zscore)?;
    let hyper = TlrHyperparams::new(alpha, beta, k).map_err(to_py)?;
    let opts = SolveOptions {
        ridge,
        normalization: if normalize_a { Normalization::ConstraintA } else { Normalization::IdentityPlusB },
    };
    let r = fit_with(&pair, &kernel_spec(kernel, bandwidth)?, &hyper, &opts).map_err(to_py)?;
    Ok(TlrModel {
        inner: r.model,
        p_source: r.p_source,
        p_target: r.p_target,
        latent_mmd: r.diagnostics.latent_mmd,
    })
}

/// Grid search scored on target labels. Returns a dict with `best`
/// (alpha, beta, k, mean accuracy), `records` (alpha, beta, k, mean, std)
/// and `skipped` (count of configurations with k too large).
#[pyfunction]
#[pyo3(signature = (xs, ys, xt, yt, alphas=None, betas=None, ks=None, kernel="linear", bandwidth=None, zscore="per-domain", runs=1, per_class=None, seed=0, threads=1))]
#[allow(clippy::too_many_arguments)]
fn grid_search<'py>(
    py: Python<'py>,
    xs: PyReadonlyArray2<'py, f64>,
    ys: Vec<usize>,
    xt: PyReadonlyArray2<'py, f64>,
    yt: Vec<usize>,
    alphas: Option<Vec<f64>>,
    betas: Option<Vec<f64>>,
    ks: Option<Vec<usize>>,
    kernel: &str,
    bandwidth: Option<f64>,
    zscore: &str,
    runs: usize,
    per_class: Option<usize>,
    seed: u64,
    threads: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let pair = make_pair(&xs, ys, &xt, Some(yt), zscore)?;
    let mut grid = GridSpec::default();
    if let Some(a) = alphas {
        grid.alphas = a;
    }
    if let Some(b) = betas {
        grid.betas = b;
    }
    if let Some(k) = ks {
        grid.ks = k;
    }
    let cfg = BenchConfig {
        grid,
        kernel: kernel_spec(kernel, bandwidth)?,
        runs,
        per_class,
        seed,
        threads: Some(threads),
        ..BenchConfig::default()
    };
    let report = py.detach(|| core_grid_search(&pair, &cfg)).map_err(to_py)?;
    let best = report.best_record();
    let out = PyDict::new(py);
    out.set_item("best", (best.alpha, best.beta, best.k, best.mean()))?;
    let records: Vec<(f64, f64, usize, f64, f64)> =
        report.records.iter().map(|r| (r.alpha, r.beta, r.k, r.mean(), r.std())).collect();
    out.set_item("records", records)?;
    out.set_item("skipped", report.skipped.len())?;
    Ok(out)
}

/// The MMD coefficient matrix for `n1` source and `n2` target samples.
#[pyfunction]
fn mmd_matrix(py: Python<'_>, n1: usize, n2: usize) -> PyResult<Bound<'_, PyArray2<f64>>> {
    let l = tlr_adapt::mmd::mmd_matrix(n1, n2).map_err(to_py)?;
    Ok(to_numpy(py, l.matrix()))
}

/// Squared distance between the row means of two latent matrices.
#[pyfunction]
fn mmd_latent(ps: PyReadonlyArray2<'_, f64>, pt: PyReadonlyArray2<'_, f64>) -> PyResult<f64> {
    tlr_adapt::mmd::mmd_latent(&to_matrix(&ps), &to_matrix(&pt)).map_err(to_py)
}

#[pyfunction]
fn knn1_predict<'py>(
    py: Python<'py>,
    train: PyReadonlyArray2<'py, f64>,
    labels: Vec<usize>,
    test: PyReadonlyArray2<'py, f64>,
) -> PyResult<Bound<'py, PyArray1<i64>>> {
    let r = tlr_adapt::classify::knn1_predict(&to_matrix(&train), &labels, &to_matrix(&test)).map_err(to_py)?;
    Ok(labels_to_numpy(py, &r.predicted))
}

#[pyfunction]
fn accuracy(predicted: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    tlr_adapt::classify::accuracy(&predicted, &truth).map_err(to_py)
}

/// Rotated and translated Gaussian classes. Returns `(xs, ys, xt, yt)`.
#[pyfunction]
#[pyo3(signature = (classes=4, n_per_class=100, dim=20, rotation_deg=30.0, translation=1.0, noise_std=0.5, seed=0))]
#[allow(clippy::type_complexity, clippy::too_many_arguments)]
fn synth_shift_pair(
    py: Python<'_>,
    classes: usize,
    n_per_class: usize,
    dim: usize,
    rotation_deg: f64,
    translation: f64,
    noise_std: f64,
    seed: u64,
) -> PyResult<(
    Bound<'_, PyArray2<f64>>,
    Bound<'_, PyArray1<i64>>,
    Bound<'_, PyArray2<f64>>,
    Bound<'_, PyArray1<i64>>,
)> {
    let pair = tlr_adapt::dataset::synth_shift_pair(&SynthConfig {
        n_per_class,
        dim,
        classes,
        rotation_deg,
        translation,
        noise_std,
        seed,
    })
    .map_err(to_py)?;
    Ok((
        to_numpy(py, pair.source().features()),
        labels_to_numpy(py, pair.source_labels()),
        to_numpy(py, pair.target().features()),
        labels_to_numpy(py, pair.target_labels().expect("synthetic target is labeled")),
    ))
}

#[pymodule]
fn pytlr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<TlrModel>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(grid_search, m)?)?;
    m.add_function(wrap_pyfunction!(mmd_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(mmd_latent, m)?)?;
    m.add_function(wrap_pyfunction!(knn1_predict, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(synth_shift_pair, m)?)?;
    Ok(())
}
