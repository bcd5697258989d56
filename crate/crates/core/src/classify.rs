//! 1-nearest-neighbour classification, accuracy, and the PCA and
//! no-adaptation baselines.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::dataset::{stack_rows, DomainPair};
use crate::error::{Result, TlrError};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub predicted: Vec<usize>,
    /// Present when the true target labels were known.
    pub accuracy: Option<f64>,
}

impl PredictionResult {
    fn scored(predicted: Vec<usize>, truth: Option<&[usize]>) -> Result<Self> {
        let accuracy = truth.map(|t| accuracy(&predicted, t)).transpose()?;
        Ok(Self { predicted, accuracy })
    }
}

fn check_knn_inputs(train: &DMatrix<f64>, labels: &[usize], test: &DMatrix<f64>) -> Result<()> {
    if train.nrows() == 0 {
        return Err(TlrError::InvalidArgument("1-NN needs at least one training row".into()));
    }
    if labels.len() != train.nrows() {
        return Err(TlrError::DimensionMismatch(format!(
            "{} labels for {} training rows",
            labels.len(),
            train.nrows()
        )));
    }
    if train.ncols() != test.ncols() {
        return Err(TlrError::DimensionMismatch(format!(
            "train has {} columns, test has {}",
            train.ncols(),
            test.ncols()
        )));
    }
    Ok(())
}

/// Labels each test row with the label of its nearest (Euclidean) training
/// row; ties go to the lowest training index.
pub fn knn1_predict(train: &DMatrix<f64>, labels: &[usize], test: &DMatrix<f64>) -> Result<PredictionResult> {
    let mut out = knn1_predict_prefixes(train, labels, test, &[train.ncols()])?;
    Ok(PredictionResult {
        predicted: out.pop().expect("one prefix requested"),
        accuracy: None,
    })
}

/// 1-NN predictions using only the first `k` columns, for every `k` in
/// `prefixes`. Results come back in the order of `prefixes`.
///
/// Squared distances are accumulated one column at a time, so each prefix
/// gives exactly the same answer as [`knn1_predict`] on the truncated
/// matrices.
pub fn knn1_predict_prefixes(
    train: &DMatrix<f64>,
    labels: &[usize],
    test: &DMatrix<f64>,
    prefixes: &[usize],
) -> Result<Vec<Vec<usize>>> {
    check_knn_inputs(train, labels, test)?;
    if let Some(&bad) = prefixes.iter().find(|&&k| k > train.ncols()) {
        return Err(TlrError::InvalidArgument(format!(
            "prefix {bad} exceeds the {} available columns",
            train.ncols()
        )));
    }
    let (n_train, n_test) = (train.nrows(), test.nrows());
    let mut wanted: Vec<(usize, usize)> = prefixes.iter().copied().enumerate().map(|(i, k)| (k, i)).collect();
    wanted.sort_unstable();

    let mut dist = vec![0.0f64; n_train * n_test];
    let mut results = vec![Vec::new(); prefixes.len()];
    let mut done_cols = 0;
    for (k, slot) in wanted {
        while done_cols < k {
            let tr = train.column(done_cols);
            let te = test.column(done_cols);
            for (i, row) in dist.chunks_exact_mut(n_train).enumerate() {
                let t = te[i];
                for (d, &x) in row.iter_mut().zip(tr.iter()) {
                    let diff = t - x;
                    *d += diff * diff;
                }
            }
            done_cols += 1;
        }
        results[slot] = dist
            .chunks_exact(n_train)
            .map(|row| {
                let mut best = 0;
                for (j, &d) in row.iter().enumerate().skip(1) {
                    if d < row[best] {
                        best = j;
                    }
                }
                labels[best]
            })
            .collect();
    }
    Ok(results)
}

/// Fraction of positions where `predicted` and `truth` agree.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(TlrError::DimensionMismatch(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(TlrError::InvalidArgument("accuracy of an empty label set".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// 1-NN on the features as given, with no projection.
pub fn no_adaptation_predict(pair: &DomainPair) -> Result<PredictionResult> {
    let predicted = knn1_predict(pair.source().features(), pair.source_labels(), pair.target().features())?.predicted;
    PredictionResult::scored(predicted, pair.target_labels())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PcaMode {
    /// Each domain is projected onto its own principal subspace.
    #[default]
    PerDomain,
    /// Both domains are projected onto the subspace of the pooled data.
    Pooled,
}

/// Principal axes of one sample: mean and the top-`k` eigenvectors of the
/// population covariance, with their eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: nalgebra::RowDVector<f64>,
    pub components: DMatrix<f64>,
    pub variances: nalgebra::DVector<f64>,
}

impl PcaBasis {
    pub fn fit(x: &DMatrix<f64>, k: usize) -> Result<Self> {
        if k == 0 || k > x.ncols() {
            return Err(TlrError::InvalidArgument(format!(
                "PCA dimension {k} must be in 1..={}",
                x.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Err(TlrError::InvalidArgument("PCA of an empty matrix".into()));
        }
        let mean = x.row_mean();
        let centered = center(x, &mean);
        let cov = crate::kernel::symmetrize(centered.transpose() * &centered / x.nrows() as f64);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        order.truncate(k);
        let mut components = eig.eigenvectors.select_columns(&order);
        for mut col in components.column_iter_mut() {
            let pivot = col.iter().copied().fold(0.0f64, |b, v| if v.abs() > b.abs() { v } else { b });
            if pivot < 0.0 {
                col.neg_mut();
            }
        }
        let variances = nalgebra::DVector::from_iterator(k, order.iter().map(|&i| eig.eigenvalues[i]));
        Ok(Self {
            mean,
            components,
            variances,
        })
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(TlrError::DimensionMismatch(format!(
                "PCA basis is {}-dimensional, input has {} columns",
                self.mean.len(),
                x.ncols()
            )));
        }
        Ok(center(x, &self.mean) * &self.components)
    }
}

fn center(x: &DMatrix<f64>, mean: &nalgebra::RowDVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        row -= mean;
    }
    out
}

/// `(P_S, P_T)` for the PCA baseline.
pub fn pca_fit_transform(
    source: &DMatrix<f64>,
    target: &DMatrix<f64>,
    k: usize,
    mode: PcaMode,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if source.ncols() != target.ncols() {
        return Err(TlrError::DimensionMismatch("source and target widths differ".into()));
    }
    match mode {
        PcaMode::PerDomain => {
            let ps = PcaBasis::fit(source, k)?.transform(source)?;
            let pt = PcaBasis::fit(target, k)?.transform(target)?;
            Ok((ps, pt))
        }
        PcaMode::Pooled => {
            let basis = PcaBasis::fit(&stack_rows(source, target), k)?;
            Ok((basis.transform(source)?, basis.transform(target)?))
        }
    }
}

/// 1-NN after projecting with [`pca_fit_transform`].
pub fn pca_predict(pair: &DomainPair, k: usize, mode: PcaMode) -> Result<PredictionResult> {
    let (ps, pt) = pca_fit_transform(pair.source().features(), pair.target().features(), k, mode)?;
    let predicted = knn1_predict(&ps, pair.source_labels(), &pt)?.predicted;
    PredictionResult::scored(predicted, pair.target_labels())
}
