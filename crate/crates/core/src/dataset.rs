//! Labeled feature matrices, CSV ingest, z-score standardization, per-class
//! subsampling and a synthetic two-domain generator.
//!
//! Samples are stored as rows: an `n × d` matrix holds `n` samples of
//! dimension `d`.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{io_err, Result, TlrError};

/// Lower bound applied to every fitted standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Distance of each synthetic class center from the origin in the first two
/// coordinates.
pub const SYNTH_CENTER_RADIUS: f64 = 3.0;

/// Dense feature matrix with optional class labels, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    features: DMatrix<f64>,
    labels: Option<Vec<usize>>,
}

impl LabeledMatrix {
    pub fn new(features: DMatrix<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(TlrError::InvalidArgument(format!(
                "feature matrix must be non-empty, got {}x{}",
                features.nrows(),
                features.ncols()
            )));
        }
        if let Some((i, v)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (row, col) = (i % features.nrows(), i / features.nrows());
            return Err(TlrError::InvalidArgument(format!(
                "non-finite value {v} at row {row}, column {col}"
            )));
        }
        if let Some(l) = &labels {
            if l.len() != features.nrows() {
                return Err(TlrError::DimensionMismatch(format!(
                    "{} labels for {} rows",
                    l.len(),
                    features.nrows()
                )));
            }
        }
        Ok(Self { features, labels })
    }

    /// Builds a matrix from row slices.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(TlrError::RowWidth {
                row: bad + 1,
                expected: d,
                found: rows[bad].len(),
            });
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]), labels)
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn nrows(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn into_parts(self) -> (DMatrix<f64>, Option<Vec<usize>>) {
        (self.features, self.labels)
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// Labeled source domain plus a target domain whose labels, if any, are only
/// used for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    source: LabeledMatrix,
    target: LabeledMatrix,
}

impl DomainPair {
    pub fn new(source: LabeledMatrix, target: LabeledMatrix) -> Result<Self> {
        if source.labels().is_none() {
            return Err(TlrError::MissingLabels);
        }
        if source.dim() != target.dim() {
            return Err(TlrError::DimensionMismatch(format!(
                "source has {} features, target has {}",
                source.dim(),
                target.dim()
            )));
        }
        Ok(Self { source, target })
    }

    pub fn source(&self) -> &LabeledMatrix {
        &self.source
    }

    pub fn target(&self) -> &LabeledMatrix {
        &self.target
    }

    pub fn source_labels(&self) -> &[usize] {
        self.source.labels().expect("checked in DomainPair::new")
    }

    pub fn target_labels(&self) -> Option<&[usize]> {
        self.target.labels()
    }

    pub fn with_source(&self, source: LabeledMatrix) -> Result<Self> {
        Self::new(source, self.target.clone())
    }
}

/// Which column of a CSV row carries the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    Last,
    Index(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvOptions {
    pub label_column: Option<LabelColumn>,
    pub has_header: bool,
}

/// Reads a comma-separated matrix. Rows and columns in errors are 1-based.
pub fn load_csv(path: impl AsRef<Path>, opts: CsvOptions) -> Result<LabeledMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_csv(file, opts)
}

pub fn read_csv<R: std::io::Read>(reader: R, opts: CsvOptions) -> Result<LabeledMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    let mut label_idx = None;
    let mut nrows = 0;

    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| TlrError::Parse {
            row: i + 1,
            column: 0,
            message: e.to_string(),
        })?;
        let row = record.position().map_or(i + 1, |p| p.line() as usize);
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(TlrError::RowWidth {
                row,
                expected: w,
                found: record.len(),
            });
        }
        let li = *label_idx.get_or_insert(match opts.label_column {
            None => None,
            Some(LabelColumn::Last) => Some(w - 1),
            Some(LabelColumn::Index(c)) if c < w => Some(c),
            Some(LabelColumn::Index(c)) => {
                return Err(TlrError::InvalidArgument(format!(
                    "label column {c} out of range for {w} fields"
                )))
            }
        });
        for (j, field) in record.iter().enumerate() {
            if Some(j) == li {
                labels.push(parse_label(field).ok_or_else(|| TlrError::Parse {
                    row,
                    column: j + 1,
                    message: format!("label {field:?} is not a non-negative integer"),
                })?);
                continue;
            }
            let v: f64 = field.parse().map_err(|_| TlrError::Parse {
                row,
                column: j + 1,
                message: format!("{field:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(TlrError::Parse {
                    row,
                    column: j + 1,
                    message: format!("non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
        nrows += 1;
    }

    let width = width.ok_or_else(|| TlrError::InvalidArgument("CSV has no data rows".into()))?;
    let d = width - usize::from(label_idx.flatten().is_some());
    if d == 0 {
        return Err(TlrError::InvalidArgument("CSV has no feature columns".into()));
    }
    let features = DMatrix::from_row_slice(nrows, d, &values);
    LabeledMatrix::new(features, label_idx.flatten().map(|_| labels))
}

fn parse_label(field: &str) -> Option<usize> {
    if let Ok(v) = field.parse::<usize>() {
        return Some(v);
    }
    let v: f64 = field.parse().ok()?;
    (v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64).then_some(v as usize)
}

/// Writes `x` as CSV, appending the label as a last column when present.
pub fn write_csv<W: std::io::Write>(x: &LabeledMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| TlrError::Format(e.to_string());
    for i in 0..x.nrows() {
        let mut rec: Vec<String> = x.features.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(l) = x.labels() {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| TlrError::Format(e.to_string()))
}

pub fn save_csv(x: &LabeledMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    write_csv(x, std::io::BufWriter::new(file))
}

/// Per-column mean and (floored) population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScoreStats {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
}

impl ZScoreStats {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
        let std = DVector::from_iterator(
            x.ncols(),
            x.column_iter().zip(mean.iter()).map(|(c, &m)| {
                let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                var.sqrt().max(STD_FLOOR)
            }),
        );
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(TlrError::DimensionMismatch(format!(
                "matrix has {} columns, stats have {}",
                x.ncols(),
                self.dim()
            )));
        }
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.apply(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }
}

pub fn zscore_fit(x: &LabeledMatrix) -> ZScoreStats {
    ZScoreStats::fit(&x.features)
}

pub fn zscore_apply(x: &LabeledMatrix, stats: &ZScoreStats) -> Result<LabeledMatrix> {
    Ok(LabeledMatrix {
        features: stats.apply(&x.features)?,
        labels: x.labels.clone(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ZScoreMode {
    /// Each domain standardized with its own statistics.
    #[default]
    PerDomain,
    /// Both domains standardized with statistics of the stacked data.
    Pooled,
}

pub fn standardize_pair(pair: &DomainPair, mode: ZScoreMode) -> Result<DomainPair> {
    let (source, target) = match mode {
        ZScoreMode::PerDomain => (
            zscore_apply(&pair.source, &zscore_fit(&pair.source))?,
            zscore_apply(&pair.target, &zscore_fit(&pair.target))?,
        ),
        ZScoreMode::Pooled => {
            let stats = ZScoreStats::fit(&stack_rows(pair.source.features(), pair.target.features()));
            (zscore_apply(&pair.source, &stats)?, zscore_apply(&pair.target, &stats)?)
        }
    };
    DomainPair::new(source, target)
}

/// `[top; bottom]`. Caller guarantees equal column counts.
pub(crate) fn stack_rows(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let (n1, n2) = (top.nrows(), bottom.nrows());
    let mut out = DMatrix::zeros(n1 + n2, top.ncols());
    out.rows_mut(0, n1).copy_from(top);
    out.rows_mut(n1, n2).copy_from(bottom);
    out
}

/// Row indices of a per-class uniform draw without replacement.
///
/// Classes are visited in ascending label order; within a class the indices
/// appear in draw order.
pub fn sample_indices_per_class(labels: &[usize], m: usize, seed: u64) -> Vec<usize> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for members in by_class.values() {
        let take = m.min(members.len());
        out.extend(index::sample(&mut rng, members.len(), take).into_iter().map(|k| members[k]));
    }
    out
}

pub fn sample_per_class(x: &LabeledMatrix, m: usize, seed: u64) -> Result<LabeledMatrix> {
    let labels = x.labels().ok_or(TlrError::MissingLabels)?;
    if m == 0 {
        return Err(TlrError::InvalidArgument("per-class count must be at least 1".into()));
    }
    Ok(x.select_rows(&sample_indices_per_class(labels, m, seed)))
}

/// Parameters of a synthetic rotated/translated two-domain problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_per_class: usize,
    pub dim: usize,
    pub classes: usize,
    pub rotation_deg: f64,
    pub translation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Center of class `c`: evenly spaced on a circle in the first two
    /// coordinates, zero elsewhere.
    pub fn center(&self, c: usize) -> DVector<f64> {
        let theta = std::f64::consts::TAU * c as f64 / self.classes as f64;
        let mut v = DVector::zeros(self.dim);
        v[0] = SYNTH_CENTER_RADIUS * theta.cos();
        v[1] = SYNTH_CENTER_RADIUS * theta.sin();
        v
    }

    /// Applies the target-domain shift to one sample in place.
    pub fn shift(&self, x: &mut [f64]) {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let (x0, x1) = (x[0], x[1]);
        x[0] = c * x0 - s * x1;
        x[1] = s * x0 + c * x1;
        for v in x.iter_mut() {
            *v += self.translation;
        }
    }
}

/// Source domain: isotropic Gaussian blobs. Target domain: an independent
/// draw from the same blobs, rotated in the first two coordinates and then
/// translated by a constant in every coordinate.
pub fn synth_shift_pair(cfg: &SynthConfig) -> Result<DomainPair> {
    if cfg.dim < 2 || cfg.classes < 2 || cfg.n_per_class == 0 {
        return Err(TlrError::InvalidArgument(format!(
            "synthetic pair needs dim >= 2, classes >= 2, n_per_class >= 1 (got {}, {}, {})",
            cfg.dim, cfg.classes, cfg.n_per_class
        )));
    }
    if !(cfg.noise_std >= 0.0 && cfg.noise_std.is_finite())
        || !cfg.rotation_deg.is_finite()
        || !cfg.translation.is_finite()
    {
        return Err(TlrError::InvalidArgument(
            "noise_std must be finite and non-negative; rotation and translation finite".into(),
        ));
    }

    let draw = |stream: u64, shifted: bool| -> Result<LabeledMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        let n = cfg.n_per_class * cfg.classes;
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for c in 0..cfg.classes {
            let center = cfg.center(c);
            for _ in 0..cfg.n_per_class {
                let mut x: Vec<f64> = center
                    .iter()
                    .map(|m| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + cfg.noise_std * z
                    })
                    .collect();
                if shifted {
                    cfg.shift(&mut x);
                }
                rows.push(x);
                labels.push(c);
            }
        }
        LabeledMatrix::from_rows(&rows, Some(labels))
    };

    DomainPair::new(draw(0, false)?, draw(1, true)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn column(vals: &[f64]) -> LabeledMatrix {
        LabeledMatrix::new(DMatrix::from_column_slice(vals.len(), 1, vals), None).unwrap()
    }

    #[test]
    fn csv_with_label_column() {
        let opts = CsvOptions {
            label_column: Some(LabelColumn::Index(2)),
            has_header: false,
        };
        let x = read_csv("1.0,2.0,0\n3.0,4.0,1".as_bytes(), opts).unwrap();
        assert_eq!(x.features(), &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(x.labels(), Some(&[0, 1][..]));
    }

    #[test]
    fn csv_single_value() {
        let x = read_csv("5.5".as_bytes(), CsvOptions::default()).unwrap();
        assert_eq!((x.nrows(), x.dim()), (1, 1));
        assert_eq!(x.features()[(0, 0)], 5.5);
        assert!(x.labels().is_none());
    }

    #[test]
    fn csv_parse_error_location() {
        let err = read_csv("1.0,x".as_bytes(), CsvOptions::default()).unwrap_err();
        match err {
            TlrError::Parse { row, column, .. } => assert_eq!((row, column), (1, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_ragged_rows_and_bad_values() {
        let err = read_csv("1,2\n3".as_bytes(), CsvOptions::default()).unwrap_err();
        assert!(matches!(err, TlrError::RowWidth { row: 2, expected: 2, found: 1 }));
        let err = read_csv("1,inf".as_bytes(), CsvOptions::default()).unwrap_err();
        assert!(matches!(err, TlrError::Parse { row: 1, column: 2, .. }));
        let opts = CsvOptions {
            label_column: Some(LabelColumn::Last),
            has_header: false,
        };
        let err = read_csv("1,-1".as_bytes(), opts).unwrap_err();
        assert!(matches!(err, TlrError::Parse { row: 1, column: 2, .. }));
    }

    #[test]
    fn csv_header_and_last_label() {
        let opts = CsvOptions {
            label_column: Some(LabelColumn::Last),
            has_header: true,
        };
        let x = read_csv("a,b,y\n1,2,3\n4,5,6\n".as_bytes(), opts).unwrap();
        assert_eq!(x.labels(), Some(&[3, 6][..]));
        assert_eq!(x.features()[(1, 1)], 5.0);
        let err = read_csv("a,b\n1,q\n".as_bytes(), opts).unwrap_err();
        assert!(matches!(err, TlrError::Parse { row: 2, column: 2, .. }));
    }

    #[test]
    fn zscore_two_points() {
        let stats = zscore_fit(&column(&[1.0, 3.0]));
        assert_eq!((stats.mean[0], stats.std[0]), (2.0, 1.0));
        let z = zscore_apply(&column(&[1.0, 3.0]), &stats).unwrap();
        assert_eq!(z.features().as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn zscore_constant_column_uses_floor() {
        let stats = zscore_fit(&column(&[7.0, 7.0, 7.0]));
        assert_eq!(stats.mean[0], 7.0);
        assert_eq!(stats.std[0], STD_FLOOR);
    }

    #[test]
    fn zscore_population_std() {
        let x = column(&[0.0, 0.0, 6.0, 6.0]);
        let stats = zscore_fit(&x);
        assert_eq!((stats.mean[0], stats.std[0]), (3.0, 3.0));
        let z = zscore_apply(&x, &stats).unwrap();
        assert_eq!(z.features().as_slice(), &[-1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn zscore_identity_and_mismatch() {
        let x = LabeledMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.5, 4.0]), Some(vec![1, 0])).unwrap();
        let id = ZScoreStats {
            mean: DVector::zeros(2),
            std: DVector::from_element(2, 1.0),
        };
        assert_eq!(zscore_apply(&x, &id).unwrap(), x);
        let wrong = ZScoreStats {
            mean: DVector::zeros(3),
            std: DVector::from_element(3, 1.0),
        };
        assert!(matches!(zscore_apply(&x, &wrong), Err(TlrError::DimensionMismatch(_))));
    }

    fn two_class(n: usize) -> LabeledMatrix {
        let rows: Vec<Vec<f64>> = (0..2 * n).map(|i| vec![i as f64]).collect();
        let labels = (0..2 * n).map(|i| i % 2).collect();
        LabeledMatrix::from_rows(&rows, Some(labels)).unwrap()
    }

    #[test]
    fn sample_per_class_counts() {
        let x = two_class(36);
        let s = sample_per_class(&x, 30, 3).unwrap();
        assert_eq!(s.nrows(), 60);
        let labels = s.labels().unwrap();
        assert!(labels[..30].iter().all(|&l| l == 0));
        assert!(labels[30..].iter().all(|&l| l == 1));
        assert_eq!(s, sample_per_class(&x, 30, 3).unwrap());
    }

    #[test]
    fn sample_per_class_full_is_grouped_permutation() {
        let x = two_class(5);
        let idx = sample_indices_per_class(x.labels().unwrap(), 100, 9);
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        assert!(idx[..5].iter().all(|i| i % 2 == 0));
    }

    #[test]
    fn sample_per_class_requires_labels() {
        assert!(matches!(sample_per_class(&column(&[1.0]), 1, 0), Err(TlrError::MissingLabels)));
    }

    fn synth(rotation_deg: f64, translation: f64, noise_std: f64) -> SynthConfig {
        SynthConfig {
            n_per_class: 10,
            dim: 2,
            classes: 2,
            rotation_deg,
            translation,
            noise_std,
            seed: 11,
        }
    }

    #[test]
    fn synth_shapes() {
        let pair = synth_shift_pair(&synth(10.0, 1.0, 0.3)).unwrap();
        assert_eq!((pair.source().nrows(), pair.source().dim()), (20, 2));
        assert_eq!((pair.target().nrows(), pair.target().dim()), (20, 2));
        assert!(pair.target_labels().is_some());
    }

    #[test]
    fn synth_no_shift_noise_free_is_bitwise_equal() {
        let pair = synth_shift_pair(&synth(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(pair.source().features(), pair.target().features());
    }

    #[test]
    fn synth_rotation_moves_class_means() {
        let cfg = SynthConfig {
            classes: 4,
            dim: 5,
            ..synth(30.0, 0.0, 0.0)
        };
        let pair = synth_shift_pair(&cfg).unwrap();
        let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        for class in 0..4 {
            let m = cfg.center(class);
            let row = pair.target().features().row(class * cfg.n_per_class);
            assert_abs_diff_eq!(row[0], c * m[0] - s * m[1], epsilon = 1e-15);
            assert_abs_diff_eq!(row[1], s * m[0] + c * m[1], epsilon = 1e-15);
            assert_eq!(row[2], 0.0);
        }
    }

    #[test]
    fn synth_rejects_bad_counts() {
        let cfg = SynthConfig { classes: 1, ..synth(0.0, 0.0, 1.0) };
        assert!(synth_shift_pair(&cfg).is_err());
        let cfg = SynthConfig { dim: 1, ..synth(0.0, 0.0, 1.0) };
        assert!(synth_shift_pair(&cfg).is_err());
    }

    #[test]
    fn domain_pair_invariants() {
        let labeled = LabeledMatrix::new(DMatrix::zeros(2, 2), Some(vec![0, 1])).unwrap();
        let unlabeled = LabeledMatrix::new(DMatrix::zeros(2, 3), None).unwrap();
        assert!(matches!(DomainPair::new(unlabeled.clone(), labeled.clone()), Err(TlrError::MissingLabels)));
        assert!(matches!(DomainPair::new(labeled, unlabeled), Err(TlrError::DimensionMismatch(_))));
        assert!(LabeledMatrix::new(DMatrix::zeros(2, 1), Some(vec![0])).is_err());
        assert!(LabeledMatrix::new(DMatrix::from_element(1, 1, f64::NAN), None).is_err());
    }
}
