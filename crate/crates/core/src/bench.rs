//! Transductive grid search over `(alpha, beta, k)` with repeated runs and
//! report emission.
//!
//! One eigendecomposition serves every `k` of an `(alpha, beta)` pair: the
//! columns of `W` do not depend on how many of them are kept, and the 1-NN
//! distances are accumulated one latent column at a time.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classify::knn1_predict_prefixes;
use crate::dataset::{sample_indices_per_class, DomainPair};
use crate::error::{io_err, Result, TlrError};
use crate::kernel::KernelSpec;
use crate::tlr::{SolveOptions, TlrHyperparams, TlrProblem};

/// Per-class training sample size of the action-recognition protocol.
pub const PROTOCOL_PER_CLASS: usize = 30;
/// Number of random repetitions of that protocol.
pub const PROTOCOL_RUNS: usize = 10;

/// Header of the CSV report.
pub const CSV_HEADER: [&str; 6] = ["pair", "alpha", "beta", "k", "run", "accuracy"];

/// Search space. Configurations are enumerated alpha-major, then beta, then k.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub ks: Vec<usize>,
}

impl Default for GridSpec {
    /// `alpha, beta ∈ {1e-5, …, 1}`, `k ∈ {10, 20, …, 200}`.
    fn default() -> Self {
        let weights = vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];
        Self {
            alphas: weights.clone(),
            betas: weights,
            ks: (1..=20).map(|i| 10 * i).collect(),
        }
    }
}

impl GridSpec {
    pub fn singleton(alpha: f64, beta: f64, k: usize) -> Self {
        Self {
            alphas: vec![alpha],
            betas: vec![beta],
            ks: vec![k],
        }
    }

    pub fn len(&self) -> usize {
        self.alphas.len() * self.betas.len() * self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.betas.is_empty() || self.ks.is_empty() {
            return Err(TlrError::EmptyGrid("alphas, betas and ks must all be non-empty".into()));
        }
        for &w in self.alphas.iter().chain(&self.betas) {
            if !(w > 0.0 && w.is_finite()) {
                return Err(TlrError::InvalidArgument(format!("grid weight {w} is not positive")));
            }
        }
        if self.ks.contains(&0) {
            return Err(TlrError::InvalidArgument("grid contains k = 0".into()));
        }
        Ok(())
    }

    /// Every `(alpha, beta, k)` in enumeration order.
    pub fn configurations(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.alphas
            .iter()
            .flat_map(move |&a| self.betas.iter().flat_map(move |&b| self.ks.iter().map(move |&k| (a, b, k))))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub pair_id: String,
    pub grid: GridSpec,
    pub kernel: KernelSpec,
    pub runs: usize,
    /// Re-draw this many source samples per class on every run.
    pub per_class: Option<usize>,
    pub seed: u64,
    /// Worker threads; `None` or `Some(1)` runs serially.
    pub threads: Option<usize>,
    pub solve: SolveOptions,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            pair_id: "pair".into(),
            grid: GridSpec::default(),
            kernel: KernelSpec::Linear,
            runs: 1,
            per_class: None,
            seed: 0,
            threads: None,
            solve: SolveOptions::default(),
        }
    }
}

/// Accuracies of one configuration, one per run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigRecord {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub accuracies: Vec<f64>,
}

impl ConfigRecord {
    pub fn mean(&self) -> f64 {
        self.accuracies.iter().sum::<f64>() / self.accuracies.len() as f64
    }

    /// Population standard deviation across runs.
    pub fn std(&self) -> f64 {
        let m = self.mean();
        let var = self.accuracies.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / self.accuracies.len() as f64;
        var.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedConfig {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub pair_id: String,
    pub records: Vec<ConfigRecord>,
    pub skipped: Vec<SkippedConfig>,
    /// Index into `records` of the highest mean accuracy (first on ties).
    pub best: usize,
    pub runs: usize,
    pub seed: u64,
    pub per_class: Option<usize>,
    /// Source rows used per run.
    pub n_source: usize,
    pub n_target: usize,
    pub kernel: KernelSpec,
    /// Wall-clock seconds; not part of any emitted report.
    pub elapsed_secs: f64,
}

impl ExperimentReport {
    pub fn best_record(&self) -> &ConfigRecord {
        &self.records[self.best]
    }

    /// Configurations accounted for: evaluated plus skipped.
    pub fn total_configurations(&self) -> usize {
        self.records.len() + self.skipped.len()
    }

    /// Mean accuracy over the `alphas × betas` plane at a fixed `k`, indexed
    /// `[alpha][beta]` in the order the values first appear.
    pub fn surface(&self, k: usize) -> (Vec<f64>, Vec<f64>, Vec<Vec<Option<f64>>>) {
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        for r in &self.records {
            if !alphas.contains(&r.alpha) {
                alphas.push(r.alpha);
            }
            if !betas.contains(&r.beta) {
                betas.push(r.beta);
            }
        }
        let mut grid = vec![vec![None; betas.len()]; alphas.len()];
        for r in self.records.iter().filter(|r| r.k == k) {
            let i = alphas.iter().position(|&a| a == r.alpha).expect("collected above");
            let j = betas.iter().position(|&b| b == r.beta).expect("collected above");
            grid[i][j] = Some(r.mean());
        }
        (alphas, betas, grid)
    }

    /// One row per configuration and run, in report order.
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.records
            .iter()
            .flat_map(|r| {
                r.accuracies.iter().enumerate().map(move |(run, &accuracy)| CsvRow {
                    pair: self.pair_id.clone(),
                    alpha: r.alpha,
                    beta: r.beta,
                    k: r.k,
                    run,
                    accuracy,
                })
            })
            .collect()
    }
}

fn run_seeds(seed: u64, runs: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..runs).map(|_| rng.next_u64()).collect()
}

fn training_pair(pair: &DomainPair, per_class: Option<usize>, run_seed: u64) -> Result<DomainPair> {
    match per_class {
        None => Ok(pair.clone()),
        Some(m) => {
            let idx = sample_indices_per_class(pair.source_labels(), m, run_seed);
            pair.with_source(pair.source().select_rows(&idx))
        }
    }
}

/// Accuracy of every `k` in `ks` at one `(alpha, beta)`, from a single
/// eigendecomposition.
fn evaluate_weights(
    problem: &TlrProblem,
    pair: &DomainPair,
    truth: &[usize],
    alpha: f64,
    beta: f64,
    ks: &[usize],
    opts: &SolveOptions,
) -> Result<Vec<f64>> {
    let k_max = *ks.iter().max().expect("non-empty k list");
    let basis = problem.solve_with(&TlrHyperparams::new(alpha, beta, k_max)?, opts)?;
    let (ps, pt) = problem.embed(&basis.projection);
    let predictions = knn1_predict_prefixes(&ps, pair.source_labels(), &pt, ks)?;
    predictions
        .iter()
        .map(|p| crate::classify::accuracy(p, truth))
        .collect()
}

/// Evaluates every grid configuration on `runs` runs and records per-run
/// target accuracy.
///
/// Configurations with `k >= n1 + n2` cannot be solved; they are logged and
/// listed in [`ExperimentReport::skipped`].
pub fn grid_search(pair: &DomainPair, cfg: &BenchConfig) -> Result<ExperimentReport> {
    let started = Instant::now();
    cfg.grid.validate()?;
    if cfg.runs == 0 {
        return Err(TlrError::InvalidArgument("runs must be at least 1".into()));
    }
    if cfg.per_class == Some(0) {
        return Err(TlrError::InvalidArgument("per-class count must be at least 1".into()));
    }
    let truth = pair.target_labels().ok_or_else(|| {
        TlrError::InvalidArgument("grid search scores target accuracy and needs target labels".into())
    })?;

    let seeds = run_seeds(cfg.seed, cfg.runs);
    let n_source = training_pair(pair, cfg.per_class, seeds[0])?.source().nrows();
    let n_target = pair.target().nrows();
    let size = n_source + n_target;

    let ks: Vec<usize> = cfg.grid.ks.iter().copied().filter(|&k| k < size).collect();
    let mut skipped = Vec::new();
    for (alpha, beta, k) in cfg.grid.configurations().filter(|&(_, _, k)| k >= size) {
        log::warn!("skipping alpha={alpha} beta={beta} k={k}: k must be below n1+n2={size}");
        skipped.push(SkippedConfig {
            alpha,
            beta,
            k,
            reason: format!("k >= n1+n2 = {size}"),
        });
    }
    if ks.is_empty() {
        return Err(TlrError::EmptyGrid(format!("every k is >= n1+n2 = {size}")));
    }

    let weight_pairs: Vec<(f64, f64)> = cfg
        .grid
        .alphas
        .iter()
        .flat_map(|&a| cfg.grid.betas.iter().map(move |&b| (a, b)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(1).max(1))
        .build()
        .map_err(|e| TlrError::InvalidArgument(format!("thread pool: {e}")))?;

    // accuracies[weight pair][k index][run]
    let mut accuracies = vec![vec![Vec::with_capacity(cfg.runs); ks.len()]; weight_pairs.len()];
    for (run, &run_seed) in seeds.iter().enumerate() {
        let train = training_pair(pair, cfg.per_class, run_seed)?;
        let problem = TlrProblem::from_pair(&train, &cfg.kernel)?;
        log::debug!("run {run}: n1={} n2={}", train.source().nrows(), n_target);
        let eval = |&(alpha, beta): &(f64, f64)| evaluate_weights(&problem, &train, truth, alpha, beta, &ks, &cfg.solve);
        let per_pair: Vec<Result<Vec<f64>>> = if cfg.threads.unwrap_or(1) > 1 {
            pool.install(|| weight_pairs.par_iter().map(eval).collect())
        } else {
            weight_pairs.iter().map(eval).collect()
        };
        for (slot, accs) in accuracies.iter_mut().zip(per_pair) {
            for (per_k, acc) in slot.iter_mut().zip(accs?) {
                per_k.push(acc);
            }
        }
    }

    let mut records = Vec::with_capacity(weight_pairs.len() * ks.len());
    for (&(alpha, beta), per_k) in weight_pairs.iter().zip(accuracies) {
        for (&k, accs) in ks.iter().zip(per_k) {
            records.push(ConfigRecord {
                alpha,
                beta,
                k,
                accuracies: accs,
            });
        }
    }
    let mut best = 0;
    for (i, r) in records.iter().enumerate() {
        if r.mean() > records[best].mean() {
            best = i;
        }
    }

    Ok(ExperimentReport {
        pair_id: cfg.pair_id.clone(),
        records,
        skipped,
        best,
        runs: cfg.runs,
        seed: cfg.seed,
        per_class: cfg.per_class,
        n_source,
        n_target,
        kernel: cfg.kernel,
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}

/// Grid search where each of `runs` runs trains on a fresh draw of
/// `per_class` source samples per class and tests on the whole target.
pub fn run_protocol_ixmas_style(pair: &DomainPair, per_class: usize, runs: usize, cfg: &BenchConfig) -> Result<ExperimentReport> {
    let cfg = BenchConfig {
        per_class: Some(per_class),
        runs,
        ..cfg.clone()
    };
    grid_search(pair, &cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = TlrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(TlrError::InvalidArgument(format!("unknown report format {other:?}"))),
        }
    }
}

/// One line of the CSV report.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub pair: String,
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub run: usize,
    pub accuracy: f64,
}

pub fn write_reports<W: Write>(reports: &[ExperimentReport], format: ReportFormat, out: W) -> Result<()> {
    if reports.is_empty() || reports.iter().any(|r| r.records.is_empty()) {
        return Err(TlrError::InvalidArgument("cannot emit an empty report".into()));
    }
    match format {
        ReportFormat::Csv => write_csv(reports, out),
        ReportFormat::Markdown => {
            let mut out = out;
            out.write_all(render_markdown(reports).as_bytes())
                .map_err(|e| TlrError::Format(e.to_string()))
        }
    }
}

pub fn emit_report(reports: &[ExperimentReport], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    write_reports(reports, format, &mut w)?;
    w.flush().map_err(io_err(path))
}

fn write_csv<W: Write>(reports: &[ExperimentReport], out: W) -> Result<()> {
    let csv_err = |e: csv::Error| TlrError::Format(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for row in reports.iter().flat_map(ExperimentReport::csv_rows) {
        w.write_record([
            row.pair,
            row.alpha.to_string(),
            row.beta.to_string(),
            row.k.to_string(),
            row.run.to_string(),
            row.accuracy.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| TlrError::Format(e.to_string()))
}

/// Parses a CSV report back into rows.
pub fn read_report_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| TlrError::Format(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(TlrError::Format(format!("unexpected report header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| TlrError::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if rec.len() != CSV_HEADER.len() {
            return Err(TlrError::RowWidth {
                row,
                expected: CSV_HEADER.len(),
                found: rec.len(),
            });
        }
        let field = |j: usize| -> &str { &rec[j] };
        let bad = |j: usize| TlrError::Parse {
            row,
            column: j + 1,
            message: format!("bad {} value {:?}", CSV_HEADER[j], &rec[j]),
        };
        rows.push(CsvRow {
            pair: field(0).to_string(),
            alpha: field(1).parse().map_err(|_| bad(1))?,
            beta: field(2).parse().map_err(|_| bad(2))?,
            k: field(3).parse().map_err(|_| bad(3))?,
            run: field(4).parse().map_err(|_| bad(4))?,
            accuracy: field(5).parse().map_err(|_| bad(5))?,
        });
    }
    Ok(rows)
}

/// Regroups CSV rows of one pair into per-configuration records.
pub fn records_from_rows(rows: &[CsvRow]) -> Vec<ConfigRecord> {
    let mut out: Vec<ConfigRecord> = Vec::new();
    for row in rows {
        match out
            .iter_mut()
            .find(|r| r.alpha == row.alpha && r.beta == row.beta && r.k == row.k)
        {
            Some(r) => r.accuracies.push(row.accuracy),
            None => out.push(ConfigRecord {
                alpha: row.alpha,
                beta: row.beta,
                k: row.k,
                accuracies: vec![row.accuracy],
            }),
        }
    }
    out
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

/// Summary table of the best configuration per pair, then the full grid of
/// each pair with its best row in bold and the `alpha × beta` surface at the
/// best `k`.
pub fn render_markdown(reports: &[ExperimentReport]) -> String {
    let mut s = String::new();
    s.push_str("| pair | accuracy (%) | std (%) | alpha | beta | k | runs |\n");
    s.push_str("|---|---|---|---|---|---|---|\n");
    for r in reports {
        let b = r.best_record();
        let _ = writeln!(
            s,
            "| {} | **{}** | {} | {} | {} | {} | {} |",
            r.pair_id,
            pct(b.mean()),
            pct(b.std()),
            b.alpha,
            b.beta,
            b.k,
            r.runs
        );
    }
    if reports.len() > 1 {
        let avg = reports.iter().map(|r| r.best_record().mean()).sum::<f64>() / reports.len() as f64;
        let _ = writeln!(s, "| average | {} | | | | | |", pct(avg));
    }

    for r in reports {
        let _ = write!(
            s,
            "\n### {}\n\nkernel {}, n1={}, n2={}, runs={}, seed={}",
            r.pair_id, r.kernel, r.n_source, r.n_target, r.runs, r.seed
        );
        if let Some(m) = r.per_class {
            let _ = write!(s, ", {m} source samples per class");
        }
        let _ = writeln!(s, ", {} configurations ({} skipped)\n", r.total_configurations(), r.skipped.len());

        let best_k = r.best_record().k;
        let (alphas, betas, surface) = r.surface(best_k);
        let _ = writeln!(s, "Mean accuracy (%) at k = {best_k} (rows alpha, columns beta):\n");
        s.push_str("| alpha \\ beta |");
        for b in &betas {
            let _ = write!(s, " {b} |");
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(betas.len()));
        s.push('\n');
        for (a, row) in alphas.iter().zip(&surface) {
            let _ = write!(s, "| {a} |");
            for v in row {
                let _ = write!(s, " {} |", v.map(pct).unwrap_or_default());
            }
            s.push('\n');
        }

        s.push_str("\n| alpha | beta | k | mean (%) | std (%) |\n|---|---|---|---|---|\n");
        for (i, rec) in r.records.iter().enumerate() {
            let cells = [
                rec.alpha.to_string(),
                rec.beta.to_string(),
                rec.k.to_string(),
                pct(rec.mean()),
                pct(rec.std()),
            ];
            s.push('|');
            for c in cells {
                if i == r.best {
                    let _ = write!(s, " **{c}** |");
                } else {
                    let _ = write!(s, " {c} |");
                }
            }
            s.push('\n');
        }
        for sk in &r.skipped {
            let _ = writeln!(s, "| {} | {} | {} | skipped: {} | |", sk.alpha, sk.beta, sk.k, sk.reason);
        }
    }
    s
}

/// Raw-feature and PCA 1-NN accuracies for comparison against a report.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSummary {
    pub raw: f64,
    /// `(k, accuracy)` for every requested PCA dimension that fits.
    pub pca: Vec<(usize, f64)>,
}

pub fn baseline_accuracies(pair: &DomainPair, pca_ks: &[usize], mode: crate::classify::PcaMode) -> Result<BaselineSummary> {
    let raw = crate::classify::no_adaptation_predict(pair)?
        .accuracy
        .ok_or_else(|| TlrError::InvalidArgument("baselines need target labels".into()))?;
    let mut pca = Vec::new();
    for &k in pca_ks.iter().filter(|&&k| k >= 1 && k <= pair.source().dim()) {
        let r = crate::classify::pca_predict(pair, k, mode)?;
        pca.push((k, r.accuracy.expect("target labels checked above")));
    }
    Ok(BaselineSummary { raw, pca })
}
