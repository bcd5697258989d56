use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tlr_adapt::bench::{
    baseline_accuracies, grid_search, write_reports, BenchConfig, ExperimentReport, GridSpec, ReportFormat,
    PROTOCOL_PER_CLASS, PROTOCOL_RUNS,
};
use tlr_adapt::classify::{knn1_predict, PcaMode};
use tlr_adapt::dataset::{
    load_csv, save_csv, standardize_pair, synth_shift_pair, CsvOptions, DomainPair, LabelColumn, SynthConfig,
    ZScoreMode,
};
use tlr_adapt::kernel::{Bandwidth, KernelSpec};
use tlr_adapt::tlr::{fit_with, Normalization, SolveOptions, TlrHyperparams};

mod config;

#[derive(Parser, Debug)]
#[command(name = "tlr-adapt", version, about = "Transfer latent representation for unsupervised domain adaptation")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a projection on one source/target pair and save the model.
    Fit(FitArgs),
    /// Grid search over (alpha, beta, k) with repeated runs.
    Bench(BenchArgs),
    /// Write a synthetic rotated and translated domain pair as CSV.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ZScore {
    PerDomain,
    Pooled,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NormalizationArg {
    IdentityPlusB,
    ConstraintA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Protocol {
    /// Use whatever --runs and --per-class say.
    Custom,
    /// 30 source samples per class, 10 runs.
    Ixmas,
}

/// `last`, `none`, or a 0-based column index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LabelsArg {
    Column(LabelColumn),
    None,
}

impl std::str::FromStr for LabelsArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "last" => Ok(LabelsArg::Column(LabelColumn::Last)),
            "none" => Ok(LabelsArg::None),
            idx => idx
                .parse()
                .map(|i| LabelsArg::Column(LabelColumn::Index(i)))
                .map_err(|_| format!("expected `last`, `none` or a column index, got {idx:?}")),
        }
    }
}

impl LabelsArg {
    fn column(self) -> Option<LabelColumn> {
        match self {
            LabelsArg::Column(c) => Some(c),
            LabelsArg::None => None,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Labeled source CSV.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Target CSV.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Label column of the source file.
    #[arg(long, default_value = "last")]
    labels: LabelsArg,
    /// Label column of the target file; defaults to --labels.
    #[arg(long)]
    target_labels: Option<LabelsArg>,
    /// Skip the first line of every CSV.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    header: bool,
    #[arg(long, value_enum, default_value_t = ZScore::PerDomain)]
    zscore: ZScore,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = KernelKind::Linear)]
    kernel: KernelKind,
    /// RBF width: `auto` (median heuristic) or a positive number.
    #[arg(long, default_value = "auto")]
    bandwidth: String,
    /// Ridge added to A before solving.
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    #[arg(long, value_enum, default_value_t = NormalizationArg::IdentityPlusB)]
    normalization: NormalizationArg,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// key=value file with defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    k: usize,
    /// Where to write the model.
    #[arg(long)]
    out: PathBuf,
    /// Optional file for predicted target labels, one per line.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Several domains as NAME=PATH,NAME=PATH,...; every ordered pair is run.
    #[arg(long, conflicts_with_all = ["source", "target"])]
    domains: Option<String>,
    /// `default` for the full search space; --alphas/--betas/--ks override axes.
    #[arg(long, default_value = "default")]
    grid: String,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = Protocol::Custom)]
    protocol: Protocol,
    #[arg(long)]
    runs: Option<usize>,
    /// Source samples drawn per class on each run.
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Report file; standard output when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    #[arg(long, default_value = "source->target")]
    pair_id: String,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Samples per class in each domain.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    dim: usize,
    /// Degrees, applied in the first two coordinates of the target.
    #[arg(long, default_value_t = 30.0)]
    rotation: f64,
    #[arg(long, default_value_t = 1.0)]
    translation: f64,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Files are written as {prefix}source.csv and {prefix}target.csv.
    #[arg(long, default_value = "synth_")]
    out_prefix: String,
}

impl DataArgs {
    fn csv_options(&self, labels: LabelsArg) -> CsvOptions {
        CsvOptions {
            label_column: labels.column(),
            has_header: self.header,
        }
    }

    fn load(&self, path: &Path, labels: LabelsArg) -> Result<tlr_adapt::dataset::LabeledMatrix> {
        load_csv(path, self.csv_options(labels)).with_context(|| format!("loading {}", path.display()))
    }

    fn load_pair(&self) -> Result<DomainPair> {
        let (Some(source), Some(target)) = (&self.source, &self.target) else {
            bail!("--source and --target are required");
        };
        let s = self.load(source, self.labels)?;
        let t = self.load(target, self.target_labels.unwrap_or(self.labels))?;
        self.standardize(DomainPair::new(s, t)?)
    }

    fn standardize(&self, pair: DomainPair) -> Result<DomainPair> {
        Ok(match self.zscore {
            ZScore::PerDomain => standardize_pair(&pair, ZScoreMode::PerDomain)?,
            ZScore::Pooled => standardize_pair(&pair, ZScoreMode::Pooled)?,
            ZScore::None => pair,
        })
    }
}

impl ModelArgs {
    fn kernel_spec(&self) -> Result<KernelSpec> {
        Ok(match self.kernel {
            KernelKind::Linear => KernelSpec::Linear,
            KernelKind::Rbf => KernelSpec::Rbf(self.bandwidth.parse::<Bandwidth>()?),
        })
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            ridge: self.ridge,
            normalization: match self.normalization {
                NormalizationArg::IdentityPlusB => Normalization::IdentityPlusB,
                NormalizationArg::ConstraintA => Normalization::ConstraintA,
            },
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn run_fit(args: FitArgs) -> Result<()> {
    let pair = args.data.load_pair()?;
    let spec = args.model.kernel_spec()?;
    let hyper = TlrHyperparams::new(args.alpha, args.beta, args.k)?;
    let started = Instant::now();
    let fitted = fit_with(&pair, &spec, &hyper, &args.model.solve_options())?;
    fitted.model.save(&args.out)?;

    let d = &fitted.diagnostics;
    eprintln!(
        "fit n1={} n2={} k={} kernel={spec} in {:.2}s",
        pair.source().nrows(),
        pair.target().nrows(),
        hyper.k,
        started.elapsed().as_secs_f64()
    );
    eprintln!("latent MMD {:.6e}", d.latent_mmd);
    if d.near_zero_eigenvalues > 0 {
        log::warn!("{} retained eigenvalues are near zero; k exceeds the rank of A", d.near_zero_eigenvalues);
    }

    let prediction = knn1_predict(&fitted.p_source, pair.source_labels(), &fitted.p_target)?;
    if let Some(truth) = pair.target_labels() {
        let acc = tlr_adapt::classify::accuracy(&prediction.predicted, truth)?;
        eprintln!("target accuracy {acc:.4}");
    }
    if let Some(path) = &args.predictions {
        let mut w = create(path)?;
        for label in &prediction.predicted {
            writeln!(w, "{label}")?;
        }
        w.flush()?;
    }
    Ok(())
}

fn bench_grid(args: &BenchArgs) -> Result<GridSpec> {
    let mut grid = match args.grid.as_str() {
        "default" => GridSpec::default(),
        other => bail!("unknown grid {other:?}; use `default` with --alphas/--betas/--ks to override axes"),
    };
    if let Some(a) = &args.alphas {
        grid.alphas = a.clone();
    }
    if let Some(b) = &args.betas {
        grid.betas = b.clone();
    }
    if let Some(k) = &args.ks {
        grid.ks = k.clone();
    }
    grid.validate()?;
    Ok(grid)
}

fn parse_domains(spec: &str) -> Result<Vec<(String, PathBuf)>> {
    let domains: Vec<(String, PathBuf)> = spec
        .split(',')
        .map(|entry| {
            entry
                .split_once('=')
                .map(|(name, path)| (name.trim().to_string(), PathBuf::from(path.trim())))
                .with_context(|| format!("domain entry {entry:?} is not NAME=PATH"))
        })
        .collect::<Result<_>>()?;
    if domains.len() < 2 {
        bail!("--domains needs at least two entries");
    }
    Ok(domains)
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let (runs, per_class) = match args.protocol {
        Protocol::Custom => (args.runs.unwrap_or(1), args.per_class),
        Protocol::Ixmas => (
            args.runs.unwrap_or(PROTOCOL_RUNS),
            Some(args.per_class.unwrap_or(PROTOCOL_PER_CLASS)),
        ),
    };
    let threads = match args.threads {
        0 => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        n => n,
    };
    let base = BenchConfig {
        pair_id: args.pair_id.clone(),
        grid: bench_grid(&args)?,
        kernel: args.model.kernel_spec()?,
        runs,
        per_class,
        seed: args.seed,
        threads: Some(threads),
        solve: args.model.solve_options(),
    };

    let pairs: Vec<(String, DomainPair)> = match &args.domains {
        None => vec![(args.pair_id.clone(), args.data.load_pair()?)],
        Some(spec) => {
            let domains = parse_domains(spec)?;
            let mut pairs = Vec::new();
            for (si, (sname, spath)) in domains.iter().enumerate() {
                for (ti, (tname, tpath)) in domains.iter().enumerate() {
                    if si == ti {
                        continue;
                    }
                    let s = args.data.load(spath, args.data.labels)?;
                    let t = args.data.load(tpath, args.data.target_labels.unwrap_or(args.data.labels))?;
                    pairs.push((format!("{sname}->{tname}"), args.data.standardize(DomainPair::new(s, t)?)?));
                }
            }
            pairs
        }
    };

    let mut reports: Vec<ExperimentReport> = Vec::with_capacity(pairs.len());
    for (id, pair) in &pairs {
        let cfg = BenchConfig {
            pair_id: id.clone(),
            ..base.clone()
        };
        let pca_ks: Vec<usize> = cfg.grid.ks.clone();
        let baselines = baseline_accuracies(pair, &pca_ks, PcaMode::PerDomain)?;
        let report = grid_search(pair, &cfg).with_context(|| format!("grid search on {id}"))?;
        let best = report.best_record();
        eprintln!(
            "{id}: n1={} n2={} configurations={} skipped={} runs={} in {:.2}s",
            report.n_source,
            report.n_target,
            report.total_configurations(),
            report.skipped.len(),
            report.runs,
            report.elapsed_secs
        );
        eprintln!("{id}: raw 1-NN {:.4}", baselines.raw);
        if let Some((k, acc)) = baselines.pca.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1)) {
            eprintln!("{id}: best PCA 1-NN {acc:.4} (k={k})");
        }
        eprintln!(
            "{id}: best TLR {:.4} +/- {:.4} (alpha={}, beta={}, k={})",
            best.mean(),
            best.std(),
            best.alpha,
            best.beta,
            best.k
        );
        reports.push(report);
    }

    let format = match args.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Markdown => ReportFormat::Markdown,
    };
    match &args.report {
        Some(path) => {
            let mut w = create(path)?;
            write_reports(&reports, format, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_reports(&reports, format, &mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let pair = synth_shift_pair(&SynthConfig {
        n_per_class: args.n,
        dim: args.dim,
        classes: args.classes,
        rotation_deg: args.rotation,
        translation: args.translation,
        noise_std: args.noise,
        seed: args.seed,
    })?;
    let source = PathBuf::from(format!("{}source.csv", args.out_prefix));
    let target = PathBuf::from(format!("{}target.csv", args.out_prefix));
    save_csv(pair.source(), &source)?;
    save_csv(pair.target(), &target)?;
    eprintln!("wrote {} and {}", source.display(), target.display());
    Ok(())
}

fn main() -> ExitCode {
    let argv = match config::expand_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Bench(a) => run_bench(a),
        Command::Synth(a) => run_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
