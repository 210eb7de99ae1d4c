//! `poolsel` binary. Subcommands cover the whole workflow: `synth` writes a
//! seeded train/test pair, `select` picks a design from a pool, `fit` trains
//! a ridge model on the selected rows, `simulate` runs the resampling
//! comparison, and `report` turns trial rows into tables and plot data.
//!
//! Exit codes: 0 on success, 1 for data or file errors, 2 for flag misuse.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use poolsel::{
    derive_seed, fedorov_augment, fit_ridge, format_diagnostics, format_percent_table,
    generate_synthetic, load_dataset, pearson, persistence_curve, read_trials, run_simulation,
    summarize, write_dataset, write_persistence, write_plot_data, write_summary, write_trials,
    Algorithm, Criterion, Design, DesignFile, DistanceMetric, Error, LabeledDataset, SamplerConfig,
    ScoreRange, SetManifest, SimulationPlan, Task,
};

#[derive(Parser)]
#[command(name = "poolsel", version, about = "Pool-based training set selection")]
struct Cli {
    /// Worker threads for parallel commands (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic train/test dataset pair
    Synth(SynthArgs),
    /// Select a design from a pool
    Select(SelectArgs),
    /// Fit a ridge model, optionally restricted to a design
    Fit(FitArgs),
    /// Run the resampling comparison and write trial rows
    Simulate(SimulateArgs),
    /// Summarize trial rows into tables and plot data
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory, created if absent
    #[arg(long)]
    out_dir: PathBuf,

    /// Identifier written into the manifests
    #[arg(long, default_value = "synthetic")]
    set_id: String,

    /// Training pool size
    #[arg(long, default_value_t = 1000)]
    train_n: usize,

    /// Test set size
    #[arg(long, default_value_t = 500)]
    test_n: usize,

    /// Number of features
    #[arg(long, default_value_t = 1)]
    p: usize,

    /// Linear coefficients, one per feature
    #[arg(long, value_delimiter = ',', default_value = "1.5")]
    beta: Vec<f64>,

    /// Noise standard deviation on the raw target
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,

    /// Bottom of the score scale
    #[arg(long, default_value_t = 2)]
    min_score: i32,

    /// Top of the score scale
    #[arg(long, default_value_t = 12)]
    max_score: i32,

    /// Generator seed; the two splits derive separate streams from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SelectArgs {
    /// Pool feature CSV
    #[arg(long)]
    features: PathBuf,

    /// Pool manifest JSON
    #[arg(long)]
    manifest: PathBuf,

    /// Strategy: fedorov, kennard_stone, kmeans or random
    #[arg(long)]
    algorithm: String,

    /// Design size
    #[arg(long)]
    m: usize,

    /// Exchange criterion: D, A or I
    #[arg(long, default_value = "D")]
    criterion: String,

    /// Distance for Kennard-Stone: euclidean or mahalanobis
    #[arg(long, default_value = "mahalanobis")]
    distance: String,

    /// Restarts for the seeded strategies
    #[arg(long, default_value_t = 10)]
    restarts: usize,

    /// Selection seed
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Design file whose rows stay fixed while the exchange fills up to --m;
    /// only valid with the fedorov strategy
    #[arg(long)]
    augment: Option<PathBuf>,

    /// Output design file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset feature CSV
    #[arg(long)]
    features: PathBuf,

    /// Dataset manifest JSON
    #[arg(long)]
    manifest: PathBuf,

    /// Design file restricting the fit to selected rows
    #[arg(long)]
    design: Option<PathBuf>,

    /// Ridge penalty
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,

    /// Output model JSON
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Training pool feature CSV
    #[arg(long)]
    train_features: PathBuf,

    /// Training pool manifest JSON
    #[arg(long)]
    train_manifest: PathBuf,

    /// Test set feature CSV
    #[arg(long)]
    test_features: PathBuf,

    /// Test set manifest JSON
    #[arg(long)]
    test_manifest: PathBuf,

    /// Design sizes to sweep
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "10,20,30,40,50,60,70,80,90,100"
    )]
    m_grid: Vec<usize>,

    /// Half-sample iterations per design size
    #[arg(long, default_value_t = 300)]
    iterations: usize,

    /// Strategies to compare
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "fedorov,kennard_stone,kmeans,random"
    )]
    algorithms: Vec<String>,

    /// Exchange criterion: D, A or I
    #[arg(long, default_value = "D")]
    criterion: String,

    /// Distance for Kennard-Stone: euclidean or mahalanobis
    #[arg(long, default_value = "mahalanobis")]
    distance: String,

    /// Restarts for the seeded strategies
    #[arg(long, default_value_t = 10)]
    restarts: usize,

    /// Ridge penalty used in every trial
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,

    /// Seed every trial stream is derived from
    #[arg(long, default_value_t = 0)]
    master_seed: u64,

    /// Output trial CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Trial CSV written by `simulate`
    #[arg(long)]
    trials: PathBuf,

    /// Output directory, created if absent
    #[arg(long)]
    out_dir: PathBuf,

    /// Pool feature CSV for the persistence diagnostic
    #[arg(long, requires = "persistence_manifest")]
    persistence_features: Option<PathBuf>,

    /// Pool manifest JSON for the persistence diagnostic
    #[arg(long, requires = "persistence_features")]
    persistence_manifest: Option<PathBuf>,

    /// Strategy traced by the persistence diagnostic
    #[arg(long, default_value = "kennard_stone")]
    persistence_algorithm: String,

    /// Size increment for the persistence comparison
    #[arg(long, default_value_t = 1)]
    persistence_step: usize,

    /// Selection seed for the persistence diagnostic
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Flag misuse surfaces as exit 2, everything the library rejects as exit 1.
enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| usage(format!("could not configure {jobs} worker threads: {e}")))?;
    }
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Select(args) => cmd_select(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn parse_algorithm(name: &str) -> Result<Algorithm, CliError> {
    Algorithm::from_str(name)
        .map_err(|_| usage(format!("unknown algorithm '{name}' (expected fedorov, kennard_stone, kmeans or random)")))
}

fn parse_criterion(name: &str) -> Result<Criterion, CliError> {
    match name {
        "D" | "d" => Ok(Criterion::D),
        "A" | "a" => Ok(Criterion::A),
        "I" | "i" => Ok(Criterion::I),
        other => Err(usage(format!("unknown criterion '{other}' (expected D, A or I)"))),
    }
}

fn parse_distance(name: &str) -> Result<DistanceMetric, CliError> {
    match name {
        "euclidean" => Ok(DistanceMetric::Euclidean),
        "mahalanobis" => Ok(DistanceMetric::Mahalanobis),
        other => Err(usage(format!(
            "unknown distance '{other}' (expected euclidean or mahalanobis)"
        ))),
    }
}

fn check_lambda(lambda: f64) -> Result<(), CliError> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(usage(format!(
            "--lambda must be finite and non-negative, got {lambda}"
        )));
    }
    Ok(())
}

fn sampler_config(
    criterion: &str,
    distance: &str,
    restarts: usize,
    seed: u64,
) -> Result<SamplerConfig, CliError> {
    if restarts == 0 {
        return Err(usage("--restarts must be at least 1"));
    }
    Ok(SamplerConfig {
        criterion: parse_criterion(criterion)?,
        distance: parse_distance(distance)?,
        restarts,
        seed,
        ..SamplerConfig::default()
    })
}

fn dataset_paths(dir: &Path, split: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{split}.csv")),
        dir.join(format!("{split}.manifest.json")),
    )
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    if args.train_n == 0 || args.test_n == 0 {
        return Err(usage("--train-n and --test-n must be at least 1"));
    }
    if args.p == 0 {
        return Err(usage("--p must be at least 1"));
    }
    if args.beta.len() != args.p {
        return Err(usage(format!(
            "--beta lists {} coefficients for {} features",
            args.beta.len(),
            args.p
        )));
    }
    if !args.noise_sd.is_finite() || args.noise_sd < 0.0 {
        return Err(usage(format!(
            "--noise-sd must be finite and non-negative, got {}",
            args.noise_sd
        )));
    }
    let range = ScoreRange::new(args.min_score, args.max_score)
        .map_err(|e| usage(format!("bad score scale: {e}")))?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;

    for (split, n) in [("train", args.train_n), ("test", args.test_n)] {
        let seed = derive_seed(args.seed, &["synth", split]);
        let pool = generate_synthetic(n, args.p, &args.beta, args.noise_sd, range, seed)?;
        let manifest = SetManifest::new(&args.set_id, Task::Synthetic, range)?
            .with_counts(Some(args.train_n), Some(args.test_n))
            .with_degenerate(pool.manifest().degenerate());
        if manifest.degenerate() {
            eprintln!("warning: {split} split is degenerate, every score is {}", range.min_score());
        }
        let pool = pool.with_manifest(manifest)?;
        let (features_path, manifest_path) = dataset_paths(&args.out_dir, split);
        write_dataset(&pool, &features_path, &manifest_path)?;
        println!(
            "wrote {split}: {} rows, {} features -> {}",
            n,
            args.p,
            features_path.display()
        );
    }
    Ok(())
}

fn cmd_select(args: SelectArgs) -> Result<(), CliError> {
    if args.m == 0 {
        return Err(usage("--m must be at least 1"));
    }
    let algorithm = parse_algorithm(&args.algorithm)?;
    let config = sampler_config(&args.criterion, &args.distance, args.restarts, args.seed)?;
    if args.augment.is_some() && algorithm != Algorithm::Fedorov {
        return Err(usage("--augment only applies to the fedorov strategy"));
    }

    let dataset = load_dataset(&args.features, &args.manifest)?;
    let pool = dataset.features();
    if args.m > pool.n() {
        return Err(usage(format!(
            "--m {} exceeds the pool size {}",
            args.m,
            pool.n()
        )));
    }

    let design = match &args.augment {
        Some(path) => {
            let base = DesignFile::read(path)?.resolve(pool)?;
            if args.m <= base.m() {
                return Err(usage(format!(
                    "--m {} does not extend the base design of {} rows",
                    args.m,
                    base.m()
                )));
            }
            fedorov_augment(pool, Some(&base), args.m - base.m(), &config)?
        }
        None => algorithm.select(pool, args.m, &config)?,
    };

    DesignFile::from_design(&design, pool, algorithm.label(), args.seed)?.write(&args.out)?;
    println!("algorithm: {algorithm}");
    println!("m: {}", design.m());
    match design.criterion_value() {
        Some(value) => println!("criterion value: {value:.6}"),
        None => println!("criterion value: n/a"),
    }
    println!("wrote: {}", args.out.display());
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    check_lambda(args.lambda)?;
    let dataset = load_dataset(&args.features, &args.manifest)?;

    let selected: LabeledDataset = match &args.design {
        Some(path) => {
            let design: Design = DesignFile::read(path)?.resolve(dataset.features())?;
            dataset.subset(design.indices())?
        }
        None => dataset,
    };

    let model = fit_ridge(
        selected.features(),
        &selected.scores_f64(),
        args.lambda,
        selected.manifest().score_range(),
    )?;
    std::fs::write(&args.out, model.to_json()?).map_err(|e| Error::io(&args.out, e))?;

    let predicted: Vec<f64> = model
        .predict_scores(selected.features())?
        .into_iter()
        .map(f64::from)
        .collect();
    match pearson(&predicted, &selected.scores_f64()) {
        Ok(r) => println!("train r: {r:.4} on {} rows", selected.n()),
        Err(Error::Degenerate(_)) => println!("train r: n/a on {} rows", selected.n()),
        Err(e) => return Err(e.into()),
    }
    println!("wrote: {}", args.out.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    check_lambda(args.lambda)?;
    if args.iterations == 0 {
        return Err(usage("--iterations must be at least 1"));
    }
    let mut m_grid = args.m_grid.clone();
    m_grid.sort_unstable();
    m_grid.dedup();
    if m_grid.first() == Some(&0) {
        return Err(usage("--m-grid sizes must be at least 1"));
    }

    let mut algorithms = Vec::with_capacity(args.algorithms.len());
    for name in &args.algorithms {
        let algorithm = parse_algorithm(name)?;
        if algorithms.contains(&algorithm) {
            return Err(usage(format!("--algorithms lists {algorithm} twice")));
        }
        algorithms.push(algorithm);
    }

    let plan = SimulationPlan {
        m_grid,
        iterations: args.iterations,
        algorithms,
        sampler_config: sampler_config(&args.criterion, &args.distance, args.restarts, 0)?,
        lambda: args.lambda,
        master_seed: args.master_seed,
        persistence_step: 1,
    };
    plan.validate().map_err(|e| usage(e.to_string()))?;

    let train = load_dataset(&args.train_features, &args.train_manifest)?;
    let test = load_dataset(&args.test_features, &args.test_manifest)?;

    let trials = run_simulation(&train, &test, &plan)?;
    write_trials(&args.out, &trials)?;
    println!("{}", format_diagnostics(&trials));
    println!("wrote: {}", args.out.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let trials = read_trials(&args.trials)?;
    let rows = summarize(&trials)?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;

    let summary_path = args.out_dir.join("summary.csv");
    write_summary(&summary_path, &rows)?;
    println!("wrote: {}", summary_path.display());

    let table = format_percent_table(&rows);
    let table_path = args.out_dir.join("percent_change.txt");
    std::fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;
    println!("wrote: {}", table_path.display());

    for path in write_plot_data(&args.out_dir, &rows)? {
        println!("wrote: {}", path.display());
    }

    if let (Some(features), Some(manifest)) = (&args.persistence_features, &args.persistence_manifest)
    {
        if args.persistence_step == 0 {
            return Err(usage("--persistence-step must be at least 1"));
        }
        let algorithm = parse_algorithm(&args.persistence_algorithm)?;
        let pool = load_dataset(features, manifest)?;
        let sizes: Vec<usize> = trials.iter().map(|t| t.m).collect::<BTreeSet<_>>().into_iter().collect();
        let curve = persistence_curve(
            pool.features(),
            algorithm,
            &sizes,
            args.persistence_step,
            &SamplerConfig::default().with_seed(args.seed),
        )?;
        let path = args.out_dir.join(format!("persistence_{algorithm}.csv"));
        write_persistence(&path, &curve)?;
        println!("wrote: {}", path.display());
    }

    print!("{table}");
    Ok(())
}
