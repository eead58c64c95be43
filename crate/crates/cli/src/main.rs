//! `dedup`: command-line front end to the partition sampler.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dedup_core::config::{PipelineConfig, SynthConfig};
use dedup_core::gibbs::read_labelings;
use dedup_core::pipeline::{self, Stage, StageError};
use dedup_core::posterior::{summary_distributions_of_metrics, write_metric_summary};
use dedup_core::synthgen::read_truth;
use dedup_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(
    name = "dedup",
    version,
    about = "Bayesian duplicate detection for record files"
)]
struct Cli {
    /// Worker threads for comparison and parallel chains (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the posterior over partitions and write summaries.
    Dedupe(RunArgs),
    /// Only compute comparison vectors and the candidate set.
    Compare(RunArgs),
    /// Run the independent-pairs mixture model on the same comparisons.
    Baseline(RunArgs),
    /// Generate a synthetic file with known duplicates.
    Synth(SynthArgs),
    /// Score a saved sample of partitions against a truth file.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator settings; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    originals: Option<usize>,
    #[arg(long)]
    duplicates: Option<usize>,
    #[arg(long)]
    errors: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// `labelings.txt` written by `dedupe`.
    #[arg(long)]
    sample: PathBuf,
    /// CSV `record_id,entity_id`.
    #[arg(long)]
    truth: PathBuf,
    /// Write `metrics.csv` here instead of printing to stdout.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    Stage(#[from] StageError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        let (stage, err) = match self {
            CliError::Config(_) => return EXIT_CONFIG,
            CliError::Core(e) => (None, e),
            CliError::Stage(s) => (Some(s.stage), &s.source),
        };
        // a file that does not match the declared schema is bad data
        if stage == Some(Stage::Ingest) {
            EXIT_DATA
        } else if stage == Some(Stage::Config) || err.is_config_error() {
            EXIT_CONFIG
        } else if err.is_data_error() && stage != Some(Stage::Output) {
            EXIT_DATA
        } else {
            EXIT_RUNTIME
        }
    }
}

fn load_pipeline(args: &RunArgs) -> Result<PipelineConfig, CliError> {
    if !args.config.is_file() {
        return Err(CliError::Config(format!(
            "config file {} not found",
            args.config.display()
        )));
    }
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.sampler.seed = seed;
    }
    if let Some(n) = args.iterations {
        cfg.sampler.iterations = n;
    }
    if let Some(n) = args.burn_in {
        cfg.sampler.burn_in = n;
    }
    if let Some(dir) = &args.output_dir {
        cfg.output.dir = dir.clone();
    }
    cfg.sampler.validate()?;
    Ok(cfg)
}

fn dedupe(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_pipeline(args)?;
    let result = pipeline::run_dedupe(&cfg)?;
    pipeline::write_dedupe(&cfg, &result, &cfg.output.dir)?;
    let d = &result.duplicates;
    println!(
        "{} records, {} candidate pairs, {} retained partitions",
        result.prepared.data.record_count(),
        result.prepared.graph.n_candidates(),
        result.sample.len()
    );
    println!(
        "duplicates: mean {:.2}, {:.0}% interval [{}, {}]",
        d.mean,
        100.0 * d.interval_level,
        d.interval.0,
        d.interval.1
    );
    match result.frequencies.first() {
        Some((p, f)) if p.record_count() <= 20 => println!("most frequent partition ({f:.3}): {p}"),
        Some((p, f)) => println!("most frequent partition ({f:.3}) has {} cells", p.n_cells()),
        None => {}
    }
    if let Some(m) = &result.metrics {
        println!(
            "median precision {:.3}, median recall {:.3}",
            m.precision.median, m.recall.median
        );
    }
    println!("wrote {}", cfg.output.dir.display());
    Ok(())
}

fn compare(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_pipeline(args)?;
    let prepared = pipeline::prepare(&cfg)?;
    pipeline::write_comparisons(&prepared, &cfg.output.dir)?;
    println!(
        "{} records, {} compared pairs, {} candidate pairs; wrote {}",
        prepared.data.record_count(),
        prepared.table.len(),
        prepared.graph.n_candidates(),
        cfg.output.dir.display()
    );
    Ok(())
}

fn baseline(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_pipeline(args)?;
    let result = pipeline::run_baseline(&cfg)?;
    pipeline::write_baseline(&cfg, &result, &cfg.output.dir)?;
    println!(
        "nontransitive triplets in {:.1}% of retained iterations; wrote {}",
        100.0 * result.trace.violation_rate(),
        cfg.output.dir.display()
    );
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
    })?))
}

fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) if !p.is_file() => {
            return Err(CliError::Config(format!(
                "config file {} not found",
                p.display()
            )));
        }
        Some(p) => SynthConfig::load(p)?,
        None => SynthConfig::default(),
    };
    let g = &mut cfg.generator;
    if let Some(v) = args.seed {
        g.seed = v;
    }
    if let Some(v) = args.originals {
        g.n_originals = v;
    }
    if let Some(v) = args.duplicates {
        g.n_duplicates = v;
    }
    if let Some(v) = args.errors {
        g.errors_per_duplicate = v;
    }
    if let Some(dir) = &args.output_dir {
        cfg.output.dir = dir.clone();
    }
    let file = cfg.generator()?.generate(&cfg.generator)?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let data = dir.join(&cfg.output.data);
    let truth = dir.join(&cfg.output.truth);
    file.data.save(&data, b',', "NA")?;
    file.write_truth(create(&truth)?)?;
    println!(
        "{} records ({} duplicates) -> {}, truth -> {}",
        file.data.record_count(),
        cfg.generator.n_duplicates,
        data.display(),
        truth.display()
    );
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let sample = read_labelings(&args.sample)?;
    let truth = read_truth(&args.truth)?;
    let summary = summary_distributions_of_metrics(&sample, &truth)?;
    match &args.output_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            write_metric_summary(&summary, create(&dir.join("metrics.csv"))?)?;
            println!("wrote {}", dir.join("metrics.csv").display());
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_metric_summary(&summary, &mut lock)?;
            lock.flush().ok();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let result = match &cli.command {
        Command::Dedupe(a) => dedupe(a),
        Command::Compare(a) => compare(a),
        Command::Baseline(a) => baseline(a),
        Command::Synth(a) => synth(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
