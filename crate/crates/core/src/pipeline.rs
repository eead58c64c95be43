//! End-to-end runs: ingest, filter, compare, fix, sample, summarize.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::{Duration, Instant};

use serde_json::json;

use crate::baseline::{
    count_nontransitive_triplets, links_from_labels, run_mixture_gibbs, MixtureTrace,
};
use crate::candidates::{build_pairs, fix_noncoreferent, CandidateGraph};
use crate::comparison::{ComparisonPlan, ComparisonTable};
use crate::config::PipelineConfig;
use crate::error::Error;
use crate::gibbs::{run_chain, PosteriorSample};
use crate::model::PriorSpec;
use crate::partition::Partition;
use crate::posterior::{
    duplicate_distribution, pairwise_probabilities, partition_frequency_table,
    summary_distributions_of_metrics, write_frequency_table, write_metric_summary,
    DuplicateSummary, MetricSummary, PairwiseSummary,
};
use crate::record::{load_delimited, DataFile};
use crate::synthgen::read_truth;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Filter,
    Compare,
    Sample,
    Summarize,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Filter => "filter",
            Stage::Compare => "compare",
            Stage::Sample => "sample",
            Stage::Summarize => "summarize",
            Stage::Output => "output",
        })
    }
}

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> StageExt<T> for crate::Result<T> {
    fn stage(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Data and comparisons ready for sampling.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: DataFile,
    pub dropped: usize,
    pub table: ComparisonTable,
    pub graph: CandidateGraph,
    pub prior: PriorSpec,
}

pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared, StageError> {
    let schema = cfg.schema().stage(Stage::Config)?;
    let delimiter = cfg.input.delimiter_byte().stage(Stage::Config)?;
    let plan = ComparisonPlan::new(&schema, cfg.comparisons.clone()).stage(Stage::Config)?;
    let prior = cfg
        .prior
        .resolve(&plan.field_names(), &plan.max_levels())
        .stage(Stage::Config)?;

    let mut data = load_delimited(&cfg.input.path, schema, delimiter, &cfg.input.missing_token)
        .stage(Stage::Ingest)?;
    let dropped = data
        .retain_complete(&cfg.input.require_complete)
        .stage(Stage::Ingest)?;
    if dropped > 0 {
        log::info!(
            "dropped {dropped} rows missing one of {:?}",
            cfg.input.require_complete
        );
    }
    if data.record_count() == 0 {
        return Err(Error::NoRecords(format!(
            "{} after the validity filter",
            cfg.input.path.display()
        )))
        .stage(Stage::Ingest);
    }

    let pairs = build_pairs(&data, &cfg.filters).stage(Stage::Filter)?;
    let table = plan.compare_pairs(&data, pairs).stage(Stage::Compare)?;
    let graph = fix_noncoreferent(data.record_count(), &table, &cfg.fix).stage(Stage::Filter)?;
    log::info!(
        "{} records, {} compared pairs, {} candidate pairs",
        data.record_count(),
        table.len(),
        graph.n_candidates()
    );
    Ok(Prepared {
        data,
        dropped,
        table,
        graph,
        prior,
    })
}

pub struct DedupeResult {
    pub prepared: Prepared,
    pub sample: PosteriorSample,
    pub frequencies: Vec<(Partition, f64)>,
    pub duplicates: DuplicateSummary,
    pub pairwise: PairwiseSummary,
    pub metrics: Option<MetricSummary>,
    pub runtime: Duration,
}

pub fn run_dedupe(cfg: &PipelineConfig) -> Result<DedupeResult, StageError> {
    let start = Instant::now();
    let prepared = prepare(cfg)?;
    let sample = run_chain(
        &prepared.graph,
        &prepared.table,
        &prepared.prior,
        &cfg.sampler,
        None,
    )
    .stage(Stage::Sample)?;
    let frequencies = partition_frequency_table(&sample).stage(Stage::Summarize)?;
    let duplicates =
        duplicate_distribution(&sample, cfg.output.interval_level).stage(Stage::Summarize)?;
    let pairwise = pairwise_probabilities(&sample, prepared.graph.candidate_pairs(&prepared.table))
        .stage(Stage::Summarize)?;
    let metrics = match &cfg.truth {
        Some(path) => {
            let truth = read_truth(path).stage(Stage::Summarize)?;
            Some(summary_distributions_of_metrics(&sample, &truth).stage(Stage::Summarize)?)
        }
        None => None,
    };
    Ok(DedupeResult {
        prepared,
        sample,
        frequencies,
        duplicates,
        pairwise,
        metrics,
        runtime: start.elapsed(),
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, StageError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
        .stage(Stage::Output)
}

fn create_dir(dir: &Path) -> Result<(), StageError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(dir, e))
        .stage(Stage::Output)
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), StageError> {
    let w = create(dir, name)?;
    serde_json::to_writer_pretty(w, value)
        .map_err(|e| Error::io(dir.join(name), e.into()))
        .stage(Stage::Output)
}

/// `comparisons.csv` and `candidates.csv`.
pub fn write_comparisons(prepared: &Prepared, dir: &Path) -> Result<(), StageError> {
    create_dir(dir)?;
    prepared
        .table
        .write_csv(create(dir, "comparisons.csv")?)
        .stage(Stage::Output)?;
    prepared
        .graph
        .write_edges(&prepared.table, create(dir, "candidates.csv")?)
        .stage(Stage::Output)
}

fn manifest(
    cfg: &PipelineConfig,
    command: &str,
    prepared: &Prepared,
    extra: serde_json::Value,
    runtime: Duration,
) -> serde_json::Value {
    let chain_seeds: Vec<u64> = (0..cfg.sampler.chains)
        .map(|c| cfg.sampler.chain_seed(c))
        .collect();
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.sampler.seed,
        "chain_seeds": chain_seeds,
        "config": cfg,
        "records": prepared.data.record_count(),
        "dropped_records": prepared.dropped,
        "compared_pairs": prepared.table.len(),
        "candidate_pairs": prepared.graph.n_candidates(),
        "runtime_seconds": runtime.as_secs_f64(),
        "result": extra,
    })
}

/// Every dedupe artifact plus `manifest.json`.
pub fn write_dedupe(
    cfg: &PipelineConfig,
    result: &DedupeResult,
    dir: &Path,
) -> Result<(), StageError> {
    write_comparisons(&result.prepared, dir)?;
    let sample = &result.sample;
    sample
        .write_labelings(create(dir, "labelings.txt")?)
        .stage(Stage::Output)?;
    sample
        .write_param_trace(create(dir, "phi_trace.csv")?)
        .stage(Stage::Output)?;
    result
        .pairwise
        .write_csv(create(dir, "pairwise.csv")?)
        .stage(Stage::Output)?;
    write_frequency_table(&result.frequencies, create(dir, "partition_freq.csv")?)
        .stage(Stage::Output)?;
    write_json(dir, "duplicates.json", &json!(result.duplicates))?;

    let mut w = csv::Writer::from_writer(create(dir, "triplets.csv")?);
    let io = |e: csv::Error| StageError {
        stage: Stage::Output,
        source: e.into(),
    };
    w.write_record(["chain", "iteration", "nontransitive_triplets"])
        .map_err(io)?;
    for k in 0..sample.len() {
        let n = count_nontransitive_triplets(
            sample.record_count,
            &links_from_labels(&sample.labelings[k]),
        );
        w.write_record([
            sample.chain[k].to_string(),
            sample.iteration[k].to_string(),
            n.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::io(dir.join("triplets.csv"), e))
        .stage(Stage::Output)?;

    if let Some(m) = &result.metrics {
        write_metric_summary(m, create(dir, "metrics.csv")?).stage(Stage::Output)?;
    }
    let extra = json!({
        "retained": sample.len(),
        "distinct_partitions": result.frequencies.len(),
        "duplicates": result.duplicates,
        "metrics": result.metrics,
    });
    write_json(
        dir,
        "manifest.json",
        &manifest(cfg, "dedupe", &result.prepared, extra, result.runtime),
    )
}

pub struct BaselineResult {
    pub prepared: Prepared,
    pub trace: MixtureTrace,
    pub runtime: Duration,
}

pub fn run_baseline(cfg: &PipelineConfig) -> Result<BaselineResult, StageError> {
    let start = Instant::now();
    let prepared = prepare(cfg)?;
    let trace = run_mixture_gibbs(
        &prepared.graph,
        &prepared.table,
        &prepared.prior,
        &cfg.sampler,
    )
    .stage(Stage::Sample)?;
    Ok(BaselineResult {
        prepared,
        trace,
        runtime: start.elapsed(),
    })
}

/// `mixture_trace.csv`, `mixture_links.csv` and `manifest.json`.
pub fn write_baseline(
    cfg: &PipelineConfig,
    result: &BaselineResult,
    dir: &Path,
) -> Result<(), StageError> {
    write_comparisons(&result.prepared, dir)?;
    result
        .trace
        .write_csv(create(dir, "mixture_trace.csv")?)
        .stage(Stage::Output)?;
    let links = PairwiseSummary {
        pairs: result
            .trace
            .link_frequency
            .iter()
            .map(|&((i, j), p)| (i, j, p))
            .collect(),
    };
    links
        .write_csv(create(dir, "mixture_links.csv")?)
        .stage(Stage::Output)?;
    let extra = json!({
        "retained": result.trace.iteration.len(),
        "violation_rate": result.trace.violation_rate(),
        "max_nontransitive": result.trace.nontransitive.iter().max(),
    });
    write_json(
        dir,
        "manifest.json",
        &manifest(cfg, "baseline", &result.prepared, extra, result.runtime),
    )
}
