//! Summaries of a posterior sample of partitions.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::PosteriorSample;
use crate::partition::{partition_from_canonical, Partition};

/// Quantile with linear interpolation between order statistics.
/// `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty slice");
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn sorted(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs
}

fn require_nonempty(sample: &PosteriorSample) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::Config(
            "posterior sample has no retained states".into(),
        ));
    }
    Ok(())
}

/// Posterior coreference frequency per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseSummary {
    pub pairs: Vec<(usize, usize, f64)>,
}

impl PairwiseSummary {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let key = (i.min(j), i.max(j));
        self.pairs.iter().find(|p| (p.0, p.1) == key).map(|p| p.2)
    }

    /// CSV `i,j,probability`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["i", "j", "probability"])?;
        for (i, j, p) in &self.pairs {
            w.write_record([i.to_string(), j.to_string(), p.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<pairwise>", e))?;
        Ok(())
    }
}

/// Fraction of retained states that put `i` and `j` in one cell, for each
/// requested pair.
pub fn pairwise_probabilities(
    sample: &PosteriorSample,
    pairs: impl IntoIterator<Item = (usize, usize)>,
) -> Result<PairwiseSummary> {
    require_nonempty(sample)?;
    let n = sample.len() as f64;
    let mut out = Vec::new();
    for (i, j) in pairs {
        let (i, j) = (i.min(j), i.max(j));
        if j >= sample.record_count {
            return Err(Error::Config(format!(
                "pair ({i}, {j}) outside {} records",
                sample.record_count
            )));
        }
        let hits = sample.labelings.iter().filter(|z| z[i] == z[j]).count();
        out.push((i, j, hits as f64 / n));
    }
    Ok(PairwiseSummary { pairs: out })
}

/// Distribution of the number of duplicate records `r - n` over retained states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DuplicateSummary {
    pub records: usize,
    pub samples: usize,
    pub mean: f64,
    pub median: f64,
    pub min: usize,
    pub max: usize,
    pub interval_level: f64,
    pub interval: (f64, f64),
    /// Same summaries expressed as a percentage of all records.
    pub mean_percentage: f64,
    pub interval_percentage: (f64, f64),
}

pub fn duplicate_percentage(records: usize, unique: usize) -> f64 {
    100.0 * (records as f64 - unique as f64) / records as f64
}

/// Summarize `r - n` across the sample with a central interval of
/// probability `level`.
pub fn duplicate_distribution(sample: &PosteriorSample, level: f64) -> Result<DuplicateSummary> {
    require_nonempty(sample)?;
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::Config(format!(
            "interval level {level} outside [0, 1]"
        )));
    }
    let r = sample.record_count;
    let counts: Vec<usize> = sample
        .labelings
        .iter()
        .map(|z| r - z.iter().max().map_or(0, |&m| m as usize + 1))
        .collect();
    let xs = sorted(counts.iter().map(|&c| c as f64).collect());
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let interval = (
        quantile(&xs, (1.0 - level) / 2.0),
        quantile(&xs, (1.0 + level) / 2.0),
    );
    let pct = |d: f64| 100.0 * d / r as f64;
    Ok(DuplicateSummary {
        records: r,
        samples: xs.len(),
        mean,
        median: quantile(&xs, 0.5),
        min: *counts.iter().min().expect("nonempty"),
        max: *counts.iter().max().expect("nonempty"),
        interval_level: level,
        interval,
        mean_percentage: pct(mean),
        interval_percentage: (pct(interval.0), pct(interval.1)),
    })
}

/// Pair counts between an estimate and a reference partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub b11: u64,
    pub b10: u64,
    pub b01: u64,
}

impl ConfusionCounts {
    pub fn precision(&self) -> f64 {
        if self.b11 + self.b10 == 0 {
            1.0
        } else {
            self.b11 as f64 / (self.b11 + self.b10) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.b11 + self.b01 == 0 {
            1.0
        } else {
            self.b11 as f64 / (self.b11 + self.b01) as f64
        }
    }
}

fn pairs_within(size: u64) -> u64 {
    size * size.saturating_sub(1) / 2
}

fn pairs_in_labels(labels: &[u32]) -> u64 {
    let mut sizes: HashMap<u32, u64> = HashMap::new();
    for &q in labels {
        *sizes.entry(q).or_default() += 1;
    }
    sizes.values().map(|&s| pairs_within(s)).sum()
}

/// Confusion counts from two label vectors over the same records.
pub fn confusion_from_labels(est: &[u32], reference: &[u32]) -> Result<ConfusionCounts> {
    if est.len() != reference.len() {
        return Err(Error::Config(format!(
            "estimate covers {} records but reference covers {}",
            est.len(),
            reference.len()
        )));
    }
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    for (&a, &b) in est.iter().zip(reference) {
        *joint.entry((a, b)).or_default() += 1;
    }
    let b11: u64 = joint.values().map(|&s| pairs_within(s)).sum();
    Ok(ConfusionCounts {
        b11,
        b10: pairs_in_labels(est) - b11,
        b01: pairs_in_labels(reference) - b11,
    })
}

pub fn confusion_counts(est: &Partition, reference: &Partition) -> Result<ConfusionCounts> {
    confusion_from_labels(&est.canonical_labels(), &reference.canonical_labels())
}

/// Pairwise `(precision, recall)` of `est` against `reference`.
pub fn precision_recall(est: &Partition, reference: &Partition) -> Result<(f64, f64)> {
    let c = confusion_counts(est, reference)?;
    Ok((c.precision(), c.recall()))
}

/// Distinct partitions in the sample with their relative frequency, most
/// frequent first. Ties keep order of first appearance.
pub fn partition_frequency_table(sample: &PosteriorSample) -> Result<Vec<(Partition, f64)>> {
    require_nonempty(sample)?;
    let mut index: HashMap<&[u32], usize> = HashMap::new();
    let mut counts: Vec<(&[u32], usize)> = Vec::new();
    for z in &sample.labelings {
        match index.get(z.as_slice()) {
            Some(&k) => counts[k].1 += 1,
            None => {
                index.insert(z, counts.len());
                counts.push((z, 1));
            }
        }
    }
    counts.sort_by_key(|c| std::cmp::Reverse(c.1));
    let n = sample.len() as f64;
    Ok(counts
        .into_iter()
        .map(|(z, c)| (partition_from_canonical(z), c as f64 / n))
        .collect())
}

/// CSV `rank,partition,frequency`; the partition uses the `0,1/2` notation.
pub fn write_frequency_table<W: Write>(table: &[(Partition, f64)], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["rank", "partition", "frequency"])?;
    for (k, (p, f)) in table.iter().enumerate() {
        w.write_record([(k + 1).to_string(), p.to_string(), f.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<frequencies>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Percentiles {
    pub median: f64,
    pub p1: f64,
    pub p99: f64,
}

impl Percentiles {
    pub fn of(values: Vec<f64>) -> Self {
        let xs = sorted(values);
        Self {
            median: quantile(&xs, 0.5),
            p1: quantile(&xs, 0.01),
            p99: quantile(&xs, 0.99),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub precision: Percentiles,
    pub recall: Percentiles,
}

/// Precision and recall of every retained partition against `reference`,
/// summarized by median and 1st/99th percentiles.
pub fn summary_distributions_of_metrics(
    sample: &PosteriorSample,
    reference: &Partition,
) -> Result<MetricSummary> {
    require_nonempty(sample)?;
    let truth = reference.canonical_labels();
    let mut precision = Vec::with_capacity(sample.len());
    let mut recall = Vec::with_capacity(sample.len());
    for z in &sample.labelings {
        let c = confusion_from_labels(z, &truth)?;
        precision.push(c.precision());
        recall.push(c.recall());
    }
    Ok(MetricSummary {
        precision: Percentiles::of(precision),
        recall: Percentiles::of(recall),
    })
}

/// CSV with one row per metric: `metric,median,p1,p99`.
pub fn write_metric_summary<W: Write>(summary: &MetricSummary, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["metric", "median", "p1", "p99"])?;
    for (name, p) in [("precision", summary.precision), ("recall", summary.recall)] {
        w.write_record([
            name.to_string(),
            p.median.to_string(),
            p.p1.to_string(),
            p.p99.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<metrics>", e))?;
    Ok(())
}
