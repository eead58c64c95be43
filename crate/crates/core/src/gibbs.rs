//! Gibbs sampler over labelings and model parameters.
//!
//! One iteration is a systematic sweep of label updates over every record
//! that appears in a candidate pair, followed by conjugate updates of all
//! `m` and `u` parameters. A record may join an existing cell only when it
//! forms a candidate pair with every member of that cell; the weight of the
//! cell is the product of the pairwise likelihood ratios. Opening a new
//! cell has total weight one, and the concrete label is drawn uniformly
//! among the unused ones.
//!
//! Randomness is split into independent ChaCha streams: one for label
//! updates and one per field (keyed by the field name) for parameter
//! updates. A field whose comparisons are all missing therefore never
//! perturbs the label stream.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateGraph;
use crate::comparison::ComparisonTable;
use crate::error::{Error, Result};
use crate::model::{
    observed_level_totals, LevelLogTable, LevelPrior, ModelParams, PriorSpec, SufficientStats,
};
use crate::partition::{canonicalize_labels, validate_labeling};
use crate::tbeta::sample_truncated_beta;

const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub chains: usize,
    /// When false the parameters stay at their initial values.
    pub update_params: bool,
    /// Visit records in a fresh random order each sweep.
    pub randomized_scan: bool,
    /// Recompute sufficient statistics from scratch every this many
    /// iterations and check retained labelings against the candidate set.
    pub audit_every: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 1_000,
            thinning: 1,
            seed: 1,
            chains: 1,
            update_params: true,
            randomized_scan: false,
            audit_every: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thinning == 0 || self.chains == 0 {
            return Err(Error::Config("thinning and chains must be positive".into()));
        }
        if self.audit_every == Some(0) {
            return Err(Error::Config("audit interval must be positive".into()));
        }
        Ok(())
    }

    /// Seed of chain `c`; chain 0 uses the configured seed itself.
    pub fn chain_seed(&self, c: usize) -> u64 {
        self.seed
            .wrapping_add((c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn stream_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h | (1 << 63)
}

pub(crate) fn field_rng(seed: u64, field: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(field));
    rng
}

/// `m` draw given coreferent-pair level counts of one field.
pub(crate) fn draw_m<R: Rng + ?Sized>(
    prior: &LevelPrior,
    a1: &[u64],
    l: usize,
    rng: &mut R,
) -> Result<f64> {
    let alpha = prior.alpha_m + a1[l] as f64;
    let beta = prior.beta_m + SufficientStats::tail(a1, l) as f64;
    sample_truncated_beta(alpha, beta, prior.lambda, rng)
}

/// `u` draw given non-coreferent-pair level counts of one field.
pub(crate) fn draw_u<R: Rng + ?Sized>(
    prior: &LevelPrior,
    a0: &[u64],
    l: usize,
    rng: &mut R,
) -> Result<f64> {
    let alpha = prior.alpha_u + a0[l] as f64;
    let beta = prior.beta_u + SufficientStats::tail(a0, l) as f64;
    let dist = Beta::new(alpha, beta)
        .map_err(|e| Error::Sampler(format!("Beta({alpha}, {beta}): {e}")))?;
    let x: f64 = dist.sample(rng);
    Ok(x.clamp(f64::MIN_POSITIVE, BELOW_ONE))
}

/// Read-only data shared by every chain.
pub struct SamplerData<'a> {
    table: &'a ComparisonTable,
    graph: &'a CandidateGraph,
    prior: &'a PriorSpec,
    /// Table indices of the candidate pairs.
    candidates: Vec<usize>,
    /// Per record: `(partner, candidate index)`.
    adjacency: Vec<Vec<(usize, usize)>>,
    sweep: Vec<usize>,
    totals: Vec<Vec<u64>>,
}

impl<'a> SamplerData<'a> {
    pub fn new(
        graph: &'a CandidateGraph,
        table: &'a ComparisonTable,
        prior: &'a PriorSpec,
    ) -> Result<Self> {
        prior.check_shape(&table.max_levels)?;
        if graph.n_compared() != table.len() {
            return Err(Error::Config(
                "candidate graph and comparison table disagree".into(),
            ));
        }
        let r = graph.record_count();
        let candidates: Vec<usize> = (0..table.len())
            .filter(|&k| graph.is_candidate(k))
            .collect();
        let mut adjacency = vec![Vec::new(); r];
        for (c, &k) in candidates.iter().enumerate() {
            let (i, j) = table.pairs[k];
            adjacency[i].push((j, c));
            adjacency[j].push((i, c));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        let sweep = (0..r).filter(|&i| !adjacency[i].is_empty()).collect();
        Ok(Self {
            table,
            graph,
            prior,
            candidates,
            adjacency,
            sweep,
            totals: observed_level_totals(table),
        })
    }

    pub fn record_count(&self) -> usize {
        self.adjacency.len()
    }

    /// Records that are updated in each sweep.
    pub fn sweep_records(&self) -> &[usize] {
        &self.sweep
    }

    fn candidate_row(&self, c: usize) -> &[Option<u8>] {
        self.table.row(self.candidates[c])
    }
}

/// Mutable state of one chain.
pub struct Chain<'d, 'a> {
    data: &'d SamplerData<'a>,
    labels: Vec<usize>,
    cell_size: Vec<usize>,
    unused: Vec<usize>,
    unused_pos: Vec<usize>,
    params: ModelParams,
    a1: Vec<Vec<u64>>,
    log_ratio: Vec<f64>,
    label_rng: ChaCha8Rng,
    field_rngs: Vec<ChaCha8Rng>,
    // scratch for label updates, indexed by label
    seen_count: Vec<usize>,
    seen_sum: Vec<f64>,
    seen: Vec<usize>,
}

impl<'d, 'a> Chain<'d, 'a> {
    /// Start from all singletons. Without `initial` parameters, the first
    /// parameters are drawn from their full conditional given singletons.
    pub fn new(data: &'d SamplerData<'a>, seed: u64, initial: Option<ModelParams>) -> Result<Self> {
        let r = data.record_count();
        let max_levels = &data.table.max_levels;
        let field_rngs = data
            .table
            .fields
            .iter()
            .map(|f| field_rng(seed, f))
            .collect();
        let placeholder = ModelParams::constant(max_levels, 0.5, 0.5)?;
        let mut chain = Self {
            data,
            labels: (0..r).collect(),
            cell_size: vec![1; r],
            unused: Vec::with_capacity(r),
            unused_pos: vec![usize::MAX; r],
            params: placeholder,
            a1: max_levels.iter().map(|&l| vec![0; l + 1]).collect(),
            log_ratio: vec![0.0; data.candidates.len()],
            label_rng: ChaCha8Rng::seed_from_u64(seed),
            field_rngs,
            seen_count: vec![0; r],
            seen_sum: vec![0.0; r],
            seen: Vec::new(),
        };
        match initial {
            Some(p) => {
                if p.max_levels() != *max_levels {
                    return Err(Error::Config(
                        "initial parameters do not match the comparison fields".into(),
                    ));
                }
                chain.params = p;
            }
            None => chain.update_params()?,
        }
        chain.refresh_ratios();
        Ok(chain)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Current counts, with `a0` derived from the fixed totals.
    pub fn stats(&self) -> SufficientStats {
        let a0 = self
            .data
            .totals
            .iter()
            .zip(&self.a1)
            .map(|(t, a)| t.iter().zip(a).map(|(t, a)| t - a).collect())
            .collect();
        SufficientStats {
            a1: self.a1.clone(),
            a0,
        }
    }

    /// Recompute `log LR` for every candidate pair from the current parameters.
    pub fn refresh_ratios(&mut self) {
        let table = LevelLogTable::new(&self.params);
        for c in 0..self.log_ratio.len() {
            self.log_ratio[c] = table.pair_log_ratio(self.data.candidate_row(c));
        }
    }

    fn shift_stats(&mut self, c: usize, add: bool) {
        let row = self.data.candidate_row(c);
        for (f, l) in row.iter().enumerate() {
            if let Some(l) = l {
                let slot = &mut self.a1[f][*l as usize];
                if add {
                    *slot += 1;
                } else {
                    *slot -= 1;
                }
            }
        }
    }

    fn release(&mut self, label: usize) {
        self.unused_pos[label] = self.unused.len();
        self.unused.push(label);
    }

    fn take_unused(&mut self, idx: usize) -> usize {
        let label = self.unused.swap_remove(idx);
        self.unused_pos[label] = usize::MAX;
        if let Some(&moved) = self.unused.get(idx) {
            self.unused_pos[moved] = idx;
        }
        label
    }

    /// Resample the label of record `i` from its full conditional.
    pub fn update_label(&mut self, i: usize) {
        let data = self.data;
        let adj = &data.adjacency[i];
        let old = self.labels[i];
        for &(j, c) in adj {
            if self.labels[j] == old {
                self.shift_stats(c, false);
            }
        }
        self.cell_size[old] -= 1;
        if self.cell_size[old] == 0 {
            self.release(old);
        }

        for &(j, c) in adj {
            let q = self.labels[j];
            if self.seen_count[q] == 0 {
                self.seen.push(q);
            }
            self.seen_count[q] += 1;
            self.seen_sum[q] += self.log_ratio[c];
        }
        // (label, log weight); a cell is admissible only if every member is a
        // candidate partner of i
        let mut options: Vec<(usize, f64)> = Vec::with_capacity(self.seen.len());
        for &q in &self.seen {
            if self.seen_count[q] == self.cell_size[q] {
                options.push((q, self.seen_sum[q]));
            }
        }
        for &q in &self.seen {
            self.seen_count[q] = 0;
            self.seen_sum[q] = 0.0;
        }
        self.seen.clear();

        let choice = if options.is_empty() {
            None
        } else {
            let max = options.iter().map(|o| o.1).fold(0.0f64, f64::max);
            let new_weight = (-max).exp();
            let weights: Vec<f64> = options.iter().map(|o| (o.1 - max).exp()).collect();
            let total = new_weight + weights.iter().sum::<f64>();
            let mut u = self.label_rng.random::<f64>() * total;
            let mut pick = None;
            for (k, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = Some(options[k].0);
                    break;
                }
                u -= w;
            }
            pick
        };
        let new = match choice {
            Some(q) => q,
            None => {
                let idx = self.label_rng.random_range(0..self.unused.len());
                self.take_unused(idx)
            }
        };
        self.labels[i] = new;
        self.cell_size[new] += 1;
        for &(j, c) in adj {
            if self.labels[j] == new && j != i {
                self.shift_stats(c, true);
            }
        }
    }

    /// Draw `m[f][l]` from its truncated-Beta full conditional.
    pub fn update_m(&mut self, f: usize, l: usize) -> Result<()> {
        let p = &self.data.prior.fields[f][l];
        self.params.m[f][l] = draw_m(p, &self.a1[f], l, &mut self.field_rngs[f])?;
        Ok(())
    }

    /// Draw `u[f][l]` from its Beta full conditional.
    pub fn update_u(&mut self, f: usize, l: usize) -> Result<()> {
        let p = &self.data.prior.fields[f][l];
        let a0: Vec<u64> = self.data.totals[f]
            .iter()
            .zip(&self.a1[f])
            .map(|(t, a)| t - a)
            .collect();
        self.params.u[f][l] = draw_u(p, &a0, l, &mut self.field_rngs[f])?;
        Ok(())
    }

    fn update_params(&mut self) -> Result<()> {
        for f in 0..self.a1.len() {
            let levels = self.params.m[f].len();
            for l in 0..levels {
                self.update_m(f, l)?;
            }
            for l in 0..levels {
                self.update_u(f, l)?;
            }
        }
        Ok(())
    }

    /// One full iteration: label sweep, then parameters (if enabled).
    pub fn step(&mut self, update_params: bool, randomized_scan: bool) -> Result<()> {
        if randomized_scan {
            let mut order = self.data.sweep.clone();
            order.shuffle(&mut self.label_rng);
            for i in order {
                self.update_label(i);
            }
        } else {
            for idx in 0..self.data.sweep.len() {
                let i = self.data.sweep[idx];
                self.update_label(i);
            }
        }
        if update_params {
            self.update_params()?;
            self.refresh_ratios();
        }
        Ok(())
    }

    /// Compare the incrementally maintained counts with a recount.
    pub fn audit(&self) -> Result<()> {
        let fresh = crate::model::sufficient_stats(&self.labels, self.data.graph, self.data.table)?;
        if fresh != self.stats() {
            return Err(Error::Sampler(
                "incremental sufficient statistics drifted from recount".into(),
            ));
        }
        Ok(())
    }
}

/// Retained states of one or more chains.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    pub record_count: usize,
    pub fields: Vec<String>,
    pub chain: Vec<usize>,
    pub iteration: Vec<usize>,
    /// Canonical labels (first-occurrence numbering) per retained state.
    pub labelings: Vec<Vec<u32>>,
    /// Parameters per retained state; empty when read back from disk.
    pub params: Vec<ModelParams>,
}

impl PosteriorSample {
    pub fn len(&self) -> usize {
        self.labelings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labelings.is_empty()
    }

    /// Samples wrapping a fixed list of labelings (used for evaluation of
    /// labelings files).
    pub fn from_labelings(record_count: usize, labelings: Vec<Vec<u32>>) -> Result<Self> {
        if let Some(bad) = labelings.iter().find(|z| z.len() != record_count) {
            return Err(Error::Config(format!(
                "labeling with {} entries in a sample of {record_count} records",
                bad.len()
            )));
        }
        let n = labelings.len();
        Ok(Self {
            record_count,
            fields: Vec::new(),
            chain: vec![0; n],
            iteration: (1..=n).collect(),
            labelings,
            params: Vec::new(),
        })
    }

    /// One line per retained state with space-separated canonical cell ids.
    pub fn write_labelings<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = String::new();
        for z in &self.labelings {
            line.clear();
            for (k, q) in z.iter().enumerate() {
                if k > 0 {
                    line.push(' ');
                }
                line.push_str(&q.to_string());
            }
            line.push('\n');
            w.write_all(line.as_bytes())
                .map_err(|e| Error::io("<labelings>", e))?;
        }
        w.flush().map_err(|e| Error::io("<labelings>", e))?;
        Ok(())
    }

    /// CSV `chain,iteration,field,level,m,u`.
    pub fn write_param_trace<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["chain", "iteration", "field", "level", "m", "u"])?;
        for ((c, it), p) in self.chain.iter().zip(&self.iteration).zip(&self.params) {
            for (f, name) in self.fields.iter().enumerate() {
                for l in 0..p.m[f].len() {
                    w.write_record([
                        c.to_string(),
                        it.to_string(),
                        name.clone(),
                        l.to_string(),
                        p.m[f][l].to_string(),
                        p.u[f][l].to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }
}

/// Parse a labelings file written by [`PosteriorSample::write_labelings`].
pub fn read_labelings(path: &Path) -> Result<PosteriorSample> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labelings = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let z = line
            .split_whitespace()
            .map(|t| {
                t.parse::<u32>().map_err(|e| Error::Parse {
                    row: n + 1,
                    column: "label".into(),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        labelings.push(z);
    }
    let r = labelings
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::NoRecords(path.display().to_string()))?;
    PosteriorSample::from_labelings(r, labelings)
}

fn run_one(
    data: &SamplerData<'_>,
    config: &SamplerConfig,
    chain_idx: usize,
    initial: Option<ModelParams>,
) -> Result<PosteriorSample> {
    let mut chain = Chain::new(data, config.chain_seed(chain_idx), initial)?;
    let candidates = if config.audit_every.is_some() {
        Some(data.graph.candidate_set(data.table))
    } else {
        None
    };
    let kept = (config.iterations - config.burn_in) / config.thinning;
    let mut sample = PosteriorSample {
        record_count: data.record_count(),
        fields: data.table.fields.clone(),
        chain: Vec::with_capacity(kept),
        iteration: Vec::with_capacity(kept),
        labelings: Vec::with_capacity(kept),
        params: Vec::with_capacity(kept),
    };
    for it in 1..=config.iterations {
        chain.step(config.update_params, config.randomized_scan)?;
        if let Some(every) = config.audit_every {
            if it % every == 0 {
                chain.audit()?;
            }
        }
        if it > config.burn_in && (it - config.burn_in).is_multiple_of(config.thinning) {
            if let Some(cands) = &candidates {
                validate_labeling(chain.labels(), cands)?;
            }
            sample.chain.push(chain_idx);
            sample.iteration.push(it);
            sample.labelings.push(canonicalize_labels(chain.labels()));
            sample.params.push(chain.params().clone());
        }
    }
    Ok(sample)
}

/// Run `config.chains` independent chains (in parallel) and concatenate
/// their retained states in chain order.
///
/// With `update_params` off, `initial` must hold the fixed parameters.
pub fn run_chain(
    graph: &CandidateGraph,
    table: &ComparisonTable,
    prior: &PriorSpec,
    config: &SamplerConfig,
    initial: Option<&ModelParams>,
) -> Result<PosteriorSample> {
    config.validate()?;
    if !config.update_params && initial.is_none() {
        return Err(Error::Config(
            "fixed-parameter runs need initial parameters".into(),
        ));
    }
    let data = SamplerData::new(graph, table, prior)?;
    let runs: Vec<PosteriorSample> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_one(&data, config, c, initial.cloned()))
        .collect::<Result<_>>()?;
    let mut iter = runs.into_iter();
    let mut out = iter.next().expect("at least one chain");
    for s in iter {
        out.chain.extend(s.chain);
        out.iteration.extend(s.iteration);
        out.labelings.extend(s.labelings);
        out.params.extend(s.params);
    }
    Ok(out)
}
