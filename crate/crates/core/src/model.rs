//! Comparison-data likelihood under conditionally independent fields.
//!
//! Each field `f` with levels `0..=L_f` is described among coreferent pairs
//! by sequential conditional probabilities `m[f][l] = P(level = l | level > l-1)`
//! for `l < L_f`, and among noncoreferent pairs by the analogous `u[f][l]`.
//! Missing comparisons contribute nothing to the likelihood.

use serde::{Deserialize, Serialize};

use crate::candidates::CandidateGraph;
use crate::comparison::ComparisonTable;
use crate::error::{Error, Result};
use crate::partition::validate_labeling;
use crate::tbeta;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub m: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

impl ModelParams {
    pub fn new(m: Vec<Vec<f64>>, u: Vec<Vec<f64>>) -> Result<Self> {
        if m.len() != u.len()
            || m.iter()
                .zip(&u)
                .any(|(a, b)| a.len() != b.len() || a.is_empty())
        {
            return Err(Error::Config(
                "m and u must have matching nonempty per-field shapes".into(),
            ));
        }
        if m.iter().chain(&u).flatten().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Config(
                "model probabilities must lie strictly inside (0, 1)".into(),
            ));
        }
        Ok(Self { m, u })
    }

    /// Same `m` and `u` value for every field and level.
    pub fn constant(max_levels: &[usize], m: f64, u: f64) -> Result<Self> {
        Self::new(
            max_levels.iter().map(|&l| vec![m; l]).collect(),
            max_levels.iter().map(|&l| vec![u; l]).collect(),
        )
    }

    pub fn max_levels(&self) -> Vec<usize> {
        self.m.iter().map(Vec::len).collect()
    }
}

/// Multinomial probabilities `m*_0..m*_L` implied by sequential conditionals.
pub fn star_probs(seq: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(seq.len() + 1);
    let mut survive = 1.0;
    for &p in seq {
        out.push(p * survive);
        survive *= 1.0 - p;
    }
    out.push(survive);
    out
}

/// `sum_{l < L} [I(level = l) log p_l + I(level > l) log(1 - p_l)]` for one field.
pub fn ln_level_prob(seq: &[f64], level: u8) -> f64 {
    let level = level as usize;
    let mut total = 0.0;
    for (l, &p) in seq.iter().enumerate() {
        if level == l {
            total += p.ln();
            break;
        }
        total += (-p).ln_1p();
    }
    total
}

fn ln_obs(levels: &[Option<u8>], seqs: &[Vec<f64>]) -> f64 {
    levels
        .iter()
        .zip(seqs)
        .filter_map(|(l, seq)| l.map(|l| ln_level_prob(seq, l)))
        .sum()
}

/// Log-probability of the observed part of a comparison vector among
/// coreferent pairs.
pub fn log_p1_obs(levels: &[Option<u8>], params: &ModelParams) -> f64 {
    ln_obs(levels, &params.m)
}

/// Counterpart of [`log_p1_obs`] among noncoreferent pairs.
pub fn log_p0_obs(levels: &[Option<u8>], params: &ModelParams) -> f64 {
    ln_obs(levels, &params.u)
}

pub fn log_likelihood_ratio(levels: &[Option<u8>], params: &ModelParams) -> f64 {
    log_p1_obs(levels, params) - log_p0_obs(levels, params)
}

/// Per-field, per-level log-probabilities, cached for the sampler.
#[derive(Debug, Clone)]
pub struct LevelLogTable {
    /// `ln P1(level) - ln P0(level)` indexed `[f][level]`.
    pub log_ratio: Vec<Vec<f64>>,
}

impl LevelLogTable {
    pub fn new(params: &ModelParams) -> Self {
        let log_ratio = params
            .m
            .iter()
            .zip(&params.u)
            .map(|(m, u)| {
                (0..=m.len())
                    .map(|l| ln_level_prob(m, l as u8) - ln_level_prob(u, l as u8))
                    .collect()
            })
            .collect();
        Self { log_ratio }
    }

    pub fn pair_log_ratio(&self, levels: &[Option<u8>]) -> f64 {
        levels
            .iter()
            .zip(&self.log_ratio)
            .filter_map(|(l, t)| l.map(|l| t[l as usize]))
            .sum()
    }
}

/// Prior hyperparameters for one `(field, level)` parameter pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelPrior {
    /// Lower truncation point of the prior on `m`.
    pub lambda: f64,
    #[serde(default = "one")]
    pub alpha_m: f64,
    #[serde(default = "one")]
    pub beta_m: f64,
    #[serde(default = "one")]
    pub alpha_u: f64,
    #[serde(default = "one")]
    pub beta_u: f64,
}

fn one() -> f64 {
    1.0
}

impl LevelPrior {
    /// `m ~ Uniform(lambda, 1)`, `u ~ Uniform(0, 1)`.
    pub fn uniform(lambda: f64) -> Self {
        Self {
            lambda,
            alpha_m: 1.0,
            beta_m: 1.0,
            alpha_u: 1.0,
            beta_u: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub fields: Vec<Vec<LevelPrior>>,
}

impl PriorSpec {
    pub fn new(fields: Vec<Vec<LevelPrior>>) -> Result<Self> {
        for p in fields.iter().flatten() {
            if !(0.0..1.0).contains(&p.lambda) {
                return Err(Error::Config(format!(
                    "truncation point {} outside [0, 1)",
                    p.lambda
                )));
            }
            if [p.alpha_m, p.beta_m, p.alpha_u, p.beta_u]
                .iter()
                .any(|&s| !(s > 0.0 && s.is_finite()))
            {
                return Err(Error::Config(
                    "Beta shape parameters must be positive".into(),
                ));
            }
        }
        Ok(Self { fields })
    }

    pub fn from_lambdas(lambdas: &[Vec<f64>]) -> Result<Self> {
        Self::new(
            lambdas
                .iter()
                .map(|f| f.iter().map(|&l| LevelPrior::uniform(l)).collect())
                .collect(),
        )
    }

    pub fn uniform(max_levels: &[usize], lambda: f64) -> Result<Self> {
        Self::from_lambdas(
            &max_levels
                .iter()
                .map(|&l| vec![lambda; l])
                .collect::<Vec<_>>(),
        )
    }

    pub fn check_shape(&self, max_levels: &[usize]) -> Result<()> {
        let shape: Vec<usize> = self.fields.iter().map(Vec::len).collect();
        if shape != max_levels {
            return Err(Error::Config(format!(
                "prior has per-field level counts {shape:?}, comparisons have {max_levels:?}"
            )));
        }
        Ok(())
    }

    /// Sum of log prior densities of `params`; `-inf` outside the support.
    pub fn ln_density(&self, params: &ModelParams) -> f64 {
        let mut total = 0.0;
        for (f, priors) in self.fields.iter().enumerate() {
            for (l, p) in priors.iter().enumerate() {
                total += tbeta::ln_pdf(params.m[f][l], p.alpha_m, p.beta_m, p.lambda);
                total += tbeta::ln_pdf(params.u[f][l], p.alpha_u, p.beta_u, 0.0);
            }
        }
        total
    }
}

/// Counts of observed levels among coreferent (`a1`) and noncoreferent
/// (`a0`) compared pairs, indexed `[f][level]` with `L_f + 1` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SufficientStats {
    pub a1: Vec<Vec<u64>>,
    pub a0: Vec<Vec<u64>>,
}

impl SufficientStats {
    pub fn zeros(max_levels: &[usize]) -> Self {
        Self {
            a1: max_levels.iter().map(|&l| vec![0; l + 1]).collect(),
            a0: max_levels.iter().map(|&l| vec![0; l + 1]).collect(),
        }
    }

    /// `sum_{h > l} counts[h]`.
    pub fn tail(counts: &[u64], l: usize) -> u64 {
        counts[l + 1..].iter().sum()
    }
}

/// Level counts over every compared pair regardless of coreference.
pub fn observed_level_totals(table: &ComparisonTable) -> Vec<Vec<u64>> {
    let mut totals: Vec<Vec<u64>> = table.max_levels.iter().map(|&l| vec![0; l + 1]).collect();
    for k in 0..table.len() {
        for (f, l) in table.row(k).iter().enumerate() {
            if let Some(l) = l {
                totals[f][*l as usize] += 1;
            }
        }
    }
    totals
}

pub fn sufficient_stats(
    z: &[usize],
    graph: &CandidateGraph,
    table: &ComparisonTable,
) -> Result<SufficientStats> {
    if z.len() != graph.record_count() {
        return Err(Error::InvalidLabeling(format!(
            "labeling has {} entries for {} records",
            z.len(),
            graph.record_count()
        )));
    }
    validate_labeling(z, &graph.candidate_set(table))?;
    let mut stats = SufficientStats::zeros(&table.max_levels);
    for (k, &(i, j)) in table.pairs.iter().enumerate() {
        let coref = graph.is_candidate(k) && z[i] == z[j];
        let target = if coref { &mut stats.a1 } else { &mut stats.a0 };
        for (f, l) in table.row(k).iter().enumerate() {
            if let Some(l) = l {
                target[f][*l as usize] += 1;
            }
        }
    }
    Ok(stats)
}

/// Unnormalized log posterior of `(z, params)`: comparison-data likelihood,
/// a flat prior over valid partitions (a constant, omitted), and the
/// parameter priors.
pub fn log_posterior_unnormalized(
    z: &[usize],
    params: &ModelParams,
    graph: &CandidateGraph,
    table: &ComparisonTable,
    prior: &PriorSpec,
) -> Result<f64> {
    prior.check_shape(&table.max_levels)?;
    if params.max_levels() != table.max_levels {
        return Err(Error::Config(
            "parameter shape does not match comparisons".into(),
        ));
    }
    if z.len() != graph.record_count() {
        return Err(Error::InvalidLabeling("labeling length mismatch".into()));
    }
    validate_labeling(z, &graph.candidate_set(table))?;
    let ln_prior = prior.ln_density(params);
    if ln_prior == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let mut total = ln_prior;
    for (k, &(i, j)) in table.pairs.iter().enumerate() {
        let row = table.row(k);
        total += if graph.is_candidate(k) && z[i] == z[j] {
            log_p1_obs(row, params)
        } else {
            log_p0_obs(row, params)
        };
    }
    Ok(total)
}

/// Field names and `lambda` tables of a ready-made prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorPreset {
    pub fields: Vec<&'static str>,
    pub lambdas: Vec<Vec<f64>>,
}

impl PriorPreset {
    pub fn prior(&self) -> PriorSpec {
        PriorSpec::from_lambdas(&self.lambdas).expect("preset values are valid")
    }

    /// Prior for death records compared on names, date and place of death.
    pub fn untc() -> Self {
        Self {
            fields: vec!["given", "family", "year", "month", "day", "municipality"],
            lambdas: vec![
                vec![0.85, 0.90, 0.99],
                vec![0.85, 0.90, 0.99],
                vec![0.85, 0.90, 0.99],
                vec![0.85, 0.90, 0.99],
                vec![0.70, 0.70, 0.70],
                vec![0.85],
            ],
        }
    }

    /// The four scenarios of the five-record example. Year and municipality
    /// are always accurate (0.95); names and day/month are accurate (0.95) or
    /// inaccurate (0.85) depending on the case.
    pub fn toy_case(case: u8) -> Result<Self> {
        let (names, date) = match case {
            1 => (0.85, 0.85),
            2 => (0.85, 0.95),
            3 => (0.95, 0.85),
            4 => (0.95, 0.95),
            _ => {
                return Err(Error::Config(format!(
                    "toy prior cases are 1-4, got {case}"
                )))
            }
        };
        Ok(Self {
            fields: vec!["given", "family", "year", "month", "day", "municipality"],
            lambdas: vec![
                vec![names; 3],
                vec![names; 3],
                vec![0.95; 3],
                vec![date; 3],
                vec![date; 3],
                vec![0.95],
            ],
        })
    }
}
