//! Two-component mixture baseline: every candidate pair is an independent
//! Bernoulli(p) link, with no transitivity constraint.

use std::collections::HashSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::Serialize;

use crate::candidates::CandidateGraph;
use crate::comparison::ComparisonTable;
use crate::error::{Error, Result};
use crate::gibbs::{draw_m, draw_u, field_rng, SamplerConfig};
use crate::model::{observed_level_totals, LevelLogTable, ModelParams, PriorSpec};

/// Count unordered triples with exactly two of their three pairs linked.
/// Pairs not listed in `links` count as unlinked.
pub fn count_nontransitive_triplets(r: usize, links: &[(usize, usize)]) -> u64 {
    let mut adj = vec![Vec::new(); r];
    let mut set = HashSet::with_capacity(links.len());
    for &(i, j) in links {
        let key = (i.min(j), i.max(j));
        if i == j || !set.insert(key) {
            continue;
        }
        adj[i].push(j);
        adj[j].push(i);
    }
    // a triple with exactly two links has a unique centre joined to both ends
    let mut count = 0;
    for nbrs in &adj {
        for (a, &i) in nbrs.iter().enumerate() {
            for &k in &nbrs[a + 1..] {
                if !set.contains(&(i.min(k), i.max(k))) {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Conditional probability that a pair is linked, from the mixing
/// proportion and the pair's log likelihood ratio.
pub fn link_probability(p: f64, log_ratio: f64) -> f64 {
    let log_odds = (p / (1.0 - p)).ln() + log_ratio;
    1.0 / (1.0 + (-log_odds).exp())
}

/// Linked pairs implied by a labeling.
pub fn links_from_labels(labels: &[u32]) -> Vec<(usize, usize)> {
    let mut cells: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (i, &q) in labels.iter().enumerate() {
        cells.entry(q).or_default().push(i);
    }
    let mut out = Vec::new();
    for cell in cells.values() {
        for (a, &i) in cell.iter().enumerate() {
            for &j in &cell[a + 1..] {
                out.push((i, j));
            }
        }
    }
    out
}

/// Per retained iteration summaries of the mixture chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureTrace {
    pub iteration: Vec<usize>,
    pub p: Vec<f64>,
    pub links: Vec<usize>,
    pub nontransitive: Vec<u64>,
    /// Fraction of retained iterations in which each candidate pair was linked.
    pub link_frequency: Vec<((usize, usize), f64)>,
    pub final_params: ModelParams,
}

impl MixtureTrace {
    /// CSV `iteration,p,links,nontransitive_triplets`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["iteration", "p", "links", "nontransitive_triplets"])?;
        for k in 0..self.iteration.len() {
            w.write_record([
                self.iteration[k].to_string(),
                self.p[k].to_string(),
                self.links[k].to_string(),
                self.nontransitive[k].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<mixture trace>", e))?;
        Ok(())
    }

    /// Fraction of retained iterations with at least one nontransitive triplet.
    pub fn violation_rate(&self) -> f64 {
        if self.nontransitive.is_empty() {
            return 0.0;
        }
        self.nontransitive.iter().filter(|&&c| c > 0).count() as f64
            / self.nontransitive.len() as f64
    }
}

/// Gibbs sampler for the mixture model. Each iteration updates the links
/// given `(p, Φ)`, then `p`, then `Φ`. The chain starts with no links,
/// `p = 1/2` and `Φ` drawn from its conditional.
pub fn run_mixture_gibbs(
    graph: &CandidateGraph,
    table: &ComparisonTable,
    prior: &PriorSpec,
    config: &SamplerConfig,
) -> Result<MixtureTrace> {
    config.validate()?;
    prior.check_shape(&table.max_levels)?;
    let r = graph.record_count();
    let cands: Vec<usize> = (0..table.len())
        .filter(|&k| graph.is_candidate(k))
        .collect();
    let totals = observed_level_totals(table);
    let seed = config.seed;
    let mut link_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field_rngs: Vec<ChaCha8Rng> = table.fields.iter().map(|f| field_rng(seed, f)).collect();

    let mut delta = vec![false; cands.len()];
    let mut p = 0.5;
    let mut params = ModelParams::constant(&table.max_levels, 0.5, 0.5)?;
    let mut link_counts = vec![0usize; cands.len()];

    let mut draw_params = |delta: &[bool], params: &mut ModelParams| -> Result<()> {
        let mut a1: Vec<Vec<u64>> = table.max_levels.iter().map(|&l| vec![0; l + 1]).collect();
        for (c, &k) in cands.iter().enumerate() {
            if delta[c] {
                for (f, l) in table.row(k).iter().enumerate() {
                    if let Some(l) = l {
                        a1[f][*l as usize] += 1;
                    }
                }
            }
        }
        for f in 0..a1.len() {
            let a0: Vec<u64> = totals[f].iter().zip(&a1[f]).map(|(t, a)| t - a).collect();
            for l in 0..params.m[f].len() {
                params.m[f][l] = draw_m(&prior.fields[f][l], &a1[f], l, &mut field_rngs[f])?;
            }
            for l in 0..params.u[f].len() {
                params.u[f][l] = draw_u(&prior.fields[f][l], &a0, l, &mut field_rngs[f])?;
            }
        }
        Ok(())
    };
    draw_params(&delta, &mut params)?;

    let kept = (config.iterations - config.burn_in) / config.thinning;
    let mut trace = MixtureTrace {
        iteration: Vec::with_capacity(kept),
        p: Vec::with_capacity(kept),
        links: Vec::with_capacity(kept),
        nontransitive: Vec::with_capacity(kept),
        link_frequency: Vec::new(),
        final_params: params.clone(),
    };
    for it in 1..=config.iterations {
        let lt = LevelLogTable::new(&params);
        for (c, &k) in cands.iter().enumerate() {
            let prob = link_probability(p, lt.pair_log_ratio(table.row(k)));
            delta[c] = link_rng.random::<f64>() < prob;
        }
        let ones = delta.iter().filter(|&&d| d).count();
        let beta = Beta::new(1.0 + ones as f64, 1.0 + (cands.len() - ones) as f64)
            .map_err(|e| Error::Sampler(format!("mixing proportion: {e}")))?;
        p = beta
            .sample(&mut link_rng)
            .clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        draw_params(&delta, &mut params)?;

        if it > config.burn_in && (it - config.burn_in).is_multiple_of(config.thinning) {
            let links: Vec<(usize, usize)> = cands
                .iter()
                .zip(&delta)
                .filter(|(_, &d)| d)
                .map(|(&k, _)| table.pairs[k])
                .collect();
            for (c, &d) in delta.iter().enumerate() {
                link_counts[c] += usize::from(d);
            }
            trace.iteration.push(it);
            trace.p.push(p);
            trace.links.push(ones);
            trace
                .nontransitive
                .push(count_nontransitive_triplets(r, &links));
        }
    }
    let n = trace.iteration.len().max(1) as f64;
    trace.link_frequency = cands
        .iter()
        .zip(&link_counts)
        .map(|(&k, &c)| (table.pairs[k], c as f64 / n))
        .collect();
    trace.final_params = params;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::fix_noncoreferent;
    use crate::comparison::ComparisonVector;
    use proptest::prelude::*;

    #[test]
    fn triplet_examples() {
        assert_eq!(count_nontransitive_triplets(3, &[(0, 1), (1, 2)]), 1);
        assert_eq!(
            count_nontransitive_triplets(3, &[(0, 1), (1, 2), (0, 2)]),
            0
        );
        assert_eq!(count_nontransitive_triplets(3, &[]), 0);
        // star with three leaves: every pair of leaves is open
        assert_eq!(
            count_nontransitive_triplets(4, &[(0, 1), (0, 2), (0, 3)]),
            3
        );
        assert_eq!(
            count_nontransitive_triplets(3, &[(1, 0), (0, 1), (2, 1)]),
            1
        );
    }

    #[test]
    fn link_odds() {
        assert!((link_probability(0.5, 0.0) - 0.5).abs() < 1e-15);
        assert!((link_probability(0.2, 4f64.ln()) - 0.5).abs() < 1e-12);
        assert!(link_probability(0.5, 50.0) > 1.0 - 1e-15);
    }

    proptest! {
        #[test]
        fn partitions_are_transitive(z in proptest::collection::vec(0usize..4, 0..12)) {
            let labels = crate::partition::canonicalize_labels(&z);
            prop_assert_eq!(count_nontransitive_triplets(z.len(), &links_from_labels(&labels)), 0);
        }
    }

    fn one_field(pairs: &[(usize, usize, u8)], r: usize) -> (ComparisonTable, CandidateGraph) {
        let v: Vec<ComparisonVector> = pairs
            .iter()
            .map(|&(i, j, l)| ComparisonVector {
                i,
                j,
                levels: vec![Some(l)],
            })
            .collect();
        let table = ComparisonTable::from_vectors(vec!["f".into()], vec![1], &v).unwrap();
        let graph = fix_noncoreferent(r, &table, &[]).unwrap();
        (table, graph)
    }

    #[test]
    fn empty_candidate_set() {
        let v = vec![ComparisonVector {
            i: 0,
            j: 1,
            levels: vec![Some(1)],
        }];
        let table = ComparisonTable::from_vectors(vec!["f".into()], vec![1], &v).unwrap();
        let graph =
            fix_noncoreferent(2, &table, &[crate::candidates::FixRule::single("f", 1)]).unwrap();
        let prior = PriorSpec::uniform(&[1], 0.5).unwrap();
        let cfg = SamplerConfig {
            iterations: 2000,
            burn_in: 0,
            ..Default::default()
        };
        let t = run_mixture_gibbs(&graph, &table, &prior, &cfg).unwrap();
        assert!(t.links.iter().all(|&l| l == 0));
        // p | no links ~ Beta(1, 1)
        let mean = t.p.iter().sum::<f64>() / t.p.len() as f64;
        assert!((mean - 0.5).abs() < 0.03, "{mean}");
    }

    #[test]
    fn deterministic_and_valid() {
        let (table, graph) = one_field(&[(0, 1, 0), (1, 2, 0), (0, 2, 1), (2, 3, 0)], 4);
        let prior = PriorSpec::uniform(&[1], 0.8).unwrap();
        let cfg = SamplerConfig {
            iterations: 500,
            burn_in: 100,
            seed: 9,
            ..Default::default()
        };
        let a = run_mixture_gibbs(&graph, &table, &prior, &cfg).unwrap();
        let b = run_mixture_gibbs(&graph, &table, &prior, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iteration.len(), 400);
        assert!(a.p.iter().all(|&p| p > 0.0 && p < 1.0));
        assert!(a.violation_rate() > 0.0);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("iteration,p,links,nontransitive_triplets\n101,"));
    }
}
