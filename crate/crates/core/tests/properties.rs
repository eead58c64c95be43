use std::collections::HashSet;

use dedup_core::candidates::{fix_noncoreferent, FixRule};
use dedup_core::comparison::{
    bin_level, levenshtein, normalized_levenshtein, ComparatorKind, ComparisonPlan,
    ComparisonTable, ComparisonVector, LevelSpec,
};
use dedup_core::gibbs::{run_chain, SamplerConfig};
use dedup_core::model::{
    log_posterior_unnormalized, observed_level_totals, star_probs, sufficient_stats, ModelParams,
    PriorSpec,
};
use dedup_core::partition::{canonicalize_labels, labeling_to_partition, validate_labeling};
use dedup_core::posterior::{confusion_counts, pairwise_probabilities};
use dedup_core::record::{read_delimited, FieldKind, FieldSchema, Schema};
use dedup_core::tbeta::sample_truncated_beta;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MAX_LEVELS: [usize; 2] = [3, 1];

/// Random comparison table over a subset of the pairs of `r` records.
fn table_strategy() -> impl Strategy<Value = (usize, ComparisonTable)> {
    (2usize..7).prop_flat_map(|r| {
        let n_pairs = r * (r - 1) / 2;
        let cell = prop_oneof![1 => Just(None), 4 => (0u8..=3).prop_map(Some)];
        (
            Just(r),
            proptest::collection::vec(any::<bool>(), n_pairs),
            proptest::collection::vec((cell.clone(), proptest::option::of(0u8..=1)), n_pairs),
        )
            .prop_map(|(r, keep, levels)| {
                let mut vectors = Vec::new();
                let mut k = 0;
                for i in 0..r {
                    for j in i + 1..r {
                        if keep[k] {
                            vectors.push(ComparisonVector {
                                i,
                                j,
                                levels: vec![levels[k].0, levels[k].1],
                            });
                        }
                        k += 1;
                    }
                }
                let fields = vec!["name".to_string(), "place".to_string()];
                (
                    r,
                    ComparisonTable::from_vectors(fields, MAX_LEVELS.to_vec(), &vectors).unwrap(),
                )
            })
    })
}

/// Move records into fresh cells until no cell joins a non-candidate pair.
fn make_valid(z: &[usize], c: &HashSet<(usize, usize)>) -> Vec<usize> {
    let mut out = z.to_vec();
    let mut fresh = z.len() + 100;
    for j in 0..z.len() {
        if (0..j).any(|i| out[i] == out[j] && !c.contains(&(i, j))) {
            out[j] = fresh;
            fresh += 1;
        }
    }
    canonicalize_labels(&out)
        .into_iter()
        .map(|q| q as usize)
        .collect()
}

fn word() -> impl Strategy<Value = String> {
    "[a-d]{0,7}"
}

proptest! {
    #[test]
    fn levenshtein_is_a_metric(a in word(), b in word(), c in word()) {
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        prop_assert_eq!(levenshtein(&a, &b) == 0, a == b);
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        prop_assert!(levenshtein(&a, &b) <= a.len().max(b.len()));
    }

    #[test]
    fn binning_is_monotone_and_bounded(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let spec = LevelSpec::string_levels("f", ComparatorKind::NormalizedLevenshtein);
        let (lx, ly) = (bin_level(x, &spec).unwrap(), bin_level(y, &spec).unwrap());
        prop_assert!(usize::from(lx) <= spec.max_level());
        if x <= y {
            prop_assert!(lx <= ly);
        }
    }

    #[test]
    fn comparison_observed_iff_both_present(
        rows in proptest::collection::vec((proptest::option::of(word()), proptest::option::of(0i64..40)), 2..6)
    ) {
        let schema = Schema::new(vec![
            FieldSchema::new("name", FieldKind::String),
            FieldSchema::new("age", FieldKind::Integer),
        ]).unwrap();
        let mut csv = String::from("name,age\n");
        for (n, a) in &rows {
            // an empty name reads as missing too
            let n = n.clone().filter(|s| !s.is_empty()).unwrap_or_else(|| "NA".into());
            let a = a.map_or("NA".into(), |v| v.to_string());
            csv.push_str(&format!("{n},{a}\n"));
        }
        let df = read_delimited(csv.as_bytes(), "p", schema.clone(), b',', "NA").unwrap();
        let plan = ComparisonPlan::new(&schema, vec![
            LevelSpec::string_levels("name", ComparatorKind::NormalizedLevenshtein),
            LevelSpec::new("age", ComparatorKind::AbsoluteDifference, vec![0.0, 1.0, 3.0]).unwrap(),
        ]).unwrap();
        let r = df.record_count();
        let pairs: Vec<(usize, usize)> = (0..r).flat_map(|i| (i + 1..r).map(move |j| (i, j))).collect();
        let table = plan.compare_pairs(&df, pairs).unwrap();
        for k in 0..table.len() {
            let (i, j) = table.pairs[k];
            for f in 0..2 {
                let present = df.records[i].get(f).is_some() && df.records[j].get(f).is_some();
                let level = table.row(k)[f];
                prop_assert_eq!(level.is_some(), present);
                if let Some(l) = level {
                    prop_assert!(usize::from(l) <= table.max_levels[f]);
                }
            }
            if let (Some(a), Some(b)) = (df.records[i].get(0), df.records[j].get(0)) {
                let s = normalized_levenshtein(a.as_text().unwrap(), b.as_text().unwrap()).unwrap();
                prop_assert_eq!(table.row(k)[0], Some(bin_level(s, &plan.specs()[0]).unwrap()));
            }
        }
    }

    #[test]
    fn candidates_are_compared_pairs((r, table) in table_strategy(), cut in 1u8..=3) {
        let graph = fix_noncoreferent(r, &table, &[FixRule::single("name", cut)]).unwrap();
        let compared: HashSet<(usize, usize)> = table.pairs.iter().copied().collect();
        let c = graph.candidate_set(&table);
        prop_assert!(c.is_subset(&compared));
        for k in 0..table.len() {
            let fixed = matches!(table.row(k)[0], Some(l) if l >= cut);
            prop_assert_eq!(graph.is_candidate(k), !fixed);
        }
        // components partition the records; the non-singleton ones cover
        // exactly the records touched by C
        let mut seen: Vec<usize> = graph.components().iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..r).collect::<Vec<_>>());
        let mut touched: Vec<usize> = c.iter().flat_map(|&(i, j)| [i, j]).collect();
        touched.sort_unstable();
        touched.dedup();
        prop_assert_eq!(graph.touched_records(), touched);
    }

    #[test]
    fn partition_cells_cover_records(z in proptest::collection::vec(0usize..6, 1..10)) {
        let p = labeling_to_partition(&z);
        let mut all: Vec<usize> = p.cells().iter().flatten().copied().collect();
        prop_assert!(p.cells().iter().all(|c| !c.is_empty()));
        all.sort_unstable();
        prop_assert_eq!(all, (0..z.len()).collect::<Vec<_>>());
        prop_assert_eq!(p.duplicates(), z.len() - p.n_cells());
        prop_assert_eq!(p.canonical_labels(), canonicalize_labels(&z));
    }

    #[test]
    fn sufficient_stats_account_for_every_observation(
        (r, table) in table_strategy(),
        z in proptest::collection::vec(0usize..3, 7),
    ) {
        let graph = fix_noncoreferent(r, &table, &[]).unwrap();
        let z = &make_valid(&z[..r], &graph.candidate_set(&table));
        let stats = sufficient_stats(z, &graph, &table).unwrap();
        let totals = observed_level_totals(&table);
        for f in 0..2 {
            for l in 0..=MAX_LEVELS[f] {
                prop_assert_eq!(stats.a1[f][l] + stats.a0[f][l], totals[f][l]);
            }
        }
    }

    #[test]
    fn posterior_ignores_label_names(
        (r, table) in table_strategy(),
        z in proptest::collection::vec(0usize..3, 7),
        shift in 1usize..50,
    ) {
        let graph = fix_noncoreferent(r, &table, &[]).unwrap();
        let z = &make_valid(&z[..r], &graph.candidate_set(&table));
        let params = ModelParams::constant(&MAX_LEVELS, 0.9, 0.2).unwrap();
        let prior = PriorSpec::uniform(&MAX_LEVELS, 0.5).unwrap();
        let moved: Vec<usize> = z.iter().map(|&q| (q + shift) % r).collect();
        let a = log_posterior_unnormalized(z, &params, &graph, &table, &prior).unwrap();
        let b = log_posterior_unnormalized(&moved, &params, &graph, &table, &prior).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn star_probs_on_simplex(m in proptest::collection::vec(1e-9f64..1.0, 1..6)) {
        let p = star_probs(&m);
        prop_assert_eq!(p.len(), m.len() + 1);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_beta_respects_support(a in 0.5f64..20.0, b in 0.5f64..20.0, lambda in 0.0f64..0.99, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let x = sample_truncated_beta(a, b, lambda, &mut rng).unwrap();
            prop_assert!(x >= lambda && x < 1.0, "{x}");
        }
    }

    #[test]
    fn coreference_counts_match_reference(
        est in proptest::collection::vec(0usize..4, 8),
        reference in proptest::collection::vec(0usize..4, 8),
    ) {
        let (e, t) = (labeling_to_partition(&est), labeling_to_partition(&reference));
        let c = confusion_counts(&e, &t).unwrap();
        prop_assert_eq!(c.b11 + c.b01, t.coreferent_pairs());
        prop_assert_eq!(c.b11 + c.b10, e.coreferent_pairs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampler_stays_valid((r, table) in table_strategy(), cut in 1u8..=3, seed in any::<u64>()) {
        let graph = fix_noncoreferent(r, &table, &[FixRule::single("name", cut)]).unwrap();
        let prior = PriorSpec::uniform(&MAX_LEVELS, 0.6).unwrap();
        let cfg = SamplerConfig {
            iterations: 60,
            burn_in: 10,
            seed,
            audit_every: Some(1),
            ..Default::default()
        };
        let sample = run_chain(&graph, &table, &prior, &cfg, None).unwrap();
        let c = graph.candidate_set(&table);
        for z in &sample.labelings {
            let z: Vec<usize> = z.iter().map(|&q| q as usize).collect();
            prop_assert!(validate_labeling(&z, &c).is_ok());
        }
        let all: Vec<(usize, usize)> = (0..r).flat_map(|i| (i + 1..r).map(move |j| (i, j))).collect();
        let pw = pairwise_probabilities(&sample, all).unwrap();
        for &(i, j, f) in &pw.pairs {
            if !c.contains(&(i, j)) {
                prop_assert_eq!(f, 0.0);
            }
        }
    }
}
