//! Pair reduction: which record pairs get compared at all, and which of the
//! compared pairs are declared noncoreferent before sampling.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::ComparisonTable;
use crate::error::{Error, Result};
use crate::record::{normalize_text, DataFile, Value};

/// Tokens ignored when checking whether two place names overlap.
pub const DEFAULT_STOP_TOKENS: [&str; 9] = [
    "SAN", "SANTA", "SANTO", "LA", "EL", "LAS", "LOS", "DEL", "DE",
];

/// Cheap predicate on raw field values. A pair must pass every rule to be
/// compared; a missing value on the rule's field always passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterRule {
    AlwaysCompare,
    /// Pairs must agree exactly on `field`.
    CategoricalBlock {
        field: String,
    },
    /// Pairs whose integer values differ by more than `gap` are dropped.
    IntegerGapExceeds {
        field: String,
        gap: u64,
    },
    /// Pairs pass when the values are equal, listed as neighbors, or share a
    /// token outside the stop list.
    CustomOverlap {
        field: String,
        #[serde(default = "default_stop_tokens")]
        stop_tokens: Vec<String>,
        #[serde(default)]
        neighbors: Vec<(String, String)>,
        /// Extra neighbor pairs read with [`load_neighbors`].
        #[serde(default)]
        neighbors_file: Option<std::path::PathBuf>,
    },
}

fn default_stop_tokens() -> Vec<String> {
    DEFAULT_STOP_TOKENS.iter().map(|s| s.to_string()).collect()
}

/// Read a neighbor table with one `a<TAB>b` pair per line.
pub fn load_neighbors(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => out.push((a.trim().to_string(), b.trim().to_string())),
            _ => {
                return Err(Error::Parse {
                    row: n + 1,
                    column: "neighbors".into(),
                    message: "expected two tab-separated names".into(),
                })
            }
        }
    }
    Ok(out)
}

enum CompiledFilter {
    Block(usize),
    Gap(usize, u64),
    Overlap {
        field: usize,
        stop: HashSet<String>,
        neighbors: HashSet<(String, String)>,
    },
}

impl CompiledFilter {
    fn passes(&self, a: &[Option<Value>], b: &[Option<Value>]) -> bool {
        match self {
            CompiledFilter::Block(f) => match (&a[*f], &b[*f]) {
                (Some(x), Some(y)) => x == y,
                _ => true,
            },
            CompiledFilter::Gap(f, gap) => match (&a[*f], &b[*f]) {
                (Some(Value::Integer(x)), Some(Value::Integer(y))) => x.abs_diff(*y) <= *gap,
                _ => true,
            },
            CompiledFilter::Overlap {
                field,
                stop,
                neighbors,
            } => match (&a[*field], &b[*field]) {
                (Some(x), Some(y)) => {
                    let (x, y) = (
                        normalize_text(&x.to_string()),
                        normalize_text(&y.to_string()),
                    );
                    if x == y || neighbors.contains(&(x.clone(), y.clone())) {
                        return true;
                    }
                    let tx: HashSet<&str> = x.split(' ').filter(|t| !stop.contains(*t)).collect();
                    y.split(' ').any(|t| !stop.contains(t) && tx.contains(t))
                }
                _ => true,
            },
        }
    }
}

fn compile(df: &DataFile, rules: &[FilterRule]) -> Result<Vec<CompiledFilter>> {
    let mut out = Vec::new();
    for rule in rules {
        match rule {
            FilterRule::AlwaysCompare => {}
            FilterRule::CategoricalBlock { field } => {
                out.push(CompiledFilter::Block(df.schema.field(field)?.0));
            }
            FilterRule::IntegerGapExceeds { field, gap } => {
                out.push(CompiledFilter::Gap(df.schema.field(field)?.0, *gap));
            }
            FilterRule::CustomOverlap {
                field,
                stop_tokens,
                neighbors,
                neighbors_file,
            } => {
                let idx = df.schema.field(field)?.0;
                let mut set = HashSet::new();
                let from_file = match neighbors_file {
                    Some(p) => load_neighbors(p)?,
                    None => Vec::new(),
                };
                for (a, b) in neighbors.iter().chain(&from_file) {
                    let (a, b) = (normalize_text(a), normalize_text(b));
                    set.insert((a.clone(), b.clone()));
                    set.insert((b, a));
                }
                out.push(CompiledFilter::Overlap {
                    field: idx,
                    stop: stop_tokens.iter().map(|s| normalize_text(s)).collect(),
                    neighbors: set,
                });
            }
        }
    }
    Ok(out)
}

/// All pairs `(i, j)`, `i < j`, that pass every filter rule, in
/// lexicographic order.
pub fn build_pairs(df: &DataFile, rules: &[FilterRule]) -> Result<Vec<(usize, usize)>> {
    let filters = compile(df, rules)?;
    let r = df.record_count();
    let rows: Vec<Vec<(usize, usize)>> = (0..r)
        .into_par_iter()
        .map(|i| {
            let a = &df.records[i].values;
            (i + 1..r)
                .filter(|&j| {
                    let b = &df.records[j].values;
                    filters.iter().all(|f| f.passes(a, b))
                })
                .map(|j| (i, j))
                .collect()
        })
        .collect();
    Ok(rows.concat())
}

/// A pair is fixed as noncoreferent when every condition holds. A condition
/// on a missing comparison does not hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixRule {
    pub conditions: Vec<FixCondition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixCondition {
    pub field: String,
    pub min_level: u8,
}

impl FixRule {
    pub fn single(field: impl Into<String>, min_level: u8) -> Self {
        Self {
            conditions: vec![FixCondition {
                field: field.into(),
                min_level,
            }],
        }
    }

    pub fn all(conditions: &[(&str, u8)]) -> Self {
        Self {
            conditions: conditions
                .iter()
                .map(|&(f, l)| FixCondition {
                    field: f.to_string(),
                    min_level: l,
                })
                .collect(),
        }
    }
}

/// Compared pairs split into candidates and fixed noncoreferent pairs.
#[derive(Debug, Clone)]
pub struct CandidateGraph {
    r: usize,
    /// Parallel to the comparison table's pairs: true when the pair is in C.
    candidate: Vec<bool>,
    components: Vec<Vec<usize>>,
}

/// Apply fix rules to the compared pairs.
pub fn fix_noncoreferent(
    r: usize,
    table: &ComparisonTable,
    rules: &[FixRule],
) -> Result<CandidateGraph> {
    let mut compiled = Vec::with_capacity(rules.len());
    for rule in rules {
        if rule.conditions.is_empty() {
            return Err(Error::Config("fix rule without conditions".into()));
        }
        let mut conds = Vec::new();
        for c in &rule.conditions {
            let f = table
                .fields
                .iter()
                .position(|n| *n == c.field)
                .ok_or_else(|| {
                    Error::Config(format!("fix rule references unknown field `{}`", c.field))
                })?;
            if c.min_level as usize > table.max_levels[f] {
                return Err(Error::Config(format!(
                    "fix rule level {} exceeds maximum level {} of `{}`",
                    c.min_level, table.max_levels[f], c.field
                )));
            }
            conds.push((f, c.min_level));
        }
        compiled.push(conds);
    }
    if let Some(&(i, j)) = table.pairs.iter().find(|&&(i, j)| i >= j || j >= r) {
        return Err(Error::Config(format!(
            "pair ({i}, {j}) is not a valid pair of {r} records"
        )));
    }
    let candidate: Vec<bool> = (0..table.len())
        .map(|k| {
            let row = table.row(k);
            !compiled.iter().any(|conds| {
                conds
                    .iter()
                    .all(|&(f, min)| matches!(row[f], Some(l) if l >= min))
            })
        })
        .collect();
    let edges: Vec<(usize, usize)> = table
        .pairs
        .iter()
        .zip(&candidate)
        .filter(|(_, &c)| c)
        .map(|(&p, _)| p)
        .collect();
    let components = connected_components(r, &edges);
    Ok(CandidateGraph {
        r,
        candidate,
        components,
    })
}

/// Connected components of the undirected graph on `0..r`. Components are
/// sorted internally and ordered by their smallest record.
pub fn connected_components(r: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::<usize>::new(r);
    for &(i, j) in edges {
        uf.union(i, j);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut first_of_root: Vec<Option<usize>> = vec![None; r];
    for i in 0..r {
        let root = uf.find(i);
        let key = *first_of_root[root].get_or_insert(i);
        groups.entry(key).or_default().push(i);
    }
    groups.into_values().collect()
}

impl CandidateGraph {
    pub fn record_count(&self) -> usize {
        self.r
    }

    pub fn is_candidate(&self, k: usize) -> bool {
        self.candidate[k]
    }

    pub fn candidate_flags(&self) -> &[bool] {
        &self.candidate
    }

    pub fn n_candidates(&self) -> usize {
        self.candidate.iter().filter(|&&c| c).count()
    }

    pub fn n_compared(&self) -> usize {
        self.candidate.len()
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    /// Candidate pairs as a set of `(i, j)` with `i < j`.
    pub fn candidate_set(&self, table: &ComparisonTable) -> HashSet<(usize, usize)> {
        self.candidate_pairs(table).collect()
    }

    pub fn candidate_pairs<'a>(
        &'a self,
        table: &'a ComparisonTable,
    ) -> impl Iterator<Item = (usize, usize)> + 'a {
        table
            .pairs
            .iter()
            .zip(&self.candidate)
            .filter(|(_, &c)| c)
            .map(|(&p, _)| p)
    }

    /// Records appearing in at least one candidate pair.
    pub fn touched_records(&self) -> Vec<usize> {
        self.components
            .iter()
            .filter(|c| c.len() > 1)
            .flatten()
            .copied()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Edge list `i,j,fixed` over every compared pair.
    pub fn write_edges<W: Write>(&self, table: &ComparisonTable, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "fixed"])?;
        for (&(i, j), &c) in table.pairs.iter().zip(&self.candidate) {
            w.write_record([i.to_string(), j.to_string(), u8::from(!c).to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<writer>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison::tests::toy_plan_and_file;
    use crate::record::{FieldKind, FieldSchema, Schema};

    fn all_pairs(r: usize) -> Vec<(usize, usize)> {
        (0..r)
            .flat_map(|i| (i + 1..r).map(move |j| (i, j)))
            .collect()
    }

    #[test]
    fn no_rules_gives_all_pairs() {
        let (_, df) = toy_plan_and_file();
        let p = build_pairs(&df, &[]).unwrap();
        assert_eq!(p.len(), 10);
        assert_eq!(p, all_pairs(5));
        assert_eq!(
            build_pairs(&df, &[FilterRule::AlwaysCompare])
                .unwrap()
                .len(),
            10
        );
    }

    #[test]
    fn full_file_pair_count() {
        let r: u64 = 5395;
        assert_eq!(r * (r - 1) / 2, 14_550_315);
    }

    #[test]
    fn blocking_excludes_cross_block_pairs() {
        let (_, df) = toy_plan_and_file();
        let rule = FilterRule::CategoricalBlock {
            field: "municipality".into(),
        };
        let p = build_pairs(&df, &[rule]).unwrap();
        assert_eq!(p, vec![(0, 1), (0, 2), (1, 2), (3, 4)]);
        let gap = FilterRule::IntegerGapExceeds {
            field: "year".into(),
            gap: 2,
        };
        assert_eq!(build_pairs(&df, &[gap]).unwrap().len(), 4);
    }

    #[test]
    fn unknown_field_is_config_error() {
        let (_, df) = toy_plan_and_file();
        let rule = FilterRule::CategoricalBlock {
            field: "gender".into(),
        };
        assert!(matches!(build_pairs(&df, &[rule]), Err(Error::Schema(_))));
    }

    #[test]
    fn overlap_rule() {
        let schema = Schema::new(vec![FieldSchema::new("muni", FieldKind::Categorical)]).unwrap();
        let rows = [
            "SAN FRANCISCO MORAZAN",
            "SAN FRANCISCO LEMPA",
            "SAN MIGUEL",
            "APOPA",
            "NEJAPA",
        ]
        .iter()
        .map(|s| vec![Some(Value::Text(s.to_string()))])
        .chain(std::iter::once(vec![None]))
        .collect();
        let df = DataFile::from_rows(schema, rows).unwrap();
        let rule = FilterRule::CustomOverlap {
            field: "muni".into(),
            stop_tokens: default_stop_tokens(),
            neighbors: vec![("Apopa".into(), "Nejapa".into())],
            neighbors_file: None,
        };
        let p = build_pairs(&df, &[rule]).unwrap();
        // 0-1 share FRANCISCO; SAN is ignored; 3-4 are neighbors; 5 is missing
        assert_eq!(
            p,
            vec![(0, 1), (0, 5), (1, 5), (2, 5), (3, 4), (3, 5), (4, 5)]
        );
    }

    #[test]
    fn neighbor_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.tsv");
        std::fs::write(&path, "APOPA\tNEJAPA\n\nA\tB\n").unwrap();
        assert_eq!(load_neighbors(&path).unwrap().len(), 2);
        std::fs::write(&path, "APOPA NEJAPA\n").unwrap();
        assert!(load_neighbors(&path).is_err());
    }

    fn toy_table() -> (ComparisonTable, usize) {
        let (plan, df) = toy_plan_and_file();
        let table = plan.compare_pairs(&df, all_pairs(5)).unwrap();
        (table, 5)
    }

    #[test]
    fn toy_fix_rule_splits_groups() {
        let (table, r) = toy_table();
        let rules = [FixRule::single("given", 3), FixRule::single("family", 3)];
        let g = fix_noncoreferent(r, &table, &rules).unwrap();
        assert_eq!(g.n_candidates(), 4);
        assert_eq!(g.n_compared(), 10);
        let c = g.candidate_set(&table);
        let expected: HashSet<_> = [(0, 1), (0, 2), (1, 2), (3, 4)].into_iter().collect();
        assert_eq!(c, expected);
        assert_eq!(g.components(), &[vec![0, 1, 2], vec![3, 4]]);
        assert_eq!(g.touched_records(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn empty_rules_keep_everything() {
        let (table, r) = toy_table();
        let g = fix_noncoreferent(r, &table, &[]).unwrap();
        assert_eq!(g.n_candidates(), 10);
    }

    #[test]
    fn missing_comparison_never_fixes() {
        let (table, r) = toy_table();
        // pair (0,1) has day missing; pair (0,2) has day level 3
        let g = fix_noncoreferent(r, &table, &[FixRule::single("day", 3)]).unwrap();
        let c = g.candidate_set(&table);
        assert!(c.contains(&(0, 1)));
        assert!(!c.contains(&(0, 2)));
    }

    #[test]
    fn conjunction_and_monotonicity() {
        let (table, r) = toy_table();
        let base = fix_noncoreferent(r, &table, &[FixRule::single("month", 2)]).unwrap();
        let both =
            fix_noncoreferent(r, &table, &[FixRule::all(&[("month", 2), ("day", 3)])]).unwrap();
        let more = fix_noncoreferent(
            r,
            &table,
            &[
                FixRule::single("month", 2),
                FixRule::single("municipality", 1),
            ],
        )
        .unwrap();
        assert!(both.n_candidates() >= base.n_candidates());
        assert!(more.n_candidates() <= base.n_candidates());
        assert!(fix_noncoreferent(r, &table, &[FixRule::single("municipality", 2)]).is_err());
    }

    #[test]
    fn components_examples() {
        assert_eq!(
            connected_components(5, &[(0, 1), (1, 2), (3, 4)]),
            vec![vec![0, 1, 2], vec![3, 4]]
        );
        let singletons = connected_components(4, &[]);
        assert_eq!(singletons.len(), 4);
        assert_eq!(
            connected_components(4, &[(2, 3), (0, 3)]),
            vec![vec![0, 2, 3], vec![1]]
        );
    }

    #[test]
    fn edge_export() {
        let (table, r) = toy_table();
        let g = fix_noncoreferent(r, &table, &[FixRule::single("given", 3)]).unwrap();
        let mut buf = Vec::new();
        g.write_edges(&table, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i,j,fixed\n0,1,0\n"));
        assert!(text.contains("\n0,3,1\n"));
    }
}
