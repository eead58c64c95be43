//! Coreference partitions and their labelings.
//!
//! A labeling assigns every record a label in `0..r`; records sharing a label
//! are coreferent. Many labelings describe the same partition, so partitions
//! are kept in a canonical, label-free form: cells sorted internally and
//! ordered by their smallest record.

use std::collections::HashSet;
use std::fmt;

use num_bigint::BigUint;

use crate::error::{Error, Result};

/// Largest file size accepted by the brute-force enumerator.
pub const MAX_ENUMERATION_RECORDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    cells: Vec<Vec<usize>>,
}

impl Partition {
    /// Build from arbitrary cells; they must be nonempty, disjoint and cover
    /// `0..r` exactly.
    pub fn from_cells(r: usize, cells: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; r];
        for cell in &cells {
            if cell.is_empty() {
                return Err(Error::InvalidLabeling("empty cell".into()));
            }
            for &i in cell {
                if i >= r || seen[i] {
                    return Err(Error::InvalidLabeling(format!(
                        "record {i} is out of range or repeated"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidLabeling(
                "cells do not cover every record".into(),
            ));
        }
        Ok(Self::canonical(cells))
    }

    fn canonical(mut cells: Vec<Vec<usize>>) -> Self {
        for c in &mut cells {
            c.sort_unstable();
        }
        cells.sort_unstable_by_key(|c| c[0]);
        Self { cells }
    }

    pub fn singletons(r: usize) -> Self {
        Self {
            cells: (0..r).map(|i| vec![i]).collect(),
        }
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn record_count(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    pub fn duplicates(&self) -> usize {
        self.record_count() - self.n_cells()
    }

    /// Labels numbered by cell order, i.e. by first appearance in file order.
    pub fn canonical_labels(&self) -> Vec<u32> {
        let mut z = vec![0u32; self.record_count()];
        for (q, cell) in self.cells.iter().enumerate() {
            for &i in cell {
                z[i] = q as u32;
            }
        }
        z
    }

    /// Number of coreferent pairs, `sum over cells of |c| choose 2`.
    pub fn coreferent_pairs(&self) -> u64 {
        self.cells
            .iter()
            .map(|c| {
                let n = c.len() as u64;
                n * (n.saturating_sub(1)) / 2
            })
            .sum()
    }

    /// True when no cell joins a pair outside `candidates`.
    pub fn respects(&self, candidates: &HashSet<(usize, usize)>) -> bool {
        self.cells.iter().all(|c| {
            c.iter()
                .enumerate()
                .all(|(a, &i)| c[a + 1..].iter().all(|&j| candidates.contains(&(i, j))))
        })
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (q, cell) in self.cells.iter().enumerate() {
            if q > 0 {
                f.write_str("/")?;
            }
            for (k, i) in cell.iter().enumerate() {
                if k > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{i}")?;
            }
        }
        Ok(())
    }
}

/// Relabel so that labels appear in increasing order of first occurrence.
pub fn canonicalize_labels(z: &[usize]) -> Vec<u32> {
    let mut map = std::collections::HashMap::with_capacity(z.len());
    z.iter()
        .map(|&l| {
            let next = map.len() as u32;
            *map.entry(l).or_insert(next)
        })
        .collect()
}

pub fn labeling_to_partition(z: &[usize]) -> Partition {
    let canon = canonicalize_labels(z);
    let n = canon.iter().map(|&q| q as usize + 1).max().unwrap_or(0);
    let mut cells = vec![Vec::new(); n];
    for (i, &q) in canon.iter().enumerate() {
        cells[q as usize].push(i);
    }
    // first-occurrence numbering already orders cells by minimum element
    Partition { cells }
}

pub fn partition_from_canonical(labels: &[u32]) -> Partition {
    let z: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    labeling_to_partition(&z)
}

pub fn coreferent(z: &[usize], i: usize, j: usize) -> bool {
    z[i] == z[j]
}

/// Check that `z` uses labels in `0..r` and joins only candidate pairs.
pub fn validate_labeling(z: &[usize], candidates: &HashSet<(usize, usize)>) -> Result<()> {
    let r = z.len();
    if let Some(&bad) = z.iter().find(|&&l| l >= r) {
        return Err(Error::InvalidLabeling(format!(
            "label {bad} is outside 0..{r}"
        )));
    }
    let p = labeling_to_partition(z);
    if !p.respects(candidates) {
        return Err(Error::InvalidLabeling(format!(
            "partition {p} joins a pair that is not a candidate"
        )));
    }
    Ok(())
}

/// Number of labelings of an `n`-cell partition of `r` records,
/// `r! / (r - n)!`.
pub fn labeling_count(r: usize, n: usize) -> Result<BigUint> {
    if n == 0 || n > r {
        return Err(Error::Config(format!(
            "labeling count needs 1 <= n <= r, got n={n}, r={r}"
        )));
    }
    Ok((r - n + 1..=r).fold(BigUint::from(1u32), |acc, k| acc * BigUint::from(k)))
}

/// Bell number via the Bell triangle.
pub fn bell_number(r: usize) -> BigUint {
    if r == 0 {
        return BigUint::from(1u32);
    }
    let mut row = vec![BigUint::from(1u32)];
    for _ in 1..r {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(row.last().unwrap().clone());
        for k in 0..row.len() {
            let v = &next[k] + &row[k];
            next.push(v);
        }
        row = next;
    }
    row.last().unwrap().clone()
}

/// Every partition of `0..r` whose cells only join pairs in `candidates`.
pub fn enumerate_valid_partitions(
    r: usize,
    candidates: &HashSet<(usize, usize)>,
) -> Result<Vec<Partition>> {
    if r > MAX_ENUMERATION_RECORDS {
        return Err(Error::TooLarge(format!(
            "refusing to enumerate partitions of {r} records (limit {MAX_ENUMERATION_RECORDS})"
        )));
    }
    let linked = |i: usize, j: usize| {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        candidates.contains(&(a, b))
    };
    let mut out = Vec::new();
    let mut cells: Vec<Vec<usize>> = Vec::new();
    fn recurse(
        k: usize,
        r: usize,
        cells: &mut Vec<Vec<usize>>,
        out: &mut Vec<Partition>,
        linked: &dyn Fn(usize, usize) -> bool,
    ) {
        if k == r {
            out.push(Partition::canonical(cells.clone()));
            return;
        }
        for q in 0..cells.len() {
            if cells[q].iter().all(|&j| linked(j, k)) {
                cells[q].push(k);
                recurse(k + 1, r, cells, out, linked);
                cells[q].pop();
            }
        }
        cells.push(vec![k]);
        recurse(k + 1, r, cells, out, linked);
        cells.pop();
    }
    recurse(0, r, &mut cells, &mut out, &linked);
    Ok(out)
}
