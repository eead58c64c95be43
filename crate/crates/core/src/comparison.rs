//! Field comparators, binning into ordinal disagreement levels, and
//! per-pair comparison vectors.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{DataFile, FieldKind, Record, Schema, Value};

/// Edit distance counting single-character insertions, deletions and
/// substitutions. Works on Unicode scalar values, with a byte fast path.
pub fn levenshtein(a: &str, b: &str) -> usize {
    if a.is_ascii() && b.is_ascii() {
        edit_distance(a.as_bytes(), b.as_bytes())
    } else {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        edit_distance(&a, &b)
    }
}

fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let above = row[j + 1];
            let cost = usize::from(ca != cb);
            row[j + 1] = (diag + cost).min(above + 1).min(row[j] + 1);
            diag = above;
        }
    }
    row[b.len()]
}

fn char_len(s: &str) -> usize {
    if s.is_ascii() {
        s.len()
    } else {
        s.chars().count()
    }
}

/// Levenshtein distance divided by the longer length: 0 for equal strings,
/// 1 for complete disagreement.
pub fn normalized_levenshtein(a: &str, b: &str) -> Result<f64> {
    let denom = char_len(a).max(char_len(b));
    if denom == 0 {
        return Err(Error::Undefined(
            "normalized Levenshtein of two empty strings".into(),
        ));
    }
    Ok(levenshtein(a, b) as f64 / denom as f64)
}

/// Levenshtein variant for multi-piece names where pieces may be dropped.
///
/// Names with the same number of tokens compare position by position and the
/// normalized distances are averaged. Otherwise every token of the shorter
/// name is matched to the token of the longer name at minimum edit distance,
/// normalized by the longer of the two matched tokens, and those values are
/// averaged over the shorter name's tokens.
pub fn token_min_levenshtein(a: &str, b: &str) -> Result<f64> {
    let ta: Vec<&str> = a.split_whitespace().collect();
    let tb: Vec<&str> = b.split_whitespace().collect();
    if ta.is_empty() || tb.is_empty() {
        return Err(Error::Undefined("token comparison of an empty name".into()));
    }
    if ta.len() == tb.len() {
        let mut total = 0.0;
        for (x, y) in ta.iter().zip(&tb) {
            total += normalized_levenshtein(x, y)?;
        }
        return Ok(total / ta.len() as f64);
    }
    let (short, long) = if ta.len() < tb.len() {
        (&ta, &tb)
    } else {
        (&tb, &ta)
    };
    let mut total = 0.0;
    for s in short {
        let mut best: Option<(usize, f64)> = None;
        for t in long {
            let d = levenshtein(s, t);
            let norm = d as f64 / char_len(s).max(char_len(t)) as f64;
            let better = match best {
                None => true,
                Some((bd, bn)) => d < bd || (d == bd && norm < bn),
            };
            if better {
                best = Some((d, norm));
            }
        }
        // tokens come from split_whitespace, so they are nonempty
        total += best.map(|(_, n)| n).unwrap_or(1.0);
    }
    Ok(total / short.len() as f64)
}

pub fn absolute_difference(x: i64, y: i64) -> u64 {
    x.abs_diff(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparatorKind {
    NormalizedLevenshtein,
    TokenMinLevenshtein,
    AbsoluteDifference,
    BinaryEquality,
}

impl ComparatorKind {
    fn bounded_unit(self) -> bool {
        matches!(
            self,
            ComparatorKind::NormalizedLevenshtein | ComparatorKind::TokenMinLevenshtein
        )
    }

    fn accepts(self, kind: FieldKind) -> bool {
        match self {
            ComparatorKind::NormalizedLevenshtein | ComparatorKind::TokenMinLevenshtein => {
                matches!(kind, FieldKind::String | FieldKind::Categorical)
            }
            ComparatorKind::AbsoluteDifference => kind == FieldKind::Integer,
            ComparatorKind::BinaryEquality => true,
        }
    }

    /// Raw disagreement measure between two present values.
    pub fn measure(self, a: &Value, b: &Value) -> Result<f64> {
        match self {
            ComparatorKind::NormalizedLevenshtein => normalized_levenshtein(text(a)?, text(b)?),
            ComparatorKind::TokenMinLevenshtein => token_min_levenshtein(text(a)?, text(b)?),
            ComparatorKind::AbsoluteDifference => {
                let (x, y) = (integer(a)?, integer(b)?);
                Ok(absolute_difference(x, y) as f64)
            }
            ComparatorKind::BinaryEquality => Ok(if a == b { 0.0 } else { 1.0 }),
        }
    }
}

fn text(v: &Value) -> Result<&str> {
    v.as_text()
        .ok_or_else(|| Error::Undefined(format!("string comparator applied to `{v}`")))
}

fn integer(v: &Value) -> Result<i64> {
    v.as_integer()
        .ok_or_else(|| Error::Undefined(format!("numeric comparator applied to `{v}`")))
}

/// Binning of one field's comparator output into levels `0..=L_f`.
///
/// `cut_points[l]` is the inclusive upper bound of level `l` for
/// `l < L_f`; everything above the last cut is level `L_f`. With cuts
/// `[0, 0.25, 0.5]` this gives `0 | (0,0.25] | (0.25,0.5] | (0.5,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub field: String,
    pub kind: ComparatorKind,
    pub cut_points: Vec<f64>,
}

impl LevelSpec {
    pub fn new(
        field: impl Into<String>,
        kind: ComparatorKind,
        cut_points: Vec<f64>,
    ) -> Result<Self> {
        let spec = Self {
            field: field.into(),
            kind,
            cut_points,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Four-level string spec used for names, phone numbers and postcodes.
    pub fn string_levels(field: impl Into<String>, kind: ComparatorKind) -> Self {
        Self::new(field, kind, vec![0.0, 0.25, 0.5]).expect("static cuts are valid")
    }

    pub fn binary(field: impl Into<String>) -> Self {
        Self::new(field, ComparatorKind::BinaryEquality, vec![0.0]).expect("static cuts are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let cuts = &self.cut_points;
        if cuts.is_empty() {
            return Err(Error::LevelSpec(format!(
                "`{}`: at least one cut point is required",
                self.field
            )));
        }
        if cuts.len() > u8::MAX as usize - 1 {
            return Err(Error::LevelSpec(format!(
                "`{}`: too many levels",
                self.field
            )));
        }
        if cuts.iter().any(|c| !c.is_finite()) || cuts[0] < 0.0 {
            return Err(Error::LevelSpec(format!(
                "`{}`: cut points must be finite and nonnegative",
                self.field
            )));
        }
        if cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::LevelSpec(format!(
                "`{}`: cut points must be strictly ascending",
                self.field
            )));
        }
        if self.kind.bounded_unit() && *cuts.last().unwrap() >= 1.0 {
            return Err(Error::LevelSpec(format!(
                "`{}`: last cut must be below 1 for a [0,1] comparator",
                self.field
            )));
        }
        if self.kind == ComparatorKind::BinaryEquality && cuts != &[0.0] {
            return Err(Error::LevelSpec(format!(
                "`{}`: binary comparators take cut points [0]",
                self.field
            )));
        }
        Ok(())
    }

    /// Highest disagreement level `L_f`.
    pub fn max_level(&self) -> usize {
        self.cut_points.len()
    }

    pub fn bin(&self, s: f64) -> Result<u8> {
        bin_level(s, self)
    }
}

/// Map a comparator value to its ordinal level.
pub fn bin_level(s: f64, spec: &LevelSpec) -> Result<u8> {
    if !s.is_finite() || s < 0.0 || (spec.kind.bounded_unit() && s > 1.0) {
        return Err(Error::LevelSpec(format!(
            "value {s} is outside the range of comparator for `{}`",
            spec.field
        )));
    }
    let level = spec
        .cut_points
        .iter()
        .position(|&c| s <= c)
        .unwrap_or(spec.cut_points.len());
    Ok(level as u8)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonVector {
    pub i: usize,
    pub j: usize,
    /// Level per compared field; `None` when either value is missing.
    pub levels: Vec<Option<u8>>,
}

impl ComparisonVector {
    pub fn observed(&self, f: usize) -> bool {
        self.levels[f].is_some()
    }
}

/// Comparison specs bound to field positions of a schema.
#[derive(Debug, Clone)]
pub struct ComparisonPlan {
    specs: Vec<LevelSpec>,
    columns: Vec<usize>,
}

impl ComparisonPlan {
    pub fn new(schema: &Schema, specs: Vec<LevelSpec>) -> Result<Self> {
        let mut columns = Vec::with_capacity(specs.len());
        for spec in &specs {
            spec.validate()?;
            let (idx, field) = schema.field(&spec.field)?;
            if !spec.kind.accepts(field.kind) {
                return Err(Error::Config(format!(
                    "comparator {:?} cannot compare {:?} field `{}`",
                    spec.kind, field.kind, field.name
                )));
            }
            columns.push(idx);
        }
        if specs.is_empty() {
            return Err(Error::Config("no fields to compare".into()));
        }
        Ok(Self { specs, columns })
    }

    pub fn specs(&self) -> &[LevelSpec] {
        &self.specs
    }

    pub fn field_names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.field.clone()).collect()
    }

    pub fn max_levels(&self) -> Vec<usize> {
        self.specs.iter().map(LevelSpec::max_level).collect()
    }

    fn levels_into(&self, a: &Record, b: &Record, out: &mut Vec<Option<u8>>) -> Result<()> {
        for (spec, &col) in self.specs.iter().zip(&self.columns) {
            let level = match (a.get(col), b.get(col)) {
                (Some(x), Some(y)) => Some(spec.bin(spec.kind.measure(x, y)?)?),
                _ => None,
            };
            out.push(level);
        }
        Ok(())
    }

    pub fn compare_pair(&self, a: &Record, b: &Record) -> Result<ComparisonVector> {
        let (first, second) = if a.id <= b.id { (a, b) } else { (b, a) };
        let mut levels = Vec::with_capacity(self.specs.len());
        self.levels_into(first, second, &mut levels)?;
        Ok(ComparisonVector {
            i: first.id,
            j: second.id,
            levels,
        })
    }

    /// Compare every listed pair. Work is split across the rayon pool; the
    /// output order always follows `pairs`.
    pub fn compare_pairs(
        &self,
        df: &DataFile,
        pairs: Vec<(usize, usize)>,
    ) -> Result<ComparisonTable> {
        const CHUNK: usize = 4096;
        let width = self.specs.len();
        let chunks: Vec<Vec<Option<u8>>> = pairs
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut out = Vec::with_capacity(chunk.len() * width);
                for &(i, j) in chunk {
                    self.levels_into(&df.records[i], &df.records[j], &mut out)?;
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        Ok(ComparisonTable {
            fields: self.field_names(),
            max_levels: self.max_levels(),
            pairs,
            levels: chunks.concat(),
        })
    }
}

/// Comparison vectors for a list of pairs, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub fields: Vec<String>,
    /// `L_f` for each field.
    pub max_levels: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
    levels: Vec<Option<u8>>,
}

impl ComparisonTable {
    pub fn from_vectors(
        fields: Vec<String>,
        max_levels: Vec<usize>,
        vectors: &[ComparisonVector],
    ) -> Result<Self> {
        if fields.len() != max_levels.len() {
            return Err(Error::Config("field/level count mismatch".into()));
        }
        let mut levels = Vec::with_capacity(vectors.len() * fields.len());
        let mut pairs = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.levels.len() != fields.len() || v.i >= v.j {
                return Err(Error::Config(format!(
                    "malformed comparison vector for ({}, {})",
                    v.i, v.j
                )));
            }
            for (l, &max) in v.levels.iter().zip(&max_levels) {
                if let Some(l) = l {
                    if *l as usize > max {
                        return Err(Error::LevelSpec(format!("level {l} above maximum {max}")));
                    }
                }
            }
            pairs.push((v.i, v.j));
            levels.extend_from_slice(&v.levels);
        }
        Ok(Self {
            fields,
            max_levels,
            pairs,
            levels,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn n_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn row(&self, k: usize) -> &[Option<u8>] {
        let w = self.fields.len();
        &self.levels[k * w..(k + 1) * w]
    }

    pub fn vector(&self, k: usize) -> ComparisonVector {
        let (i, j) = self.pairs[k];
        ComparisonVector {
            i,
            j,
            levels: self.row(k).to_vec(),
        }
    }

    pub fn pair_index(&self) -> HashMap<(usize, usize), usize> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(k, &p)| (p, k))
            .collect()
    }

    /// Copy of the table with an extra field appended.
    pub fn with_field(&self, name: &str, max_level: usize, column: &[Option<u8>]) -> Self {
        assert_eq!(
            column.len(),
            self.pairs.len(),
            "one level per compared pair"
        );
        let w = self.fields.len();
        let mut levels = Vec::with_capacity(self.pairs.len() * (w + 1));
        for (k, &c) in column.iter().enumerate() {
            levels.extend_from_slice(self.row(k));
            levels.push(c);
        }
        let mut fields = self.fields.clone();
        fields.push(name.to_string());
        let mut max_levels = self.max_levels.clone();
        max_levels.push(max_level);
        Self {
            fields,
            max_levels,
            pairs: self.pairs.clone(),
            levels,
        }
    }

    /// Delimited export: `i,j,<field>...` with `NA` for missing comparisons.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["i".to_string(), "j".to_string()];
        header.extend(self.fields.iter().cloned());
        w.write_record(&header)?;
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            let mut rec = vec![i.to_string(), j.to_string()];
            rec.extend(self.row(k).iter().map(|l| match l {
                Some(l) => l.to_string(),
                None => "NA".to_string(),
            }));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<writer>", e))?;
        Ok(())
    }
}
