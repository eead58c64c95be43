//! Synthetic files with known coreference structure.
//!
//! Original records are drawn from frequency tables; a subset of originals
//! receives between one and five corrupted copies. Corruption picks a fixed
//! number of distinct fields per duplicate and applies one or two errors of
//! a randomly chosen allowed kind to each.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::record::{DataFile, FieldKind, FieldSchema, Schema, Value};

pub(crate) const GIVEN_NAMES: &str = include_str!("../assets/given_names.csv");
pub(crate) const FAMILY_NAMES: &str = include_str!("../assets/family_names.csv");
pub(crate) const AGE_OCCUPATION: &str = include_str!("../assets/age_occupation.csv");
pub(crate) const FAMILY_MISSPELLINGS: &str = include_str!("../assets/family_misspellings.csv");

/// Upper end of the duplicate-count support.
pub const MAX_DUPLICATES_PER_ORIGINAL: usize = 5;

fn parse_table(text: &str, source: &str, columns: usize) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != columns {
            return Err(Error::Config(format!(
                "{source}: expected {columns} columns, found {}",
                rec.len()
            )));
        }
        rows.push(rec.iter().map(|s| s.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("{source}: empty table")));
    }
    Ok(rows)
}

fn parse_count(raw: &str, source: &str) -> Result<f64> {
    raw.parse::<f64>()
        .ok()
        .filter(|c| c.is_finite() && *c >= 0.0)
        .ok_or_else(|| Error::Config(format!("{source}: bad count {raw:?}")))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// One-way table `value,count`.
#[derive(Debug, Clone)]
pub struct FrequencyTable {
    values: Vec<String>,
    weights: WeightedIndex<f64>,
}

impl FrequencyTable {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let rows = parse_table(text, source, 2)?;
        let mut values = Vec::with_capacity(rows.len());
        let mut counts = Vec::with_capacity(rows.len());
        for r in rows {
            counts.push(parse_count(&r[1], source)?);
            values.push(r[0].clone());
        }
        let weights =
            WeightedIndex::new(&counts).map_err(|e| Error::Config(format!("{source}: {e}")))?;
        Ok(Self { values, weights })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        &self.values[self.weights.sample(rng)]
    }
}

/// Two-way table `row,col,count`, sampled jointly.
#[derive(Debug, Clone)]
pub struct TwoWayTable {
    cells: Vec<(String, String)>,
    weights: WeightedIndex<f64>,
}

impl TwoWayTable {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let rows = parse_table(text, source, 3)?;
        let mut cells = Vec::with_capacity(rows.len());
        let mut counts = Vec::with_capacity(rows.len());
        for r in rows {
            counts.push(parse_count(&r[2], source)?);
            cells.push((r[0].clone(), r[1].clone()));
        }
        let weights =
            WeightedIndex::new(&counts).map_err(|e| Error::Config(format!("{source}: {e}")))?;
        Ok(Self { cells, weights })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (&str, &str) {
        let (a, b) = &self.cells[self.weights.sample(rng)];
        (a, b)
    }
}

/// Where the values of one or two fields come from.
#[derive(Debug, Clone)]
pub enum ValueSource {
    Frequency {
        field: String,
        table: FrequencyTable,
    },
    /// Row label goes to `row_field`, column label to `col_field`.
    Joint {
        row_field: String,
        col_field: String,
        table: TwoWayTable,
    },
    /// `D` is replaced by a uniform digit, any other character is kept.
    Code { field: String, pattern: String },
}

impl ValueSource {
    fn fields(&self) -> Vec<&str> {
        match self {
            Self::Frequency { field, .. } | Self::Code { field, .. } => vec![field],
            Self::Joint {
                row_field,
                col_field,
                ..
            } => vec![row_field, col_field],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Missing,
    Edit,
    Ocr,
    Keyboard,
    Phonetic,
    Misspelling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRule {
    pub field: String,
    pub allowed: Vec<ErrorKind>,
}

impl CorruptionRule {
    pub fn new(field: impl Into<String>, allowed: &[ErrorKind]) -> Self {
        Self {
            field: field.into(),
            allowed: allowed.to_vec(),
        }
    }
}

/// Known misspellings keyed by the correct value.
#[derive(Debug, Clone, Default)]
pub struct MisspellingTable {
    entries: HashMap<String, Vec<String>>,
}

impl MisspellingTable {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries: HashMap<String, Vec<String>> = HashMap::new();
        for r in parse_table(text, source, 2)? {
            entries.entry(r[0].clone()).or_default().push(r[1].clone());
        }
        Ok(Self { entries })
    }

    pub fn get(&self, value: &str) -> Option<&[String]> {
        self.entries.get(value).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_originals: usize,
    pub n_duplicates: usize,
    pub errors_per_duplicate: usize,
    pub max_errors_per_field: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_originals: 450,
            n_duplicates: 50,
            errors_per_duplicate: 1,
            max_errors_per_field: 2,
            seed: 1,
        }
    }
}

/// Everything needed to generate files: schema, value sources, corruption
/// rules and misspellings.
#[derive(Debug, Clone)]
pub struct Generator {
    pub schema: Schema,
    pub sources: Vec<ValueSource>,
    pub rules: Vec<CorruptionRule>,
    pub misspellings: MisspellingTable,
}

/// Field names of the bundled seven-field setup.
pub const SEVEN_FIELDS: [&str; 7] = [
    "gender",
    "given_name",
    "family_name",
    "age",
    "occupation",
    "postcode",
    "phone",
];

impl Generator {
    pub fn new(
        schema: Schema,
        sources: Vec<ValueSource>,
        rules: Vec<CorruptionRule>,
        misspellings: MisspellingTable,
    ) -> Result<Self> {
        let mut covered = vec![false; schema.len()];
        for s in &sources {
            for f in s.fields() {
                let (idx, _) = schema.field(f)?;
                if covered[idx] {
                    return Err(Error::Config(format!(
                        "field {f} has more than one value source"
                    )));
                }
                covered[idx] = true;
            }
        }
        if let Some(k) = covered.iter().position(|c| !c) {
            return Err(Error::Config(format!(
                "field {} has no value source",
                schema.fields()[k].name
            )));
        }
        for rule in &rules {
            let (_, fs) = schema.field(&rule.field)?;
            if rule.allowed.is_empty() {
                return Err(Error::Config(format!(
                    "corruption rule for {} allows no errors",
                    rule.field
                )));
            }
            if fs.kind == FieldKind::Integer
                && rule.allowed.iter().any(|k| *k != ErrorKind::Missing)
            {
                return Err(Error::Config(format!(
                    "integer field {} only supports missing values",
                    rule.field
                )));
            }
        }
        Ok(Self {
            schema,
            sources,
            rules,
            misspellings,
        })
    }

    /// Seven fields sampled from the bundled tables: gender with given
    /// name, family name, age with occupation, and uniform postcode and
    /// phone codes.
    pub fn seven_field() -> Result<Self> {
        Self::seven_field_from(
            GIVEN_NAMES,
            FAMILY_NAMES,
            AGE_OCCUPATION,
            FAMILY_MISSPELLINGS,
        )
    }

    /// Same layout as [`Generator::seven_field`] with caller-supplied
    /// table contents, in the bundled CSV formats.
    pub fn seven_field_from(
        given_names: &str,
        family_names: &str,
        age_occupation: &str,
        misspellings: &str,
    ) -> Result<Self> {
        use ErrorKind::*;
        let schema = Schema::new(vec![
            FieldSchema::new("gender", FieldKind::Categorical),
            FieldSchema::new("given_name", FieldKind::String),
            FieldSchema::new("family_name", FieldKind::String),
            FieldSchema::new("age", FieldKind::Integer),
            FieldSchema::new("occupation", FieldKind::Categorical),
            FieldSchema::new("postcode", FieldKind::String),
            FieldSchema::new("phone", FieldKind::String),
        ])?;
        let sources = vec![
            ValueSource::Joint {
                row_field: "gender".into(),
                col_field: "given_name".into(),
                table: TwoWayTable::parse(given_names, "given_names")?,
            },
            ValueSource::Frequency {
                field: "family_name".into(),
                table: FrequencyTable::parse(family_names, "family_names")?,
            },
            ValueSource::Joint {
                row_field: "age".into(),
                col_field: "occupation".into(),
                table: TwoWayTable::parse(age_occupation, "age_occupation")?,
            },
            ValueSource::Code {
                field: "postcode".into(),
                pattern: "DDDD".into(),
            },
            ValueSource::Code {
                field: "phone".into(),
                pattern: "0D DDDD DDDD".into(),
            },
        ];
        let rules = vec![
            CorruptionRule::new("gender", &[Missing]),
            CorruptionRule::new("given_name", &[Edit, Ocr, Keyboard, Phonetic]),
            CorruptionRule::new("family_name", &[Edit, Ocr, Keyboard, Phonetic, Misspelling]),
            CorruptionRule::new("age", &[Missing]),
            CorruptionRule::new("occupation", &[Missing]),
            CorruptionRule::new("postcode", &[Missing, Edit, Ocr, Keyboard]),
            CorruptionRule::new("phone", &[Missing, Edit, Ocr, Keyboard]),
        ];
        let misspellings = MisspellingTable::parse(misspellings, "misspellings")?;
        Self::new(schema, sources, rules, misspellings)
    }

    fn value_for(&self, field: &str, raw: &str, rng: &mut impl Rng) -> Result<Value> {
        let (_, fs) = self.schema.field(field)?;
        Ok(match fs.kind {
            FieldKind::Integer => Value::Integer(sample_integer(raw, rng).ok_or_else(|| {
                Error::Config(format!(
                    "value {raw:?} for integer field {field} is neither a number nor a range"
                ))
            })?),
            FieldKind::String | FieldKind::Categorical => Value::Text(raw.to_string()),
        })
    }

    fn sample_original(&self, rng: &mut impl Rng) -> Result<Vec<Option<Value>>> {
        let mut values = vec![None; self.schema.len()];
        for s in &self.sources {
            match s {
                ValueSource::Frequency { field, table } => {
                    let raw = table.sample(rng).to_string();
                    values[self.schema.field(field)?.0] = Some(self.value_for(field, &raw, rng)?);
                }
                ValueSource::Joint {
                    row_field,
                    col_field,
                    table,
                } => {
                    let (a, b) = table.sample(rng);
                    let (a, b) = (a.to_string(), b.to_string());
                    values[self.schema.field(row_field)?.0] =
                        Some(self.value_for(row_field, &a, rng)?);
                    values[self.schema.field(col_field)?.0] =
                        Some(self.value_for(col_field, &b, rng)?);
                }
                ValueSource::Code { field, pattern } => {
                    let raw = sample_code(pattern, rng);
                    values[self.schema.field(field)?.0] = Some(self.value_for(field, &raw, rng)?);
                }
            }
        }
        Ok(values)
    }

    /// Draw a file and its true partition. Records are shuffled, so the
    /// position of a record reveals nothing about its entity.
    pub fn generate(&self, config: &GeneratorConfig) -> Result<SyntheticFile> {
        let eligible = self.rules.len();
        if config.errors_per_duplicate > eligible {
            return Err(Error::Config(format!(
                "{} erroneous fields requested but only {eligible} fields have corruption rules",
                config.errors_per_duplicate
            )));
        }
        if config.max_errors_per_field == 0 {
            return Err(Error::Config(
                "max_errors_per_field must be positive".into(),
            ));
        }
        if config.n_originals == 0 {
            return Err(Error::Config(
                "at least one original record is required".into(),
            ));
        }
        if config.n_duplicates > config.n_originals * MAX_DUPLICATES_PER_ORIGINAL {
            return Err(Error::Config(format!(
                "{} duplicates cannot be spread over {} originals",
                config.n_duplicates, config.n_originals
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let originals = (0..config.n_originals)
            .map(|_| self.sample_original(&mut rng))
            .collect::<Result<Vec<_>>>()?;
        let allocation = allocate_duplicates(config.n_originals, config.n_duplicates, &mut rng);

        let mut rows: Vec<(usize, Vec<Option<Value>>)> =
            originals.iter().cloned().enumerate().collect();
        for (orig, k) in allocation {
            for _ in 0..k {
                let dup = allocate_errors(
                    &originals[orig],
                    &self.schema,
                    config.errors_per_duplicate,
                    config.max_errors_per_field,
                    &self.rules,
                    &self.misspellings,
                    &mut rng,
                )?;
                rows.push((orig, dup));
            }
        }
        rows.shuffle(&mut rng);
        let entity: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let data =
            DataFile::from_rows(self.schema.clone(), rows.into_iter().map(|r| r.1).collect())?;
        Ok(SyntheticFile::new(data, entity))
    }
}

/// A generated file with its entity assignment.
#[derive(Debug, Clone)]
pub struct SyntheticFile {
    pub data: DataFile,
    /// Index of the original each record derives from.
    pub entity: Vec<usize>,
    pub truth: Partition,
}

impl SyntheticFile {
    fn new(data: DataFile, entity: Vec<usize>) -> Self {
        let truth = crate::partition::labeling_to_partition(&entity);
        Self {
            data,
            entity,
            truth,
        }
    }

    /// CSV `record_id,entity_id`.
    pub fn write_truth<W: Write>(&self, w: W) -> Result<()> {
        write_truth(&self.entity, w)
    }
}

pub fn write_truth<W: Write>(entity: &[usize], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["record_id", "entity_id"])?;
    for (i, e) in entity.iter().enumerate() {
        w.write_record([i.to_string(), e.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<truth>", e))?;
    Ok(())
}

/// Read a `record_id,entity_id` file into a partition. Record ids must be
/// exactly `0..r` in any order.
pub fn read_truth(path: &Path) -> Result<Partition> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut pairs = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize, name: &str| -> Result<usize> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    row: n + 2,
                    column: name.into(),
                    message: format!(
                        "expected a non-negative integer, found {:?}",
                        rec.get(k).unwrap_or("")
                    ),
                })
        };
        pairs.push((parse(0, "record_id")?, parse(1, "entity_id")?));
    }
    if pairs.is_empty() {
        return Err(Error::NoRecords(path.display().to_string()));
    }
    let r = pairs.len();
    let mut entity = vec![usize::MAX; r];
    for (i, e) in pairs {
        if i >= r || entity[i] != usize::MAX {
            return Err(Error::Config(format!(
                "{}: record ids must be 0..{r} without repeats",
                path.display()
            )));
        }
        entity[i] = e;
    }
    Ok(crate::partition::labeling_to_partition(&entity))
}

fn sample_integer(raw: &str, rng: &mut impl Rng) -> Option<i64> {
    if let Ok(v) = raw.parse() {
        return Some(v);
    }
    let (lo, hi) = raw.split_once('-')?;
    let (lo, hi): (i64, i64) = (lo.trim().parse().ok()?, hi.trim().parse().ok()?);
    (lo <= hi).then(|| rng.random_range(lo..=hi))
}

fn sample_code(pattern: &str, rng: &mut impl Rng) -> String {
    pattern
        .chars()
        .map(|c| {
            if c == 'D' {
                char::from(b'0' + rng.random_range(0..10u8))
            } else {
                c
            }
        })
        .collect()
}

/// pmf of Poisson(1) truncated to `1..=5`, indexed by `k - 1`.
pub fn duplicate_count_pmf() -> [f64; MAX_DUPLICATES_PER_ORIGINAL] {
    let mut w = [0.0; MAX_DUPLICATES_PER_ORIGINAL];
    let mut fact = 1.0;
    for k in 1..=MAX_DUPLICATES_PER_ORIGINAL {
        fact *= k as f64;
        w[k - 1] = 1.0 / fact;
    }
    let total: f64 = w.iter().sum();
    w.map(|x| x / total)
}

/// Number of duplicates of a chosen original.
pub fn sample_duplicate_count<R: Rng + ?Sized>(rng: &mut R) -> usize {
    let pmf = duplicate_count_pmf();
    let mut u: f64 = rng.random();
    for (k, p) in pmf.iter().enumerate() {
        if u < *p {
            return k + 1;
        }
        u -= p;
    }
    MAX_DUPLICATES_PER_ORIGINAL
}

/// Pick originals uniformly without replacement and give each a truncated
/// Poisson number of duplicates until `n_duplicates` are placed. The last
/// draw is capped at the remaining count.
fn allocate_duplicates(
    n_originals: usize,
    n_duplicates: usize,
    rng: &mut impl Rng,
) -> Vec<(usize, usize)> {
    // Capacity was checked, but unlucky small draws can exhaust the
    // originals; redraw the whole allocation then.
    loop {
        let mut order: Vec<usize> = (0..n_originals).collect();
        order.shuffle(rng);
        let mut remaining = n_duplicates;
        let mut out = Vec::new();
        for &o in &order {
            if remaining == 0 {
                break;
            }
            let k = sample_duplicate_count(rng).min(remaining);
            out.push((o, k));
            remaining -= k;
        }
        if remaining == 0 {
            return out;
        }
        log::debug!("duplicate allocation ran out of originals, redrawing");
    }
}

/// Fixed edit applied at a character position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Insert { pos: usize, ch: char },
    Delete { pos: usize },
    Substitute { pos: usize, ch: char },
}

/// Apply `op`; positions past the end are clamped to the last valid one.
pub fn apply_edit(value: &str, op: EditOp) -> String {
    let mut chars: Vec<char> = value.chars().collect();
    match op {
        EditOp::Insert { pos, ch } => chars.insert(pos.min(chars.len()), ch),
        EditOp::Delete { pos } => {
            if !chars.is_empty() {
                chars.remove(pos.min(chars.len() - 1));
            }
        }
        EditOp::Substitute { pos, ch } => {
            if !chars.is_empty() {
                let p = pos.min(chars.len() - 1);
                chars[p] = ch;
            }
        }
    }
    chars.into_iter().collect()
}

fn random_like(c: Option<char>, rng: &mut impl Rng) -> char {
    if c.is_some_and(|c| c.is_ascii_digit()) {
        char::from(b'0' + rng.random_range(0..10u8))
    } else {
        char::from(b'A' + rng.random_range(0..26u8))
    }
}

fn random_edit(value: &str, rng: &mut impl Rng) -> String {
    let chars: Vec<char> = value.chars().collect();
    let n = chars.len();
    // deleting the only character would turn an edit into missingness
    let kinds = if n <= 1 { 2 } else { 3 };
    let op = match rng.random_range(0..kinds) {
        0 => {
            let pos = rng.random_range(0..=n);
            let near = chars.get(pos).or_else(|| chars.last()).copied();
            EditOp::Insert {
                pos,
                ch: random_like(near, rng),
            }
        }
        1 if n > 0 => {
            let pos = rng.random_range(0..n);
            let mut ch = random_like(Some(chars[pos]), rng);
            while ch == chars[pos] {
                ch = random_like(Some(chars[pos]), rng);
            }
            EditOp::Substitute { pos, ch }
        }
        1 => EditOp::Insert {
            pos: 0,
            ch: random_like(None, rng),
        },
        _ => EditOp::Delete {
            pos: rng.random_range(0..n),
        },
    };
    apply_edit(value, op)
}

const OCR_PAIRS: [(char, char); 10] = [
    ('O', '0'),
    ('I', '1'),
    ('S', '5'),
    ('B', '8'),
    ('Z', '2'),
    ('G', '6'),
    ('Q', 'O'),
    ('U', 'V'),
    ('E', 'F'),
    ('L', '1'),
];

fn ocr_options(c: char) -> Vec<char> {
    OCR_PAIRS
        .iter()
        .filter_map(|&(a, b)| {
            if a == c {
                Some(b)
            } else if b == c {
                Some(a)
            } else {
                None
            }
        })
        .collect()
}

const KEYBOARD_ROWS: [(&str, f64); 4] = [
    ("1234567890", 0.0),
    ("QWERTYUIOP", 0.5),
    ("ASDFGHJKL", 0.75),
    ("ZXCVBNM", 1.25),
];

/// Keys whose centres lie within one key width on the same or an adjacent
/// row of a staggered QWERTY layout.
fn keyboard_neighbors(c: char) -> Vec<char> {
    let pos = |row: usize, col: usize| KEYBOARD_ROWS[row].1 + col as f64;
    let Some((ri, ci)) = KEYBOARD_ROWS
        .iter()
        .enumerate()
        .find_map(|(r, (keys, _))| keys.chars().position(|x| x == c).map(|k| (r, k)))
    else {
        return Vec::new();
    };
    let x = pos(ri, ci);
    let mut out = Vec::new();
    for (r, (keys, _)) in KEYBOARD_ROWS.iter().enumerate() {
        if r.abs_diff(ri) > 1 {
            continue;
        }
        for (k, key) in keys.chars().enumerate() {
            if key != c && (pos(r, k) - x).abs() <= 1.0 {
                out.push(key);
            }
        }
    }
    out
}

fn substitute_from(
    value: &str,
    options: impl Fn(char) -> Vec<char>,
    rng: &mut impl Rng,
) -> Option<String> {
    let chars: Vec<char> = value.chars().collect();
    let spots: Vec<usize> = (0..chars.len())
        .filter(|&p| !options(chars[p]).is_empty())
        .collect();
    let &pos = spots.choose(rng)?;
    let ch = *options(chars[pos]).choose(rng)?;
    Some(apply_edit(value, EditOp::Substitute { pos, ch }))
}

const PHONETIC_RULES: [(&str, &str); 16] = [
    ("PH", "F"),
    ("F", "PH"),
    ("CK", "K"),
    ("CA", "KA"),
    ("CO", "KO"),
    ("CU", "KU"),
    ("KA", "CA"),
    ("TH", "T"),
    ("GH", "G"),
    ("EE", "I"),
    ("OU", "U"),
    ("Y", "I"),
    ("Z", "S"),
    ("W", "V"),
    ("V", "W"),
    ("X", "KS"),
];

fn phonetic(value: &str, rng: &mut impl Rng) -> Option<String> {
    let mut matches = Vec::new();
    for (k, (from, _)) in PHONETIC_RULES.iter().enumerate() {
        for (pos, _) in value.match_indices(from) {
            matches.push((k, pos));
        }
    }
    let &(k, pos) = matches.choose(rng)?;
    let (from, to) = PHONETIC_RULES[k];
    Some(format!(
        "{}{}{}",
        &value[..pos],
        to,
        &value[pos + from.len()..]
    ))
}

/// Apply one error of `kind`. Kinds that cannot apply to the value fall
/// back to a random edit.
pub fn corrupt_field(
    value: &Value,
    kind: ErrorKind,
    misspellings: &MisspellingTable,
    rng: &mut impl Rng,
) -> Option<Value> {
    let text = match value {
        Value::Text(t) => t.as_str(),
        // integers only support missingness
        Value::Integer(_) => return None,
    };
    let out = match kind {
        ErrorKind::Missing => return None,
        ErrorKind::Edit => None,
        ErrorKind::Ocr => substitute_from(text, ocr_options, rng),
        ErrorKind::Keyboard => substitute_from(text, keyboard_neighbors, rng),
        ErrorKind::Phonetic => phonetic(text, rng),
        ErrorKind::Misspelling => misspellings.get(text).and_then(|v| v.choose(rng)).cloned(),
    };
    let out = out.unwrap_or_else(|| {
        if kind != ErrorKind::Edit {
            log::debug!("{kind:?} not applicable to {text:?}, using an edit instead");
        }
        random_edit(text, rng)
    });
    Some(Value::Text(out))
}

/// Corrupt a copy of `original`: exactly `n_fields` distinct fields with a
/// rule, each receiving 1..=`max_per_field` errors.
pub fn allocate_errors(
    original: &[Option<Value>],
    schema: &Schema,
    n_fields: usize,
    max_per_field: usize,
    rules: &[CorruptionRule],
    misspellings: &MisspellingTable,
    rng: &mut impl Rng,
) -> Result<Vec<Option<Value>>> {
    if n_fields > rules.len() {
        return Err(Error::Config(format!(
            "{n_fields} erroneous fields but {} eligible",
            rules.len()
        )));
    }
    let mut out = original.to_vec();
    for rule in rules.choose_multiple(rng, n_fields) {
        let (f, _) = schema.field(&rule.field)?;
        let count = rng.random_range(1..=max_per_field.max(1));
        for _ in 0..count {
            let Some(v) = out[f].take() else { break };
            let kind = *rule.allowed.choose(rng).expect("validated nonempty");
            out[f] = corrupt_field(&v, kind, misspellings, rng);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_poisson_pmf() {
        let p = duplicate_count_pmf();
        let norm = 1.0 + 1.0 / 2.0 + 1.0 / 6.0 + 1.0 / 24.0 + 1.0 / 120.0;
        assert!((p[0] - 1.0 / norm).abs() < 1e-15);
        assert!((p[0] - 0.5825).abs() < 1e-4, "{}", p[0]);
        assert!((p[4] - 0.00485).abs() < 5e-6, "{}", p[4]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            assert!((1..=5).contains(&sample_duplicate_count(&mut rng)));
        }
    }

    #[test]
    fn forced_substitution() {
        assert_eq!(
            apply_edit("SMITH", EditOp::Substitute { pos: 1, ch: 'A' }),
            "SAITH"
        );
        assert_eq!(apply_edit("SMITH", EditOp::Delete { pos: 0 }), "MITH");
        assert_eq!(
            apply_edit("SMITH", EditOp::Insert { pos: 5, ch: 'S' }),
            "SMITHS"
        );
    }

    #[test]
    fn error_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let table = MisspellingTable::parse("value,misspelling\nSMITH,SMYTH\n", "t").unwrap();
        let smith = Value::Text("SMITH".into());
        assert_eq!(
            corrupt_field(&smith, ErrorKind::Missing, &table, &mut rng),
            None
        );
        assert_eq!(
            corrupt_field(&smith, ErrorKind::Misspelling, &table, &mut rng),
            Some(Value::Text("SMYTH".into()))
        );
        for kind in [
            ErrorKind::Edit,
            ErrorKind::Ocr,
            ErrorKind::Keyboard,
            ErrorKind::Phonetic,
        ] {
            for _ in 0..50 {
                let v = corrupt_field(&smith, kind, &table, &mut rng).unwrap();
                let t = v.as_text().unwrap();
                assert_ne!(t, "SMITH", "{kind:?}");
                assert!(!t.is_empty());
            }
        }
        // no entry: falls back to an edit
        let jones = Value::Text("JONES".into());
        let v = corrupt_field(&jones, ErrorKind::Misspelling, &table, &mut rng).unwrap();
        assert_eq!(
            crate::comparison::levenshtein(v.as_text().unwrap(), "JONES"),
            1
        );
        assert_eq!(
            corrupt_field(&Value::Integer(4), ErrorKind::Missing, &table, &mut rng),
            None
        );
    }

    #[test]
    fn keyboard_neighbors_are_adjacent_keys() {
        let n = keyboard_neighbors('S');
        for c in ['A', 'D', 'W', 'E', 'Z', 'X'] {
            assert!(n.contains(&c), "{n:?}");
        }
        assert!(!n.contains(&'S'));
        assert!(keyboard_neighbors('Q').contains(&'1'));
    }

    #[test]
    fn missing_only_rule() {
        let schema = Schema::new(vec![FieldSchema::new("gender", FieldKind::Categorical)]).unwrap();
        let rules = vec![CorruptionRule::new("gender", &[ErrorKind::Missing])];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let out = allocate_errors(
                &[Some(Value::Text("F".into()))],
                &schema,
                1,
                2,
                &rules,
                &MisspellingTable::default(),
                &mut rng,
            )
            .unwrap();
            assert_eq!(out, vec![None]);
        }
    }

    #[test]
    fn error_allocation_counts() {
        let g = Generator::seven_field().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let orig = g.sample_original(&mut rng).unwrap();
        let copy =
            allocate_errors(&orig, &g.schema, 0, 2, &g.rules, &g.misspellings, &mut rng).unwrap();
        assert_eq!(copy, orig);
        for n in [1, 3, 5, 7] {
            for _ in 0..30 {
                let d =
                    allocate_errors(&orig, &g.schema, n, 2, &g.rules, &g.misspellings, &mut rng)
                        .unwrap();
                let changed = d.iter().zip(&orig).filter(|(a, b)| a != b).count();
                // an edit pair can cancel out, so changed <= n
                assert!(changed <= n);
                if n == 7 {
                    assert!(changed >= 5, "{changed}");
                }
            }
        }
        assert!(
            allocate_errors(&orig, &g.schema, 8, 2, &g.rules, &g.misspellings, &mut rng).is_err()
        );
    }

    #[test]
    fn generated_structure() {
        let g = Generator::seven_field().unwrap();
        let cfg = GeneratorConfig {
            seed: 7,
            ..Default::default()
        };
        let f = g.generate(&cfg).unwrap();
        assert_eq!(f.data.record_count(), 500);
        assert_eq!(f.truth.n_cells(), 450);
        assert_eq!(f.truth.duplicates(), 50);
        assert!(f.truth.cells().iter().all(|c| c.len() <= 6));
        let again = g.generate(&cfg).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        f.data.write_delimited(&mut a, b',', "NA").unwrap();
        again.data.write_delimited(&mut b, b',', "NA").unwrap();
        assert_eq!(a, b);
        assert_eq!(f.entity, again.entity);
    }

    #[test]
    fn exact_copies_without_errors() {
        let g = Generator::seven_field().unwrap();
        let cfg = GeneratorConfig {
            n_originals: 40,
            n_duplicates: 30,
            errors_per_duplicate: 0,
            seed: 3,
            ..Default::default()
        };
        let f = g.generate(&cfg).unwrap();
        for cell in f.truth.cells() {
            for &i in cell {
                assert_eq!(f.data.records[i].values, f.data.records[cell[0]].values);
            }
        }
        let none = GeneratorConfig {
            n_originals: 10,
            n_duplicates: 0,
            ..cfg
        };
        assert_eq!(g.generate(&none).unwrap().truth, Partition::singletons(10));
        let too_many = GeneratorConfig {
            n_originals: 2,
            n_duplicates: 11,
            ..Default::default()
        };
        assert!(g.generate(&too_many).is_err());
    }

    #[test]
    fn truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        write_truth(&[3, 1, 3, 0], std::fs::File::create(&path).unwrap()).unwrap();
        let p = read_truth(&path).unwrap();
        assert_eq!(p.to_string(), "0,2/1/3");
    }

    #[test]
    fn integer_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let v = sample_integer("25-34", &mut rng).unwrap();
            assert!((25..=34).contains(&v));
        }
        assert_eq!(sample_integer("40", &mut rng), Some(40));
        assert_eq!(sample_integer("x", &mut rng), None);
    }
}
