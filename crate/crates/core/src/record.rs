//! Record storage: field schema, typed cell values and delimited-file I/O.
//!
//! Missingness is tracked per cell with `Option<Value>`. String fields are
//! uppercased with internal whitespace collapsed at load time so that the
//! comparators always see one canonical spelling.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MISSING_TOKEN: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    String,
    Integer,
    Categorical,
}

/// One column of the data file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSchema {
    pub name: String,
    pub kind: FieldKind,
    /// Name of the comparator configuration used for this field; `None`
    /// means the field is carried along but never compared.
    #[serde(default)]
    pub comparator: Option<String>,
}

impl FieldSchema {
    pub fn new(name: impl Into<String>, kind: FieldKind) -> Self {
        Self {
            name: name.into(),
            kind,
            comparator: None,
        }
    }

    pub fn with_comparator(mut self, comparator: impl Into<String>) -> Self {
        self.comparator = Some(comparator.into());
        self
    }
}

/// Ordered list of fields with unique names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    fields: Vec<FieldSchema>,
}

impl Schema {
    pub fn new(fields: Vec<FieldSchema>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &fields {
            if f.name.is_empty() {
                return Err(Error::Schema("empty field name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate field name `{}`", f.name)));
            }
        }
        Ok(Self { fields })
    }

    pub fn fields(&self) -> &[FieldSchema] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn field(&self, name: &str) -> Result<(usize, &FieldSchema)> {
        self.index_of(name)
            .map(|i| (i, &self.fields[i]))
            .ok_or_else(|| Error::Schema(format!("unknown field `{name}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Text(String),
    Integer(i64),
}

impl Value {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            Value::Integer(_) => None,
        }
    }

    pub fn as_integer(&self) -> Option<i64> {
        match self {
            Value::Integer(v) => Some(*v),
            Value::Text(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            Value::Integer(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    /// 0-based position in file order.
    pub id: usize,
    pub values: Vec<Option<Value>>,
}

impl Record {
    pub fn get(&self, field: usize) -> Option<&Value> {
        self.values.get(field).and_then(Option::as_ref)
    }
}

/// Uppercase and collapse runs of whitespace into single spaces.
pub fn normalize_text(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_uppercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Turn a raw cell into a typed value. `Ok(None)` means missing.
pub fn parse_cell(
    raw: &str,
    kind: FieldKind,
    missing_token: &str,
) -> Result<Option<Value>, String> {
    let trimmed = raw.trim();
    if trimmed.is_empty() || trimmed == missing_token {
        return Ok(None);
    }
    match kind {
        FieldKind::Integer => trimmed
            .parse::<i64>()
            .map(|v| Some(Value::Integer(v)))
            .map_err(|e| format!("`{trimmed}` is not an integer ({e})")),
        FieldKind::String => Ok(Some(Value::Text(normalize_text(trimmed)))),
        FieldKind::Categorical => Ok(Some(Value::Text(trimmed.to_string()))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataFile {
    pub schema: Schema,
    pub records: Vec<Record>,
}

impl DataFile {
    /// Build a file from already-typed rows. Ids are assigned in order.
    pub fn from_rows(schema: Schema, rows: Vec<Vec<Option<Value>>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::NoRecords("in-memory rows".into()));
        }
        let records = rows
            .into_iter()
            .enumerate()
            .map(|(id, values)| {
                if values.len() != schema.len() {
                    return Err(Error::Schema(format!(
                        "row {id} has {} values, schema has {} fields",
                        values.len(),
                        schema.len()
                    )));
                }
                for (v, f) in values.iter().zip(schema.fields()) {
                    let ok = matches!(
                        (v, f.kind),
                        (None, _)
                            | (Some(Value::Integer(_)), FieldKind::Integer)
                            | (
                                Some(Value::Text(_)),
                                FieldKind::String | FieldKind::Categorical
                            )
                    );
                    if !ok {
                        return Err(Error::Schema(format!(
                            "row {id}: value for `{}` does not match its kind",
                            f.name
                        )));
                    }
                }
                Ok(Record { id, values })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { schema, records })
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    /// Drop records missing any of `required` fields and renumber the rest.
    /// Returns how many records were dropped.
    pub fn retain_complete(&mut self, required: &[String]) -> Result<usize> {
        let idx = required
            .iter()
            .map(|name| self.schema.field(name).map(|(i, _)| i))
            .collect::<Result<Vec<_>>>()?;
        let before = self.records.len();
        self.records
            .retain(|rec| idx.iter().all(|&i| rec.values[i].is_some()));
        for (id, rec) in self.records.iter_mut().enumerate() {
            rec.id = id;
        }
        if self.records.is_empty() {
            return Err(Error::NoRecords(
                "all records dropped by validity filter".into(),
            ));
        }
        Ok(before - self.records.len())
    }

    pub fn write_delimited<W: Write>(
        &self,
        writer: W,
        delimiter: u8,
        missing_token: &str,
    ) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(writer);
        w.write_record(self.schema.fields().iter().map(|f| f.name.as_str()))?;
        for rec in &self.records {
            w.write_record(rec.values.iter().map(|v| match v {
                Some(v) => v.to_string(),
                None => missing_token.to_string(),
            }))?;
        }
        w.flush().map_err(|e| Error::io("<writer>", e))?;
        Ok(())
    }

    pub fn save(&self, path: &Path, delimiter: u8, missing_token: &str) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_delimited(std::io::BufWriter::new(file), delimiter, missing_token)
    }
}

/// Read a delimited file with a header row.
///
/// Every schema field must appear in the header; extra columns are ignored.
pub fn load_delimited(
    path: &Path,
    schema: Schema,
    delimiter: u8,
    missing_token: &str,
) -> Result<DataFile> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_delimited(
        file,
        &path.display().to_string(),
        schema,
        delimiter,
        missing_token,
    )
}

pub fn read_delimited<R: Read>(
    reader: R,
    source: &str,
    schema: Schema,
    delimiter: u8,
    missing_token: &str,
) -> Result<DataFile> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut seen = HashSet::new();
    for h in header.iter() {
        if !seen.insert(h.trim()) {
            return Err(Error::Schema(format!(
                "duplicate header column `{}`",
                h.trim()
            )));
        }
    }
    let columns = schema
        .fields()
        .iter()
        .map(|f| {
            header
                .iter()
                .position(|h| h.trim() == f.name)
                .ok_or_else(|| Error::Schema(format!("header has no column `{}`", f.name)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (row, line) in rdr.records().enumerate() {
        let line = line?;
        let mut values = Vec::with_capacity(schema.len());
        for (field, &col) in schema.fields().iter().zip(&columns) {
            let raw = line.get(col).unwrap_or("");
            let v = parse_cell(raw, field.kind, missing_token).map_err(|message| Error::Parse {
                // header is line 1
                row: row + 2,
                column: field.name.clone(),
                message,
            })?;
            values.push(v);
        }
        records.push(Record { id: row, values });
    }
    if records.is_empty() {
        return Err(Error::NoRecords(source.to_string()));
    }
    Ok(DataFile { schema, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_schema() -> Schema {
        Schema::new(vec![
            FieldSchema::new("given", FieldKind::String),
            FieldSchema::new("family", FieldKind::String),
            FieldSchema::new("year", FieldKind::Integer),
            FieldSchema::new("month", FieldKind::Integer),
            FieldSchema::new("day", FieldKind::Integer),
            FieldSchema::new("municipality", FieldKind::Categorical),
        ])
        .unwrap()
    }

    const TOY: &str = "given,family,year,month,day,municipality
JOSE,FLORES,1981,1,29,A
JOSE,FLORES,1981,2,NA,A
JOSE,FLORES,1981,3,20,A
JULIAN ANDRES,RAMOS ROJAS,1986,8,5,B
JILIAM,RMAOS,1986,8,5,B
";

    #[test]
    fn loads_toy_file() {
        let df = read_delimited(TOY.as_bytes(), "toy", toy_schema(), b',', "NA").unwrap();
        assert_eq!(df.record_count(), 5);
        assert_eq!(df.records[1].get(4), None);
        assert_eq!(df.records[0].get(3), Some(&Value::Integer(1)));
        assert_eq!(
            df.records[3].get(0),
            Some(&Value::Text("JULIAN ANDRES".into()))
        );
    }

    #[test]
    fn integer_cell_parses() {
        assert_eq!(
            parse_cell("8", FieldKind::Integer, "NA").unwrap(),
            Some(Value::Integer(8))
        );
    }

    #[test]
    fn bad_integer_reports_position() {
        let text = "given,family,year,month,day,municipality\nJOSE,FLORES,1981,x,1,A\n";
        let err = read_delimited(text.as_bytes(), "t", toy_schema(), b',', "NA").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "month");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_body_is_an_error() {
        let text = "given,family,year,month,day,municipality\n";
        let err = read_delimited(text.as_bytes(), "t", toy_schema(), b',', "NA").unwrap_err();
        assert!(matches!(err, Error::NoRecords(_)));
        assert_eq!(err.to_string(), "no records in t");
    }

    #[test]
    fn duplicate_header_rejected() {
        let text = "given,given,family,year,month,day,municipality\nA,B,C,1,1,1,A\n";
        let err = read_delimited(text.as_bytes(), "t", toy_schema(), b',', "NA").unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn duplicate_schema_rejected() {
        let err = Schema::new(vec![
            FieldSchema::new("a", FieldKind::String),
            FieldSchema::new("a", FieldKind::Integer),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn strings_are_normalized() {
        assert_eq!(normalize_text("  julian   andres "), "JULIAN ANDRES");
        let text = "given,family,year,month,day,municipality\n jose  maria ,flores,,,,\n";
        let df = read_delimited(text.as_bytes(), "t", toy_schema(), b',', "NA").unwrap();
        assert_eq!(
            df.records[0].get(0),
            Some(&Value::Text("JOSE MARIA".into()))
        );
        // all-missing trailing cells still give a valid record
        assert!(df.records[0].values[2..].iter().all(Option::is_none));
    }

    #[test]
    fn single_record_count() {
        let text = "given,family,year,month,day,municipality\nA,B,1,1,1,X\n";
        let df = read_delimited(text.as_bytes(), "t", toy_schema(), b',', "NA").unwrap();
        assert_eq!(df.record_count(), 1);
    }

    #[test]
    fn tab_delimited_and_custom_token() {
        let text = "given\tfamily\tyear\tmonth\tday\tmunicipality\nA\tB\t?\t1\t1\tX\n";
        let df = read_delimited(text.as_bytes(), "t", toy_schema(), b'\t', "?").unwrap();
        assert_eq!(df.records[0].get(2), None);
    }

    #[test]
    fn retain_complete_drops_and_renumbers() {
        let mut df = read_delimited(TOY.as_bytes(), "toy", toy_schema(), b',', "NA").unwrap();
        let dropped = df.retain_complete(&["day".to_string()]).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(df.record_count(), 4);
        assert_eq!(df.records[1].id, 1);
        assert_eq!(df.records[1].get(3), Some(&Value::Integer(3)));
    }

    #[test]
    fn round_trip_preserves_values() {
        let df = read_delimited(TOY.as_bytes(), "toy", toy_schema(), b',', "NA").unwrap();
        let mut buf = Vec::new();
        df.write_delimited(&mut buf, b'\t', "NA").unwrap();
        let back = read_delimited(buf.as_slice(), "rt", toy_schema(), b'\t', "NA").unwrap();
        assert_eq!(df, back);
    }
}
