//! TOML configuration for the deduplication pipeline and the generator.
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::candidates::{FilterRule, FixRule};
use crate::comparison::LevelSpec;
use crate::error::{Error, Result};
use crate::gibbs::SamplerConfig;
use crate::model::{LevelPrior, PriorPreset, PriorSpec};
use crate::record::{FieldSchema, Schema, DEFAULT_MISSING_TOKEN};
use crate::synthgen::{self, Generator, GeneratorConfig};

fn default_delimiter() -> String {
    ",".into()
}

fn default_missing() -> String {
    DEFAULT_MISSING_TOKEN.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
    /// `","` or `"\t"` (also accepted: `"tab"`).
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    #[serde(default = "default_missing")]
    pub missing_token: String,
    /// Rows missing any of these fields are dropped before comparison.
    #[serde(default)]
    pub require_complete: Vec<String>,
}

impl InputConfig {
    pub fn delimiter_byte(&self) -> Result<u8> {
        match self.delimiter.as_str() {
            "tab" | "\t" | "\\t" => Ok(b'\t'),
            d if d.len() == 1 => Ok(d.as_bytes()[0]),
            d => Err(Error::Config(format!(
                "delimiter must be one character, got {d:?}"
            ))),
        }
    }
}

/// Prior on `m` and `u`: a named preset, or truncation points given per
/// field with `lambda` as the fallback for unlisted fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// `untc`, or `toy1` to `toy4`.
    pub preset: Option<String>,
    pub lambda: Option<f64>,
    #[serde(default)]
    pub fields: BTreeMap<String, FieldPriorConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldPriorConfig {
    /// One truncation point per level, Beta(1, 1) shapes.
    Lambdas { lambdas: Vec<f64> },
    /// Full per-level hyperparameters.
    Levels { levels: Vec<LevelPrior> },
}

pub fn preset(name: &str) -> Result<PriorPreset> {
    match name {
        "untc" => Ok(PriorPreset::untc()),
        "toy1" | "toy2" | "toy3" | "toy4" => PriorPreset::toy_case(name.as_bytes()[3] - b'0'),
        other => Err(Error::Config(format!("unknown prior preset `{other}`"))),
    }
}

impl PriorConfig {
    /// Build the prior for comparison fields `fields` with `max_levels`.
    pub fn resolve(&self, fields: &[String], max_levels: &[usize]) -> Result<PriorSpec> {
        let mut out = Vec::with_capacity(fields.len());
        let preset = self.preset.as_deref().map(preset).transpose()?;
        if let Some(unknown) = self.fields.keys().find(|k| !fields.contains(k)) {
            return Err(Error::Config(format!(
                "prior given for unknown comparison field `{unknown}`"
            )));
        }
        for (name, &levels) in fields.iter().zip(max_levels) {
            let per_level: Vec<LevelPrior> = if let Some(fp) = self.fields.get(name) {
                match fp {
                    FieldPriorConfig::Lambdas { lambdas } => {
                        lambdas.iter().map(|&l| LevelPrior::uniform(l)).collect()
                    }
                    FieldPriorConfig::Levels { levels } => levels.clone(),
                }
            } else if let Some(p) = &preset {
                let k = p.fields.iter().position(|f| f == name).ok_or_else(|| {
                    Error::Config(format!("preset has no prior for field `{name}`"))
                })?;
                p.lambdas[k]
                    .iter()
                    .map(|&l| LevelPrior::uniform(l))
                    .collect()
            } else if let Some(l) = self.lambda {
                vec![LevelPrior::uniform(l); levels]
            } else {
                return Err(Error::Config(format!(
                    "no prior for field `{name}`: set prior.preset, prior.lambda or prior.fields.{name}"
                )));
            };
            if per_level.len() != levels {
                return Err(Error::Config(format!(
                    "prior for `{name}` has {} levels, comparison has {levels}",
                    per_level.len()
                )));
            }
            out.push(per_level);
        }
        PriorSpec::new(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Probability of the central interval in the duplicate summary.
    #[serde(default = "default_interval")]
    pub interval_level: f64,
}

fn default_interval() -> f64 {
    0.9
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            interval_level: default_interval(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    pub fields: Vec<FieldSchema>,
    pub comparisons: Vec<LevelSpec>,
    #[serde(default)]
    pub filters: Vec<FilterRule>,
    #[serde(default)]
    pub fix: Vec<FixRule>,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Optional reference partition (`record_id,entity_id`) for metrics.
    #[serde(default)]
    pub truth: Option<PathBuf>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse and validate, resolving paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        self.input.path = resolve(base, &self.input.path);
        self.output.dir = resolve(base, &self.output.dir);
        if let Some(t) = &self.truth {
            self.truth = Some(resolve(base, t));
        }
        for f in &mut self.filters {
            if let FilterRule::CustomOverlap {
                neighbors_file: Some(p),
                ..
            } = f
            {
                *p = resolve(base, p);
            }
        }
    }

    pub fn schema(&self) -> Result<Schema> {
        Schema::new(self.fields.clone())
    }

    /// Checks that need no data: schema, level specs, field references,
    /// prior shape, sampler settings and input existence.
    pub fn validate(&self) -> Result<()> {
        let schema = self.schema()?;
        self.input.delimiter_byte()?;
        if self.comparisons.is_empty() {
            return Err(Error::Config("at least one comparison is required".into()));
        }
        for spec in &self.comparisons {
            spec.validate()?;
            schema.field(&spec.field)?;
        }
        for f in &self.input.require_complete {
            schema.field(f)?;
        }
        let names: Vec<String> = self.comparisons.iter().map(|s| s.field.clone()).collect();
        let levels: Vec<usize> = self.comparisons.iter().map(LevelSpec::max_level).collect();
        self.prior.resolve(&names, &levels)?;
        self.sampler.validate()?;
        if !(0.0..=1.0).contains(&self.output.interval_level) {
            return Err(Error::Config(
                "output.interval_level must be in [0, 1]".into(),
            ));
        }
        if !self.input.path.is_file() {
            return Err(Error::Io {
                path: self.input.path.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
            });
        }
        if let Some(t) = &self.truth {
            if !t.is_file() {
                return Err(Error::Config(format!(
                    "truth file {} not found",
                    t.display()
                )));
            }
        }
        Ok(())
    }
}

/// Generator settings plus optional replacement frequency tables.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub tables: SynthTables,
    #[serde(default)]
    pub output: SynthOutput,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthTables {
    pub given_names: Option<PathBuf>,
    pub family_names: Option<PathBuf>,
    pub age_occupation: Option<PathBuf>,
    pub misspellings: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthOutput {
    pub dir: PathBuf,
    #[serde(default = "default_data_name")]
    pub data: String,
    #[serde(default = "default_truth_name")]
    pub truth: String,
}

fn default_data_name() -> String {
    "records.csv".into()
}

fn default_truth_name() -> String {
    "truth.csv".into()
}

impl Default for SynthOutput {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("synth"),
            data: default_data_name(),
            truth: default_truth_name(),
        }
    }
}

impl SynthConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.output.dir = resolve(base, &cfg.output.dir);
        for p in [
            &mut cfg.tables.given_names,
            &mut cfg.tables.family_names,
            &mut cfg.tables.age_occupation,
            &mut cfg.tables.misspellings,
        ]
        .into_iter()
        .flatten()
        {
            *p = resolve(base, p);
        }
        Ok(cfg)
    }

    /// The seven-field generator, with any configured tables replacing
    /// the bundled ones.
    pub fn generator(&self) -> Result<Generator> {
        let read = |p: &Option<PathBuf>,
                    bundled: &'static str|
         -> Result<std::borrow::Cow<'static, str>> {
            match p {
                Some(p) => Ok(std::fs::read_to_string(p)
                    .map_err(|e| Error::io(p, e))?
                    .into()),
                None => Ok(bundled.into()),
            }
        };
        let t = &self.tables;
        Generator::seven_field_from(
            &read(&t.given_names, synthgen::GIVEN_NAMES)?,
            &read(&t.family_names, synthgen::FAMILY_NAMES)?,
            &read(&t.age_occupation, synthgen::AGE_OCCUPATION)?,
            &read(&t.misspellings, synthgen::FAMILY_MISSPELLINGS)?,
        )
    }
}
