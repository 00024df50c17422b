//! Feature schema, samples and datasets.
//!
//! Every feature value lives in an `f64` slot. Continuous features store the
//! measurement itself; categorical features store the integer code of the
//! category, i.e. its index in [`FeatureKind::Categorical::categories`].
//! Codes make immutability and Hamming comparisons exact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Errors raised while building, fitting or (de)serializing datasets.
#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("feature `{0}` has no finite training observations")]
    NoFiniteValues(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SchemaError + '_ {
    move |source| SchemaError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureKind {
    Continuous {
        unit: Option<String>,
        observed_min: Option<f64>,
        observed_max: Option<f64>,
    },
    Categorical {
        /// Interning table. A sample's code indexes into this list.
        categories: Vec<String>,
        /// Categories observed in training; `None` until fitted.
        allowed_values: Option<Vec<String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub mutable: bool,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>, unit: Option<&str>, mutable: bool) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Continuous {
                unit: unit.map(str::to_owned),
                observed_min: None,
                observed_max: None,
            },
            mutable,
        }
    }

    /// Continuous feature with its training range already known.
    pub fn continuous_with_range(name: impl Into<String>, min: f64, max: f64, mutable: bool) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Continuous {
                unit: None,
                observed_min: Some(min),
                observed_max: Some(max),
            },
            mutable,
        }
    }

    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, categories: &[S], mutable: bool) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical {
                categories: categories.iter().map(|c| c.as_ref().to_owned()).collect(),
                allowed_values: None,
            },
            mutable,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    pub fn is_continuous(&self) -> bool {
        !self.is_categorical()
    }

    pub fn unit(&self) -> Option<&str> {
        match &self.kind {
            FeatureKind::Continuous { unit, .. } => unit.as_deref(),
            FeatureKind::Categorical { .. } => None,
        }
    }

    /// Fitted `(min, max)` of a continuous feature.
    pub fn range(&self) -> Option<(f64, f64)> {
        match self.kind {
            FeatureKind::Continuous {
                observed_min: Some(lo),
                observed_max: Some(hi),
                ..
            } => Some((lo, hi)),
            _ => None,
        }
    }

    /// Width of the fitted range, with degenerate ranges mapped to 1.
    pub fn range_width(&self) -> f64 {
        match self.range() {
            Some((lo, hi)) if hi > lo => hi - lo,
            _ => 1.0,
        }
    }

    pub fn categories(&self) -> &[String] {
        match &self.kind {
            FeatureKind::Categorical { categories, .. } => categories,
            FeatureKind::Continuous { .. } => &[],
        }
    }

    /// Codes of the fitted allowed categories, in interning order.
    pub fn allowed_codes(&self) -> Option<Vec<usize>> {
        match &self.kind {
            FeatureKind::Categorical {
                categories,
                allowed_values: Some(allowed),
            } => Some(
                categories
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| allowed.contains(c))
                    .map(|(i, _)| i)
                    .collect(),
            ),
            _ => None,
        }
    }

    pub fn code_of(&self, category: &str) -> Option<usize> {
        self.categories().iter().position(|c| c == category)
    }

    pub fn category_of(&self, code: f64) -> Option<&str> {
        if code < 0.0 || code.fract() != 0.0 {
            return None;
        }
        self.categories().get(code as usize).map(String::as_str)
    }

    /// Whether `value` lies inside the fitted range / allowed set.
    /// `None` when the feature is not fitted yet.
    pub fn in_range(&self, value: f64) -> Option<bool> {
        match &self.kind {
            FeatureKind::Continuous { .. } => self.range().map(|(lo, hi)| value >= lo && value <= hi),
            FeatureKind::Categorical { allowed_values, .. } => {
                let allowed = allowed_values.as_ref()?;
                Some(self.category_of(value).is_some_and(|c| allowed.iter().any(|a| a == c)))
            }
        }
    }

    pub fn is_fitted(&self) -> bool {
        match &self.kind {
            FeatureKind::Continuous { .. } => self.range().is_some(),
            FeatureKind::Categorical { allowed_values, .. } => allowed_values.is_some(),
        }
    }
}

/// Ordered feature definitions shared by every sample of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self, SchemaError> {
        let mut seen = BTreeSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(SchemaError::InvalidSchema(format!("duplicate feature `{}`", f.name)));
            }
            match &f.kind {
                FeatureKind::Categorical {
                    categories,
                    allowed_values,
                } => {
                    if categories.is_empty() {
                        return Err(SchemaError::InvalidSchema(format!("`{}` has no categories", f.name)));
                    }
                    let unique: BTreeSet<_> = categories.iter().collect();
                    if unique.len() != categories.len() {
                        return Err(SchemaError::InvalidSchema(format!(
                            "`{}` has duplicate categories",
                            f.name
                        )));
                    }
                    if let Some(allowed) = allowed_values {
                        if allowed.iter().any(|a| !categories.contains(a)) {
                            return Err(SchemaError::InvalidSchema(format!(
                                "`{}` allows a value outside its categories",
                                f.name
                            )));
                        }
                    }
                }
                FeatureKind::Continuous {
                    observed_min: Some(lo),
                    observed_max: Some(hi),
                    ..
                } if lo > hi => {
                    return Err(SchemaError::InvalidSchema(format!("`{}` has min > max", f.name)));
                }
                FeatureKind::Continuous { .. } => {}
            }
        }
        Ok(Self { features })
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &FeatureSpec {
        &self.features[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn mutable_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.features[i].mutable).collect()
    }

    pub fn immutable_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| !self.features[i].mutable).collect()
    }

    pub fn is_fitted(&self) -> bool {
        self.features.iter().all(FeatureSpec::is_fitted)
    }

    /// Stable content hash, stored alongside persisted models.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_records()).expect("schema serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_records(&self) -> Vec<SchemaRecord> {
        self.features.iter().map(SchemaRecord::from).collect()
    }

    pub fn from_records(records: Vec<SchemaRecord>) -> Result<Self, SchemaError> {
        let features = records
            .into_iter()
            .map(FeatureSpec::try_from)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(features)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_records()).expect("schema serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        Self::from_records(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), SchemaError> {
        std::fs::write(path, self.to_json() + "\n").map_err(io_err(path))
    }

    /// Renders a value of feature `i` the way it appears in CSV files.
    pub fn format_value(&self, i: usize, value: f64) -> String {
        let spec = &self.features[i];
        if spec.is_categorical() {
            spec.category_of(value)
                .map(str::to_owned)
                .unwrap_or_else(|| format!("<code {value}>"))
        } else {
            format!("{value}")
        }
    }
}

/// One entry of `schema.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaRecord {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_max: Option<f64>,
    pub mutable: bool,
}

impl From<&FeatureSpec> for SchemaRecord {
    fn from(spec: &FeatureSpec) -> Self {
        match &spec.kind {
            FeatureKind::Continuous {
                unit,
                observed_min,
                observed_max,
            } => SchemaRecord {
                name: spec.name.clone(),
                kind: "continuous".into(),
                unit: unit.clone(),
                categories: None,
                allowed_values: None,
                observed_min: *observed_min,
                observed_max: *observed_max,
                mutable: spec.mutable,
            },
            FeatureKind::Categorical {
                categories,
                allowed_values,
            } => SchemaRecord {
                name: spec.name.clone(),
                kind: "categorical".into(),
                unit: None,
                categories: Some(categories.clone()),
                allowed_values: allowed_values.clone(),
                observed_min: None,
                observed_max: None,
                mutable: spec.mutable,
            },
        }
    }
}

impl TryFrom<SchemaRecord> for FeatureSpec {
    type Error = SchemaError;

    fn try_from(r: SchemaRecord) -> Result<Self, SchemaError> {
        let kind = match r.kind.as_str() {
            "continuous" => FeatureKind::Continuous {
                unit: r.unit,
                observed_min: r.observed_min,
                observed_max: r.observed_max,
            },
            "categorical" => {
                // Older sidecars carry only `allowed_values`; treat it as the vocabulary too.
                let categories = r
                    .categories
                    .or_else(|| r.allowed_values.clone())
                    .ok_or_else(|| SchemaError::InvalidSchema(format!("`{}` lists no categories", r.name)))?;
                FeatureKind::Categorical {
                    categories,
                    allowed_values: r.allowed_values,
                }
            }
            other => {
                return Err(SchemaError::InvalidSchema(format!(
                    "`{}` has unknown kind `{other}`",
                    r.name
                )))
            }
        };
        Ok(FeatureSpec {
            name: r.name,
            kind,
            mutable: r.mutable,
        })
    }
}

/// Binary class label.
pub type Label = u8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub patient_id: String,
    pub window_index: u64,
    pub values: Vec<f64>,
    pub label: Label,
}

impl Sample {
    pub fn new(patient_id: impl Into<String>, window_index: u64, values: Vec<f64>, label: Label) -> Self {
        Self {
            patient_id: patient_id.into(),
            window_index,
            values,
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetRole {
    Train,
    Test,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub samples: Vec<Sample>,
    pub role: DatasetRole,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, samples: Vec<Sample>, role: DatasetRole) -> Self {
        Self { schema, samples, role }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `[count of label 0, count of label 1]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0usize; 2];
        for s in &self.samples {
            counts[usize::from(s.label.min(1))] += 1;
        }
        counts
    }

    pub fn patients(&self) -> BTreeSet<&str> {
        self.samples.iter().map(|s| s.patient_id.as_str()).collect()
    }

    /// Content hash over schema and samples.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.schema.hash().as_bytes());
        for s in &self.samples {
            hasher.update(s.patient_id.as_bytes());
            hasher.update(s.window_index.to_le_bytes());
            for v in &s.values {
                hasher.update(v.to_bits().to_le_bytes());
            }
            hasher.update([s.label]);
        }
        hex::encode(hasher.finalize())
    }

    pub fn with_samples(&self, samples: Vec<Sample>, role: DatasetRole) -> Self {
        Self::new(self.schema.clone(), samples, role)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    LengthMismatch { expected: usize, found: usize },
    NonFinite { feature: String },
    UnknownCategory { feature: String, code: String },
    BadLabel(Label),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected} values, found {found}")
            }
            Violation::NonFinite { feature } => write!(f, "non-finite value for `{feature}`"),
            Violation::UnknownCategory { feature, code } => write!(f, "unknown category `{code}` for `{feature}`"),
            Violation::BadLabel(l) => write!(f, "label {l} is not binary"),
        }
    }
}

/// Checks that every value matches its feature kind. Range excursions are
/// not violations.
pub fn validate_sample(sample: &Sample, schema: &FeatureSchema) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if sample.values.len() != schema.dim() {
        violations.push(Violation::LengthMismatch {
            expected: schema.dim(),
            found: sample.values.len(),
        });
    }
    if sample.label > 1 {
        violations.push(Violation::BadLabel(sample.label));
    }
    for (spec, &v) in schema.features().iter().zip(&sample.values) {
        match &spec.kind {
            FeatureKind::Continuous { .. } => {
                if !v.is_finite() {
                    violations.push(Violation::NonFinite {
                        feature: spec.name.clone(),
                    });
                }
            }
            FeatureKind::Categorical { .. } => {
                if spec.category_of(v).is_none() {
                    violations.push(Violation::UnknownCategory {
                        feature: spec.name.clone(),
                        code: format!("{v}"),
                    });
                }
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Running per-feature extrema. Merging two accumulators equals scanning the
/// concatenated data.
#[derive(Debug, Clone)]
pub struct RangeAccumulator {
    mins: Vec<f64>,
    maxs: Vec<f64>,
    seen_codes: Vec<BTreeSet<usize>>,
}

impl RangeAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            mins: vec![f64::INFINITY; dim],
            maxs: vec![f64::NEG_INFINITY; dim],
            seen_codes: vec![BTreeSet::new(); dim],
        }
    }

    pub fn observe(&mut self, schema: &FeatureSchema, values: &[f64]) {
        for (i, (spec, &v)) in schema.features().iter().zip(values).enumerate() {
            if spec.is_categorical() {
                if spec.category_of(v).is_some() {
                    self.seen_codes[i].insert(v as usize);
                }
            } else if v.is_finite() {
                self.mins[i] = self.mins[i].min(v);
                self.maxs[i] = self.maxs[i].max(v);
            }
        }
    }

    pub fn merge(mut self, other: &RangeAccumulator) -> Self {
        for i in 0..self.mins.len() {
            self.mins[i] = self.mins[i].min(other.mins[i]);
            self.maxs[i] = self.maxs[i].max(other.maxs[i]);
            self.seen_codes[i].extend(other.seen_codes[i].iter().copied());
        }
        self
    }

    pub fn finish(&self, schema: &FeatureSchema) -> Result<FeatureSchema, SchemaError> {
        let mut features = schema.features().to_vec();
        for (i, spec) in features.iter_mut().enumerate() {
            match &mut spec.kind {
                FeatureKind::Continuous {
                    observed_min,
                    observed_max,
                    ..
                } => {
                    if !self.mins[i].is_finite() {
                        return Err(SchemaError::NoFiniteValues(spec.name.clone()));
                    }
                    *observed_min = Some(self.mins[i]);
                    *observed_max = Some(self.maxs[i]);
                }
                FeatureKind::Categorical {
                    categories,
                    allowed_values,
                } => {
                    if self.seen_codes[i].is_empty() {
                        return Err(SchemaError::NoFiniteValues(spec.name.clone()));
                    }
                    *allowed_values = Some(self.seen_codes[i].iter().map(|&c| categories[c].clone()).collect());
                }
            }
        }
        FeatureSchema::new(features)
    }
}

/// Fits continuous ranges and allowed categories from training samples only.
pub fn fit_ranges(train: &Dataset) -> Result<FeatureSchema, SchemaError> {
    if train.is_empty() {
        return Err(SchemaError::EmptyDataset);
    }
    let mut acc = RangeAccumulator::new(train.schema.dim());
    for s in &train.samples {
        acc.observe(&train.schema, &s.values);
    }
    acc.finish(&train.schema)
}

const ID_COLUMNS: [&str; 2] = ["patient_id", "window_index"];
const LABEL_COLUMN: &str = "label";

/// Sidecar schema path for a dataset CSV: `schema.json` in the same directory.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_file_name("schema.json")
}

/// Writes `dataset` as CSV at `path` plus its `schema.json` sidecar.
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<(), SchemaError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    dataset.schema.write(&sidecar_path(path))?;
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let mut header: Vec<&str> = ID_COLUMNS.to_vec();
    header.extend(dataset.schema.names());
    header.push(LABEL_COLUMN);
    let mut writer = csv::Writer::from_writer(&mut out);
    writer
        .write_record(&header)
        .map_err(|e| SchemaError::SchemaMismatch(e.to_string()))?;
    for s in &dataset.samples {
        let mut row = vec![s.patient_id.clone(), s.window_index.to_string()];
        row.extend(
            s.values
                .iter()
                .enumerate()
                .map(|(i, &v)| dataset.schema.format_value(i, v)),
        );
        row.push(s.label.to_string());
        writer
            .write_record(&row)
            .map_err(|e| SchemaError::SchemaMismatch(e.to_string()))?;
    }
    writer.flush().map_err(io_err(path))?;
    drop(writer);
    out.flush().map_err(io_err(path))
}

/// Reads a dataset CSV, resolving its schema from the `schema.json` sidecar.
pub fn read_dataset(path: &Path, role: DatasetRole) -> Result<Dataset, SchemaError> {
    let schema = FeatureSchema::read(&sidecar_path(path))?;
    read_dataset_with_schema(path, schema, role)
}

pub fn read_dataset_with_schema(path: &Path, schema: FeatureSchema, role: DatasetRole) -> Result<Dataset, SchemaError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let header = reader
        .headers()
        .map_err(|e| SchemaError::Parse {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let mut expected: Vec<&str> = ID_COLUMNS.to_vec();
    expected.extend(schema.names());
    expected.push(LABEL_COLUMN);
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(SchemaError::SchemaMismatch(format!(
            "header {found:?} does not match schema order {expected:?}"
        )));
    }

    let codes: Vec<BTreeMap<&str, usize>> = schema
        .features()
        .iter()
        .map(|f| {
            f.categories()
                .iter()
                .enumerate()
                .map(|(i, c)| (c.as_str(), i))
                .collect()
        })
        .collect();

    let mut samples = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let line = row_idx + 2;
        let record = record.map_err(|e| SchemaError::Parse {
            line,
            reason: e.to_string(),
        })?;
        let parse_err = |reason: String| SchemaError::Parse { line, reason };
        let patient_id = record[0].to_owned();
        let window_index = record[1]
            .parse::<u64>()
            .map_err(|e| parse_err(format!("window_index `{}`: {e}", &record[1])))?;
        let mut values = Vec::with_capacity(schema.dim());
        for (i, spec) in schema.features().iter().enumerate() {
            let field = &record[i + 2];
            let v = if spec.is_categorical() {
                *codes[i]
                    .get(field)
                    .ok_or_else(|| parse_err(format!("unknown category `{field}` for `{}`", spec.name)))?
                    as f64
            } else {
                field
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("`{}` value `{field}`: {e}", spec.name)))?
            };
            values.push(v);
        }
        let label_field = &record[schema.dim() + 2];
        let label = match label_field {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(format!("label `{other}` is not 0 or 1"))),
        };
        samples.push(Sample {
            patient_id,
            window_index,
            values,
            label,
        });
    }
    Ok(Dataset::new(schema, samples, role))
}
