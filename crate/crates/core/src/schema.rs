//! Dataset schema, delimited-file ingestion, outcome labelling and seeded
//! train/test splitting.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Numeric,
    Categorical,
    Text,
    Identifier,
    Outcome,
}

impl ColumnRole {
    pub fn is_feature(self) -> bool {
        matches!(
            self,
            ColumnRole::Numeric | ColumnRole::Categorical | ColumnRole::Text
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub role: ColumnRole,
    #[serde(default)]
    pub groups: BTreeSet<String>,
}

/// Raw outcome strings mapped to the admitted (1) and not-admitted (0)
/// classes. Matching is case-insensitive after trimming.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeVocabulary {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl Default for OutcomeVocabulary {
    fn default() -> Self {
        Self {
            positive: vec!["admitted".into(), "conditionally admitted".into()],
            negative: vec!["denied".into(), "wait-listed".into(), "withdrawn".into()],
        }
    }
}

impl OutcomeVocabulary {
    fn normalize(s: &str) -> String {
        s.trim().to_lowercase()
    }

    fn validate(&self) -> Result<()> {
        let pos: HashSet<String> = self.positive.iter().map(|s| Self::normalize(s)).collect();
        if let Some(both) = self
            .negative
            .iter()
            .map(|s| Self::normalize(s))
            .find(|s| pos.contains(s))
        {
            return Err(Error::Schema(format!(
                "outcome {both:?} listed as both positive and negative"
            )));
        }
        if self.positive.is_empty() || self.negative.is_empty() {
            return Err(Error::Schema("outcome vocabularies must be nonempty".into()));
        }
        Ok(())
    }

    /// Maps a raw outcome string to a binary label.
    pub fn label(&self, raw: &str) -> Result<u8> {
        let key = Self::normalize(raw);
        if self.positive.iter().any(|p| Self::normalize(p) == key) {
            Ok(1)
        } else if self.negative.iter().any(|n| Self::normalize(n) == key) {
            Ok(0)
        } else {
            Err(Error::UnknownOutcome(raw.to_string()))
        }
    }
}

/// Maps a raw outcome to a label using the default five-status vocabulary.
pub fn map_outcome_label(raw: &str) -> Result<u8> {
    OutcomeVocabulary::default().label(raw)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    columns: Vec<ColumnSpec>,
    #[serde(default)]
    outcome: OutcomeVocabulary,
}

impl DatasetSchema {
    pub fn new(columns: Vec<ColumnSpec>, outcome: OutcomeVocabulary) -> Result<Self> {
        let schema = Self { columns, outcome };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if c.name.is_empty() {
                return Err(Error::Schema("empty column name".into()));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name {:?}", c.name)));
            }
            if !c.role.is_feature() && !c.groups.is_empty() {
                return Err(Error::Schema(format!(
                    "column {:?}: group tags are only allowed on feature columns",
                    c.name
                )));
            }
        }
        match self.count_role(ColumnRole::Outcome) {
            0 => return Err(Error::Schema("no outcome column".into())),
            1 => {}
            _ => return Err(Error::Schema("multiple outcome columns".into())),
        }
        if self.count_role(ColumnRole::Identifier) > 1 {
            return Err(Error::Schema("multiple identifier columns".into()));
        }
        self.outcome.validate()
    }

    fn count_role(&self, role: ColumnRole) -> usize {
        self.columns.iter().filter(|c| c.role == role).count()
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn outcome_vocabulary(&self) -> &OutcomeVocabulary {
        &self.outcome
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn outcome_index(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c.role == ColumnRole::Outcome)
            .expect("validated schema has an outcome column")
    }

    pub fn identifier_index(&self) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.role == ColumnRole::Identifier)
    }

    /// All group tags used anywhere in the schema.
    pub fn groups(&self) -> BTreeSet<String> {
        self.columns
            .iter()
            .flat_map(|c| c.groups.iter().cloned())
            .collect()
    }

    /// Per-column selection of the columns carrying `group`.
    pub fn group_mask(&self, group: &str) -> Vec<bool> {
        self.columns
            .iter()
            .map(|c| c.groups.contains(group))
            .collect()
    }

    /// Columns that feed the featurizer, in schema order.
    pub fn feature_columns(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.role.is_feature())
    }

    /// Copy of the schema without the outcome column. The result is not a
    /// valid standalone schema and is only used for feature datasets.
    fn without_outcome(&self) -> DatasetSchema {
        DatasetSchema {
            columns: self
                .columns
                .iter()
                .filter(|c| c.role != ColumnRole::Outcome)
                .cloned()
                .collect(),
            outcome: self.outcome.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes to toml")
    }
}

/// Parses a schema config document (TOML with a `columns` array and an
/// optional `outcome` vocabulary table).
pub fn parse_schema(text: &str) -> Result<DatasetSchema> {
    let schema: DatasetSchema = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    schema.validate()?;
    Ok(schema)
}

pub fn read_schema(path: &Path) -> Result<DatasetSchema> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_schema(&text)
}

/// One cell of a raw record; `None` is an explicit missing value.
pub type Cell = Option<String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDataset {
    schema: DatasetSchema,
    rows: Vec<Vec<Cell>>,
}

impl RawDataset {
    pub fn new(schema: DatasetSchema, rows: Vec<Vec<Cell>>) -> Result<Self> {
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != schema.len()) {
            return Err(Error::Shape(format!(
                "row {i} has {} cells, schema has {} columns",
                r.len(),
                schema.len()
            )));
        }
        Ok(Self { schema, rows })
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, name: &str) -> Option<impl Iterator<Item = Option<&str>> + '_> {
        let j = self.schema.index_of(name)?;
        Some(self.rows.iter().map(move |r| r[j].as_deref()))
    }

    pub fn select_rows(&self, indices: &[usize]) -> RawDataset {
        RawDataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Drops rows identical to an earlier row in every non-identifier
    /// column, keeping the first occurrence.
    pub fn dedupe(&self) -> RawDataset {
        let id = self.schema.identifier_index();
        let mut seen = HashSet::new();
        let rows = self
            .rows
            .iter()
            .filter(|r| {
                let key: Vec<&Cell> = r
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| Some(*j) != id)
                    .map(|(_, c)| c)
                    .collect();
                seen.insert(key)
            })
            .cloned()
            .collect();
        RawDataset {
            schema: self.schema.clone(),
            rows,
        }
    }

    /// Per-row identifiers: the identifier column when present (missing
    /// cells fall back to the row number), else `row<N>` with N one-based.
    pub fn ids(&self) -> Vec<String> {
        let id = self.schema.identifier_index();
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| match id.and_then(|j| r[j].clone()) {
                Some(v) => v,
                None => format!("row{}", i + 1),
            })
            .collect()
    }

    /// Truthy flags ("1", "true", "yes", "y") of the first feature column
    /// carrying `tag`.
    pub fn group_flags(&self, tag: &str) -> Result<Vec<bool>> {
        let j = self
            .schema
            .columns()
            .iter()
            .position(|c| c.groups.contains(tag))
            .ok_or_else(|| Error::UnknownGroup(tag.to_string()))?;
        Ok(self
            .rows
            .iter()
            .map(|r| {
                r[j].as_deref().is_some_and(|v| {
                    matches!(v.trim().to_lowercase().as_str(), "1" | "true" | "yes" | "y")
                })
            })
            .collect())
    }

    /// Numeric values of a column; missing or unparseable cells are `None`.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let j = self
            .schema
            .index_of(name)
            .ok_or_else(|| Error::invalid(format!("unknown column {name:?}")))?;
        Ok(self
            .rows
            .iter()
            .map(|r| r[j].as_deref().and_then(|v| v.trim().parse().ok()))
            .collect())
    }

    /// Splits off the outcome column, mapping every outcome cell to a label.
    pub fn into_labeled(self) -> Result<LabeledDataset> {
        let oj = self.schema.outcome_index();
        let vocab = self.schema.outcome_vocabulary().clone();
        let mut labels = Vec::with_capacity(self.rows.len());
        for (i, r) in self.rows.iter().enumerate() {
            let raw = r[oj]
                .as_deref()
                .ok_or_else(|| Error::Data {
                    path: format!("row {}", i + 1),
                    message: "missing outcome".into(),
                })?;
            labels.push(vocab.label(raw)?);
        }
        Ok(self.into_features(Some(labels)))
    }

    /// Drops the outcome column without reading it.
    pub fn into_unlabeled(self) -> LabeledDataset {
        self.into_features(None)
    }

    /// True when every outcome cell is missing.
    pub fn outcome_absent(&self) -> bool {
        let oj = self.schema.outcome_index();
        self.rows.iter().all(|r| r[oj].is_none())
    }

    fn into_features(self, labels: Option<Vec<u8>>) -> LabeledDataset {
        let ids = self.ids();
        let oj = self.schema.outcome_index();
        let schema = self.schema.without_outcome();
        let rows = self
            .rows
            .into_iter()
            .map(|mut r| {
                r.remove(oj);
                r
            })
            .collect();
        LabeledDataset {
            features: RawDataset { schema, rows },
            labels,
            ids,
        }
    }
}

/// Reads a delimited file whose header names the schema's columns (in any
/// order). Empty cells become missing values.
pub fn load_dataset(path: &Path, schema: &DatasetSchema) -> Result<RawDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, schema).map_err(|e| match e {
        Error::Data { message, .. } => Error::Data {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })
}

pub fn read_dataset<R: Read>(reader: R, schema: &DatasetSchema) -> Result<RawDataset> {
    let data_err = |message: String| Error::Data {
        path: "<input>".into(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    let mut positions: HashMap<&str, usize> = HashMap::new();
    for (k, h) in header.iter().enumerate() {
        if positions.insert(h.as_str(), k).is_some() {
            return Err(data_err(format!("duplicate header column {h:?}")));
        }
    }
    let missing: Vec<&str> = schema
        .columns()
        .iter()
        .map(|c| c.name.as_str())
        .filter(|n| !positions.contains_key(n))
        .collect();
    if !missing.is_empty() {
        return Err(data_err(format!(
            "header is missing column(s) {}",
            missing.join(", ")
        )));
    }
    let extra: Vec<&str> = header
        .iter()
        .map(String::as_str)
        .filter(|h| schema.index_of(h).is_none())
        .collect();
    if !extra.is_empty() {
        return Err(data_err(format!(
            "header has unexpected column(s) {}",
            extra.join(", ")
        )));
    }
    let order: Vec<usize> = schema
        .columns()
        .iter()
        .map(|c| positions[c.name.as_str()])
        .collect();

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != header.len() {
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            return Err(data_err(format!(
                "line {line}: expected {} cells, found {}",
                header.len(),
                rec.len()
            )));
        }
        rows.push(
            order
                .iter()
                .map(|&k| {
                    let v = &rec[k];
                    (!v.is_empty()).then(|| v.to_string())
                })
                .collect(),
        );
    }
    RawDataset::new(schema.clone(), rows)
}

/// Writes a dataset in schema column order; missing cells are empty.
pub fn write_dataset<W: Write>(writer: W, data: &RawDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(data.schema().columns().iter().map(|c| c.name.as_str()))?;
    for r in data.rows() {
        w.write_record(r.iter().map(|c| c.as_deref().unwrap_or("")))?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

/// Feature records with their labels and identifiers. `labels` is `None` for
/// unlabeled scoring data.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: RawDataset,
    pub labels: Option<Vec<u8>>,
    pub ids: Vec<String>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn labels(&self) -> Result<&[u8]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::invalid("dataset has no labels"))
    }

    pub fn prevalence(&self) -> Option<f64> {
        let l = self.labels.as_ref()?;
        if l.is_empty() {
            return None;
        }
        Some(l.iter().map(|&v| v as f64).sum::<f64>() / l.len() as f64)
    }

    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }
}

/// Number of test rows for `n` rows at `fraction`, rounding half up.
pub fn test_size(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction + 0.5).floor() as usize
}

/// Row indices of a seeded unstratified split, each side in file order.
///
/// The permutation is a Fisher–Yates shuffle driven by ChaCha8 seeded with
/// `seed_from_u64(seed)`: for `i` from `n-1` down to 1, swap position `i`
/// with `next_u64() % (i + 1)`. The first `round(n * fraction)` positions of
/// the shuffled order form the test set.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::invalid("cannot split an empty dataset"));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    let n_test = test_size(n, test_fraction);
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

pub fn split_train_test(
    data: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = split_indices(data.len(), test_fraction, seed)?;
    Ok((data.select(&train), data.select(&test)))
}
