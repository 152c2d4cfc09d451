//! Preprocessing pipeline: numeric imputation with missingness indicators,
//! one-hot encoding with rare-category merging, and TF-IDF text blocks.
//!
//! Every output column carries [`ColumnMeta`] naming the source column it was
//! derived from and inheriting that column's group tags, so feature groups can
//! be masked out for ablations.

mod text;

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::{ColumnRole, RawDataset};

pub use text::{bigrams, idf, terms, tokenize, TfidfVocabulary};

/// Synthetic category that absorbs infrequent and unseen values.
pub const RARE: &str = "RARE";
/// Category used for missing categorical cells.
pub const MISSING_CATEGORY: &str = "MISSING";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Categories with training frequency below this ratio merge into RARE.
    pub rare_threshold: f64,
    pub tfidf_max_features_per_column: usize,
    /// 1 for unigrams only, 2 for unigrams and bigrams.
    pub max_ngram: usize,
    /// Fixed value for missing numerics; `None` uses (training min - 1).
    pub numeric_placeholder: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rare_threshold: 0.01,
            tfidf_max_features_per_column: 256,
            max_ngram: 2,
            numeric_placeholder: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rare_threshold > 0.0 && self.rare_threshold < 1.0) {
            return Err(Error::invalid(format!(
                "rare_threshold {} outside (0, 1)",
                self.rare_threshold
            )));
        }
        if self.tfidf_max_features_per_column == 0 {
            return Err(Error::invalid("tfidf_max_features_per_column must be >= 1"));
        }
        if !(1..=2).contains(&self.max_ngram) {
            return Err(Error::invalid("max_ngram must be 1 or 2"));
        }
        if self.numeric_placeholder.is_some_and(|v| !v.is_finite()) {
            return Err(Error::invalid("numeric_placeholder must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    MissingIndicator,
    Onehot,
    Tfidf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub source: String,
    pub kind: FeatureKind,
    /// Category or term for one-hot and TF-IDF columns; empty otherwise.
    pub label: String,
    pub groups: BTreeSet<String>,
}

impl ColumnMeta {
    pub fn name(&self) -> String {
        match self.kind {
            FeatureKind::Numeric => self.source.clone(),
            FeatureKind::MissingIndicator => format!("{}_missing", self.source),
            FeatureKind::Onehot => format!("{}={}", self.source, self.label),
            FeatureKind::Tfidf => format!("{}:{}", self.source, self.label),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedColumn {
    Numeric {
        name: String,
        groups: BTreeSet<String>,
        placeholder: f64,
        /// False when the column had no observed training value.
        emit_value: bool,
        emit_indicator: bool,
    },
    Categorical {
        name: String,
        groups: BTreeSet<String>,
        /// Retained categories in lexicographic order; RARE follows them.
        vocabulary: Vec<String>,
        /// Training categories merged into RARE.
        rare: Vec<String>,
    },
    Text {
        name: String,
        groups: BTreeSet<String>,
        vocabulary: TfidfVocabulary,
    },
}

impl FittedColumn {
    pub fn name(&self) -> &str {
        match self {
            FittedColumn::Numeric { name, .. }
            | FittedColumn::Categorical { name, .. }
            | FittedColumn::Text { name, .. } => name,
        }
    }

    fn role(&self) -> ColumnRole {
        match self {
            FittedColumn::Numeric { .. } => ColumnRole::Numeric,
            FittedColumn::Categorical { .. } => ColumnRole::Categorical,
            FittedColumn::Text { .. } => ColumnRole::Text,
        }
    }

    fn width(&self) -> usize {
        match self {
            FittedColumn::Numeric {
                emit_value,
                emit_indicator,
                ..
            } => *emit_value as usize + *emit_indicator as usize,
            FittedColumn::Categorical { vocabulary, .. } => vocabulary.len() + 1,
            FittedColumn::Text { vocabulary, .. } => vocabulary.len(),
        }
    }
}

/// A preprocessing pipeline fitted on training rows. Immutable after fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub config: PipelineConfig,
    pub columns: Vec<FittedColumn>,
    pub meta: Vec<ColumnMeta>,
    /// Every group tag declared by the schema the pipeline was fitted on.
    pub schema_groups: BTreeSet<String>,
}

fn parse_numeric(v: &str, column: &str, row: usize) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Data {
            path: format!("row {}", row + 1),
            message: format!("column {column:?}: {v:?} is not a finite number"),
        })
}

pub fn fit_pipeline(train: &RawDataset, config: &PipelineConfig) -> Result<FittedPipeline> {
    config.validate()?;
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::invalid("cannot fit a pipeline on zero rows"));
    }
    let schema = train.schema();
    let mut columns = Vec::new();
    for (j, spec) in schema.columns().iter().enumerate() {
        let cells = train.rows().iter().map(|r| r[j].as_deref());
        let groups = spec.groups.clone();
        let name = spec.name.clone();
        let fitted = match spec.role {
            ColumnRole::Numeric => {
                let mut min = f64::INFINITY;
                let mut missing = false;
                for (i, c) in cells.enumerate() {
                    match c {
                        Some(v) => min = min.min(parse_numeric(v, &name, i)?),
                        None => missing = true,
                    }
                }
                let observed = min.is_finite();
                let placeholder = config
                    .numeric_placeholder
                    .unwrap_or(if observed { min - 1.0 } else { -1.0 });
                FittedColumn::Numeric {
                    name,
                    groups,
                    placeholder,
                    emit_value: observed,
                    emit_indicator: missing,
                }
            }
            ColumnRole::Categorical => {
                let mut counts: HashMap<&str, usize> = HashMap::new();
                for c in cells {
                    *counts.entry(c.unwrap_or(MISSING_CATEGORY)).or_default() += 1;
                }
                let mut vocabulary = Vec::new();
                let mut rare = Vec::new();
                for (cat, k) in counts {
                    if k as f64 / n as f64 >= config.rare_threshold {
                        vocabulary.push(cat.to_string());
                    } else {
                        rare.push(cat.to_string());
                    }
                }
                vocabulary.sort();
                rare.sort();
                // A retained category literally named RARE would collide with the
                // synthetic column; fold it in.
                vocabulary.retain(|c| c != RARE);
                FittedColumn::Categorical {
                    name,
                    groups,
                    vocabulary,
                    rare,
                }
            }
            ColumnRole::Text => FittedColumn::Text {
                name,
                groups,
                vocabulary: TfidfVocabulary::fit(
                    cells,
                    config.tfidf_max_features_per_column,
                    config.max_ngram,
                ),
            },
            ColumnRole::Identifier | ColumnRole::Outcome => continue,
        };
        columns.push(fitted);
    }
    let meta = build_meta(&columns);
    Ok(FittedPipeline {
        config: config.clone(),
        columns,
        meta,
        schema_groups: schema.groups(),
    })
}

fn build_meta(columns: &[FittedColumn]) -> Vec<ColumnMeta> {
    let mut meta = Vec::new();
    let mut push = |source: &str, kind, label: &str, groups: &BTreeSet<String>| {
        meta.push(ColumnMeta {
            source: source.to_string(),
            kind,
            label: label.to_string(),
            groups: groups.clone(),
        })
    };
    for col in columns {
        match col {
            FittedColumn::Numeric {
                name,
                groups,
                emit_value,
                emit_indicator,
                ..
            } => {
                if *emit_value {
                    push(name, FeatureKind::Numeric, "", groups);
                }
                if *emit_indicator {
                    push(name, FeatureKind::MissingIndicator, "", groups);
                }
            }
            FittedColumn::Categorical {
                name,
                groups,
                vocabulary,
                ..
            } => {
                for cat in vocabulary {
                    push(name, FeatureKind::Onehot, cat, groups);
                }
                push(name, FeatureKind::Onehot, RARE, groups);
            }
            FittedColumn::Text {
                name,
                groups,
                vocabulary,
            } => {
                for t in &vocabulary.terms {
                    push(name, FeatureKind::Tfidf, t, groups);
                }
            }
        }
    }
    meta
}

impl FittedPipeline {
    pub fn n_outputs(&self) -> usize {
        self.columns.iter().map(FittedColumn::width).sum()
    }

    /// Applies the pipeline to `data`, whose feature columns must match the
    /// fitted ones by name and role. Rows are encoded in parallel; output row
    /// order follows input order.
    pub fn transform<T: Scalar>(&self, data: &RawDataset) -> Result<FeatureMatrix<T>> {
        let schema = data.schema();
        let mut positions = Vec::with_capacity(self.columns.len());
        for col in &self.columns {
            let j = schema
                .index_of(col.name())
                .filter(|&j| schema.columns()[j].role == col.role())
                .ok_or_else(|| {
                    Error::Shape(format!(
                        "data lacks {:?} column {:?} the pipeline was fitted on",
                        col.role(),
                        col.name()
                    ))
                })?;
            positions.push(j);
        }
        let n_features = schema.feature_columns().count();
        if n_features != self.columns.len() {
            return Err(Error::Shape(format!(
                "data has {n_features} feature columns, pipeline expects {}",
                self.columns.len()
            )));
        }

        let text_index: Vec<Option<HashMap<&str, usize>>> = self
            .columns
            .iter()
            .map(|c| match c {
                FittedColumn::Text { vocabulary, .. } => Some(vocabulary.index()),
                _ => None,
            })
            .collect();
        let cat_index: Vec<Option<HashMap<&str, usize>>> = self
            .columns
            .iter()
            .map(|c| match c {
                FittedColumn::Categorical { vocabulary, .. } => Some(
                    vocabulary
                        .iter()
                        .enumerate()
                        .map(|(k, v)| (v.as_str(), k))
                        .collect(),
                ),
                _ => None,
            })
            .collect();

        let width = self.n_outputs();
        let mut values = vec![T::zero(); data.n_rows() * width];
        if width > 0 {
            values
                .par_chunks_mut(width)
                .zip(data.rows().par_iter())
                .enumerate()
                .try_for_each(|(i, (out, row))| {
                    self.encode_row(i, row, &positions, &cat_index, &text_index, out)
                })?;
        }
        Ok(FeatureMatrix {
            n_rows: data.n_rows(),
            n_cols: width,
            values,
            meta: self.meta.clone(),
        })
    }

    fn encode_row<T: Scalar>(
        &self,
        i: usize,
        row: &[Option<String>],
        positions: &[usize],
        cat_index: &[Option<HashMap<&str, usize>>],
        text_index: &[Option<HashMap<&str, usize>>],
        out: &mut [T],
    ) -> Result<()> {
        let mut at = 0;
        let mut scratch = Vec::new();
        for (c, col) in self.columns.iter().enumerate() {
            let cell = row[positions[c]].as_deref();
            match col {
                FittedColumn::Numeric {
                    name,
                    placeholder,
                    emit_value,
                    emit_indicator,
                    ..
                } => {
                    let v = cell.map(|v| parse_numeric(v, name, i)).transpose()?;
                    if *emit_value {
                        out[at] = T::lit(v.unwrap_or(*placeholder));
                        at += 1;
                    }
                    if *emit_indicator {
                        out[at] = if v.is_none() { T::one() } else { T::zero() };
                        at += 1;
                    }
                }
                FittedColumn::Categorical { vocabulary, .. } => {
                    let index = cat_index[c].as_ref().expect("categorical index");
                    let k = index
                        .get(cell.unwrap_or(MISSING_CATEGORY))
                        .copied()
                        .unwrap_or(vocabulary.len());
                    out[at + k] = T::one();
                    at += vocabulary.len() + 1;
                }
                FittedColumn::Text { vocabulary, .. } => {
                    let index = text_index[c].as_ref().expect("text index");
                    scratch.resize(vocabulary.len(), 0.0);
                    vocabulary.encode(index, cell.unwrap_or(""), &mut scratch);
                    for (o, v) in out[at..at + vocabulary.len()].iter_mut().zip(&scratch) {
                        *o = T::lit(*v);
                    }
                    at += vocabulary.len();
                }
            }
        }
        debug_assert_eq!(at, out.len());
        Ok(())
    }

    /// Selects output columns: a column is dropped when its source carries an
    /// excluded group and no included group.
    pub fn mask_for_groups(
        &self,
        exclude: &BTreeSet<String>,
        include: &BTreeSet<String>,
    ) -> Result<FeatureMask> {
        for g in exclude.iter().chain(include) {
            if !self.schema_groups.contains(g) {
                return Err(Error::UnknownGroup(g.clone()));
            }
        }
        Ok(FeatureMask(
            self.meta
                .iter()
                .map(|m| m.groups.is_disjoint(exclude) || !m.groups.is_disjoint(include))
                .collect(),
        ))
    }
}

/// Dense row-major feature matrix with per-column provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    values: Vec<T>,
    meta: Vec<ColumnMeta>,
}

impl<T: Scalar> FeatureMatrix<T> {
    /// Builds a matrix from rows, with generic numeric metadata `x0, x1, …`.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let meta = (0..n_cols)
            .map(|j| ColumnMeta {
                source: format!("x{j}"),
                kind: FeatureKind::Numeric,
                label: String::new(),
                groups: BTreeSet::new(),
            })
            .collect();
        Ok(Self {
            n_rows: rows.len(),
            n_cols,
            values: rows.iter().flatten().copied().collect(),
            meta,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn meta(&self) -> &[ColumnMeta] {
        &self.meta
    }

    pub fn with_meta(mut self, meta: Vec<ColumnMeta>) -> Result<Self> {
        if meta.len() != self.n_cols {
            return Err(Error::Shape("metadata length differs from column count".into()));
        }
        self.meta = meta;
        Ok(self)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.values[i * self.n_cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.n_rows).map(move |i| self.get(i, j))
    }
}

/// Boolean selection over output columns; `true` keeps the column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask(pub Vec<bool>);

impl FeatureMask {
    pub fn all(n: usize) -> Self {
        FeatureMask(vec![true; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{parse_schema, read_dataset};

    const SCHEMA: &str = r#"
[[columns]]
name = "id"
role = "identifier"

[[columns]]
name = "gpa"
role = "numeric"

[[columns]]
name = "age"
role = "numeric"
groups = ["sensitive"]

[[columns]]
name = "major"
role = "categorical"

[[columns]]
name = "activities"
role = "text"

[[columns]]
name = "sat_total"
role = "numeric"
groups = ["standardized_tests"]

[[columns]]
name = "outcome"
role = "outcome"
"#;

    fn data(csv: &str) -> RawDataset {
        read_dataset(csv.as_bytes(), &parse_schema(SCHEMA).unwrap()).unwrap()
    }

    fn sample() -> RawDataset {
        data(
            "id,gpa,age,major,activities,sat_total,outcome\n\
             a,3.9,17,math,Debate club,1500,admitted\n\
             b,,18,bio,research lab,1400,denied\n\
             c,3.2,,math,research,,denied\n",
        )
    }

    #[test]
    fn rare_merge_and_vocabulary() {
        // A: 100 rows, B: 98 rows, C: 1 row, D: 1 row (0.5% each) of 200.
        let mut csv = String::from("id,gpa,age,major,activities,sat_total,outcome\n");
        for (cat, k) in [("A", 100), ("B", 98), ("C", 1), ("D", 1)] {
            for _ in 0..k {
                csv.push_str(&format!("x,1,1,{cat},,1,denied\n"));
            }
        }
        let p = fit_pipeline(&data(&csv), &PipelineConfig::default()).unwrap();
        let FittedColumn::Categorical { vocabulary, rare, .. } = &p.columns[2] else {
            panic!("expected categorical")
        };
        assert_eq!(vocabulary, &["A", "B"]);
        assert_eq!(rare, &["C", "D"]);
        let labels: Vec<&str> = p
            .meta
            .iter()
            .filter(|m| m.source == "major")
            .map(|m| m.label.as_str())
            .collect();
        assert_eq!(labels, ["A", "B", RARE]);
    }

    #[test]
    fn exactly_one_percent_is_retained() {
        let mut csv = String::from("id,gpa,age,major,activities,sat_total,outcome\n");
        for (cat, k) in [("A", 297), ("B", 3)] {
            for _ in 0..k {
                csv.push_str(&format!("x,1,1,{cat},,1,denied\n"));
            }
        }
        let p = fit_pipeline(&data(&csv), &PipelineConfig::default()).unwrap();
        let FittedColumn::Categorical { vocabulary, .. } = &p.columns[2] else {
            panic!()
        };
        assert_eq!(vocabulary, &["A", "B"]);
    }

    #[test]
    fn indicators_only_where_missing() {
        let d = sample();
        let p = fit_pipeline(&d, &PipelineConfig::default()).unwrap();
        let names: Vec<String> = p.meta.iter().map(ColumnMeta::name).collect();
        assert!(names.contains(&"gpa_missing".to_string()));
        assert!(names.contains(&"age_missing".to_string()));
        assert!(names.contains(&"sat_total_missing".to_string()));

        let full = data("id,gpa,age,major,activities,sat_total,outcome\na,3.9,17,m,,1,denied\n");
        let p = fit_pipeline(&full, &PipelineConfig::default()).unwrap();
        assert!(p.meta.iter().all(|m| m.kind != FeatureKind::MissingIndicator));
    }

    #[test]
    fn missing_numeric_gets_placeholder_and_indicator() {
        let d = sample();
        let p = fit_pipeline(&d, &PipelineConfig::default()).unwrap();
        let x: FeatureMatrix<f64> = p.transform(&d).unwrap();
        let gpa = p.meta.iter().position(|m| m.source == "gpa" && m.kind == FeatureKind::Numeric).unwrap();
        let ind = p.meta.iter().position(|m| m.source == "gpa" && m.kind == FeatureKind::MissingIndicator).unwrap();
        assert_eq!(x.get(1, gpa), 3.2 - 1.0);
        assert_eq!(x.get(1, ind), 1.0);
        assert_eq!(x.get(0, ind), 0.0);
        assert_eq!(x.get(0, gpa), 3.9);
    }

    #[test]
    fn unseen_category_routes_to_rare() {
        let d = sample();
        let p = fit_pipeline(&d, &PipelineConfig::default()).unwrap();
        let t = data("id,gpa,age,major,activities,sat_total,outcome\nz,3,17,Z,,1,denied\n");
        let x: FeatureMatrix<f64> = p.transform(&t).unwrap();
        let rare = p.meta.iter().position(|m| m.source == "major" && m.label == RARE).unwrap();
        assert_eq!(x.get(0, rare), 1.0);
        let hits: f64 = p.meta.iter().enumerate().filter(|(_, m)| m.source == "major").map(|(j, _)| x.get(0, j)).sum();
        assert_eq!(hits, 1.0);
    }

    #[test]
    fn all_missing_numeric_yields_only_indicator() {
        let d = data("id,gpa,age,major,activities,sat_total,outcome\na,,17,m,,1,denied\nb,,18,m,,2,denied\n");
        let p = fit_pipeline(&d, &PipelineConfig::default()).unwrap();
        let gpa: Vec<FeatureKind> = p.meta.iter().filter(|m| m.source == "gpa").map(|m| m.kind).collect();
        assert_eq!(gpa, [FeatureKind::MissingIndicator]);
    }

    #[test]
    fn masks_propagate_tags() {
        let d = sample();
        let p = fit_pipeline(&d, &PipelineConfig::default()).unwrap();
        let none = BTreeSet::new();
        assert_eq!(p.mask_for_groups(&none, &none).unwrap(), FeatureMask::all(p.n_outputs()));

        let sensitive: BTreeSet<String> = ["sensitive".to_string()].into();
        let m = p.mask_for_groups(&sensitive, &none).unwrap();
        for (keep, meta) in m.0.iter().zip(&p.meta) {
            assert_eq!(*keep, meta.source != "age", "{}", meta.name());
        }
        assert_eq!(p.meta.iter().filter(|m| m.source == "age").count(), 2);

        let tests: BTreeSet<String> = ["standardized_tests".to_string()].into();
        let m = p.mask_for_groups(&tests, &none).unwrap();
        assert!(p.meta.iter().zip(&m.0).all(|(meta, keep)| *keep != (meta.source == "sat_total")));
        let m = p.mask_for_groups(&tests, &tests).unwrap();
        assert_eq!(m.count(), p.n_outputs());

        let unknown: BTreeSet<String> = ["nope".to_string()].into();
        assert!(matches!(p.mask_for_groups(&unknown, &none), Err(Error::UnknownGroup(_))));
    }

    #[test]
    fn transform_rejects_schema_mismatch() {
        let d = sample();
        let p = fit_pipeline(&d, &PipelineConfig::default()).unwrap();
        let other = parse_schema(
            "[[columns]]\nname = \"gpa\"\nrole = \"numeric\"\n[[columns]]\nname = \"o\"\nrole = \"outcome\"\n",
        )
        .unwrap();
        let o = read_dataset("gpa,o\n1,denied\n".as_bytes(), &other).unwrap();
        assert!(matches!(p.transform::<f64>(&o), Err(Error::Shape(_))));
    }

    #[test]
    fn non_numeric_cell_is_an_error() {
        let d = data("id,gpa,age,major,activities,sat_total,outcome\na,high,17,m,,1,denied\n");
        assert!(fit_pipeline(&d, &PipelineConfig::default()).is_err());
    }

    #[test]
    fn f32_transform_matches_f64() {
        let d = sample();
        let p = fit_pipeline(&d, &PipelineConfig::default()).unwrap();
        let a: FeatureMatrix<f64> = p.transform(&d).unwrap();
        let b: FeatureMatrix<f32> = p.transform(&d).unwrap();
        for i in 0..a.n_rows() {
            for j in 0..a.n_cols() {
                assert!((a.get(i, j) as f32 - b.get(i, j)).abs() < 1e-6);
            }
        }
    }
}
