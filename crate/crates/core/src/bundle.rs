//! Model bundle persistence.
//!
//! A bundle is a pretty-printed JSON document:
//!
//! ```json
//! {
//!   "format": "triagekit-bundle",
//!   "format_version": 1,
//!   "checksum": "sha256:<hex>",
//!   "payload": { "schema": …, "pipeline": …, "model": …, "metadata": … }
//! }
//! ```
//!
//! The checksum covers the compact serialization of `payload` with object
//! keys sorted. Tree arrays are stored as base64 of little-endian fixed-width
//! values (`i32` feature index, -1 for leaves; `f64` threshold or leaf value;
//! `u32` child indices) so the fitted trees round-trip bit for bit.

use std::collections::BTreeSet;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::featurize::{FeatureMask, FittedPipeline};
use crate::gbdt::{GbdtModel, TrainConfig, Tree, TreeNode};
use crate::schema::DatasetSchema;

pub const FORMAT: &str = "triagekit-bundle";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub test_fraction: f64,
    pub dedupe: bool,
    pub excluded_groups: BTreeSet<String>,
    pub included_groups: BTreeSet<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub train_prevalence: f64,
    pub test_prevalence: f64,
    /// Taken from `SOURCE_DATE_EPOCH` when set, so bundles stay reproducible.
    pub created_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub schema: DatasetSchema,
    pub pipeline: FittedPipeline,
    pub model: GbdtModel<f64>,
    pub metadata: TrainingMetadata,
}

#[derive(Debug, Serialize, Deserialize)]
struct EncodedTree {
    feature: String,
    value: String,
    left: String,
    right: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct EncodedModel {
    init_score: f64,
    learning_rate: f64,
    n_features: usize,
    /// One character per column, '1' when the column is usable.
    feature_mask: String,
    config: TrainConfig<f64>,
    train_deviance: Vec<f64>,
    trees: Vec<EncodedTree>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Payload {
    schema: DatasetSchema,
    pipeline: FittedPipeline,
    model: EncodedModel,
    metadata: TrainingMetadata,
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope {
    format: String,
    format_version: u32,
    checksum: String,
    payload: serde_json::Value,
}

fn encode_tree(tree: &Tree<f64>) -> EncodedTree {
    let mut feature = Vec::new();
    let mut value = Vec::new();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for node in tree.nodes() {
        let (f, v, l, r) = match *node {
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => (feature as i32, threshold, left as u32, right as u32),
            TreeNode::Leaf { value } => (-1, value, 0, 0),
        };
        feature.extend_from_slice(&f.to_le_bytes());
        value.extend_from_slice(&v.to_le_bytes());
        left.extend_from_slice(&l.to_le_bytes());
        right.extend_from_slice(&r.to_le_bytes());
    }
    EncodedTree {
        feature: B64.encode(feature),
        value: B64.encode(value),
        left: B64.encode(left),
        right: B64.encode(right),
    }
}

fn decode_words<const N: usize>(s: &str, what: &str) -> Result<Vec<[u8; N]>> {
    let bytes = B64
        .decode(s)
        .map_err(|e| Error::Bundle(format!("{what}: {e}")))?;
    if bytes.len() % N != 0 {
        return Err(Error::Bundle(format!("{what}: truncated array")));
    }
    Ok(bytes
        .chunks_exact(N)
        .map(|c| c.try_into().expect("chunk width"))
        .collect())
}

fn decode_tree(t: &EncodedTree, n_features: usize) -> Result<Tree<f64>> {
    let feature = decode_words::<4>(&t.feature, "feature")?;
    let value = decode_words::<8>(&t.value, "value")?;
    let left = decode_words::<4>(&t.left, "left")?;
    let right = decode_words::<4>(&t.right, "right")?;
    let n = feature.len();
    if value.len() != n || left.len() != n || right.len() != n {
        return Err(Error::Bundle("tree arrays differ in length".into()));
    }
    let mut nodes = Vec::with_capacity(n);
    for k in 0..n {
        let f = i32::from_le_bytes(feature[k]);
        let v = f64::from_le_bytes(value[k]);
        nodes.push(if f < 0 {
            TreeNode::Leaf { value: v }
        } else {
            if f as usize >= n_features {
                return Err(Error::Bundle(format!("split on column {f} out of range")));
            }
            TreeNode::Split {
                feature: f as usize,
                threshold: v,
                left: u32::from_le_bytes(left[k]) as usize,
                right: u32::from_le_bytes(right[k]) as usize,
            }
        });
    }
    Tree::from_nodes(nodes).ok_or_else(|| Error::Bundle("malformed tree".into()))
}

fn checksum(payload: &serde_json::Value) -> Result<String> {
    let canonical = serde_json::to_vec(payload)?;
    Ok(format!("sha256:{}", hex::encode(Sha256::digest(&canonical))))
}

impl ModelBundle {
    fn payload(&self) -> Payload {
        let m = &self.model;
        Payload {
            schema: self.schema.clone(),
            pipeline: self.pipeline.clone(),
            model: EncodedModel {
                init_score: m.init_score,
                learning_rate: m.learning_rate,
                n_features: m.n_features,
                feature_mask: m.feature_mask.0.iter().map(|&b| if b { '1' } else { '0' }).collect(),
                config: m.config.clone(),
                train_deviance: m.train_deviance.clone(),
                trees: m.trees.iter().map(encode_tree).collect(),
            },
            metadata: self.metadata.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let payload = serde_json::to_value(self.payload())?;
        let envelope = Envelope {
            format: FORMAT.into(),
            format_version: FORMAT_VERSION,
            checksum: checksum(&payload)?,
            payload,
        };
        let mut text = serde_json::to_string_pretty(&envelope)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let envelope: Envelope =
            serde_json::from_str(text).map_err(|e| Error::Bundle(format!("corrupted file: {e}")))?;
        if envelope.format != FORMAT {
            return Err(Error::Bundle(format!("not a model bundle ({:?})", envelope.format)));
        }
        if envelope.format_version != FORMAT_VERSION {
            return Err(Error::Bundle(format!(
                "unsupported version {} (this build reads version {FORMAT_VERSION})",
                envelope.format_version
            )));
        }
        if checksum(&envelope.payload)? != envelope.checksum {
            return Err(Error::Bundle("checksum mismatch: file is corrupted or was edited".into()));
        }
        let p: Payload = serde_json::from_value(envelope.payload)
            .map_err(|e| Error::Bundle(format!("corrupted payload: {e}")))?;
        let mask = FeatureMask(
            p.model
                .feature_mask
                .chars()
                .map(|c| match c {
                    '1' => Ok(true),
                    '0' => Ok(false),
                    _ => Err(Error::Bundle("feature mask must be a 0/1 string".into())),
                })
                .collect::<Result<_>>()?,
        );
        if mask.len() != p.model.n_features || p.pipeline.n_outputs() != p.model.n_features {
            return Err(Error::Bundle("model width disagrees with the pipeline".into()));
        }
        let trees = p
            .model
            .trees
            .iter()
            .map(|t| decode_tree(t, p.model.n_features))
            .collect::<Result<_>>()?;
        Ok(ModelBundle {
            schema: p.schema,
            pipeline: p.pipeline,
            model: GbdtModel {
                init_score: p.model.init_score,
                trees,
                learning_rate: p.model.learning_rate,
                n_features: p.model.n_features,
                feature_mask: mask,
                config: p.model.config,
                train_deviance: p.model.train_deviance,
            },
            metadata: p.metadata,
        })
    }
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<()> {
    std::fs::write(path, bundle.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelBundle::from_json(&text)
}
