#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triagekit_core::featurize::FeatureMatrix;
use triagekit_core::gbdt::{GbdtModel, TreeNode};

use triagekit_core::schema::{ColumnRole, ColumnSpec, DatasetSchema, OutcomeVocabulary, RawDataset};
use triagekit_core::synth::{generate_dataset, GeneratorConfig, SyntheticData};

pub fn col(name: &str, role: ColumnRole, groups: &[&str]) -> ColumnSpec {
    ColumnSpec {
        name: name.into(),
        role,
        groups: groups.iter().map(|g| g.to_string()).collect::<BTreeSet<_>>(),
    }
}

/// id, num, cat, txt, outcome.
pub fn mixed_schema() -> DatasetSchema {
    DatasetSchema::new(
        vec![
            col("id", ColumnRole::Identifier, &[]),
            col("num", ColumnRole::Numeric, &["academic"]),
            col("cat", ColumnRole::Categorical, &["sensitive"]),
            col("txt", ColumnRole::Text, &[]),
            col("outcome", ColumnRole::Outcome, &[]),
        ],
        OutcomeVocabulary::default(),
    )
    .unwrap()
}

pub fn raw(schema: DatasetSchema, rows: Vec<Vec<Option<String>>>) -> RawDataset {
    RawDataset::new(schema, rows).unwrap()
}

pub fn synthetic(n_rows: usize, seed: u64) -> SyntheticData {
    generate_dataset(&GeneratorConfig {
        n_rows,
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

/// Binary log-loss deviance computed directly from probabilities.
pub fn direct_deviance(p: &[f64], y: &[u8]) -> f64 {
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| if y == 1 { -p.ln() } else { -(1.0 - p).ln() })
        .sum();
    2.0 * total / p.len() as f64
}

pub struct Stump {
    pub feature: usize,
    pub left: Vec<bool>,
    pub gain: f64,
}

pub fn sse(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|r| (r - m) * (r - m)).sum()
}

/// Every midpoint split of every column, scored by the drop in SSE.
pub fn all_stumps(rows: &[Vec<f64>], r: &[f64]) -> Vec<Stump> {
    let mut out = Vec::new();
    let parent = sse(r);
    for j in 0..rows[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|x| x[j]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let left: Vec<bool> = rows.iter().map(|x| x[j] <= t).collect();
            let (l, rr): (Vec<f64>, Vec<f64>) = {
                let l = r.iter().zip(&left).filter(|(_, &s)| s).map(|(v, _)| *v).collect();
                let rr = r.iter().zip(&left).filter(|(_, &s)| !s).map(|(v, _)| *v).collect();
                (l, rr)
            };
            out.push(Stump {
                feature: j,
                left,
                gain: parent - sse(&l) - sse(&rr),
            });
        }
    }
    out
}

pub fn stump_of(model: &GbdtModel<f64>, rows: &[Vec<f64>]) -> Option<(usize, Vec<bool>, f64, f64)> {
    match model.trees[0].nodes()[0] {
        TreeNode::Leaf { .. } => None,
        TreeNode::Split { feature, threshold, left, right } => {
            let leaf = |k: usize| match model.trees[0].nodes()[k] {
                TreeNode::Leaf { value } => value,
                _ => panic!("depth-1 tree has a deeper node"),
            };
            Some((
                feature,
                rows.iter().map(|x| x[feature] <= threshold).collect(),
                leaf(left),
                leaf(right),
            ))
        }
    }
}

/// Fixed 200 x 5 corpus with a nonlinear signal.
pub fn corpus_200x5() -> (FeatureMatrix<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
    let y = rows
        .iter()
        .map(|r| {
            let s = 2.0 * r[0] - r[1] + (6.0 * r[2]).sin() + 0.5 * r[3] * r[4];
            let p = 1.0 / (1.0 + (-(3.0 * s - 1.5)).exp());
            u8::from(rng.random::<f64>() < p)
        })
        .collect();
    (FeatureMatrix::from_rows(&rows).unwrap(), y)
}
