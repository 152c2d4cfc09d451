//! Gradient-boosted regression trees for binary log-loss.
//!
//! Each stage fits a regression tree to the residuals `y - p` by variance
//! reduction and sets every leaf to a single Newton step
//! `Σ r / max(Σ p(1-p), 1e-12)`. The model margin is
//! `init_score + learning_rate * Σ tree(x)`.

mod tree;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{FeatureMask, FeatureMatrix};
use crate::scalar::{sigmoid, Scalar};

pub use tree::{best_split, midpoint, split_gain, SplitCandidate, Tree, TreeNode};
use tree::{grow_tree, SortedColumns, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct TrainConfig<T> {
    pub n_stages: usize,
    pub learning_rate: T,
    /// Levels below the root; 3 allows at most 8 leaves.
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub subsample: T,
    pub seed: u64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            n_stages: 100,
            learning_rate: T::lit(0.1),
            max_depth: 3,
            min_samples_split: 2,
            min_samples_leaf: 1,
            subsample: T::one(),
            seed: 0,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_stages == 0 {
            return Err(Error::invalid("n_stages must be >= 1"));
        }
        if !(self.learning_rate > T::zero() && self.learning_rate <= T::one()) {
            return Err(Error::invalid("learning_rate must be in (0, 1]"));
        }
        if self.max_depth == 0 {
            return Err(Error::invalid("max_depth must be >= 1"));
        }
        if !(self.subsample > T::zero() && self.subsample <= T::one()) {
            return Err(Error::invalid("subsample must be in (0, 1]"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GbdtModel<T> {
    pub init_score: T,
    pub trees: Vec<Tree<T>>,
    pub learning_rate: T,
    pub n_features: usize,
    pub feature_mask: FeatureMask,
    pub config: TrainConfig<T>,
    /// Mean training deviance after each stage, over all training rows.
    pub train_deviance: Vec<T>,
}

const PROB_CLIP: f64 = 1e-12;

/// ln(1 + e^x) without overflow.
fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Mean binomial deviance of margins against labels.
pub fn mean_deviance<T: Scalar>(margins: &[T], y: &[u8]) -> T {
    let total: T = margins
        .iter()
        .zip(y)
        .map(|(&f, &l)| if l == 1 { softplus(-f) } else { softplus(f) })
        .sum();
    T::lit(2.0) * total / T::from_count(margins.len().max(1))
}

pub fn fit_gbdt<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[u8],
    config: &TrainConfig<T>,
    mask: &FeatureMask,
) -> Result<GbdtModel<T>> {
    config.validate()?;
    let n = x.n_rows();
    if y.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", y.len())));
    }
    if n < 2 {
        return Err(Error::invalid("need at least 2 training rows"));
    }
    if let Some(bad) = y.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!("label {bad} is not binary")));
    }
    if mask.len() != x.n_cols() {
        return Err(Error::Shape(format!(
            "mask covers {} columns, matrix has {}",
            mask.len(),
            x.n_cols()
        )));
    }
    let features: Vec<usize> = mask.selected().collect();
    if features.is_empty() {
        return Err(Error::invalid("every feature column is masked"));
    }
    if let Some((i, j)) = (0..n)
        .flat_map(|i| features.iter().map(move |&j| (i, j)))
        .find(|&(i, j)| !x.get(i, j).is_finite())
    {
        return Err(Error::invalid(format!("non-finite feature value at row {i}, column {j}")));
    }

    let clip = T::lit(PROB_CLIP);
    let mean = T::from_count(y.iter().filter(|&&l| l == 1).count()) / T::from_count(n);
    let p_bar = mean.max(clip).min(T::one() - clip);
    let init_score = (p_bar / (T::one() - p_bar)).ln();

    let mut model = GbdtModel {
        init_score,
        trees: Vec::new(),
        learning_rate: config.learning_rate,
        n_features: x.n_cols(),
        feature_mask: mask.clone(),
        config: config.clone(),
        train_deviance: Vec::new(),
    };
    if n < config.min_samples_split {
        return Ok(model);
    }

    let sorted = SortedColumns::new(x, features);
    let params = TreeParams {
        max_depth: config.max_depth,
        min_samples_split: config.min_samples_split,
        min_samples_leaf: config.min_samples_leaf,
    };
    let n_sample = if config.subsample >= T::one() {
        n
    } else {
        (config.subsample * T::from_count(n))
            .floor()
            .to_usize()
            .unwrap_or(n)
            .clamp(1, n)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut in_sample = vec![true; n];
    let mut margins = vec![init_score; n];
    let mut residuals = vec![T::zero(); n];
    let mut hessians = vec![T::zero(); n];

    for _ in 0..config.n_stages {
        residuals
            .par_iter_mut()
            .zip(hessians.par_iter_mut())
            .zip(margins.par_iter().zip(y.par_iter()))
            .for_each(|((r, h), (&f, &l))| {
                let p = sigmoid(f);
                *r = T::from_count(l as usize) - p;
                *h = p * (T::one() - p);
            });
        if n_sample < n {
            // Partial Fisher–Yates: the first n_sample positions are the sample.
            for i in 0..n_sample {
                let j = i + (rng.next_u64() % (n - i) as u64) as usize;
                perm.swap(i, j);
            }
            in_sample.iter_mut().for_each(|s| *s = false);
            for &i in &perm[..n_sample] {
                in_sample[i] = true;
            }
        }
        let tree = grow_tree(
            &sorted,
            |i, j| x.get(i, j),
            &residuals,
            &hessians,
            &in_sample,
            &params,
        );
        let lr = config.learning_rate;
        margins
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, f)| *f = *f + lr * tree.predict(x.row(i)));
        model.train_deviance.push(mean_deviance(&margins, y));
        model.trees.push(tree);
    }
    Ok(model)
}

impl<T: Scalar> GbdtModel<T> {
    fn check_width(&self, x: &FeatureMatrix<T>) -> Result<()> {
        if x.n_cols() != self.n_features {
            return Err(Error::Shape(format!(
                "model expects {} columns, matrix has {}",
                self.n_features,
                x.n_cols()
            )));
        }
        Ok(())
    }

    pub fn margin_row(&self, row: &[T]) -> T {
        let total: T = self.trees.iter().map(|t| t.predict(row)).sum();
        self.init_score + self.learning_rate * total
    }

    pub fn predict_margin(&self, x: &FeatureMatrix<T>) -> Result<Vec<T>> {
        self.check_width(x)?;
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|i| self.margin_row(x.row(i)))
            .collect())
    }

    /// Probabilities σ(margin), kept strictly inside (0, 1).
    pub fn predict_proba(&self, x: &FeatureMatrix<T>) -> Result<Vec<T>> {
        let lo = T::min_positive_value();
        let hi = T::one() - T::epsilon();
        Ok(self
            .predict_margin(x)?
            .into_iter()
            .map(|m| sigmoid(m).max(lo).min(hi))
            .collect())
    }
}
