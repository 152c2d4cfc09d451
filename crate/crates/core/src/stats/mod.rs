//! Evaluation statistics: two-proportion χ² tests, exact binomial intervals,
//! Pearson correlation, recall-vs-reviewed curves, subgroup composition and
//! per-class score histograms.

mod binomial;
mod special;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use binomial::{clopper_pearson, lower_tail, upper_tail, ExactInterval};
pub use special::{chisq1_sf, erfc};

/// Direction of a one-sided alternative on `p1 - p2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSqResult<T> {
    pub chi2: T,
    pub df: u32,
    pub p_two_sided: T,
    /// One-sided p-value in the direction of the observed difference.
    pub p_one_sided: T,
    /// Observed `p1 - p2`.
    pub difference: T,
}

impl<T: Scalar> ChiSqResult<T> {
    /// One-sided p-value for a fixed alternative; equals `p_two_sided / 2`
    /// when the observed difference has the hypothesized sign.
    pub fn one_sided(&self, alternative: Alternative) -> T {
        let agrees = match alternative {
            Alternative::Greater => self.difference >= T::zero(),
            Alternative::Less => self.difference <= T::zero(),
        };
        if agrees || self.difference == T::zero() {
            self.p_one_sided
        } else {
            T::one() - self.p_one_sided
        }
    }
}

/// Pearson χ² test (1 df, no continuity correction) of `x1/n1` against
/// `x2/n2`.
pub fn two_prop_chisq<T: Scalar>(x1: usize, n1: usize, x2: usize, n2: usize) -> Result<ChiSqResult<T>> {
    if n1 == 0 || n2 == 0 || x1 > n1 || x2 > n2 {
        return Err(Error::invalid(format!(
            "invalid counts ({x1}/{n1}, {x2}/{n2})"
        )));
    }
    if x1 + x2 == 0 || x1 + x2 == n1 + n2 {
        return Err(Error::Statistic(
            "test undefined: pooled proportion is 0 or 1".into(),
        ));
    }
    let (n1f, n2f) = (T::from_count(n1), T::from_count(n2));
    let p1 = T::from_count(x1) / n1f;
    let p2 = T::from_count(x2) / n2f;
    let pooled = T::from_count(x1 + x2) / T::from_count(n1 + n2);
    let diff = p1 - p2;
    let chi2 = diff * diff / (pooled * (T::one() - pooled) * (n1f.recip() + n2f.recip()));
    let p_two_sided = chisq1_sf(chi2)?;
    Ok(ChiSqResult {
        chi2,
        df: 1,
        p_two_sided,
        p_one_sided: p_two_sided / T::lit(2.0),
        difference: diff,
    })
}

/// Product-moment correlation.
pub fn pearson_r<T: Scalar>(xs: &[T], ys: &[T]) -> Result<T> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!(
            "pearson_r: lengths {} and {} differ",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::invalid("pearson_r needs at least 3 points"));
    }
    let n = T::from_count(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(Error::Statistic("pearson_r: constant input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).max(-T::one()).min(T::one()))
}

/// Row indices ordered by descending score; equal scores keep input order.
pub fn rank_descending<T: Scalar>(scores: &[T]) -> Result<Vec<usize>> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
    });
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve<T> {
    /// `(k, captured)`: fraction of all positives among the top `k`.
    pub points: Vec<(usize, T)>,
    pub positives: usize,
}

impl<T: Scalar> RecallCurve<T> {
    /// Captured fraction at `k` reviewed (0 at k = 0).
    pub fn captured(&self, k: usize) -> T {
        match k {
            0 => T::zero(),
            k => self.points[k.min(self.points.len()) - 1].1,
        }
    }
}

pub fn recall_at_k_curve<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<RecallCurve<T>> {
    if scores.len() != labels.len() {
        return Err(Error::Shape("scores and labels differ in length".into()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return Err(Error::Statistic("recall curve needs at least one positive".into()));
    }
    let total = T::from_count(positives);
    let mut hits = 0;
    let points = rank_descending(scores)?
        .into_iter()
        .enumerate()
        .map(|(k, i)| {
            hits += (labels[i] == 1) as usize;
            (k + 1, T::from_count(hits) / total)
        })
        .collect();
    Ok(RecallCurve { points, positives })
}

/// Number of positives among the `k` highest-scored rows.
pub fn top_k_hits<T: Scalar>(scores: &[T], labels: &[u8], k: usize) -> Result<usize> {
    if k > scores.len() || scores.len() != labels.len() {
        return Err(Error::invalid("k exceeds row count or labels misaligned"));
    }
    Ok(rank_descending(scores)?[..k]
        .iter()
        .filter(|&&i| labels[i] == 1)
        .count())
}

/// A labelled subset of applicants (a pool, a Top pool, the admitted class).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cohort {
    pub label: String,
    pub members: Vec<usize>,
}

/// A boolean report-group flag per applicant (e.g. URM, female, legacy).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupFlags {
    pub name: String,
    pub flags: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionRow<T> {
    pub label: String,
    pub size: usize,
    /// `(group, fraction of cohort members in group)`; 0 for empty cohorts.
    pub fractions: Vec<(String, T)>,
}

pub fn group_composition<T: Scalar>(
    cohorts: &[Cohort],
    groups: &[GroupFlags],
) -> Result<Vec<CompositionRow<T>>> {
    let n = groups.first().map_or(0, |g| g.flags.len());
    if groups.iter().any(|g| g.flags.len() != n) {
        return Err(Error::Shape("group flag vectors differ in length".into()));
    }
    cohorts
        .iter()
        .map(|c| {
            if !groups.is_empty() && c.members.iter().any(|&i| i >= n) {
                return Err(Error::Shape(format!(
                    "cohort {:?} references applicants beyond the group flags",
                    c.label
                )));
            }
            let size = c.members.len();
            let fractions = groups
                .iter()
                .map(|g| {
                    let k = c.members.iter().filter(|&&i| g.flags[i]).count();
                    let f = if size == 0 {
                        T::zero()
                    } else {
                        T::from_count(k) / T::from_count(size)
                    };
                    (g.name.clone(), f)
                })
                .collect();
            Ok(CompositionRow {
                label: c.label.clone(),
                size,
                fractions,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram<T> {
    /// Bin edges, `bins + 1` values from 0 to 1.
    pub edges: Vec<T>,
    /// Counts indexed by class label (0, then 1).
    pub counts: [Vec<usize>; 2],
    /// Per-class densities integrating to 1 over [0, 1] (all zero when a
    /// class is empty).
    pub densities: [Vec<T>; 2],
}

/// Equal-width bins on [0, 1], right-open except the last.
pub fn score_histogram<T: Scalar>(scores: &[T], labels: &[u8], bins: usize) -> Result<ScoreHistogram<T>> {
    if bins == 0 {
        return Err(Error::invalid("bins must be >= 1"));
    }
    if scores.len() != labels.len() {
        return Err(Error::Shape("scores and labels differ in length".into()));
    }
    let mut counts = [vec![0usize; bins], vec![0usize; bins]];
    let nb = T::from_count(bins);
    for (&s, &l) in scores.iter().zip(labels) {
        if !(s >= T::zero() && s <= T::one()) {
            return Err(Error::invalid(format!("score {s} outside [0, 1]")));
        }
        if l > 1 {
            return Err(Error::invalid(format!("label {l} is not binary")));
        }
        let b = (s * nb).floor().to_usize().unwrap_or(0).min(bins - 1);
        counts[l as usize][b] += 1;
    }
    let width = nb.recip();
    let densities = [0, 1].map(|c| {
        let total: usize = counts[c].iter().sum();
        counts[c]
            .iter()
            .map(|&k| {
                if total == 0 {
                    T::zero()
                } else {
                    T::from_count(k) / (T::from_count(total) * width)
                }
            })
            .collect()
    });
    let edges = (0..=bins).map(|b| T::from_count(b) / nb).collect();
    Ok(ScoreHistogram {
        edges,
        counts,
        densities,
    })
}
