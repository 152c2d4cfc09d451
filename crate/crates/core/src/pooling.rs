//! Probability-ranked applicant pools: a size-matched Top pool and K quantile
//! pools (Pool K holds the highest predicted probabilities).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::{clopper_pearson, rank_descending, Cohort};

/// Indices of the `k` highest scores in rank order; ties at the boundary go
/// to the earlier row.
pub fn top_k_pool<T: Scalar>(scores: &[T], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::invalid(format!(
            "top-k size {k} exceeds {} applicants",
            scores.len()
        )));
    }
    let mut order = rank_descending(scores)?;
    order.truncate(k);
    Ok(order)
}

/// Pool sizes indexed by pool number minus one: `floor(n/K)` each, with the
/// `n mod K` extra slots going to Pool K, then K-1, and so on.
pub fn pool_sizes(n: usize, pools: usize) -> Vec<usize> {
    let base = n / pools;
    let extra = n % pools;
    (1..=pools)
        .map(|p| base + usize::from(p > pools - extra))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PoolMember<T> {
    pub id: String,
    pub score: T,
    pub pool: usize,
}

/// Applicant → pool mapping, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PoolAssignment<T> {
    pub pools: usize,
    pub members: Vec<PoolMember<T>>,
}

impl<T: Scalar> PoolAssignment<T> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Row indices of pool `p` (1-based), in input order.
    pub fn pool_members(&self, p: usize) -> Vec<usize> {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, m)| m.pool == p)
            .map(|(i, _)| i)
            .collect()
    }

    /// One cohort per pool, ordered Pool K down to Pool 1.
    pub fn cohorts(&self) -> Vec<Cohort> {
        (1..=self.pools)
            .rev()
            .map(|p| Cohort {
                label: format!("pool{p}"),
                members: self.pool_members(p),
            })
            .collect()
    }
}

/// Sorts by descending score (stable) and assigns contiguous chunks to Pool
/// K down to Pool 1.
pub fn quantile_pools<T: Scalar>(ids: &[String], scores: &[T], pools: usize) -> Result<PoolAssignment<T>> {
    if ids.len() != scores.len() {
        return Err(Error::Shape("ids and scores differ in length".into()));
    }
    if pools == 0 {
        return Err(Error::invalid("pool count must be >= 1"));
    }
    let n = scores.len();
    if n < pools {
        return Err(Error::invalid(format!("{n} applicants cannot fill {pools} pools")));
    }
    let order = rank_descending(scores)?;
    let sizes = pool_sizes(n, pools);
    let mut pool_of = vec![0usize; n];
    let mut at = 0;
    for p in (1..=pools).rev() {
        for &i in &order[at..at + sizes[p - 1]] {
            pool_of[i] = p;
        }
        at += sizes[p - 1];
    }
    Ok(PoolAssignment {
        pools,
        members: ids
            .iter()
            .zip(scores)
            .zip(pool_of)
            .map(|((id, &score), pool)| PoolMember {
                id: id.clone(),
                score,
                pool,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PoolSummary<T> {
    pub pool: usize,
    pub size: usize,
    /// Mean member score ("predicted admit density").
    pub predicted_rate: T,
    pub admits: Option<usize>,
    pub actual_rate: Option<T>,
    pub ci_low: Option<T>,
    pub ci_high: Option<T>,
}

/// Per-pool predicted rates, and actual rates with 95% Clopper–Pearson
/// intervals when labels are given. Ordered Pool K down to Pool 1.
pub fn summarize_pools<T: Scalar>(
    assignment: &PoolAssignment<T>,
    labels: Option<&[u8]>,
) -> Result<Vec<PoolSummary<T>>> {
    summarize_subset(assignment, labels, None)
}

/// As [`summarize_pools`], restricted to applicants with `keep[i]`. Pools
/// left empty by the restriction are omitted.
pub fn summarize_subset<T: Scalar>(
    assignment: &PoolAssignment<T>,
    labels: Option<&[u8]>,
    keep: Option<&[bool]>,
) -> Result<Vec<PoolSummary<T>>> {
    if labels.is_some_and(|l| l.len() != assignment.len()) {
        return Err(Error::Shape("labels do not align with the pool assignment".into()));
    }
    if keep.is_some_and(|k| k.len() != assignment.len()) {
        return Err(Error::Shape("subset flags do not align with the pool assignment".into()));
    }
    let level = T::lit(0.95);
    let mut out = Vec::with_capacity(assignment.pools);
    for pool in (1..=assignment.pools).rev() {
        let members: Vec<usize> = assignment
            .pool_members(pool)
            .into_iter()
            .filter(|&i| keep.is_none_or(|k| k[i]))
            .collect();
        if members.is_empty() {
            if keep.is_some() {
                continue;
            }
            return Err(Error::invalid(format!("pool {pool} is empty")));
        }
        let size = members.len();
        let predicted_rate =
            members.iter().map(|&i| assignment.members[i].score).sum::<T>() / T::from_count(size);
        let (admits, actual_rate, ci_low, ci_high) = match labels {
            Some(l) => {
                let admits = members.iter().filter(|&&i| l[i] == 1).count();
                let ci = clopper_pearson(admits, size, level)?;
                (
                    Some(admits),
                    Some(T::from_count(admits) / T::from_count(size)),
                    Some(ci.low),
                    Some(ci.high),
                )
            }
            None => (None, None, None, None),
        };
        out.push(PoolSummary {
            pool,
            size,
            predicted_rate,
            admits,
            actual_rate,
            ci_low,
            ci_high,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("a{i}")).collect()
    }

    #[test]
    fn top_k_edges_and_ties() {
        let s = [0.9, 0.5, 0.5, 0.1];
        assert_eq!(top_k_pool(&s, 4).unwrap().len(), 4);
        assert!(top_k_pool(&s, 0).unwrap().is_empty());
        let mut two = top_k_pool(&s, 2).unwrap();
        two.sort();
        assert_eq!(two, vec![0, 1]);
        assert!(top_k_pool(&s, 5).is_err());
    }

    #[test]
    fn remainder_goes_to_top_pools() {
        let sizes = pool_sizes(25, 10);
        let top_down: Vec<usize> = sizes.iter().rev().copied().collect();
        assert_eq!(top_down, vec![3, 3, 3, 3, 3, 2, 2, 2, 2, 2]);
        assert_eq!(pool_sizes(2650, 10), vec![265; 10]);
    }

    #[test]
    fn twenty_distinct_scores() {
        let scores: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let a = quantile_pools(&ids(20), &scores, 10).unwrap();
        for p in 1..=10 {
            assert_eq!(a.pool_members(p).len(), 2);
        }
        assert_eq!(a.pool_members(10), vec![18, 19]);
    }

    #[test]
    fn equal_scores_are_stable() {
        let a = quantile_pools(&ids(20), &[0.3; 20], 10).unwrap();
        assert_eq!(a.pool_members(10), vec![0, 1]);
        assert_eq!(a.pool_members(1), vec![18, 19]);
    }

    #[test]
    fn too_few_rows() {
        assert!(quantile_pools(&ids(5), &[0.1; 5], 10).is_err());
    }

    #[test]
    fn summaries() {
        let scores = [0.8f64, 0.6, 0.4, 0.2];
        let a = quantile_pools(&ids(4), &scores, 1).unwrap();
        let s = summarize_pools(&a, None).unwrap();
        assert!((s[0].predicted_rate - 0.5).abs() < 1e-15);
        assert!(s[0].actual_rate.is_none() && s[0].ci_low.is_none());

        let a = quantile_pools(&ids(10), &[0.5f64; 10], 1).unwrap();
        let s = summarize_pools(&a, Some(&[1, 1, 1, 1, 1, 0, 0, 0, 0, 0])).unwrap();
        assert_eq!(s[0].actual_rate, Some(0.5));
        assert!((s[0].ci_low.unwrap() - 0.187).abs() < 1e-3);
        assert!((s[0].ci_high.unwrap() - 0.813).abs() < 1e-3);
        assert!(summarize_pools(&a, Some(&[1, 0])).is_err());
    }

    #[test]
    fn summaries_are_ordered_top_down() {
        let scores: Vec<f64> = (0..30).map(|i| i as f64 / 30.0).collect();
        let a = quantile_pools(&ids(30), &scores, 3).unwrap();
        let s = summarize_pools(&a, None).unwrap();
        assert_eq!(s.iter().map(|p| p.pool).collect::<Vec<_>>(), vec![3, 2, 1]);
        assert!(s[0].predicted_rate > s[1].predicted_rate);
    }
}
