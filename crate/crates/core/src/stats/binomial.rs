//! Binomial tails and Clopper–Pearson exact intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactInterval<T> {
    pub low: T,
    pub high: T,
    pub level: T,
}

/// ln C(n, k) for k = 0..=n.
fn log_binomial_coefficients<T: Scalar>(n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = T::zero();
    out.push(acc);
    for k in 0..n {
        acc = acc + T::from_count(n - k).ln() - T::from_count(k + 1).ln();
        out.push(acc);
    }
    out
}

/// Σ_{k in range} C(n,k) pᵏ (1-p)^(n-k), for 0 < p < 1.
fn tail_sum<T: Scalar>(lc: &[T], range: std::ops::RangeInclusive<usize>, p: T) -> T {
    let n = lc.len() - 1;
    let lp = p.ln();
    let lq = (-p).ln_1p();
    range
        .map(|k| (lc[k] + T::from_count(k) * lp + T::from_count(n - k) * lq).exp())
        .sum()
}

/// P(X ≥ x) for X ~ Binomial(n, p).
pub fn upper_tail<T: Scalar>(x: usize, n: usize, p: T) -> T {
    if x == 0 {
        return T::one();
    }
    if x > n || p <= T::zero() {
        return T::zero();
    }
    if p >= T::one() {
        return T::one();
    }
    tail_sum(&log_binomial_coefficients(n), x..=n, p)
}

/// P(X ≤ x) for X ~ Binomial(n, p).
pub fn lower_tail<T: Scalar>(x: usize, n: usize, p: T) -> T {
    if x >= n || p <= T::zero() {
        return T::one();
    }
    if p >= T::one() {
        return T::zero();
    }
    tail_sum(&log_binomial_coefficients(n), 0..=x, p)
}

/// Bisection for `f(p) = target` on [0, 1] where `f` is monotone;
/// `increasing` gives the direction.
fn bisect<T: Scalar>(f: impl Fn(T) -> T, target: T, increasing: bool) -> T {
    let (mut lo, mut hi) = (T::zero(), T::one());
    let tol = T::solver_tolerance();
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = (lo + hi) / T::lit(2.0);
        if (f(mid) < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / T::lit(2.0)
}

/// Clopper–Pearson interval for `x` successes in `n` trials at confidence
/// `level`. Each bound solves its binomial tail equation by bisection.
pub fn clopper_pearson<T: Scalar>(x: usize, n: usize, level: T) -> Result<ExactInterval<T>> {
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::invalid(format!("confidence level {level} outside (0, 1)")));
    }
    if n == 0 || x > n {
        return Err(Error::invalid(format!("need 0 <= x <= n and n >= 1, got x={x}, n={n}")));
    }
    let half_alpha = (T::one() - level) / T::lit(2.0);
    let lc = log_binomial_coefficients::<T>(n);
    let low = if x == 0 {
        T::zero()
    } else {
        bisect(|p| tail_sum(&lc, x..=n, p), half_alpha, true)
    };
    let high = if x == n {
        T::one()
    } else {
        bisect(|p| tail_sum(&lc, 0..=x, p), half_alpha, false)
    };
    Ok(ExactInterval { low, high, level })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_successes_closed_form() {
        let ci = clopper_pearson(0, 10, 0.95f64).unwrap();
        assert_eq!(ci.low, 0.0);
        assert!((ci.high - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-10);
        assert!((ci.high - 0.3085).abs() < 1e-4);
    }

    #[test]
    fn all_successes_mirror() {
        let a = clopper_pearson(0, 13, 0.95f64).unwrap();
        let b = clopper_pearson(13, 13, 0.95f64).unwrap();
        assert_eq!(b.high, 1.0);
        assert!((b.low - (1.0 - a.high)).abs() < 1e-10);
    }

    #[test]
    fn half_of_ten() {
        let ci = clopper_pearson(5, 10, 0.95f64).unwrap();
        // Beta(5, 6) and Beta(6, 5) quantiles at 0.025 / 0.975.
        assert!((ci.low - 0.18708602844739855).abs() < 1e-9);
        assert!((ci.high - 0.8129139715526015).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(clopper_pearson(1, 0, 0.95f64).is_err());
        assert!(clopper_pearson(5, 4, 0.95f64).is_err());
        assert!(clopper_pearson(1, 4, 1.0f64).is_err());
        assert!(clopper_pearson(1, 4, 0.0f64).is_err());
    }

    #[test]
    fn tails_are_complementary() {
        for n in [1usize, 7, 40] {
            for x in 0..=n {
                let p = 0.37f64;
                let s = lower_tail(x, n, p) + if x < n { upper_tail(x + 1, n, p) } else { 0.0 };
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn large_n_does_not_underflow() {
        let ci = clopper_pearson(120, 2000, 0.95f64).unwrap();
        assert!(ci.low < 0.06 && ci.high > 0.06);
        assert!(ci.high - ci.low < 0.03);
    }
}
