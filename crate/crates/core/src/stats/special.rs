//! Complementary error function and the one-degree-of-freedom χ² survival
//! function.
//!
//! `erfc(z)` uses two expansions:
//! * `z < 2`: `erf(z) = 2/√π · e^(-z²) · Σ 2ⁿ z^(2n+1) / (2n+1)!!`, whose terms
//!   are all positive, and `erfc = 1 - erf`.
//! * `z ≥ 2`: the Laplace continued fraction
//!   `erfc(z) = e^(-z²)/√π · 1/(z + ½/(z + 1/(z + 3⁄2/(z + …))))`,
//!   evaluated with the modified Lentz algorithm.
//!
//! Both branches reach relative error below 1e-13 in f64 on [0, 5], which
//! covers χ² statistics up to 50.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_TERMS: usize = 1000;

pub fn erfc<T: Scalar>(z: T) -> T {
    if z < T::zero() {
        return T::lit(2.0) - erfc(-z);
    }
    if z < T::lit(2.0) {
        T::one() - erf_series(z)
    } else {
        erfc_continued_fraction(z)
    }
}

fn erf_series<T: Scalar>(z: T) -> T {
    let z2 = z * z;
    let mut term = z;
    let mut sum = z;
    for n in 1..MAX_TERMS {
        term = term * T::lit(2.0) * z2 / T::from_count(2 * n + 1);
        sum = sum + term;
        if term <= sum * T::epsilon() {
            break;
        }
    }
    T::lit(2.0) / T::lit(std::f64::consts::PI).sqrt() * (-z2).exp() * sum
}

fn erfc_continued_fraction<T: Scalar>(z: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let mut f = z;
    let mut c = f;
    let mut d = T::zero();
    for n in 1..MAX_TERMS {
        let a = T::from_count(n) / T::lit(2.0);
        d = z + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = z + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        f = f * delta;
        if (delta - T::one()).abs() <= T::epsilon() {
            break;
        }
    }
    (-z * z).exp() / (T::lit(std::f64::consts::PI).sqrt() * f)
}

/// P(χ²₁ > x) = erfc(√(x/2)).
pub fn chisq1_sf<T: Scalar>(x: T) -> Result<T> {
    if x.is_nan() || x < T::zero() {
        return Err(Error::invalid(format!("χ² statistic {x} must be >= 0")));
    }
    Ok(erfc((x / T::lit(2.0)).sqrt()))
}
