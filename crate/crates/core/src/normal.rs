//! Standard normal CDF and quantile.

use crate::error::{contract, Result};
use crate::scalar::Real;

/// Complementary error function: a positive-term series for small
/// arguments, a continued fraction (modified Lentz) in the tails.
pub fn erfc<T: Real>(x: T) -> T {
    if x < T::zero() {
        return T::of(2.0) - erfc(-x);
    }
    if x < T::of(2.5) {
        return T::one() - erf_series(x);
    }
    // erfc(x) = exp(-x²)/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let tiny = T::of(1e-300).max(T::min_positive_value());
    let mut f = x;
    let mut c = x;
    let mut d = T::zero();
    for k in 1..300 {
        let a = T::of(k as f64 * 0.5);
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = T::one() / d;
        let delta = c * d;
        f *= delta;
        if (delta - T::one()).abs() < T::epsilon() {
            break;
        }
    }
    (-x * x).exp() / (T::PI().sqrt() * f)
}

/// erf(x) = 2/√π · exp(−x²) · Σ 2ⁿ x^(2n+1) / (1·3·…·(2n+1)).
fn erf_series<T: Real>(x: T) -> T {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        term *= T::of(2.0) * x2 / T::of_usize(2 * n + 1);
        sum += term;
        if term < sum * T::epsilon() {
            break;
        }
    }
    T::of(2.0) / T::PI().sqrt() * (-x2).exp() * sum
}

/// Φ(x).
pub fn norm_cdf<T: Real>(x: T) -> T {
    T::of(0.5) * erfc(-x / T::SQRT_2())
}

/// Φ⁻¹(p) for p ∈ (0, 1): a rational starting point refined by one Halley
/// step against [`norm_cdf`].
pub fn inv_norm_cdf<T: Real>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(contract(format!(
            "normal quantile needs p in (0,1), got {p}"
        )));
    }
    let pf = p.as_f64();
    let mut x = T::of(rational_quantile(pf));
    for _ in 0..2 {
        let e = norm_cdf(x) - p;
        let u = e * T::TAU().sqrt() * (x * x * T::of(0.5)).exp();
        x -= u / (T::one() + x * u * T::of(0.5));
    }
    Ok(x)
}

fn rational_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}
