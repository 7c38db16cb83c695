//! Standard normal CDF, density and quantile.

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Density `phi(x)`.
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Distribution function `Phi(x)`.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Quantile `Phi^{-1}(p)` by bisection on the distribution function.
pub fn quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile argument {p} outside (0,1)")));
    }
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let v = cdf(mid);
        if v == p {
            return Ok(mid);
        }
        if v < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Positive-term series `erf(x) = 2/sqrt(pi) e^{-x^2} sum 2^n x^{2n+1} / (2n+1)!!`.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term.abs() > 1e-18 * sum.abs() {
            n += 1.0;
            term *= 2.0 * x * x / (2.0 * n + 1.0);
            sum += term;
        }
        2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
    }

    fn cdf_oracle(x: f64) -> f64 {
        0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
    }

    fn quantile_oracle(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf_oracle(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn median_is_exact() {
        assert_eq!(cdf(0.0), 0.5);
        assert_eq!(quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn cdf_matches_series() {
        for i in -60..=60 {
            let x = i as f64 / 10.0;
            assert!((cdf(x) - cdf_oracle(x)).abs() < 1e-13, "{x}");
        }
    }

    #[test]
    fn quantile_reference_values() {
        let a = quantile(0.975).unwrap();
        let b = quantile(0.1).unwrap();
        assert!((a - 1.959964).abs() < 1e-6);
        assert!((b + 1.281552).abs() < 1e-6);
        assert!((a - quantile_oracle(0.975)).abs() < 1e-12);
        assert!((b - quantile_oracle(0.1)).abs() < 1e-12);
    }

    #[test]
    fn round_trip() {
        for k in 0..=200 {
            let p = 1e-8 + (1.0 - 2e-8) * k as f64 / 200.0;
            assert!((cdf(quantile(p).unwrap()) - p).abs() < 1e-10);
        }
        assert!(quantile(0.0).is_err() && quantile(1.0).is_err());
    }

    #[test]
    fn pdf_value() {
        assert!((pdf(0.0) - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-16);
    }
}
