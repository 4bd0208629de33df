//! Black-Scholes call pricing and implied-volatility inversion with zero
//! rates and dividends.
//!
//! The normal CDF goes through `erfc` (statrs, Boost-derived, relative error
//! near machine precision in both tails), so out-of-the-money prices keep
//! their relative accuracy far into the wings.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{domain, Error, Result};

/// A single European call quote. Prices and vols are both optional so the
/// same type can carry either side of the inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub strike: f64,
    pub maturity: f64,
    pub spot: f64,
    pub price: Option<f64>,
    pub implied_vol: Option<f64>,
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

fn check_inputs(spot: f64, strike: f64, maturity: f64) -> Result<()> {
    if !(spot > 0.0 && spot.is_finite()) {
        return Err(domain(format!("spot must be positive, got {spot}")));
    }
    if !(strike > 0.0 && strike.is_finite()) {
        return Err(domain(format!("strike must be positive, got {strike}")));
    }
    if !(maturity > 0.0 && maturity.is_finite()) {
        return Err(domain(format!("maturity must be positive, got {maturity}")));
    }
    Ok(())
}

/// Price of the out-of-the-money option (call for K >= S, put otherwise) at
/// total standard deviation `sd = sigma * sqrt(T)`.
fn otm_price(spot: f64, strike: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return 0.0;
    }
    let k = (strike / spot).ln();
    let d1 = -k / sd + 0.5 * sd;
    let d2 = d1 - sd;
    if strike >= spot {
        spot * norm_cdf(d1) - strike * norm_cdf(d2)
    } else {
        strike * norm_cdf(-d2) - spot * norm_cdf(-d1)
    }
}

/// Black-Scholes call value with zero rates.
pub fn bs_call_price(spot: f64, strike: f64, maturity: f64, sigma: f64) -> Result<f64> {
    check_inputs(spot, strike, maturity)?;
    if !(sigma >= 0.0) {
        return Err(domain(format!("volatility must be non-negative, got {sigma}")));
    }
    let intrinsic = (spot - strike).max(0.0);
    let otm = otm_price(spot, strike, sigma * maturity.sqrt());
    Ok(if strike >= spot { otm } else { otm + intrinsic })
}

/// Vega, dC/dsigma.
pub fn bs_vega(spot: f64, strike: f64, maturity: f64, sigma: f64) -> Result<f64> {
    check_inputs(spot, strike, maturity)?;
    let sd = sigma * maturity.sqrt();
    if sd <= 0.0 {
        return Ok(0.0);
    }
    let d1 = -(strike / spot).ln() / sd + 0.5 * sd;
    Ok(spot * norm_pdf(d1) * maturity.sqrt())
}

/// Initial guess from the Corrado-Miller approximation, falling back to a
/// moneyness-based guess when its discriminant goes negative.
fn initial_guess(spot: f64, strike: f64, maturity: f64, call: f64) -> f64 {
    let sqrt_t = maturity.sqrt();
    let diff = spot - strike;
    let a = call - 0.5 * diff;
    let disc = a * a - diff * diff / std::f64::consts::PI;
    let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
    let cm = if disc > 0.0 {
        sqrt_2pi / ((spot + strike) * sqrt_t) * (a + disc.sqrt())
    } else {
        f64::NAN
    };
    if cm.is_finite() && cm > 1e-4 {
        return cm.min(5.0);
    }
    let k = (strike / spot).ln().abs();
    // total sd for which an OTM quote sits ~2 sd away
    ((2.0 * k).sqrt() / sqrt_t).clamp(0.05, 3.0)
}

/// Inverts the call price for its Black-Scholes volatility.
///
/// Works on the out-of-the-money side through put-call parity and runs
/// Newton on `ln(price)` inside a bisection bracket. Prices on or outside
/// the static bounds `(max(S-K,0), S)` yield [`Error::NoSolution`].
pub fn bs_implied_vol(spot: f64, strike: f64, maturity: f64, call: f64) -> Result<f64> {
    check_inputs(spot, strike, maturity)?;
    let lower = (spot - strike).max(0.0);
    if !(call > lower && call < spot) {
        return Err(Error::NoSolution {
            price: call,
            lower,
            upper: spot,
        });
    }
    // OTM target through parity; a time value lost in rounding has no inverse
    let target = if strike >= spot { call } else { call - (spot - strike) };
    if !(target > 0.0) || (strike < spot && target <= 4.0 * f64::EPSILON * spot) {
        return Err(Error::NoSolution {
            price: call,
            lower,
            upper: spot,
        });
    }
    let otm_cap = spot.min(strike);
    let sqrt_t = maturity.sqrt();
    let ln_target = target.ln();

    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while otm_price(spot, strike, hi * sqrt_t) < target {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::NoSolution {
                price: call,
                lower,
                upper: spot,
            });
        }
    }
    if target >= otm_cap {
        return Err(Error::NoSolution {
            price: call,
            lower,
            upper: spot,
        });
    }

    let mut sigma = initial_guess(spot, strike, maturity, call).clamp(lo + 1e-8, hi);
    for _ in 0..200 {
        let sd = sigma * sqrt_t;
        let p = otm_price(spot, strike, sd);
        if p < target {
            lo = sigma;
        } else {
            hi = sigma;
        }
        let resid = if p > 0.0 { p.ln() - ln_target } else { f64::NEG_INFINITY };
        let d1 = -(strike / spot).ln() / sd + 0.5 * sd;
        let vega = spot * norm_pdf(d1) * sqrt_t;
        let mut next = if resid.is_finite() && vega > 0.0 {
            sigma - resid * p / vega
        } else {
            f64::NAN
        };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - sigma).abs();
        sigma = next;
        if step <= 1e-15 * sigma.max(1e-300) || (resid.abs() < 1e-14 && step < 1e-12) {
            break;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Simpson integration of the discounted payoff against the lognormal
    /// density in the standard-normal variable.
    fn call_by_quadrature(spot: f64, strike: f64, t: f64, sigma: f64) -> f64 {
        let sd = sigma * t.sqrt();
        let n = 200_000;
        let (a, b) = (-12.0_f64, 12.0_f64);
        let h = (b - a) / n as f64;
        let f = |z: f64| {
            let st = spot * (-0.5 * sd * sd + sd * z).exp();
            (st - strike).max(0.0) * norm_pdf(z)
        };
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn zero_vol_is_intrinsic() {
        assert_eq!(bs_call_price(1.0, 1.2, 0.5, 0.0).unwrap(), 0.0);
        assert_eq!(bs_call_price(1.0, 0.8, 0.5, 0.0).unwrap(), 1.0 - 0.8);
    }

    #[test]
    fn atm_value_matches_quadrature() {
        let oracle = call_by_quadrature(1.0, 1.0, 1.0, 0.2);
        assert!((oracle - 0.0796557).abs() < 1e-7, "oracle {oracle}");
        let p = bs_call_price(1.0, 1.0, 1.0, 0.2).unwrap();
        assert!((p - oracle).abs() < 1e-9, "{p} vs {oracle}");
    }

    #[test]
    fn deep_itm_within_bounds() {
        let p = bs_call_price(1.0, 0.5, 1.0, 0.2).unwrap();
        assert!(p > 0.5 && p < 1.0);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(bs_call_price(0.0, 1.0, 1.0, 0.2), Err(Error::Domain(_))));
        assert!(matches!(bs_call_price(1.0, -1.0, 1.0, 0.2), Err(Error::Domain(_))));
        assert!(matches!(bs_call_price(1.0, 1.0, 0.0, 0.2), Err(Error::Domain(_))));
    }

    #[test]
    fn implied_vol_round_trip_and_oracle() {
        let c = bs_call_price(1.0, 1.1, 0.25, 0.35).unwrap();
        let iv = bs_implied_vol(1.0, 1.1, 0.25, c).unwrap();
        assert!((iv - 0.35).abs() < 1e-8);
        let iv = bs_implied_vol(1.0, 1.0, 1.0, 0.0796557).unwrap();
        assert!((iv - 0.2).abs() < 1e-5);
    }

    #[test]
    fn implied_vol_rejects_bounds() {
        assert!(matches!(
            bs_implied_vol(1.0, 1.2, 0.5, 0.0),
            Err(Error::NoSolution { .. })
        ));
        assert!(matches!(
            bs_implied_vol(1.0, 0.8, 0.5, 0.2),
            Err(Error::NoSolution { .. })
        ));
        assert!(matches!(
            bs_implied_vol(1.0, 0.8, 0.5, 1.0),
            Err(Error::NoSolution { .. })
        ));
    }

    #[test]
    fn implied_vol_meets_price_tolerance() {
        for &(k, t, s) in &[(0.5, 2.0, 0.6), (1.3, 0.01, 0.15), (0.97, 0.003, 0.4)] {
            let c = bs_call_price(1.0, k, t, s).unwrap();
            let iv = bs_implied_vol(1.0, k, t, c).unwrap();
            let back = bs_call_price(1.0, k, t, iv).unwrap();
            assert!((back - c).abs() < 1e-10, "k={k} t={t}");
        }
    }

    #[test]
    fn convex_decreasing_in_strike() {
        let (t, s) = (0.7, 0.25);
        let ks = [0.8, 0.9, 1.05];
        let c: Vec<f64> = ks.iter().map(|&k| bs_call_price(1.0, k, t, s).unwrap()).collect();
        assert!(c[0] > c[1] && c[1] > c[2]);
        let fly = (ks[2] - ks[1]) * c[0] - (ks[2] - ks[0]) * c[1] + (ks[1] - ks[0]) * c[2];
        assert!(fly > 0.0);
    }

    proptest! {
        #[test]
        fn price_nondecreasing_in_vol(k in 0.3f64..2.5, t in 0.003f64..2.5, s in 0.01f64..2.0, ds in 0.0f64..0.5) {
            let a = bs_call_price(1.0, k, t, s).unwrap();
            let b = bs_call_price(1.0, k, t, s + ds).unwrap();
            prop_assert!(b >= a);
        }

        #[test]
        fn round_trip(logm in -1.0f64..1.0, t in 0.003f64..2.5, s in 0.01f64..2.0) {
            let k = logm.exp();
            let c = bs_call_price(1.0, k, t, s).unwrap();
            let intrinsic = (1.0 - k).max(0.0);
            // time value must be representable for the inversion to be meaningful
            prop_assume!(c - intrinsic > 1e-280 && c - intrinsic > 1e-14 * c);
            let iv = bs_implied_vol(1.0, k, t, c).unwrap();
            let back = bs_call_price(1.0, k, t, iv).unwrap();
            prop_assert!(((back - c) / c).abs() < 1e-9, "c={c} back={back} iv={iv}");
        }
    }
}
