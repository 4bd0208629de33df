//! Discrete static-arbitrage scan of call-price surfaces: positivity and
//! monotonicity in strike, butterflies, and calendar spreads at fixed strike.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsm::bs_call_price;
use crate::error::{domain, Result};
use crate::fvc::ForwardVarianceCurve;
use crate::gridgen::strike_band;
use crate::neuralnet::Network;
use crate::params::RHestonParams;
use crate::rheston::{FourierSmile, PricerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub dt: f64,
    pub dk: f64,
    /// Tolerance on the strict inequalities, in price units.
    pub eps: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            t_min: 2.0 / 365.0,
            t_max: 2.5,
            dt: 1.0 / 365.0,
            dk: 0.01,
            eps: 1e-9,
        }
    }
}

impl ScanConfig {
    /// Coarser lattice, dt = 7/365 and dK = 0.05.
    pub fn coarse() -> Self {
        ScanConfig {
            dt: 7.0 / 365.0,
            dk: 0.05,
            ..ScanConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dk > 0.0 && self.eps >= 0.0) {
            return Err(domain("dt and dK must be positive and eps non-negative"));
        }
        if !(self.t_min > 0.0 && self.t_min <= self.t_max) {
            return Err(domain("maturity range must satisfy 0 < t_min <= t_max"));
        }
        Ok(())
    }

    pub fn maturities(&self) -> Vec<f64> {
        let n = ((self.t_max - self.t_min) / self.dt + 1e-9).floor() as usize;
        (0..=n).map(|j| self.t_min + j as f64 * self.dt).collect()
    }

    /// Multiples of dK strictly inside the strike band at `t`.
    pub fn strikes(&self, t: f64) -> Vec<f64> {
        let (lo, hi) = strike_band(t);
        let first = (lo / self.dk).floor() as i64 + 1;
        let last = (hi / self.dk).ceil() as i64 - 1;
        (first..=last)
            .map(|m| m as f64 * self.dk)
            .filter(|&k| k > lo + 1e-12 && k < hi - 1e-12)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    VerticalPositive,
    VerticalMonotone,
    Butterfly,
    Calendar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Condition,
    pub maturities: Vec<f64>,
    pub strikes: Vec<f64>,
    /// Value of the quantity required to be positive.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub vertical_positive: usize,
    pub vertical_monotone: usize,
    pub butterfly: usize,
    pub calendar: usize,
}

impl ViolationCounts {
    pub fn total(&self) -> usize {
        self.vertical_positive + self.vertical_monotone + self.butterfly + self.calendar
    }

    fn add(&mut self, c: Condition) {
        match c {
            Condition::VerticalPositive => self.vertical_positive += 1,
            Condition::VerticalMonotone => self.vertical_monotone += 1,
            Condition::Butterfly => self.butterfly += 1,
            Condition::Calendar => self.calendar += 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub counts: ViolationCounts,
    /// Surface nodes (maturity, strike) priced.
    pub total_points: usize,
    pub butterflies_checked: usize,
    pub calendar_checked: usize,
    /// Calendar pairs dropped because the strike leaves the shorter band.
    pub calendar_skipped: usize,
    pub violations: Vec<Violation>,
    pub source: String,
}

impl ViolationReport {
    fn push(&mut self, v: Violation) {
        self.counts.add(v.condition);
        self.violations.push(v);
    }

    /// Concatenates `other` into `self`.
    pub fn merge(&mut self, other: ViolationReport) {
        self.total_points += other.total_points;
        self.butterflies_checked += other.butterflies_checked;
        self.calendar_checked += other.calendar_checked;
        self.calendar_skipped += other.calendar_skipped;
        for v in other.violations {
            self.push(v);
        }
    }
}

fn violated(value: f64, eps: f64) -> bool {
    !(value > -eps)
}

/// Strike conditions on one maturity slice (strikes increasing).
pub fn check_slice(t: f64, strikes: &[f64], prices: &[f64], eps: f64) -> ViolationReport {
    let mut rep = ViolationReport {
        total_points: strikes.len(),
        ..ViolationReport::default()
    };
    for (&k, &c) in strikes.iter().zip(prices) {
        if violated(c, eps) {
            rep.push(Violation {
                condition: Condition::VerticalPositive,
                maturities: vec![t],
                strikes: vec![k],
                value: c,
            });
        }
    }
    for i in 1..strikes.len() {
        let v = prices[i - 1] - prices[i];
        if violated(v, eps) {
            rep.push(Violation {
                condition: Condition::VerticalMonotone,
                maturities: vec![t],
                strikes: vec![strikes[i - 1], strikes[i]],
                value: v,
            });
        }
    }
    for i in 2..strikes.len() {
        let (k1, k2, k3) = (strikes[i - 2], strikes[i - 1], strikes[i]);
        let v = (k3 - k2) * prices[i - 2] - (k3 - k1) * prices[i - 1] + (k2 - k1) * prices[i];
        rep.butterflies_checked += 1;
        if violated(v, eps) {
            rep.push(Violation {
                condition: Condition::Butterfly,
                maturities: vec![t],
                strikes: vec![k1, k2, k3],
                value: v,
            });
        }
    }
    rep
}

/// Calendar condition C(t2, K) > C(t1, K) at shared strikes, t1 < t2.
pub fn check_calendar(t1: f64, t2: f64, strikes: &[f64], c1: &[f64], c2: &[f64], eps: f64) -> ViolationReport {
    let mut rep = ViolationReport::default();
    for ((&k, &a), &b) in strikes.iter().zip(c1).zip(c2) {
        rep.calendar_checked += 1;
        if violated(b - a, eps) {
            rep.push(Violation {
                condition: Condition::Calendar,
                maturities: vec![t1, t2],
                strikes: vec![k],
                value: b - a,
            });
        }
    }
    rep
}

/// Where scanned call prices come from.
pub enum PriceSource<'a> {
    Network { net: &'a Network, theta: Vec<f64> },
    RHeston {
        params: RHestonParams,
        curve: ForwardVarianceCurve,
        pricer: PricerConfig,
    },
    BlackScholes { vol: f64 },
}

impl PriceSource<'_> {
    pub fn describe(&self) -> String {
        match self {
            PriceSource::Network { theta, .. } => format!("network at theta = {theta:?}"),
            PriceSource::RHeston { params, curve, .. } => {
                format!("rHeston pricer at {:?}, curve features {:?}", params.to_vec(), curve.features())
            }
            PriceSource::BlackScholes { vol } => format!("Black-Scholes, vol {vol}"),
        }
    }

    /// Call prices (S0 = 1) at one maturity.
    pub fn prices(&self, t: f64, strikes: &[f64]) -> Result<Vec<f64>> {
        match self {
            PriceSource::Network { net, theta } => strikes
                .iter()
                .map(|&k| {
                    let mut x = theta.clone();
                    x.push(t);
                    x.push(k);
                    bs_call_price(1.0, k, t, net.forward(&x)?.max(0.0))
                })
                .collect(),
            PriceSource::RHeston { params, curve, pricer } => {
                Ok(FourierSmile::build(params, curve, t, pricer)?.call_prices(strikes))
            }
            PriceSource::BlackScholes { vol } => strikes.iter().map(|&k| bs_call_price(1.0, k, t, *vol)).collect(),
        }
    }
}

/// Scans the lattice of `cfg`. Each maturity slice is priced once on the
/// union of its own band strikes and the strikes of the previous band.
pub fn scan(cfg: &ScanConfig, source: &PriceSource) -> Result<ViolationReport> {
    cfg.validate()?;
    let mats = cfg.maturities();
    let slices: Vec<(Vec<f64>, Vec<f64>)> = mats
        .par_iter()
        .map(|&t| {
            let k = cfg.strikes(t);
            let c = if k.is_empty() { Vec::new() } else { source.prices(t, &k)? };
            Ok((k, c))
        })
        .collect::<Result<_>>()?;
    let mut rep = ViolationReport {
        source: source.describe(),
        ..ViolationReport::default()
    };
    for (j, (k, c)) in slices.iter().enumerate() {
        rep.merge(check_slice(mats[j], k, c, cfg.eps));
        if j == 0 {
            continue;
        }
        let (k_prev, c_prev) = &slices[j - 1];
        // strikes of the longer slice that also lie in the shorter band
        let mut shared = Vec::new();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (i, &kk) in k.iter().enumerate() {
            match k_prev.iter().position(|&q| (q - kk).abs() < 1e-9 * cfg.dk) {
                Some(p) => {
                    shared.push(kk);
                    a.push(c_prev[p]);
                    b.push(c[i]);
                }
                None => rep.calendar_skipped += 1,
            }
        }
        rep.merge(check_calendar(mats[j - 1], mats[j], &shared, &a, &b, cfg.eps));
    }
    Ok(rep)
}
