//! Model identifiers and parameter boxes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fvc::uniform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    RHeston,
    RBergomi,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::RHeston => "rheston",
            ModelKind::RBergomi => "rbergomi",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rheston" => Ok(ModelKind::RHeston),
            "rbergomi" => Ok(ModelKind::RBergomi),
            other => Err(domain(format!("unknown model '{other}'"))),
        }
    }

    pub fn param_names(self) -> [&'static str; 3] {
        match self {
            ModelKind::RHeston => ["H", "nu", "rho"],
            ModelKind::RBergomi => ["H", "eta", "rho"],
        }
    }

    /// Sampling and calibration box.
    pub fn default_box(self) -> ParamBox {
        match self {
            ModelKind::RHeston => ParamBox::new(vec![(0.01, 0.25), (0.15, 0.65), (-0.95, -0.50)]),
            ModelKind::RBergomi => ParamBox::new(vec![(0.025, 0.50), (0.50, 4.00), (-0.95, -0.10)]),
        }
    }
}

/// Axis-aligned box of parameter ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub ranges: Vec<(f64, f64)>,
}

impl ParamBox {
    pub fn new(ranges: Vec<(f64, f64)>) -> Self {
        ParamBox { ranges }
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.ranges)
                .all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }

    pub fn project(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.ranges) {
            *v = v.clamp(lo, hi);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.ranges.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.ranges.iter().map(|&r| uniform(rng, r)).collect()
    }

    /// Box shrunk towards its centre by `frac` of each width on both sides.
    pub fn interior(&self, frac: f64) -> ParamBox {
        ParamBox::new(
            self.ranges
                .iter()
                .map(|&(lo, hi)| (lo + frac * (hi - lo), hi - frac * (hi - lo)))
                .collect(),
        )
    }

    pub fn concat(&self, other: &ParamBox) -> ParamBox {
        let mut ranges = self.ranges.clone();
        ranges.extend_from_slice(&other.ranges);
        ParamBox::new(ranges)
    }
}

/// rHeston parameters: roughness, vol-of-vol, spot-vol correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RHestonParams {
    pub h: f64,
    pub nu: f64,
    pub rho: f64,
}

impl RHestonParams {
    pub fn new(h: f64, nu: f64, rho: f64) -> Result<Self> {
        let p = RHestonParams { h, nu, rho };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h <= 0.5) {
            return Err(domain(format!("H must lie in (0, 0.5], got {}", self.h)));
        }
        if !(self.nu > 0.0) {
            return Err(domain(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(domain(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        Ok(())
    }

    /// Fractional order of the Riccati equation.
    pub fn alpha(&self) -> f64 {
        self.h + 0.5
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.h, self.nu, self.rho]
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() != 3 {
            return Err(Error::Dimension { expected: 3, got: x.len() });
        }
        RHestonParams::new(x[0], x[1], x[2])
    }
}

/// rBergomi parameters: roughness, vol-of-vol, spot-vol correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RBergomiParams {
    pub h: f64,
    pub eta: f64,
    pub rho: f64,
}

impl RBergomiParams {
    pub fn new(h: f64, eta: f64, rho: f64) -> Result<Self> {
        let p = RBergomiParams { h, eta, rho };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h <= 0.5) {
            return Err(domain(format!("H must lie in (0, 0.5], got {}", self.h)));
        }
        if !(self.eta > 0.0) {
            return Err(domain(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(domain(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        Ok(())
    }

    /// Volterra kernel order, H + 1/2.
    pub fn alpha(&self) -> f64 {
        self.h + 0.5
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.h, self.eta, self.rho]
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() != 3 {
            return Err(Error::Dimension { expected: 3, got: x.len() });
        }
        RBergomiParams::new(x[0], x[1], x[2])
    }
}
