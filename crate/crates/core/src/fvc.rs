//! Time-zero forward variance curves.
//!
//! Three shapes are supported: a flat level, a right-continuous step curve
//! and the five-parameter exponential form
//!
//! ```text
//! xi0(t) = b0 + b1 exp(-t/tau1) + b2 (t/tau2) exp(-t/tau2)
//! ```
//!
//! All integrals needed by the pricers are available in closed form.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Horizon over which sampled parametric curves must stay positive.
pub const POSITIVITY_HORIZON: f64 = 2.5;
/// Equally spaced points of the positivity check grid.
pub const POSITIVITY_GRID: usize = 2000;
/// Consecutive rejections after which a sampler gives up.
pub const MAX_REJECTIONS: usize = 10_000;

/// Jump times of the step curve used for training: the adaptive-grid
/// maturities without the last one, which gives eight levels.
pub const PIECEWISE_JUMP_TIMES: [f64; 7] = [0.01, 0.025, 0.1, 0.3, 0.6, 1.0, 1.5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParametricCurve {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub tau1: f64,
    pub tau2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ForwardVarianceCurve {
    Flat {
        level: f64,
    },
    PiecewiseConstant {
        jump_times: Vec<f64>,
        levels: Vec<f64>,
    },
    Parametric(ParametricCurve),
}

/// Which of the three shapes a dataset or network uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveVariant {
    Flat,
    PiecewiseConstant,
    Parametric,
}

impl CurveVariant {
    pub fn name(self) -> &'static str {
        match self {
            CurveVariant::Flat => "flat",
            CurveVariant::PiecewiseConstant => "piecewise_constant",
            CurveVariant::Parametric => "parametric",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(CurveVariant::Flat),
            "piecewise" | "piecewise_constant" | "piecewise-constant" => {
                Ok(CurveVariant::PiecewiseConstant)
            }
            "parametric" => Ok(CurveVariant::Parametric),
            other => Err(domain(format!("unknown curve variant '{other}'"))),
        }
    }

    /// Column names of the curve features, in feature order.
    pub fn feature_names(self) -> Vec<String> {
        match self {
            CurveVariant::Flat => vec!["xi".into()],
            CurveVariant::PiecewiseConstant => (1..=PIECEWISE_JUMP_TIMES.len() + 1)
                .map(|i| format!("xi{i}"))
                .collect(),
            CurveVariant::Parametric => ["beta0", "beta1", "beta2", "tau1", "tau2"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    pub fn n_features(self) -> usize {
        match self {
            CurveVariant::Flat => 1,
            CurveVariant::PiecewiseConstant => PIECEWISE_JUMP_TIMES.len() + 1,
            CurveVariant::Parametric => 5,
        }
    }
}

impl ParametricCurve {
    pub fn value(&self, t: f64) -> f64 {
        self.beta0
            + self.beta1 * (-t / self.tau1).exp()
            + self.beta2 * (t / self.tau2) * (-t / self.tau2).exp()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        -self.beta1 / self.tau1 * (-t / self.tau1).exp()
            + self.beta2 / self.tau2 * (1.0 - t / self.tau2) * (-t / self.tau2).exp()
    }

    /// Antiderivative of xi0 vanishing at 0.
    fn primitive(&self, t: f64) -> f64 {
        let (b0, b1, b2, t1, t2) = (self.beta0, self.beta1, self.beta2, self.tau1, self.tau2);
        b0 * t + b1 * t1 * (-(-t / t1).exp_m1()) + b2 * (t2 - (t + t2) * (-t / t2).exp())
    }

    /// Antiderivative of t * xi0(t) vanishing at 0.
    fn first_moment_primitive(&self, t: f64) -> f64 {
        let (b0, b1, b2, t1, t2) = (self.beta0, self.beta1, self.beta2, self.tau1, self.tau2);
        let e1 = (-t / t1).exp();
        let e2 = (-t / t2).exp();
        0.5 * b0 * t * t
            + b1 * t1 * (t1 - (t + t1) * e1)
            + b2 * (2.0 * t2 * t2 - e2 * (t * t + 2.0 * t2 * t + 2.0 * t2 * t2))
    }

    /// Stationary points of xi0 on (0, inf).
    ///
    /// Setting the derivative to zero gives `g(t) = b1/tau1` with
    /// `g(t) = (b2/tau2)(1 - t/tau2) exp(t (1/tau1 - 1/tau2))`, and `g` has a
    /// single critical point, so the roots are bracketed on at most two
    /// monotone branches.
    pub fn stationary_points(&self) -> Vec<f64> {
        let level = self.beta1 / self.tau1;
        let c = self.beta2 / self.tau2;
        let lambda = 1.0 / self.tau1 - 1.0 / self.tau2;
        let g = |t: f64| c * (1.0 - t / self.tau2) * (lambda * t).exp() - level;
        if c == 0.0 {
            return Vec::new();
        }
        // critical point of g
        let t_star = if lambda != 0.0 { self.tau2 - 1.0 / lambda } else { f64::INFINITY };
        // far end: where g has settled to its asymptotic sign
        let far = 60.0 * self.tau1.max(self.tau2) + t_star.max(0.0).min(1e6);
        let mut breaks = vec![0.0];
        if t_star > 0.0 && t_star.is_finite() && t_star < far {
            breaks.push(t_star);
        }
        breaks.push(far);
        let mut roots = Vec::new();
        let last = breaks.len() - 2;
        for (i, w) in breaks.windows(2).enumerate() {
            let (mut a, mut b) = (w[0], w[1]);
            let ga = g(a);
            let mut gb = g(b);
            // g is monotone past the last break, so keep doubling until it
            // crosses or the far end runs out of range
            if i == last {
                while ga.signum() == gb.signum() && gb != 0.0 && b < 1e8 {
                    b *= 2.0;
                    gb = g(b);
                }
            }
            if ga == 0.0 && a > 0.0 {
                roots.push(a);
                continue;
            }
            if ga.signum() == gb.signum() || gb == 0.0 {
                continue;
            }
            let mut fa = ga;
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = g(m);
                if fm == 0.0 || (b - a) < 1e-15 * m.max(1e-300) {
                    a = m;
                    b = m;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
        roots.retain(|&t| t > 0.0);
        roots
    }
}

impl ForwardVarianceCurve {
    pub fn flat(level: f64) -> Self {
        ForwardVarianceCurve::Flat { level }
    }

    pub fn piecewise(jump_times: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if levels.len() != jump_times.len() + 1 {
            return Err(Error::Dimension {
                expected: jump_times.len() + 1,
                got: levels.len(),
            });
        }
        if jump_times.windows(2).any(|w| !(w[0] < w[1])) || jump_times.iter().any(|&t| !(t > 0.0))
        {
            return Err(domain("jump times must be positive and strictly increasing"));
        }
        Ok(ForwardVarianceCurve::PiecewiseConstant { jump_times, levels })
    }

    pub fn parametric(beta0: f64, beta1: f64, beta2: f64, tau1: f64, tau2: f64) -> Self {
        ForwardVarianceCurve::Parametric(ParametricCurve {
            beta0,
            beta1,
            beta2,
            tau1,
            tau2,
        })
    }

    pub fn variant(&self) -> CurveVariant {
        match self {
            ForwardVarianceCurve::Flat { .. } => CurveVariant::Flat,
            ForwardVarianceCurve::PiecewiseConstant { .. } => CurveVariant::PiecewiseConstant,
            ForwardVarianceCurve::Parametric(_) => CurveVariant::Parametric,
        }
    }

    /// Checks the structural invariants of the curve.
    pub fn validate(&self) -> Result<()> {
        match self {
            ForwardVarianceCurve::Flat { level } => {
                if !(*level > 0.0 && level.is_finite()) {
                    return Err(domain(format!("flat level must be positive, got {level}")));
                }
            }
            ForwardVarianceCurve::PiecewiseConstant { jump_times, levels } => {
                if levels.len() != jump_times.len() + 1 {
                    return Err(Error::Dimension {
                        expected: jump_times.len() + 1,
                        got: levels.len(),
                    });
                }
                if levels.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                    return Err(domain("piecewise levels must be positive"));
                }
            }
            ForwardVarianceCurve::Parametric(p) => {
                if !(p.beta0 > 0.0 && p.beta0 + p.beta1 > 0.0) {
                    return Err(domain("parametric curve needs beta0 > 0 and beta0 + beta1 > 0"));
                }
                if !(p.tau1 > 0.0 && p.tau2 > 0.0) {
                    return Err(domain("parametric time scales must be positive"));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, t: f64) -> f64 {
        match self {
            ForwardVarianceCurve::Flat { level } => *level,
            ForwardVarianceCurve::PiecewiseConstant { jump_times, levels } => {
                // right-continuous: the level switches exactly at the jump time
                let idx = jump_times.partition_point(|&j| j <= t);
                levels[idx]
            }
            ForwardVarianceCurve::Parametric(p) => p.value(t),
        }
    }

    /// xi0(t).
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(domain(format!("time must be non-negative, got {t}")));
        }
        Ok(self.value_unchecked(t))
    }

    /// Integral of xi0 over [0, t], for t >= 0.
    pub(crate) fn primitive(&self, t: f64) -> f64 {
        match self {
            ForwardVarianceCurve::Flat { level } => level * t,
            ForwardVarianceCurve::PiecewiseConstant { jump_times, levels } => {
                let mut acc = 0.0;
                let mut start = 0.0;
                for (i, &level) in levels.iter().enumerate() {
                    let end = jump_times.get(i).copied().unwrap_or(f64::INFINITY);
                    if t <= start {
                        break;
                    }
                    acc += level * (t.min(end) - start);
                    start = end;
                }
                acc
            }
            ForwardVarianceCurve::Parametric(p) => p.primitive(t),
        }
    }

    /// Integral of t * xi0(t) over [0, t].
    pub(crate) fn first_moment_primitive(&self, t: f64) -> f64 {
        match self {
            ForwardVarianceCurve::Flat { level } => 0.5 * level * t * t,
            ForwardVarianceCurve::PiecewiseConstant { jump_times, levels } => {
                let mut acc = 0.0;
                let mut start = 0.0;
                for (i, &level) in levels.iter().enumerate() {
                    let end = jump_times.get(i).copied().unwrap_or(f64::INFINITY);
                    if t <= start {
                        break;
                    }
                    let e = t.min(end);
                    acc += 0.5 * level * (e * e - start * start);
                    start = end;
                }
                acc
            }
            ForwardVarianceCurve::Parametric(p) => p.first_moment_primitive(t),
        }
    }

    /// Total variance over [0, T].
    pub fn integrated_variance(&self, maturity: f64) -> Result<f64> {
        if !(maturity > 0.0) {
            return Err(domain(format!("maturity must be positive, got {maturity}")));
        }
        Ok(self.primitive(maturity))
    }

    /// Integral of xi0 over [a, b].
    pub fn integrated_variance_between(&self, a: f64, b: f64) -> Result<f64> {
        if !(a >= 0.0 && b >= a) {
            return Err(domain(format!("need 0 <= a <= b, got [{a}, {b}]")));
        }
        Ok(self.primitive(b) - self.primitive(a))
    }

    /// True iff xi0 is strictly positive on the check grid of `horizon`:
    /// 2000 equally spaced points on (0, horizon], the stationary points of
    /// the parametric form and, for that form, the t -> 0 limit.
    pub fn is_positive(&self, horizon: f64) -> bool {
        match self {
            ForwardVarianceCurve::Flat { level } => *level > 0.0,
            ForwardVarianceCurve::PiecewiseConstant { levels, .. } => levels.iter().all(|&l| l > 0.0),
            ForwardVarianceCurve::Parametric(p) => {
                if !(horizon > 0.0) || !(p.beta0 + p.beta1 > 0.0) {
                    return false;
                }
                let grid_ok = (1..=POSITIVITY_GRID)
                    .map(|i| horizon * i as f64 / POSITIVITY_GRID as f64)
                    .all(|t| p.value(t) > 0.0);
                grid_ok
                    && p
                        .stationary_points()
                        .into_iter()
                        .filter(|&t| t <= horizon)
                        .all(|t| p.value(t) > 0.0)
            }
        }
    }

    /// Feature vector fed to the network (see [`CurveVariant::feature_names`]).
    pub fn features(&self) -> Vec<f64> {
        match self {
            ForwardVarianceCurve::Flat { level } => vec![*level],
            ForwardVarianceCurve::PiecewiseConstant { levels, .. } => levels.clone(),
            ForwardVarianceCurve::Parametric(p) => vec![p.beta0, p.beta1, p.beta2, p.tau1, p.tau2],
        }
    }

    pub fn from_features(variant: CurveVariant, f: &[f64]) -> Result<Self> {
        if f.len() != variant.n_features() {
            return Err(Error::Dimension {
                expected: variant.n_features(),
                got: f.len(),
            });
        }
        Ok(match variant {
            CurveVariant::Flat => ForwardVarianceCurve::flat(f[0]),
            CurveVariant::PiecewiseConstant => ForwardVarianceCurve::PiecewiseConstant {
                jump_times: PIECEWISE_JUMP_TIMES.to_vec(),
                levels: f.to_vec(),
            },
            CurveVariant::Parametric => ForwardVarianceCurve::parametric(f[0], f[1], f[2], f[3], f[4]),
        })
    }
}

/// Uniform box for the parametric curve; `sum01` bounds `beta0 + beta1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParametricBox {
    pub beta0: (f64, f64),
    pub sum01: (f64, f64),
    pub beta2: (f64, f64),
    pub tau1: (f64, f64),
    pub tau2: (f64, f64),
}

impl Default for ParametricBox {
    fn default() -> Self {
        ParametricBox {
            beta0: (0.025, 0.160),
            sum01: (0.005, 0.130),
            beta2: (-0.150, 0.250),
            tau1: (0.001, 1.350),
            tau2: (0.001, 0.125),
        }
    }
}

impl ParametricBox {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("beta0", self.beta0),
            ("beta0+beta1", self.sum01),
            ("beta2", self.beta2),
            ("tau1", self.tau1),
            ("tau2", self.tau2),
        ] {
            if !(lo <= hi) {
                return Err(domain(format!("empty range for {name}: [{lo}, {hi}]")));
            }
        }
        if !(self.tau1.0 > 0.0 && self.tau2.0 > 0.0 && self.beta0.0 > 0.0) {
            return Err(domain("tau ranges and beta0 must be positive"));
        }
        Ok(())
    }

    /// Feature-space bounds (beta0, beta1, beta2, tau1, tau2); beta1 spans
    /// every difference the sampler can produce.
    pub fn feature_bounds(&self) -> Vec<(f64, f64)> {
        vec![
            self.beta0,
            (self.sum01.0 - self.beta0.1, self.sum01.1 - self.beta0.0),
            self.beta2,
            self.tau1,
            self.tau2,
        ]
    }
}

/// Curve sampler: level box for flat and step curves, rejection sampling
/// of positive parametric curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FvcSampler {
    pub bounds: ParametricBox,
    pub level: (f64, f64),
    pub horizon: Option<f64>,
    /// Total draws and rejections so far.
    #[serde(default)]
    pub draws: u64,
    #[serde(default)]
    pub rejections: u64,
}

impl Default for FvcSampler {
    fn default() -> Self {
        FvcSampler::new(ParametricBox::default())
    }
}

impl FvcSampler {
    pub fn new(bounds: ParametricBox) -> Self {
        FvcSampler {
            bounds,
            level: LEVEL_BOX,
            horizon: None,
            draws: 0,
            rejections: 0,
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.draws == 0 {
            return f64::NAN;
        }
        (self.draws - self.rejections) as f64 / self.draws as f64
    }

    /// Uniform draw on the box, resampled until the curve passes
    /// [`ForwardVarianceCurve::is_positive`] on the horizon.
    pub fn sample_parametric<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<ForwardVarianceCurve> {
        self.bounds.validate()?;
        let horizon = self.horizon.unwrap_or(POSITIVITY_HORIZON);
        let b = self.bounds;
        for _ in 0..MAX_REJECTIONS {
            let beta0 = uniform(rng, b.beta0);
            let sum01 = uniform(rng, b.sum01);
            let beta2 = uniform(rng, b.beta2);
            let tau1 = uniform(rng, b.tau1);
            let tau2 = uniform(rng, b.tau2);
            let curve = ForwardVarianceCurve::parametric(beta0, sum01 - beta0, beta2, tau1, tau2);
            self.draws += 1;
            if curve.is_positive(horizon) {
                return Ok(curve);
            }
            self.rejections += 1;
        }
        Err(Error::SamplerExhausted(MAX_REJECTIONS))
    }
}

pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        lo + (hi - lo) * rng.random::<f64>()
    }
}

/// Box for flat and step curves: each level uniform on `level`.
pub const LEVEL_BOX: (f64, f64) = (0.01, 0.16);

/// Draws a curve of the requested variant from the training boxes.
pub fn sample_curve<R: Rng + ?Sized>(
    variant: CurveVariant,
    sampler: &mut FvcSampler,
    rng: &mut R,
) -> Result<ForwardVarianceCurve> {
    match variant {
        CurveVariant::Flat => Ok(ForwardVarianceCurve::flat(uniform(rng, sampler.level))),
        CurveVariant::PiecewiseConstant => Ok(ForwardVarianceCurve::PiecewiseConstant {
            jump_times: PIECEWISE_JUMP_TIMES.to_vec(),
            levels: (0..=PIECEWISE_JUMP_TIMES.len())
                .map(|_| uniform(rng, sampler.level))
                .collect(),
        }),
        CurveVariant::Parametric => sampler.sample_parametric(rng),
    }
}

/// Feature-space bounds of each curve variant.
pub fn curve_feature_bounds(variant: CurveVariant) -> Vec<(f64, f64)> {
    match variant {
        CurveVariant::Flat => vec![LEVEL_BOX],
        CurveVariant::PiecewiseConstant => vec![LEVEL_BOX; PIECEWISE_JUMP_TIMES.len() + 1],
        CurveVariant::Parametric => ParametricBox::default().feature_bounds(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_min(p: &ParametricCurve, horizon: f64, n: usize) -> f64 {
        (1..=n)
            .map(|i| p.value(horizon * i as f64 / n as f64))
            .fold(f64::INFINITY, f64::min)
    }

    /// Sign changes of the derivative on a dense grid.
    fn dense_stationary_count(p: &ParametricCurve, horizon: f64, n: usize) -> usize {
        let mut count = 0;
        let mut prev = p.derivative(horizon / n as f64 * 0.5);
        for i in 1..=n {
            let d = p.derivative(horizon * i as f64 / n as f64);
            if d != 0.0 && prev != 0.0 && d.signum() != prev.signum() {
                count += 1;
            }
            if d != 0.0 {
                prev = d;
            }
        }
        count
    }

    #[test]
    fn late_root_with_close_time_scales() {
        // tau1 close to tau2: the second crossing sits far beyond both scales
        let p = ParametricCurve {
            beta0: 0.1448,
            beta1: -0.02355,
            beta2: 0.06741,
            tau1: 0.10473,
            tau2: 0.09852,
        };
        let roots = p.stationary_points();
        assert_eq!(roots.len(), 2, "{roots:?}");
        assert_eq!(dense_stationary_count(&p, 20.0, 400_000), 2);
        assert!(roots[1] > 5.0);
        assert!(p.derivative(roots[1] * 0.99).signum() != p.derivative(roots[1] * 1.01).signum());
    }

    #[test]
    fn constant_limit() {
        let c = ForwardVarianceCurve::parametric(0.04, 0.0, 0.0, 0.3, 0.1);
        for &t in &[0.0, 0.01, 1.0, 7.0] {
            assert_eq!(c.evaluate(t).unwrap(), 0.04);
        }
    }

    #[test]
    fn short_end_limit() {
        let c = ForwardVarianceCurve::parametric(0.05, -0.02, 0.1, 0.3, 0.1);
        assert!((c.evaluate(0.0).unwrap() - 0.03).abs() < 1e-15);
    }

    #[test]
    fn direct_substitution() {
        let c = ForwardVarianceCurve::parametric(0.04, 0.0, 0.25, 1.0, 0.1);
        let v = c.evaluate(0.1).unwrap();
        assert!((v - 0.131970).abs() < 1e-6, "{v}");
    }

    #[test]
    fn negative_time_rejected() {
        assert!(ForwardVarianceCurve::flat(0.04).evaluate(-1e-3).is_err());
        assert!(ForwardVarianceCurve::flat(0.04).integrated_variance(0.0).is_err());
    }

    #[test]
    fn piecewise_is_right_continuous() {
        let c = ForwardVarianceCurve::piecewise(vec![1.0], vec![0.04, 0.09]).unwrap();
        assert_eq!(c.evaluate(0.999).unwrap(), 0.04);
        assert_eq!(c.evaluate(1.0).unwrap(), 0.09);
        assert!((c.integrated_variance(2.0).unwrap() - 0.13).abs() < 1e-15);
    }

    #[test]
    fn integrated_variance_examples() {
        let flat = ForwardVarianceCurve::flat(0.04);
        assert!((flat.integrated_variance(2.0).unwrap() - 0.08).abs() < 1e-15);
        let p = ForwardVarianceCurve::parametric(0.04, 0.02, 0.0, 0.5, 0.1);
        let expected = 0.04 + 0.02 * 0.5 * (1.0 - (-2.0f64).exp());
        assert!((p.integrated_variance(1.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.048647).abs() < 1e-6);
    }

    #[test]
    fn positivity_examples() {
        assert!(ForwardVarianceCurve::flat(0.04).is_positive(2.5));
        let neg = ForwardVarianceCurve::parametric(0.025, -0.02, -0.150, 1.35, 0.125);
        let pos = ForwardVarianceCurve::parametric(0.16, -0.03, 0.25, 0.5, 0.1);
        // dense-scan oracle
        if let (ForwardVarianceCurve::Parametric(n), ForwardVarianceCurve::Parametric(p)) = (&neg, &pos) {
            assert!(dense_min(n, 2.5, 1_000_000) < 0.0);
            assert!(dense_min(p, 2.5, 1_000_000) > 0.0);
        }
        assert!(!neg.is_positive(2.5));
        assert!(pos.is_positive(2.5));
    }

    #[test]
    fn moments_match_quadrature() {
        let curves = [
            ForwardVarianceCurve::parametric(0.05, -0.03, 0.2, 0.4, 0.02),
            ForwardVarianceCurve::piecewise(vec![0.1, 0.5], vec![0.02, 0.05, 0.03]).unwrap(),
        ];
        for c in &curves {
            let n = 400_000;
            let (a, b) = (0.05, 1.3);
            let h = (b - a) / n as f64;
            let (mut m0, mut m1) = (0.0, 0.0);
            for i in 0..n {
                let t = a + (i as f64 + 0.5) * h;
                m0 += c.value_unchecked(t) * h;
                m1 += t * c.value_unchecked(t) * h;
            }
            assert!((c.primitive(b) - c.primitive(a) - m0).abs() < 1e-8);
            assert!((c.first_moment_primitive(b) - c.first_moment_primitive(a) - m1).abs() < 1e-8);
        }
    }

    #[test]
    fn sampler_respects_box_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = FvcSampler::default();
        for _ in 0..2000 {
            let c = s.sample_parametric(&mut rng).unwrap();
            let ForwardVarianceCurve::Parametric(p) = c else { unreachable!() };
            assert!((0.025..=0.160).contains(&p.beta0));
            assert!((0.005..=0.130).contains(&(p.beta0 + p.beta1)));
            assert!((-0.150..=0.250).contains(&p.beta2));
            assert!((0.001..=1.350).contains(&p.tau1));
            assert!((0.001..=0.125).contains(&p.tau2));
            assert!(c.is_positive(2.5));
        }
    }

    #[test]
    fn sampler_gives_up_on_impossible_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = FvcSampler::new(ParametricBox {
            beta0: (0.025, 0.03),
            sum01: (0.005, 0.01),
            beta2: (-0.9, -0.8),
            tau1: (1.0, 1.1),
            tau2: (0.1, 0.11),
        });
        assert!(matches!(s.sample_parametric(&mut rng), Err(Error::SamplerExhausted(_))));
    }

    #[test]
    fn additivity_of_integrated_variance() {
        let c = ForwardVarianceCurve::parametric(0.07, 0.03, -0.1, 0.2, 0.05);
        let (t1, t2) = (0.37, 1.9);
        let lhs = c.integrated_variance(t1).unwrap() + c.integrated_variance_between(t1, t2).unwrap();
        assert!((lhs - c.integrated_variance(t2).unwrap()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn piecewise_constant_between_jumps(l1 in 0.01f64..0.2, l2 in 0.01f64..0.2, l3 in 0.01f64..0.2, x in 0.0f64..1.0) {
            let c = ForwardVarianceCurve::piecewise(vec![0.5, 1.5], vec![l1, l2, l3]).unwrap();
            prop_assert_eq!(c.evaluate(0.5 + x * 0.999).unwrap(), c.evaluate(0.5).unwrap());
            prop_assert_eq!(c.evaluate(x * 0.4999).unwrap(), l1);
        }

        #[test]
        fn stationary_points_match_dense_scan(
            b0 in 0.025f64..0.16, s in 0.005f64..0.13, b2 in -0.15f64..0.25,
            t1 in 0.001f64..1.35, t2 in 0.001f64..0.125,
        ) {
            let p = ParametricCurve { beta0: b0, beta1: s - b0, beta2: b2, tau1: t1, tau2: t2 };
            let roots = p.stationary_points();
            prop_assert!(roots.len() <= 2);
            for &r in &roots {
                let scale = (p.beta1 / p.tau1).abs() + (p.beta2 / p.tau2).abs();
                prop_assert!(p.derivative(r).abs() < 1e-9 * scale.max(1.0));
            }
            let horizon = 10.0;
            let analytic = roots.iter().filter(|&&r| r < horizon).count();
            let dense = dense_stationary_count(&p, horizon, 200_000);
            // a dense scan can only miss roots, e.g. a tangential pair
            prop_assert!(dense <= analytic, "dense {dense} analytic {analytic}");
        }
    }
}
