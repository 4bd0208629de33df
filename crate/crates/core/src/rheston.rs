//! rHeston characteristic function and Fourier call pricing.
//!
//! The log characteristic function is the convolution of `F(u, h(u, .))`
//! with the forward variance curve, where `h` solves the fractional Riccati
//! equation
//!
//! ```text
//! D^alpha h = F(u, h) = -u(u+i)/2 + i u rho nu h + nu^2 h^2 / 2,   h(u, 0) = 0
//! ```
//!
//! with `alpha = H + 1/2` and no mean reversion. The equation is integrated
//! with the fractional Adams product-trapezoidal rule. The corrector is
//! solved exactly (the right-hand side is quadratic in `h`), which keeps the
//! scheme stable at the large frequencies reached by short maturities. Near
//! `s = 0` the grid is refined geometrically to resolve the initial layer of
//! width `(nu |u|)^(-1/alpha)`.
//!
//! Prices come from the Lewis representation
//!
//! ```text
//! C = S0 - sqrt(S0 K)/pi * int_0^inf Re[exp(-i u k) phi(u - i/2)] / (u^2 + 1/4) du
//! ```
//!
//! `log phi(u - i/2)` is smooth in `u`, so it is sampled on doubling
//! frequency panels and replaced by Chebyshev interpolants; panels are split
//! until the interpolation error, weighted by the decay of `|phi|`, is
//! negligible on the price scale. The oscillatory Lewis integral is then
//! done by Gauss-Legendre on the interpolant. The characteristic function is
//! therefore evaluated at points that depend on `(theta, xi0, T)` only, and
//! every strike of a smile reuses them.

use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::bsm::bs_implied_vol;
use crate::error::{domain, Error, Result};
use crate::fvc::ForwardVarianceCurve;
use crate::params::RHestonParams;
use crate::quad::gauss_legendre;

pub const DEFAULT_STEPS: usize = 200;
pub const MIN_STEPS: usize = 50;
const BLOWUP_GUARD: f64 = 1e14;
const HEAD_RATIO: f64 = 1.4;

static CF_PASSES: AtomicU64 = AtomicU64::new(0);
static CF_EVALS: AtomicU64 = AtomicU64::new(0);

/// Process-wide counters: (smile passes, characteristic-function evaluations).
pub fn cf_counters() -> (u64, u64) {
    (CF_PASSES.load(Ordering::Relaxed), CF_EVALS.load(Ordering::Relaxed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricerConfig {
    /// Uniform Riccati steps for maturities up to one year.
    pub n_steps: usize,
    /// Target absolute accuracy of each quadrature panel, in price units.
    pub panel_tol: f64,
    /// Hard failure threshold for an unresolved panel.
    pub fail_tol: f64,
    pub max_depth: usize,
    pub u_max: f64,
}

impl Default for PricerConfig {
    fn default() -> Self {
        PricerConfig {
            n_steps: DEFAULT_STEPS,
            panel_tol: 1e-11,
            fail_tol: 1e-8,
            max_depth: 12,
            u_max: 2.0e5,
        }
    }
}

impl PricerConfig {
    /// Uniform steps used at maturity `t`: the base count up to one year,
    /// growing with the square root of the maturity beyond.
    pub fn steps_for(&self, t: f64) -> usize {
        if t <= 1.0 {
            self.n_steps
        } else {
            (self.n_steps as f64 * t.sqrt()).ceil() as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub u: Complex64,
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
}

/// Product-integration weights of the fractional trapezoidal rule on an
/// arbitrary mesh. Row `k` holds the weights of `F_0..F_k` for `h(s_k)`.
#[derive(Debug, Clone)]
struct Mesh {
    times: Vec<f64>,
    row_start: Vec<usize>,
    weights: Vec<f64>,
}

/// `a^p - b^p` for `a >= b >= 0` without cancellation when `a ~ b`.
fn pow_diff(a: f64, b: f64, p: f64) -> f64 {
    if b <= 0.0 {
        return a.powf(p);
    }
    let r = (a - b) / a;
    if r < 0.5 {
        -a.powf(p) * (p * (-r).ln_1p()).exp_m1()
    } else {
        a.powf(p) - b.powf(p)
    }
}

/// Left/right weights (without the 1/Gamma(alpha) factor) of the linear
/// interpolant on [a, b] for the fractional integral evaluated at t >= b.
fn interval_weights(alpha: f64, a: f64, b: f64, t: f64) -> (f64, f64) {
    let delta = b - a;
    let big_a = t - a;
    let big_b = t - b;
    let i0 = pow_diff(big_a, big_b, alpha) / alpha;
    let i1 = pow_diff(big_a, big_b, alpha + 1.0) / (alpha + 1.0);
    let left = (i1 - big_b * i0) / delta;
    let right = (big_a * i0 - i1) / delta;
    (left, right)
}

impl Mesh {
    /// Uniform grid of `n` steps on [0, T] with an optional geometric head
    /// from `s_min` up to the first uniform node.
    fn new(alpha: f64, maturity: f64, n: usize, s_min: Option<f64>) -> Mesh {
        let dt = maturity / n as f64;
        let mut times = vec![0.0];
        if let Some(s0) = s_min {
            let mut s = s0;
            while s < dt / HEAD_RATIO.sqrt() {
                times.push(s);
                s *= HEAD_RATIO;
            }
        }
        let head = times.len() - 1; // number of head points
        times.extend((1..=n).map(|k| if k == n { maturity } else { k as f64 * dt }));
        let total = times.len();

        // uniform-uniform pairs depend only on the index gap q
        let mut uni_l = vec![0.0; n + 1];
        let mut uni_r = vec![0.0; n + 1];
        let dt_a = dt.powf(alpha);
        for q in 1..=n {
            let qf = q as f64;
            let d0 = pow_diff(qf, qf - 1.0, alpha) / alpha;
            let d1 = pow_diff(qf, qf - 1.0, alpha + 1.0) / (alpha + 1.0);
            uni_l[q] = dt_a * (d1 - (qf - 1.0) * d0);
            uni_r[q] = dt_a * (qf * d0 - d1);
        }

        let inv_gamma = 1.0 / gamma(alpha);
        let mut row_start = Vec::with_capacity(total + 1);
        let mut weights = Vec::with_capacity(total * (total + 1) / 2);
        for k in 0..total {
            row_start.push(weights.len());
            let base = weights.len();
            weights.extend(std::iter::repeat_n(0.0, k + 1));
            if k == 0 {
                continue;
            }
            let t = times[k];
            // first uniform interval index is `head + 1` ([s_{head+1}, s_{head+2}]) when a head
            // exists; without a head every interval is uniform.
            let first_uniform = if head > 0 { head + 1 } else { 0 };
            for j in 0..k {
                let (l, r) = if k > head && j >= first_uniform {
                    // target and interval both on the uniform lattice
                    let q = k - j;
                    (uni_l[q], uni_r[q])
                } else {
                    interval_weights(alpha, times[j], times[j + 1], t)
                };
                weights[base + j] += l * inv_gamma;
                weights[base + j + 1] += r * inv_gamma;
            }
        }
        row_start.push(weights.len());
        Mesh {
            times,
            row_start,
            weights,
        }
    }

    fn len(&self) -> usize {
        self.times.len()
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.weights[self.row_start[k]..self.row_start[k + 1]]
    }
}

/// Coefficients of `F(u, x) = c0 + c1 x + c2 x^2`.
#[derive(Debug, Clone, Copy)]
struct RiccatiRhs {
    c0: Complex64,
    c1: Complex64,
    c2: f64,
}

impl RiccatiRhs {
    fn new(p: &RHestonParams, u: Complex64) -> Self {
        let i = Complex64::i();
        RiccatiRhs {
            c0: -0.5 * u * (u + i),
            c1: i * u * p.rho * p.nu,
            c2: 0.5 * p.nu * p.nu,
        }
    }

    #[inline]
    fn eval(&self, x: Complex64) -> Complex64 {
        self.c0 + x * (self.c1 + x * self.c2)
    }
}

/// Integrates the Riccati equation on `mesh`, writing `F(u, h(s_k))` into
/// `f_re`/`f_im` and returning `h(T)`.
fn solve_on_mesh(
    mesh: &Mesh,
    rhs: &RiccatiRhs,
    u: Complex64,
    f_re: &mut [f64],
    f_im: &mut [f64],
    mut h_out: Option<&mut Vec<Complex64>>,
) -> Result<Complex64> {
    let n = mesh.len();
    f_re[0] = rhs.c0.re;
    f_im[0] = rhs.c0.im;
    if let Some(h) = h_out.as_deref_mut() {
        h.clear();
        h.push(Complex64::new(0.0, 0.0));
    }
    let mut h_prev = Complex64::new(0.0, 0.0);
    let mut f_prev = rhs.c0;
    for k in 1..n {
        let w = mesh.row(k);
        let (mut pr, mut pi) = (0.0, 0.0);
        for j in 0..k {
            pr += w[j] * f_re[j];
            pi += w[j] * f_im[j];
        }
        let a = w[k];
        let p = Complex64::new(pr, pi);
        // a c2 h^2 + (a c1 - 1) h + (p + a c0) = 0
        let qa = a * rhs.c2;
        let qb = a * rhs.c1 - 1.0;
        let qc = p + a * rhs.c0;
        let h = if qa == 0.0 {
            -qc / qb
        } else {
            let disc = (qb * qb - 4.0 * qa * qc).sqrt();
            // stable pair: q / qa and qc / q with |q| as large as possible
            let sum = if (qb.conj() * disc).re >= 0.0 { qb + disc } else { qb - disc };
            let q = -0.5 * sum;
            let r1 = q / qa;
            let r2 = qc / q;
            let pick = |r: Complex64| r.is_finite();
            match (pick(r1), pick(r2)) {
                (true, true) => {
                    // the spurious root sits near the unstable equilibrium or at
                    // 1/(a nu^2 / 2); the solution branch has the smaller real part
                    if r1.re < r2.re - 1e-12 * (r1.norm() + r2.norm()) {
                        r1
                    } else if r2.re < r1.re - 1e-12 * (r1.norm() + r2.norm()) {
                        r2
                    } else {
                        let guess = h_prev + a * f_prev;
                        if (r1 - guess).norm() <= (r2 - guess).norm() {
                            r1
                        } else {
                            r2
                        }
                    }
                }
                (true, false) => r1,
                (false, true) => r2,
                (false, false) => Complex64::new(f64::INFINITY, 0.0),
            }
        };
        let mag = h.norm();
        if !(mag < BLOWUP_GUARD) {
            return Err(Error::RiccatiBlowup {
                re: u.re,
                im: u.im,
                magnitude: mag,
            });
        }
        let f = rhs.eval(h);
        f_re[k] = f.re;
        f_im[k] = f.im;
        h_prev = h;
        f_prev = f;
        if let Some(hv) = h_out.as_deref_mut() {
            hv.push(h);
        }
    }
    Ok(h_prev)
}

/// Solves the fractional Riccati equation on a uniform grid of `n_steps`.
pub fn riccati_solve(
    params: &RHestonParams,
    u: Complex64,
    maturity: f64,
    n_steps: usize,
) -> Result<RiccatiSolution> {
    params.validate()?;
    if !(maturity > 0.0) {
        return Err(domain(format!("maturity must be positive, got {maturity}")));
    }
    if n_steps < MIN_STEPS {
        return Err(domain(format!("need at least {MIN_STEPS} steps, got {n_steps}")));
    }
    let mesh = Mesh::new(params.alpha(), maturity, n_steps, None);
    let rhs = RiccatiRhs::new(params, u);
    let mut f_re = vec![0.0; mesh.len()];
    let mut f_im = vec![0.0; mesh.len()];
    let mut values = Vec::with_capacity(mesh.len());
    solve_on_mesh(&mesh, &rhs, u, &mut f_re, &mut f_im, Some(&mut values))?;
    Ok(RiccatiSolution {
        u,
        times: mesh.times.clone(),
        values,
    })
}

/// Riccati mesh plus the weights of the convolution with the curve; shared
/// by every frequency of one `(theta, xi0, T)` pass.
struct CfEngine {
    params: RHestonParams,
    mesh: Mesh,
    conv: Vec<f64>,
    f_re: Vec<f64>,
    f_im: Vec<f64>,
    evals: usize,
}

impl CfEngine {
    fn new(
        params: &RHestonParams,
        curve: &ForwardVarianceCurve,
        maturity: f64,
        n_steps: usize,
        s_min: Option<f64>,
    ) -> CfEngine {
        let mesh = Mesh::new(params.alpha(), maturity, n_steps, s_min);
        let conv = convolution_weights(&mesh.times, curve, maturity);
        let n = mesh.len();
        CfEngine {
            params: *params,
            mesh,
            conv,
            f_re: vec![0.0; n],
            f_im: vec![0.0; n],
            evals: 0,
        }
    }

    fn log_cf(&mut self, u: Complex64) -> Result<Complex64> {
        let rhs = RiccatiRhs::new(&self.params, u);
        solve_on_mesh(&self.mesh, &rhs, u, &mut self.f_re, &mut self.f_im, None)?;
        self.evals += 1;
        let (mut re, mut im) = (0.0, 0.0);
        for ((c, fr), fi) in self.conv.iter().zip(&self.f_re).zip(&self.f_im) {
            re += c * fr;
            im += c * fi;
        }
        Ok(Complex64::new(re, im))
    }
}

/// Weights `c_j` with `int_0^T F(s) xi0(T - s) ds = sum_j c_j F(s_j)` for
/// `F` linear between mesh nodes; the curve moments are exact.
fn convolution_weights(times: &[f64], curve: &ForwardVarianceCurve, maturity: f64) -> Vec<f64> {
    let mut c = vec![0.0; times.len()];
    for j in 0..times.len() - 1 {
        let (a, b) = (times[j], times[j + 1]);
        let delta = b - a;
        let (m0, m1) = if delta < 1e-6 * maturity {
            // tiny head intervals: the curve is constant to first order
            let m0 = curve.value_unchecked((maturity - 0.5 * (a + b)).max(0.0)) * delta;
            (m0, 0.5 * m0 * delta)
        } else {
            let (ta, tb) = ((maturity - a).max(0.0), (maturity - b).max(0.0));
            let m0 = curve.primitive(ta) - curve.primitive(tb);
            let q = curve.first_moment_primitive(ta) - curve.first_moment_primitive(tb);
            (m0, ta * m0 - q)
        };
        c[j] += m0 - m1 / delta;
        c[j + 1] += m1 / delta;
    }
    c
}

fn check_pricing_inputs(params: &RHestonParams, curve: &ForwardVarianceCurve, maturity: f64) -> Result<()> {
    params.validate()?;
    curve.validate()?;
    if !(maturity > 0.0 && maturity.is_finite()) {
        return Err(domain(format!("maturity must be positive, got {maturity}")));
    }
    Ok(())
}

/// Characteristic function of `ln(S_T / S0)` on a uniform Riccati grid.
pub fn char_fn(
    params: &RHestonParams,
    curve: &ForwardVarianceCurve,
    u: Complex64,
    maturity: f64,
    n_steps: usize,
) -> Result<Complex64> {
    check_pricing_inputs(params, curve, maturity)?;
    if n_steps < MIN_STEPS {
        return Err(domain(format!("need at least {MIN_STEPS} steps, got {n_steps}")));
    }
    let mut engine = CfEngine::new(params, curve, maturity, n_steps, None);
    Ok(engine.log_cf(u)?.exp())
}

/// Rough upper bound on the frequency needed for the Lewis integral: the
/// larger of the Gaussian cut-off and the cut-off of the asymptotically
/// exponential decay `|phi| ~ exp(-c u)`.
fn frequency_cap(params: &RHestonParams, curve: &ForwardVarianceCurve, maturity: f64, cfg: &PricerConfig) -> f64 {
    const LOG_TOL: f64 = 30.0;
    let samples = 64;
    let xi_min = (0..=samples)
        .map(|i| curve.value_unchecked(maturity * i as f64 / samples as f64))
        .fold(f64::INFINITY, f64::min)
        .max(1e-6);
    let w = curve.primitive(maturity).max(xi_min * maturity);
    let u_gauss = (2.0 * LOG_TOL / w).sqrt();
    let alpha = params.alpha();
    let c = xi_min * (1.0 - params.rho * params.rho).sqrt() * maturity.powf(1.0 - alpha)
        / (params.nu * gamma(2.0 - alpha));
    // exp(-c U) / (c U^2) below exp(-LOG_TOL)
    let mut u_lin = 100.0_f64;
    for _ in 0..20 {
        u_lin = ((LOG_TOL - (c * u_lin * u_lin).ln()).max(1.0) / c).max(1.0);
    }
    u_gauss.max(u_lin).clamp(50.0, cfg.u_max)
}

/// Chebyshev interpolant of `log phi(u - i/2)` on one frequency panel.
#[derive(Debug, Clone)]
struct ChebPanel {
    lo: f64,
    hi: f64,
    coeffs: Vec<Complex64>,
    /// Rough maximum of |d Im L / du| on the panel, for sizing the
    /// oscillatory quadrature.
    phase_rate: f64,
    /// Spread of Re L over the panel.
    amp_range: f64,
}

const CHEB_DEGREE: usize = 16;
const GL_ORDER: usize = 20;

impl ChebPanel {
    /// Samples `log phi` at the Chebyshev extrema of [lo, hi].
    fn sample(engine: &mut CfEngine, lo: f64, hi: f64) -> Result<(ChebPanel, f64, f64)> {
        let n = CHEB_DEGREE;
        let c = 0.5 * (lo + hi);
        let r = 0.5 * (hi - lo);
        let mut vals = Vec::with_capacity(n + 1);
        let mut us = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let x = (std::f64::consts::PI * j as f64 / n as f64).cos();
            let u = c + r * x;
            vals.push(engine.log_cf(Complex64::new(u, -0.5))?);
            us.push(u);
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n + 1];
        for (k, ck) in coeffs.iter_mut().enumerate() {
            let mut s = Complex64::new(0.0, 0.0);
            for (j, v) in vals.iter().enumerate() {
                let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                s += w * v * (std::f64::consts::PI * (j * k) as f64 / n as f64).cos();
            }
            *ck = s * (2.0 / n as f64);
        }
        coeffs[0] *= 0.5;
        coeffs[n] *= 0.5;
        let tail = coeffs[n - 2].norm() + coeffs[n - 1].norm() + coeffs[n].norm();
        let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);

        let mut phase_rate: f64 = 0.0;
        for j in 0..n {
            let du = (us[j] - us[j + 1]).abs().max(1e-300);
            phase_rate = phase_rate.max((vals[j].im - vals[j + 1].im).abs() / du);
        }
        let re_max = vals.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
        let re_min = vals.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
        // envelope integral of |phi| / (u^2 + 1/4) by the trapezoid on the samples
        let mut env = 0.0;
        for j in 0..n {
            let f = |i: usize| vals[i].re.exp() / (us[i] * us[i] + 0.25);
            env += 0.5 * (f(j) + f(j + 1)) * (us[j] - us[j + 1]).abs();
        }
        let panel = ChebPanel {
            lo,
            hi,
            coeffs,
            phase_rate,
            amp_range: re_max - re_min,
        };
        Ok((panel, tail.max(1e-16 * scale), env))
    }

    #[inline]
    fn eval(&self, u: f64) -> Complex64 {
        let x = (2.0 * u - self.lo - self.hi) / (self.hi - self.lo);
        let (mut b1, mut b2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for c in self.coeffs.iter().skip(1).rev() {
            let b0 = c + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs[0] + x * b1 - b2
    }
}

/// Interpolated log characteristic function of one `(theta, xi0, T)`;
/// prices any strike without further Riccati solves.
#[derive(Debug, Clone)]
pub struct FourierSmile {
    pub maturity: f64,
    panels: Vec<ChebPanel>,
    /// Characteristic-function evaluations spent building the interpolant.
    pub cf_evals: usize,
    /// Upper end of the frequency domain actually used.
    pub u_end: f64,
}

impl FourierSmile {
    pub fn build(
        params: &RHestonParams,
        curve: &ForwardVarianceCurve,
        maturity: f64,
        cfg: &PricerConfig,
    ) -> Result<FourierSmile> {
        check_pricing_inputs(params, curve, maturity)?;
        let u_cap = frequency_cap(params, curve, maturity, cfg);
        let n = cfg.steps_for(maturity);
        let layer = (params.nu * u_cap).powf(-1.0 / params.alpha());
        let dt = maturity / n as f64;
        let s_min = if layer < 2.0 * dt { Some(0.25 * layer) } else { None };
        let mut engine = CfEngine::new(params, curve, maturity, n, s_min);

        // sqrt(K)/pi at the widest admissible strike bounds the price scale
        let sq = maturity.sqrt();
        let scale = (1.0 + 0.3 * sq).sqrt() / std::f64::consts::PI;

        let mut panels = Vec::new();
        let mut lo = 0.0;
        let mut hi = (1.0 / sq).min(u_cap);
        loop {
            let mut stack = vec![(lo, hi, 0usize)];
            let mut last_re = f64::NEG_INFINITY;
            while let Some((a, b, depth)) = stack.pop() {
                let (panel, err, env) = ChebPanel::sample(&mut engine, a, b)?;
                // an error e in log phi moves the price by about e * env * scale
                let price_err = err * env * scale;
                if price_err > cfg.panel_tol && depth < cfg.max_depth {
                    let mid = 0.5 * (a + b);
                    stack.push((mid, b, depth + 1));
                    stack.push((a, mid, depth + 1));
                    continue;
                }
                if price_err > cfg.fail_tol {
                    return Err(Error::Quadrature(format!(
                        "log phi interpolation on [{a:.4}, {b:.4}] off by {price_err:.3e} at T = {maturity}"
                    )));
                }
                if b == hi {
                    last_re = panel.eval(b).re;
                }
                panels.push(panel);
            }
            // |phi| decays, so the tail beyond hi is at most |phi(hi)| / hi
            let tail = last_re.exp() / hi * scale;
            if tail < cfg.panel_tol {
                break;
            }
            if hi >= u_cap {
                if tail > cfg.fail_tol {
                    return Err(Error::Quadrature(format!(
                        "truncation tail {tail:.3e} at u = {hi:.1} (T = {maturity})"
                    )));
                }
                break;
            }
            lo = hi;
            hi = (2.0 * hi).min(u_cap);
        }
        panels.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let cf_evals = engine.evals;
        CF_PASSES.fetch_add(1, Ordering::Relaxed);
        CF_EVALS.fetch_add(cf_evals as u64, Ordering::Relaxed);
        Ok(FourierSmile {
            maturity,
            u_end: hi,
            panels,
            cf_evals,
        })
    }

    /// Gauss-Legendre nodes with interpolated `phi`, dense enough for
    /// log-strikes up to `k_max` in absolute value.
    fn nodes(&self, k_max: f64) -> Vec<(f64, f64, Complex64)> {
        let (gx, gw) = gauss_rule();
        let mut out = Vec::new();
        for p in &self.panels {
            let width = p.hi - p.lo;
            let work = (k_max + p.phase_rate) * width + p.amp_range;
            let m = ((work / 20.0).ceil() as usize).max(1);
            let base = width / m as f64;
            let mut a = p.lo;
            while a < p.hi {
                // keep sub-panels short next to the poles of 1/(u^2 + 1/4) at +-i/2
                let h = base.min(2.0 * (a + 0.5));
                let b = if a + h >= p.hi - 1e-12 * width { p.hi } else { a + h };
                let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
                for (x, w) in gx.iter().zip(gw) {
                    let u = c + r * x;
                    out.push((u, r * w, p.eval(u).exp()));
                }
                a = b;
            }
        }
        out
    }

    /// Call prices (S0 = 1) at the given strikes.
    pub fn call_prices(&self, strikes: &[f64]) -> Vec<f64> {
        let k_max = strikes.iter().map(|k| k.ln().abs()).fold(0.0, f64::max);
        let nodes = self.nodes(k_max);
        strikes
            .iter()
            .map(|&strike| {
                let k = strike.ln();
                let mut acc = 0.0;
                for &(u, w, phi) in &nodes {
                    acc += w * (Complex64::from_polar(1.0, -u * k) * phi).re / (u * u + 0.25);
                }
                1.0 - strike.sqrt() / std::f64::consts::PI * acc
            })
            .collect()
    }

    pub fn call_price(&self, strike: f64) -> f64 {
        self.call_prices(&[strike])[0]
    }

    pub fn n_panels(&self) -> usize {
        self.panels.len()
    }
}

fn gauss_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GL_ORDER))
}

/// Call price under rHeston with S0 = 1.
pub fn call_price(
    params: &RHestonParams,
    curve: &ForwardVarianceCurve,
    strike: f64,
    maturity: f64,
) -> Result<f64> {
    if !(strike > 0.0) {
        return Err(domain(format!("strike must be positive, got {strike}")));
    }
    let smile = FourierSmile::build(params, curve, maturity, &PricerConfig::default())?;
    Ok(smile.call_price(strike))
}

/// Prices and implied vols of one maturity slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmileResult {
    pub maturity: f64,
    pub strikes: Vec<f64>,
    pub prices: Vec<f64>,
    /// `None` where Black-Scholes inversion failed; such strikes are discarded.
    pub vols: Vec<Option<f64>>,
    pub cf_evals: usize,
}

impl SmileResult {
    pub fn failures(&self) -> usize {
        self.vols.iter().filter(|v| v.is_none()).count()
    }
}

/// Implied-vol smile from a single characteristic-function pass.
pub fn smile(
    params: &RHestonParams,
    curve: &ForwardVarianceCurve,
    maturity: f64,
    strikes: &[f64],
    cfg: &PricerConfig,
) -> Result<SmileResult> {
    if strikes.iter().any(|&k| !(k > 0.0)) {
        return Err(domain("strikes must be positive"));
    }
    let fs = FourierSmile::build(params, curve, maturity, cfg)?;
    let prices = fs.call_prices(strikes);
    let vols = strikes
        .iter()
        .zip(&prices)
        .map(|(&k, &c)| bs_implied_vol(1.0, k, maturity, c).ok())
        .collect();
    Ok(SmileResult {
        maturity,
        strikes: strikes.to_vec(),
        prices,
        vols,
        cf_evals: fs.cf_evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(h: f64, nu: f64, rho: f64) -> RHestonParams {
        RHestonParams::new(h, nu, rho).unwrap()
    }

    /// Closed-form solution of the classical (alpha = 1) Riccati equation
    /// with zero mean reversion.
    fn classical_h(p: &RHestonParams, u: Complex64, t: f64) -> Complex64 {
        let i = Complex64::i();
        let nu = p.nu;
        let d = nu * (u * u * (1.0 - p.rho * p.rho) + i * u).sqrt();
        let rp = (-i * u * p.rho * nu + d) / (nu * nu);
        let rm = (-i * u * p.rho * nu - d) / (nu * nu);
        let e = (-d * t).exp();
        rp * rm * (1.0 - e) / (rp - rm * e)
    }

    #[test]
    fn uniform_weights_match_general_formula() {
        let alpha = 0.63;
        let mesh = Mesh::new(alpha, 1.0, 60, None);
        let g = gamma(alpha);
        for k in [1usize, 7, 60] {
            let row = mesh.row(k);
            let mut expect = vec![0.0; k + 1];
            for j in 0..k {
                let (l, r) = interval_weights(alpha, mesh.times[j], mesh.times[j + 1], mesh.times[k]);
                expect[j] += l / g;
                expect[j + 1] += r / g;
            }
            for (a, b) in row.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-13, "{a} {b}");
            }
            // weights integrate the constant 1 exactly
            let total: f64 = row.iter().sum();
            assert!((total - mesh.times[k].powf(alpha) / gamma(alpha + 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_frequency_gives_zero_solution() {
        let p = params(0.1, 0.4, -0.7);
        let sol = riccati_solve(&p, Complex64::new(0.0, 0.0), 1.0, 100).unwrap();
        assert!(sol.values.iter().all(|h| h.norm() == 0.0));
        let sol = riccati_solve(&p, Complex64::new(0.0, -1.0), 1.0, 100).unwrap();
        assert!(sol.values.iter().all(|h| h.norm() < 1e-14));
    }

    #[test]
    fn classical_limit_of_riccati() {
        let p = params(0.5, 0.3, -0.7);
        let u = Complex64::new(1.0, -0.5);
        let sol = riccati_solve(&p, u, 1.0, 200).unwrap();
        let exact = classical_h(&p, u, 1.0);
        let got = *sol.values.last().unwrap();
        assert!((got - exact).norm() < 1e-5, "{got} vs {exact}");
    }

    #[test]
    fn too_few_steps_rejected() {
        let p = params(0.1, 0.4, -0.7);
        assert!(riccati_solve(&p, Complex64::new(1.0, 0.0), 1.0, 10).is_err());
    }

    #[test]
    fn normalization_and_martingale() {
        let p = params(0.1, 0.4, -0.7);
        let c = ForwardVarianceCurve::parametric(0.05, -0.02, 0.1, 0.5, 0.05);
        let one = char_fn(&p, &c, Complex64::new(0.0, 0.0), 0.8, 200).unwrap();
        assert!((one - 1.0).norm() < 1e-14);
        let mart = char_fn(&p, &c, Complex64::new(0.0, -1.0), 0.8, 200).unwrap();
        assert!((mart - 1.0).norm() < 1e-8, "{mart}");
    }

    #[test]
    fn vanishing_vol_of_vol_limit() {
        let p = params(0.1, 1e-9, -0.7);
        let c = ForwardVarianceCurve::parametric(0.05, 0.03, 0.1, 0.5, 0.05);
        let t = 1.3;
        let w = c.integrated_variance(t).unwrap();
        for u in [Complex64::new(0.7, 0.0), Complex64::new(3.0, -0.5)] {
            let got = char_fn(&p, &c, u, t, 200).unwrap().ln();
            let expect = -0.5 * u * (u + Complex64::i()) * w;
            assert!(((got - expect) / expect).norm() < 1e-6, "{got} vs {expect}");
        }
    }

    #[test]
    fn hermitian_symmetry() {
        let p = params(0.07, 0.5, -0.8);
        let c = ForwardVarianceCurve::flat(0.05);
        for &(re, im) in &[(0.3, -0.2), (2.0, -0.5), (11.0, 0.0)] {
            let a = char_fn(&p, &c, Complex64::new(re, im), 0.5, 150).unwrap();
            let b = char_fn(&p, &c, Complex64::new(-re, im), 0.5, 150).unwrap();
            assert!((a - b.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn deterministic_vol_limit_price() {
        let p = params(0.1, 1e-6, -0.7);
        let c = ForwardVarianceCurve::flat(0.04);
        let price = call_price(&p, &c, 1.0, 1.0).unwrap();
        let bs = crate::bsm::bs_call_price(1.0, 1.0, 1.0, 0.2).unwrap();
        assert!((price - bs).abs() < 1e-4 * 0.01, "{price} vs {bs}");
    }

    #[test]
    fn negative_skew() {
        let p = params(0.1, 0.4, -0.7);
        let c = ForwardVarianceCurve::flat(0.04);
        let s = smile(&p, &c, 0.1, &[0.95, 1.0], &PricerConfig::default()).unwrap();
        assert!(s.vols[0].unwrap() > s.vols[1].unwrap());
    }

    #[test]
    fn smile_cost_is_independent_of_strike_count() {
        let p = params(0.12, 0.3, -0.6);
        let c = ForwardVarianceCurve::flat(0.03);
        let cfg = PricerConfig::default();
        let one = smile(&p, &c, 0.4, &[1.0], &cfg).unwrap();
        let strikes: Vec<f64> = (0..13).map(|i| 0.9 + 0.2 * i as f64 / 12.0).collect();
        let many = smile(&p, &c, 0.4, &strikes, &cfg).unwrap();
        assert_eq!(one.cf_evals, many.cf_evals);
        assert!(many.vols.iter().all(|v| v.is_some_and(|v| v > 0.0 && v < 5.0)));
    }
    /// Classical Heston price with zero mean reversion: closed-form CF and
    /// Simpson quadrature on doubling panels.
    fn classical_price(p: &RHestonParams, xi: f64, strike: f64, t: f64) -> f64 {
        let lk = strike.ln();
        let g = |u: f64| {
            let z = (xi * classical_h(p, Complex64::new(u, -0.5), t)).exp();
            (Complex64::from_polar(1.0, -u * lk) * z).re / (u * u + 0.25)
        };
        let (mut total, mut lo, mut hi) = (0.0, 0.0, 1.0);
        loop {
            let n = 4000;
            let h = (hi - lo) / n as f64;
            let mut s = g(lo) + g(hi);
            for i in 1..n {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(lo + i as f64 * h);
            }
            total += s * h / 3.0;
            let env = (xi * classical_h(p, Complex64::new(hi, -0.5), t)).exp().norm() / hi;
            if env < 1e-15 || hi > 1e7 {
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        1.0 - strike.sqrt() / std::f64::consts::PI * total
    }

    #[test]
    fn classical_limit_of_price() {
        let p = params(0.5, 0.3, -0.7);
        let c = ForwardVarianceCurve::flat(0.04);
        let got = call_price(&p, &c, 1.0, 1.0).unwrap();
        let expect = classical_price(&p, 0.04, 1.0, 1.0);
        assert!((got - expect).abs() < 1e-5, "{got} vs {expect}");
        let fs = FourierSmile::build(&p, &c, 0.01, &PricerConfig::default()).unwrap();
        for k in [0.95, 1.0, 1.03] {
            assert!((fs.call_price(k) - classical_price(&p, 0.04, k, 0.01)).abs() < 1e-8);
        }
    }

    #[test]
    fn flat_smile_in_deterministic_limit() {
        let p = params(0.2, 1e-6, -0.7);
        let c = ForwardVarianceCurve::parametric(0.04, 0.02, 0.05, 0.3, 0.2);
        let t = 0.7;
        let strikes = [0.7, 0.85, 1.0, 1.2];
        let s = smile(&p, &c, t, &strikes, &PricerConfig::default()).unwrap();
        let flat = (c.integrated_variance(t).unwrap() / t).sqrt();
        for v in &s.vols {
            assert!((v.unwrap() - flat).abs() < 1e-4, "{s:?} {flat}");
        }
    }

    #[test]
    fn doubling_steps_barely_moves_prices() {
        let c = ForwardVarianceCurve::flat(0.04);
        for &(h, t) in &[(0.05, 0.01), (0.1, 0.5), (0.25, 2.5)] {
            let p = params(h, 0.5, -0.8);
            let base = PricerConfig::default();
            let fine = PricerConfig {
                n_steps: 2 * base.n_steps,
                ..base.clone()
            };
            let a = FourierSmile::build(&p, &c, t, &base).unwrap();
            let b = FourierSmile::build(&p, &c, t, &fine).unwrap();
            for m in [-0.5, 0.0, 0.25] {
                let k = 1.0 + m * t.sqrt();
                assert!((a.call_price(k) - b.call_price(k)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn prices_respect_static_bounds() {
        let p = params(0.03, 0.65, -0.95);
        let c = ForwardVarianceCurve::flat(0.01);
        let fs = FourierSmile::build(&p, &c, 2.5, &PricerConfig::default()).unwrap();
        let strikes = [0.2, 0.5, 0.9, 1.0, 1.3, 1.5];
        let prices = fs.call_prices(&strikes);
        for w in prices.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for (k, c) in strikes.iter().zip(&prices) {
            assert!(*c >= (1.0 - k).max(0.0) && *c <= 1.0);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn hermitian_on_random_frequencies(re in -40.0f64..40.0, im in -0.9f64..0.0) {
            let p = params(0.1, 0.4, -0.7);
            let c = ForwardVarianceCurve::flat(0.04);
            let a = char_fn(&p, &c, Complex64::new(re, im), 0.3, 80).unwrap();
            let b = char_fn(&p, &c, Complex64::new(-re, im), 0.3, 80).unwrap();
            proptest::prop_assert!((a - b.conj()).norm() < 1e-10);
        }
    }
}
