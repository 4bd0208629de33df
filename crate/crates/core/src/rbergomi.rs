//! rBergomi Monte Carlo: exact joint simulation of the Volterra process
//! `Y_t = sqrt(2 alpha - 1) int_0^t (t-s)^(alpha-1) dB_s` and the driving
//! Brownian motion on a fixed grid, with left-point Euler in log-spot.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsm::{bs_implied_vol, bs_vega};
use crate::error::{domain, Error, Result};
use crate::fvc::ForwardVarianceCurve;
use crate::params::RBergomiParams;
use crate::quad::integrate_adaptive;

pub const DEFAULT_PATHS: usize = 65_536;
pub const DEFAULT_STEPS_PER_YEAR: usize = 100;
const BLOCK_PAIRS: usize = 512;

static SIMULATIONS: AtomicU64 = AtomicU64::new(0);
static SIM_NANOS: AtomicU64 = AtomicU64::new(0);

/// Process-wide counters: (simulations run, total wall time in seconds).
pub fn mc_counters() -> (u64, f64) {
    (
        SIMULATIONS.load(Ordering::Relaxed),
        SIM_NANOS.load(Ordering::Relaxed) as f64 * 1e-9,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub steps_per_year: usize,
    /// Maturities to record; all of them land exactly on the time grid.
    pub maturities: Vec<f64>,
    pub seed: u64,
    pub antithetic: bool,
}

impl McConfig {
    pub fn new(maturities: Vec<f64>, n_paths: usize, seed: u64) -> McConfig {
        McConfig {
            n_paths,
            steps_per_year: DEFAULT_STEPS_PER_YEAR,
            maturities,
            seed,
            antithetic: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 || !self.n_paths.is_multiple_of(2) {
            return Err(domain(format!("n_paths must be even and >= 2, got {}", self.n_paths)));
        }
        if self.steps_per_year == 0 {
            return Err(domain("steps_per_year must be positive"));
        }
        if self.maturities.is_empty() {
            return Err(domain("maturity grid is empty"));
        }
        if self.maturities.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(domain("maturities must be positive"));
        }
        if self.maturities.windows(2).any(|w| w[1] <= w[0]) {
            return Err(domain("maturities must be strictly increasing"));
        }
        Ok(())
    }

    /// Simulation grid: the maturities, a uniform lattice of
    /// `1/steps_per_year`, and geometric refinement below the first lattice
    /// step.
    pub fn time_grid(&self) -> Vec<f64> {
        let dt = 1.0 / self.steps_per_year as f64;
        let t_max = *self.maturities.last().unwrap();
        let mut grid: Vec<f64> = self.maturities.clone();
        let mut k = 1;
        while k as f64 * dt < t_max {
            grid.push(k as f64 * dt);
            k += 1;
        }
        let mut s = dt / 2.0;
        for _ in 0..5 {
            if s < t_max {
                grid.push(s);
            }
            s /= 2.0;
        }
        grid.sort_by(f64::total_cmp);
        // drop lattice points that crowd a maturity; maturities themselves stay
        let tol = 1e-3 * dt;
        let mut out: Vec<f64> = Vec::with_capacity(grid.len());
        for t in grid {
            if let Some(&last) = out.last() {
                if t - last < tol {
                    if self.maturities.contains(&t) {
                        out.pop();
                        out.push(t);
                    }
                    continue;
                }
            }
            out.push(t);
        }
        out
    }
}

/// `(2 alpha - 1) int_0^s (t-u)^(alpha-1) (s-u)^(alpha-1) du` for `s <= t`.
fn cov_yy(alpha: f64, s: f64, t: f64) -> f64 {
    let c = 2.0 * alpha - 1.0;
    if (alpha - 1.0).abs() < 1e-15 {
        return s;
    }
    let d = t - s;
    if d <= 0.0 {
        return s.powf(c);
    }
    // x = s - u, y = x^alpha removes the endpoint singularity
    let inv_a = 1.0 / alpha;
    let mut f = |y: f64| (d + y.powf(inv_a)).powf(alpha - 1.0);
    let top = s.powf(alpha);
    let (v, _) = integrate_adaptive(&mut f, 0.0, top, 0.0, 1e-13, 40);
    c * v * inv_a
}

/// `Cov(Y_t, B_s)`.
fn cov_yb(alpha: f64, t: f64, s: f64) -> f64 {
    let m = s.min(t);
    (2.0 * alpha - 1.0).sqrt() / alpha * (t.powf(alpha) - (t - m).powf(alpha))
}

/// Joint covariance of `(Y_{t_1..t_n}, B_{t_1..t_n})`, in that order.
pub fn volterra_cov(h: f64, times: &[f64]) -> Result<DMatrix<f64>> {
    if !(h > 0.0 && h <= 0.5) {
        return Err(domain(format!("H must lie in (0, 0.5], got {h}")));
    }
    if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("times must be positive and strictly increasing"));
    }
    let alpha = h + 0.5;
    let n = times.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..=i {
            let (s, t) = (times[j], times[i]);
            let yy = cov_yy(alpha, s, t);
            m[(i, j)] = yy;
            m[(j, i)] = yy;
            m[(n + i, n + j)] = s;
            m[(n + j, n + i)] = s;
        }
        for j in 0..n {
            let v = cov_yb(alpha, times[i], times[j]);
            m[(i, n + j)] = v;
            m[(n + j, i)] = v;
        }
    }
    Ok(m)
}

/// A square-root factor `A` with `A A^T = cov`: Cholesky when it succeeds,
/// otherwise the symmetric-eigen square root (singular at H = 1/2).
pub fn cov_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (cov + cov.transpose()) * 0.5;
    if let Some(ch) = sym.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -1e-8 {
        return Err(Error::NotPsd(min));
    }
    let sqrt_vals = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()));
    let mut a = eig.eigenvectors;
    for (j, s) in sqrt_vals.iter().enumerate() {
        a.column_mut(j).scale_mut(*s);
    }
    Ok(a)
}

/// Simulated spots (and instantaneous variances) at every requested
/// maturity. With antithetics on, paths `2p` and `2p + 1` form a pair.
#[derive(Debug, Clone)]
pub struct McPaths {
    pub maturities: Vec<f64>,
    pub spots: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub antithetic: bool,
}

impl McPaths {
    fn index_of(&self, t: f64) -> Result<usize> {
        self.maturities
            .iter()
            .position(|&m| m == t)
            .ok_or_else(|| domain(format!("maturity {t} is not on the simulation grid")))
    }

    /// Independent samples of `f` (pair averages under antithetics) at
    /// maturity index `i`.
    fn samples<F: Fn(f64) -> f64>(&self, i: usize, f: F) -> Vec<f64> {
        let s = &self.spots[i];
        if self.antithetic {
            s.chunks_exact(2).map(|p| 0.5 * (f(p[0]) + f(p[1]))).collect()
        } else {
            s.iter().map(|&x| f(x)).collect()
        }
    }

    /// Mean and standard error of `f(S_T)`.
    pub fn estimate<F: Fn(f64) -> f64>(&self, t: f64, f: F) -> Result<(f64, f64)> {
        let i = self.index_of(t)?;
        Ok(mean_se(&self.samples(i, f)))
    }

    /// Mean and standard error of `V_T`.
    pub fn variance_mean(&self, t: f64) -> Result<(f64, f64)> {
        let i = self.index_of(t)?;
        let v = &self.variances[i];
        let s: Vec<f64> = if self.antithetic {
            v.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect()
        } else {
            v.clone()
        };
        Ok(mean_se(&s))
    }
}

/// Sample mean and its standard error; sums run in index order.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn simulate_paths(params: &RBergomiParams, curve: &ForwardVarianceCurve, cfg: &McConfig) -> Result<McPaths> {
    params.validate()?;
    curve.validate()?;
    cfg.validate()?;
    let started = Instant::now();
    let grid = cfg.time_grid();
    let n = grid.len();
    let cov = volterra_cov(params.h, &grid)?;
    let factor = cov_factor(&cov)?;

    let alpha = params.alpha();
    let c = 2.0 * alpha - 1.0;
    let eta = params.eta;
    let rho = params.rho;
    let rho_bar = (1.0 - rho * rho).sqrt();
    let xi: Vec<f64> = grid.iter().map(|&t| curve.value_unchecked(t)).collect();
    // exact forward variance per step; the rough factor is frozen at the left point
    let xi_step: Vec<f64> = (0..n)
        .map(|k| curve.integrated_variance_between(if k == 0 { 0.0 } else { grid[k - 1] }, grid[k]))
        .collect::<Result<_>>()?;
    let drift: Vec<f64> = grid.iter().map(|&t| 0.5 * eta * eta * t.powf(c)).collect();
    let record: Vec<usize> = cfg
        .maturities
        .iter()
        .map(|t| grid.iter().position(|g| g == t).expect("maturity on grid"))
        .collect();

    let draws = if cfg.antithetic { cfg.n_paths / 2 } else { cfg.n_paths };
    let n_blocks = draws.div_ceil(BLOCK_PAIRS);
    let blocks: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let m = BLOCK_PAIRS.min(draws - b * BLOCK_PAIRS);
            let z = DMatrix::from_fn(2 * n, m, |_, _| StandardNormal.sample(&mut rng));
            let perp = DMatrix::<f64>::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
            let x = &factor * z;
            let signs: &[f64] = if cfg.antithetic { &[1.0, -1.0] } else { &[1.0] };
            let mut spots = vec![Vec::with_capacity(m * signs.len()); record.len()];
            let mut vars = vec![Vec::with_capacity(m * signs.len()); record.len()];
            for p in 0..m {
                let col = x.column(p);
                let pcol = perp.column(p);
                for &sg in signs {
                    let mut logs = 0.0;
                    let mut rough = 1.0;
                    let (mut t_prev, mut b_prev) = (0.0, 0.0);
                    let mut r = 0;
                    for k in 0..n {
                        let dt = grid[k] - t_prev;
                        let b = sg * col[n + k];
                        let db = b - b_prev;
                        let db_perp = sg * pcol[k] * dt.sqrt();
                        let w = rough * xi_step[k];
                        logs += -0.5 * w + (w / dt).sqrt() * (rho * db + rho_bar * db_perp);
                        rough = (eta * sg * col[k] - drift[k]).exp();
                        let v = xi[k] * rough;
                        t_prev = grid[k];
                        b_prev = b;
                        if r < record.len() && record[r] == k {
                            spots[r].push(logs.exp());
                            vars[r].push(v);
                            r += 1;
                        }
                    }
                }
            }
            (spots, vars)
        })
        .collect();

    let mut spots = vec![Vec::with_capacity(cfg.n_paths); record.len()];
    let mut variances = vec![Vec::with_capacity(cfg.n_paths); record.len()];
    for (s, v) in blocks {
        for r in 0..record.len() {
            spots[r].extend_from_slice(&s[r]);
            variances[r].extend_from_slice(&v[r]);
        }
    }
    SIMULATIONS.fetch_add(1, Ordering::Relaxed);
    SIM_NANOS.fetch_add(started.elapsed().as_nanos() as u64, Ordering::Relaxed);
    Ok(McPaths {
        maturities: cfg.maturities.clone(),
        spots,
        variances,
        antithetic: cfg.antithetic,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSmile {
    pub maturity: f64,
    pub strikes: Vec<f64>,
    pub prices: Vec<f64>,
    pub price_se: Vec<f64>,
    /// `None` where Black-Scholes inversion failed; such strikes are discarded.
    pub vols: Vec<Option<f64>>,
    pub vol_se: Vec<Option<f64>>,
}

impl McSmile {
    pub fn failures(&self) -> usize {
        self.vols.iter().filter(|v| v.is_none()).count()
    }
}

/// Prices and implied vols at one maturity from an existing path set.
pub fn smile_from_paths(paths: &McPaths, maturity: f64, strikes: &[f64]) -> Result<McSmile> {
    let mut prices = Vec::with_capacity(strikes.len());
    let mut price_se = Vec::with_capacity(strikes.len());
    let mut vols = Vec::with_capacity(strikes.len());
    let mut vol_se = Vec::with_capacity(strikes.len());
    for &k in strikes {
        if !(k > 0.0) {
            return Err(domain(format!("strike must be positive, got {k}")));
        }
        let (p, se) = paths.estimate(maturity, |s| (s - k).max(0.0))?;
        let iv = bs_implied_vol(1.0, k, maturity, p).ok();
        let ivse = iv.and_then(|v| {
            let vega = bs_vega(1.0, k, maturity, v).ok()?;
            (vega > 0.0).then(|| se / vega)
        });
        prices.push(p);
        price_se.push(se);
        vols.push(iv);
        vol_se.push(ivse);
    }
    if !strikes.is_empty() && vols.iter().all(|v| v.is_none()) {
        return Err(Error::AllStrikesFailed);
    }
    Ok(McSmile {
        maturity,
        strikes: strikes.to_vec(),
        prices,
        price_se,
        vols,
        vol_se,
    })
}

/// Implied-vol smile at `maturity` with Monte Carlo standard errors.
pub fn smile_mc(
    params: &RBergomiParams,
    curve: &ForwardVarianceCurve,
    maturity: f64,
    strikes: &[f64],
    cfg: &McConfig,
) -> Result<McSmile> {
    if !cfg.maturities.contains(&maturity) {
        return Err(domain(format!("maturity {maturity} is not in the simulation grid")));
    }
    let paths = simulate_paths(params, curve, cfg)?;
    smile_from_paths(&paths, maturity, strikes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsm::bs_call_price;

    fn riemann_cov_yy(alpha: f64, s: f64, t: f64, panels: usize) -> f64 {
        // midpoint rule on the substituted, non-singular integrand
        let top = s.powf(alpha);
        let h = top / panels as f64;
        let d = t - s;
        let mut acc = 0.0;
        for i in 0..panels {
            let y = (i as f64 + 0.5) * h;
            acc += (d + y.powf(1.0 / alpha)).powf(alpha - 1.0);
        }
        (2.0 * alpha - 1.0) * acc * h / alpha
    }

    #[test]
    fn covariance_examples() {
        let m = volterra_cov(0.1, &[0.5, 1.0]).unwrap();
        assert!((m[(1, 1)] - 1.0).abs() < 1e-14);
        let oracle = riemann_cov_yy(0.6, 0.5, 1.0, 1_000_000);
        assert!((m[(1, 0)] - oracle).abs() < 1e-8, "{} vs {oracle}", m[(1, 0)]);

        let times = [0.2, 0.7, 1.3];
        let m = volterra_cov(0.5, &times).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mn = times[i].min(times[j]);
                assert!((m[(i, j)] - mn).abs() < 1e-12);
                assert!((m[(i, 3 + j)] - mn).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn covariance_is_psd() {
        let cfg = McConfig::new(vec![0.003, 0.05, 0.5, 1.0], 1000, 0);
        let grid = cfg.time_grid();
        for h in [0.025, 0.1, 0.3, 0.5] {
            let m = volterra_cov(h, &grid).unwrap();
            let eig = m.clone().symmetric_eigen();
            assert!(eig.eigenvalues.min() > -1e-8);
            let a = cov_factor(&m).unwrap();
            let back = &a * a.transpose();
            assert!((back - &m).abs().max() < 1e-9);
        }
    }

    #[test]
    fn grid_contains_maturities() {
        let mats = vec![0.0031, 0.0101, 0.25, 1.007];
        let cfg = McConfig::new(mats.clone(), 2, 0);
        let g = cfg.time_grid();
        for t in mats {
            assert!(g.contains(&t));
        }
        assert!(g.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.01 + 1e-12));
        assert!(g[0] <= 0.0004);
    }

    #[test]
    fn deterministic_limit() {
        let p = RBergomiParams::new(0.1, 1e-6, -0.7).unwrap();
        let c = ForwardVarianceCurve::flat(0.04);
        let cfg = McConfig::new(vec![1.0], 20_000, 7);
        let paths = simulate_paths(&p, &c, &cfg).unwrap();
        let logs: Vec<f64> = paths.spots[0].iter().map(|s| s.ln()).collect();
        let (m, _) = mean_se(&logs);
        let var = logs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (logs.len() - 1) as f64;
        // sample variance of a normal has standard error var * sqrt(2/(n-1))
        let se = 0.04 * (2.0 / (logs.len() - 1) as f64).sqrt();
        assert!((var - 0.04).abs() < 3.0 * se, "{var}");

        let s = smile_mc(&p, &c, 1.0, &[0.8, 1.0, 1.2], &cfg).unwrap();
        for (v, se) in s.vols.iter().zip(&s.vol_se) {
            assert!((v.unwrap() - 0.2).abs() < 2.0 * se.unwrap() + 1e-12);
        }
    }

    #[test]
    fn martingale_and_variance_mean() {
        let p = RBergomiParams::new(0.1, 1.9, -0.9).unwrap();
        let c = ForwardVarianceCurve::parametric(0.04, 0.02, 0.1, 0.3, 0.1);
        let mats = vec![0.01, 0.1, 0.5, 1.0];
        let cfg = McConfig::new(mats.clone(), 16_384, 11);
        let paths = simulate_paths(&p, &c, &cfg).unwrap();
        for t in mats {
            let (m, se) = paths.estimate(t, |s| s).unwrap();
            assert!((m - 1.0).abs() < 3.0 * se, "T={t}: {m} +- {se}");
            let (v, se) = paths.variance_mean(t).unwrap();
            let target = c.evaluate(t).unwrap();
            assert!((v - target).abs() < 3.0 * se, "T={t}: {v} vs {target}");
        }
    }

    #[test]
    fn same_seed_same_numbers() {
        let p = RBergomiParams::new(0.2, 1.0, -0.5).unwrap();
        let c = ForwardVarianceCurve::flat(0.05);
        let cfg = McConfig::new(vec![0.3], 3000, 5);
        let a = smile_mc(&p, &c, 0.3, &[0.9, 1.0], &cfg).unwrap();
        let b = smile_mc(&p, &c, 0.3, &[0.9, 1.0], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn negative_skew() {
        let p = RBergomiParams::new(0.1, 1.9, -0.9).unwrap();
        let c = ForwardVarianceCurve::flat(0.09);
        let cfg = McConfig::new(vec![0.25], 8000, 3);
        let s = smile_mc(&p, &c, 0.25, &[0.9, 1.1], &cfg).unwrap();
        assert!(s.vols[0].unwrap() > s.vols[1].unwrap());
    }

    #[test]
    fn matches_higher_budget_run() {
        let p = RBergomiParams::new(0.1, 1.9, -0.9).unwrap();
        let c = ForwardVarianceCurve::flat(0.09);
        let a = smile_mc(&p, &c, 0.25, &[1.0], &McConfig::new(vec![0.25], 8192, 1)).unwrap();
        let b = smile_mc(&p, &c, 0.25, &[1.0], &McConfig::new(vec![0.25], 32768, 2)).unwrap();
        let se = a.vol_se[0].unwrap().hypot(b.vol_se[0].unwrap());
        assert!((a.vols[0].unwrap() - b.vols[0].unwrap()).abs() < 3.0 * se);
    }

    #[test]
    fn classical_mixing_oracle() {
        // H = 1/2, rho = 0: the call is a Black-Scholes price mixed over the
        // integrated variance of a lognormal variance path.
        let (eta, xi, t) = (1.0, 0.04, 0.5);
        let p = RBergomiParams::new(0.5, eta, 0.0).unwrap();
        let c = ForwardVarianceCurve::flat(xi);
        let cfg = McConfig::new(vec![t], 20_000, 21);
        let s = smile_mc(&p, &c, t, &[0.9, 1.0, 1.1], &cfg).unwrap();

        let grid = cfg.time_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(999);
        let n_outer = 20_000;
        let mut sums = [Vec::new(), Vec::new(), Vec::new()];
        for _ in 0..n_outer {
            let (mut w, mut tp, mut v, mut iv) = (0.0, 0.0, xi, 0.0);
            for &g in &grid {
                let dt = g - tp;
                iv += v * dt;
                let z: f64 = StandardNormal.sample(&mut rng);
                w += z * dt.sqrt();
                v = xi * (eta * w - 0.5 * eta * eta * g).exp();
                tp = g;
            }
            let sd = (iv / t).sqrt();
            for (i, k) in [0.9, 1.0, 1.1].iter().enumerate() {
                sums[i].push(bs_call_price(1.0, *k, t, sd).unwrap());
            }
        }
        for i in 0..3 {
            let (m, se_o) = mean_se(&sums[i]);
            let se = se_o.hypot(s.price_se[i]);
            assert!((m - s.prices[i]).abs() < 3.0 * se, "{} vs {m}", s.prices[i]);
        }
    }

    #[test]
    fn antithetics_reduce_variance() {
        // estimator variance (squared standard error) averaged over 20 runs
        // of equal path budget
        let p = RBergomiParams::new(0.1, 1.5, -0.7).unwrap();
        let c = ForwardVarianceCurve::flat(0.04);
        let (mut anti, mut plain) = (0.0, 0.0);
        for rep in 0..20u64 {
            let mut cfg = McConfig::new(vec![0.5], 2000, 100 + rep);
            let a = smile_mc(&p, &c, 0.5, &[1.0], &cfg).unwrap();
            cfg.antithetic = false;
            cfg.seed = 1000 + rep;
            let b = smile_mc(&p, &c, 0.5, &[1.0], &cfg).unwrap();
            anti += a.price_se[0].powi(2);
            plain += b.price_se[0].powi(2);
        }
        assert!(anti <= plain, "{anti} vs {plain}");
    }

    #[test]
    fn halving_the_step_is_below_default_noise() {
        // both resolutions run with 16x the default budget so that their own
        // noise is small next to the default-budget standard error
        let p = RBergomiParams::new(0.1, 1.9, -0.9).unwrap();
        let c = ForwardVarianceCurve::flat(0.09);
        let t = 0.25;
        let base = smile_mc(&p, &c, t, &[1.0], &McConfig::new(vec![t], DEFAULT_PATHS, 31)).unwrap();
        let mut coarse = McConfig::new(vec![t], 16 * DEFAULT_PATHS, 32);
        let a = smile_mc(&p, &c, t, &[1.0], &coarse).unwrap();
        coarse.steps_per_year *= 2;
        coarse.seed = 33;
        let b = smile_mc(&p, &c, t, &[1.0], &coarse).unwrap();
        let diff = (a.vols[0].unwrap() - b.vols[0].unwrap()).abs();
        assert!(diff < base.vol_se[0].unwrap(), "{diff} vs {:?}", base.vol_se[0]);
    }

    #[test]
    fn rejects_bad_config() {
        let p = RBergomiParams::new(0.1, 1.0, -0.5).unwrap();
        let c = ForwardVarianceCurve::flat(0.04);
        let mut cfg = McConfig::new(vec![0.5], 1001, 1);
        assert!(simulate_paths(&p, &c, &cfg).is_err());
        cfg.n_paths = 1000;
        assert!(smile_mc(&p, &c, 0.4, &[1.0], &cfg).is_err());
        assert!(volterra_cov(0.1, &[0.5, 0.5]).is_err());
    }
}
