//! Calibration through a trained network: box-constrained
//! Levenberg-Marquardt on implied-vol residuals with multistart, plus the
//! controlled-environment estimation experiment.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fvc::{uniform, ForwardVarianceCurve, LEVEL_BOX};
use crate::gridgen::{adaptive_grid, is_admissible, price_slices, GenConfig, MaturitySlice, ModelParams};
use crate::neuralnet::Network;
use crate::params::{ModelKind, ParamBox};

/// One market quote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    #[serde(rename = "T")]
    pub maturity: f64,
    #[serde(rename = "K")]
    pub strike: f64,
    pub iv: f64,
}

pub fn read_quotes(path: &Path) -> Result<Vec<Quote>> {
    let shown = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).ne(["T", "K", "iv"]) {
        return Err(Error::Malformed {
            path: shown,
            line: 1,
            reason: format!("expected header T,K,iv, found {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<Quote>().enumerate() {
        let q = row.map_err(|e| Error::Malformed {
            path: shown.clone(),
            line: i + 2,
            reason: e.to_string(),
        })?;
        if !(q.maturity.is_finite() && q.strike.is_finite() && q.iv.is_finite()) {
            return Err(Error::Malformed {
                path: shown.clone(),
                line: i + 2,
                reason: "non-finite value".into(),
            });
        }
        out.push(q);
    }
    Ok(out)
}

pub fn write_quotes(path: &Path, quotes: &[Quote]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["T", "K", "iv"])?;
    for q in quotes {
        w.write_record([q.maturity.to_string(), q.strike.to_string(), q.iv.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Network vols on a set of `(T, K)` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceEval {
    pub vols: Vec<f64>,
    /// Points whose inputs fall outside the training ranges.
    pub extrapolated: Vec<bool>,
}

fn net_input(theta: &[f64], maturity: f64, strike: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(theta.len() + 2);
    x.extend_from_slice(theta);
    x.push(maturity);
    x.push(strike);
    x
}

pub fn evaluate_surface(net: &Network, theta: &[f64], points: &[(f64, f64)]) -> Result<SurfaceEval> {
    let bad: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, &(t, k))| !is_admissible(t, k))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Inadmissible(bad));
    }
    let mut vols = Vec::with_capacity(points.len());
    let mut extrapolated = Vec::with_capacity(points.len());
    for &(t, k) in points {
        let x = net_input(theta, t, k);
        vols.push(net.forward(&x)?);
        extrapolated.push(net.is_extrapolation(&x));
    }
    Ok(SurfaceEval { vols, extrapolated })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibConfig {
    /// Random starts in addition to the box centre.
    pub multistart: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub seed: u64,
}

impl Default for CalibConfig {
    fn default() -> Self {
        CalibConfig {
            multistart: 5,
            max_iter: 500,
            grad_tol: 1e-10,
            step_tol: 1e-12,
            seed: 0,
        }
    }
}

/// Training ranges of the network's parameter inputs.
pub fn network_box(net: &Network) -> ParamBox {
    let (lo, hi) = net.scaling();
    let p = net.d_in() - 2;
    ParamBox::new((0..p).map(|i| (lo[i], hi[i])).collect())
}

pub struct CalibrationProblem<'a> {
    pub net: &'a Network,
    pub quotes: Vec<Quote>,
    pub param_box: ParamBox,
    /// Indices of quotes used in the fit.
    pub admissible: Vec<usize>,
    /// Indices of quotes outside the training region.
    pub rejected: Vec<usize>,
}

impl<'a> CalibrationProblem<'a> {
    /// Screens the quotes; the box defaults to the network's training
    /// ranges.
    pub fn new(net: &'a Network, quotes: Vec<Quote>, param_box: Option<ParamBox>) -> Result<Self> {
        let p = net.d_in() - 2;
        let param_box = param_box.unwrap_or_else(|| network_box(net));
        if param_box.dim() != p || param_box.ranges.iter().any(|&(lo, hi)| !(lo <= hi)) {
            return Err(domain(format!("parameter box must have {p} ordered ranges")));
        }
        let (admissible, rejected): (Vec<usize>, Vec<usize>) = (0..quotes.len())
            .partition(|&i| is_admissible(quotes[i].maturity, quotes[i].strike) && quotes[i].iv.is_finite());
        if admissible.len() < p + 2 {
            return Err(Error::NoAdmissibleQuotes {
                admissible: admissible.len(),
                required: p + 2,
                rejected: rejected.len(),
            });
        }
        Ok(CalibrationProblem {
            net,
            quotes,
            param_box,
            admissible,
            rejected,
        })
    }

    pub fn n_params(&self) -> usize {
        self.param_box.dim()
    }

    /// Network minus market vol on every admissible quote.
    pub fn residuals(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.admissible
            .iter()
            .map(|&i| {
                let q = &self.quotes[i];
                Ok(self.net.forward(&net_input(theta, q.maturity, q.strike))? - q.iv)
            })
            .collect()
    }

    /// Residuals and their analytic Jacobian in the parameters.
    pub fn residuals_and_jacobian(&self, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let p = self.n_params();
        let n = self.admissible.len();
        let mut r = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, p);
        for (row, &i) in self.admissible.iter().enumerate() {
            let q = &self.quotes[i];
            let (v, g) = self.net.forward_with_gradient(&net_input(theta, q.maturity, q.strike))?;
            r[row] = v - q.iv;
            for j in 0..p {
                jac[(row, j)] = g[j];
            }
        }
        Ok((r, jac))
    }

    fn objective(r: &[f64]) -> f64 {
        0.5 * r.iter().map(|v| v * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    Step,
    MaxIterations,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub start: Vec<f64>,
    pub initial_rmse: f64,
    pub theta: Vec<f64>,
    pub rmse: f64,
    pub iterations: usize,
    pub evaluations: u64,
    pub termination: Option<Termination>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteFit {
    pub index: usize,
    pub maturity: f64,
    pub strike: f64,
    pub market: f64,
    pub model: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub theta: Vec<f64>,
    pub names: Vec<String>,
    pub rmse: f64,
    pub iterations: usize,
    /// Network evaluations (value or value+gradient) over all starts.
    pub evaluations: u64,
    pub wall_time: f64,
    pub termination: Termination,
    pub best_start: usize,
    pub residuals: Vec<QuoteFit>,
    pub rejected: Vec<Quote>,
    pub starts: Vec<StartReport>,
}

fn rmse(r: &[f64]) -> f64 {
    (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt()
}

fn levenberg_marquardt(problem: &CalibrationProblem, x0: &[f64], cfg: &CalibConfig) -> Result<StartReport> {
    let bx = &problem.param_box;
    let p = problem.n_params();
    let n = problem.admissible.len() as u64;
    let mut x = x0.to_vec();
    bx.project(&mut x);
    let (mut r, mut jac) = problem.residuals_and_jacobian(&x)?;
    let mut evals = n;
    let mut f = CalibrationProblem::objective(r.as_slice());
    let initial_rmse = rmse(r.as_slice());
    let mut mu = -1.0;
    let mut growth = 2.0;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut fresh = true;
    let (mut a, mut g) = (DMatrix::zeros(p, p), DVector::zeros(p));
    while iterations < cfg.max_iter {
        iterations += 1;
        if fresh {
            a = jac.transpose() * &jac;
            g = jac.transpose() * &r;
            fresh = false;
            // projected gradient
            let mut probe: Vec<f64> = x.iter().zip(g.iter()).map(|(xi, gi)| xi - gi).collect();
            bx.project(&mut probe);
            let pg = probe.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if pg < cfg.grad_tol {
                termination = Termination::Gradient;
                break;
            }
        }
        let diag: Vec<f64> = (0..p).map(|j| a[(j, j)]).collect();
        let dmax = diag.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        if mu < 0.0 {
            mu = 1e-3;
        }
        let mut lhs = a.clone();
        for j in 0..p {
            lhs[(j, j)] += mu * diag[j].max(1e-12 * dmax);
        }
        let delta = match lhs.cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => {
                mu *= growth;
                growth *= 2.0;
                continue;
            }
        };
        let mut x_new: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
        bx.project(&mut x_new);
        let step = DVector::from_iterator(p, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if step.norm() <= cfg.step_tol * (xnorm + cfg.step_tol) {
            termination = Termination::Step;
            break;
        }
        let r_new = problem.residuals(&x_new)?;
        evals += n;
        let f_new = CalibrationProblem::objective(&r_new);
        let predicted = -(g.dot(&step) + 0.5 * step.dot(&(&a * &step)));
        let ratio = if predicted > 0.0 { (f - f_new) / predicted } else { -1.0 };
        if ratio > 0.0 && f_new < f {
            x = x_new;
            let (r2, j2) = problem.residuals_and_jacobian(&x)?;
            evals += n;
            r = r2;
            jac = j2;
            f = f_new;
            fresh = true;
            mu *= (1.0 - (2.0 * ratio - 1.0).powi(3)).max(1.0 / 3.0);
            growth = 2.0;
        } else {
            mu *= growth;
            growth *= 2.0;
            if !mu.is_finite() || mu > 1e40 {
                termination = Termination::Stalled;
                break;
            }
        }
    }
    Ok(StartReport {
        start: x0.to_vec(),
        initial_rmse,
        rmse: rmse(r.as_slice()),
        theta: x,
        iterations,
        evaluations: evals,
        termination: Some(termination),
        error: None,
    })
}

/// Starting points: the box centre then `multistart` uniform draws.
pub fn start_points(bx: &ParamBox, cfg: &CalibConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = vec![bx.center()];
    for _ in 0..cfg.multistart {
        out.push(bx.sample(&mut rng));
    }
    out
}

pub fn calibrate(problem: &CalibrationProblem, cfg: &CalibConfig) -> Result<CalibrationResult> {
    let clock = Instant::now();
    let starts = start_points(&problem.param_box, cfg);
    let reports: Vec<StartReport> = starts
        .par_iter()
        .map(|x0| {
            levenberg_marquardt(problem, x0, cfg).unwrap_or_else(|e| StartReport {
                start: x0.clone(),
                initial_rmse: f64::NAN,
                theta: x0.clone(),
                rmse: f64::NAN,
                iterations: 0,
                evaluations: 0,
                termination: None,
                error: Some(e.to_string()),
            })
        })
        .collect();
    let best = reports
        .iter()
        .enumerate()
        .filter(|(_, s)| s.error.is_none() && s.rmse.is_finite())
        .min_by(|a, b| a.1.rmse.total_cmp(&b.1.rmse).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .ok_or(Error::AllStartsFailed(reports.len()))?;
    let theta = reports[best].theta.clone();
    let resid = problem.residuals(&theta)?;
    let residuals: Vec<QuoteFit> = problem
        .admissible
        .iter()
        .zip(&resid)
        .map(|(&i, &res)| {
            let q = problem.quotes[i];
            QuoteFit {
                index: i,
                maturity: q.maturity,
                strike: q.strike,
                market: q.iv,
                model: q.iv + res,
                residual: res,
            }
        })
        .collect();
    let names = if problem.net.meta.input_names.len() == problem.net.d_in() {
        problem.net.meta.input_names[..problem.n_params()].to_vec()
    } else {
        (0..problem.n_params()).map(|j| format!("x{j}")).collect()
    };
    Ok(CalibrationResult {
        rmse: rmse(&resid),
        iterations: reports[best].iterations,
        evaluations: reports.iter().map(|s| s.evaluations).sum::<u64>() + resid.len() as u64,
        termination: reports[best].termination.unwrap(),
        best_start: best,
        theta,
        names,
        residuals,
        rejected: problem.rejected.iter().map(|&i| problem.quotes[i]).collect(),
        starts: reports,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

/// Summary of estimation errors `e = true - estimate` for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub parameter: String,
    pub n: usize,
    pub min: f64,
    pub mean: f64,
    pub med: f64,
    pub q95: f64,
    pub max: f64,
    pub std: f64,
    /// Share of runs with estimate above the true value.
    pub overestimation_ratio: f64,
    pub tail_02: f64,
    pub tail_03: f64,
    pub tail_05: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

pub fn error_stats(parameter: &str, errors: &[f64]) -> ErrorStats {
    let n = errors.len();
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mean = s.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        s.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    let tail = |x: f64| s.iter().filter(|e| e.abs() > x).count() as f64 / nf;
    ErrorStats {
        parameter: parameter.to_string(),
        n,
        min: s.first().copied().unwrap_or(f64::NAN),
        mean,
        med: if n > 0 { quantile(&s, 0.5) } else { f64::NAN },
        q95: if n > 0 { quantile(&s, 0.95) } else { f64::NAN },
        max: s.last().copied().unwrap_or(f64::NAN),
        std: var.sqrt(),
        overestimation_ratio: s.iter().filter(|&&e| e < 0.0).count() as f64 / nf,
        tail_02: tail(0.02),
        tail_03: tail(0.03),
        tail_05: tail(0.05),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkSource {
    /// Surfaces priced by the model's own pricer.
    Pricer,
    /// Surfaces produced by the network itself.
    Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledConfig {
    pub n_surfaces: usize,
    pub seed: u64,
    /// Box of true model parameters; the model's default box when absent.
    pub model_box: Option<ParamBox>,
    /// Range of the flat forward-variance level.
    pub level_box: (f64, f64),
    pub source: BenchmarkSource,
    pub generator: GenConfig,
    pub calib: CalibConfig,
}

impl Default for ControlledConfig {
    fn default() -> Self {
        ControlledConfig {
            n_surfaces: 50,
            seed: 0,
            model_box: None,
            level_box: LEVEL_BOX,
            source: BenchmarkSource::Pricer,
            generator: GenConfig::default(),
            calib: CalibConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceOutcome {
    pub true_params: Vec<f64>,
    pub level: f64,
    pub estimate: Vec<f64>,
    pub rmse: f64,
    pub n_quotes: usize,
    pub wall_time: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledReport {
    pub model: ModelKind,
    pub source: BenchmarkSource,
    pub n_surfaces: usize,
    pub n_failed: usize,
    pub stats: Vec<ErrorStats>,
    pub wall_time: ErrorStats,
    pub surfaces: Vec<SurfaceOutcome>,
}

/// Calibrates `net` to flat-curve benchmark surfaces on the adaptive grid
/// and summarizes the model-parameter errors.
pub fn controlled_experiment(net: &Network, model: ModelKind, cfg: &ControlledConfig) -> Result<ControlledReport> {
    let n_model = model.param_names().len();
    let p = net.d_in() - 2;
    if p < n_model {
        return Err(Error::Incompatible(format!("network has only {p} parameter inputs")));
    }
    if cfg.source == BenchmarkSource::Network && p != n_model + 1 {
        return Err(domain("network-generated benchmarks need a flat-curve network"));
    }
    let model_box = cfg.model_box.clone().unwrap_or_else(|| model.default_box());
    let grid = adaptive_grid();
    let surfaces: Vec<SurfaceOutcome> = (0..cfg.n_surfaces)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let truth = model_box.sample(&mut rng);
            let level = uniform(&mut rng, cfg.level_box);
            let mc_seed = rng.next_u64();
            let outcome = benchmark_and_calibrate(net, model, &truth, level, &grid, cfg, mc_seed);
            match outcome {
                Ok((est, res)) => SurfaceOutcome {
                    true_params: truth,
                    level,
                    estimate: est,
                    rmse: res.rmse,
                    n_quotes: res.residuals.len(),
                    wall_time: res.wall_time,
                    error: None,
                },
                Err(e) => SurfaceOutcome {
                    true_params: truth,
                    level,
                    estimate: Vec::new(),
                    rmse: f64::NAN,
                    n_quotes: 0,
                    wall_time: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let ok: Vec<&SurfaceOutcome> = surfaces.iter().filter(|s| s.error.is_none()).collect();
    let stats = model
        .param_names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let e: Vec<f64> = ok.iter().map(|s| s.true_params[j] - s.estimate[j]).collect();
            error_stats(name, &e)
        })
        .collect();
    let times: Vec<f64> = ok.iter().map(|s| s.wall_time).collect();
    Ok(ControlledReport {
        model,
        source: cfg.source,
        n_surfaces: cfg.n_surfaces,
        n_failed: surfaces.len() - ok.len(),
        stats,
        wall_time: error_stats("wall_time", &times),
        surfaces,
    })
}

fn benchmark_and_calibrate(
    net: &Network,
    model: ModelKind,
    truth: &[f64],
    level: f64,
    grid: &[MaturitySlice],
    cfg: &ControlledConfig,
    mc_seed: u64,
) -> Result<(Vec<f64>, CalibrationResult)> {
    let mut quotes = Vec::new();
    match cfg.source {
        BenchmarkSource::Pricer => {
            let params = ModelParams::from_slice(model, truth)?;
            let curve = ForwardVarianceCurve::flat(level);
            let (priced, _) = price_slices(&params, &curve, grid, &cfg.generator, mc_seed);
            for s in priced {
                for (&k, v) in s.strikes.iter().zip(&s.vols) {
                    if let Some(iv) = v {
                        quotes.push(Quote {
                            maturity: s.maturity,
                            strike: k,
                            iv: *iv,
                        });
                    }
                }
            }
        }
        BenchmarkSource::Network => {
            let mut theta = truth.to_vec();
            theta.push(level);
            for s in grid {
                for &k in &s.strikes {
                    quotes.push(Quote {
                        maturity: s.maturity,
                        strike: k,
                        iv: net.forward(&net_input(&theta, s.maturity, k))?,
                    });
                }
            }
        }
    }
    let problem = CalibrationProblem::new(net, quotes, None)?;
    let res = calibrate(&problem, &cfg.calib)?;
    Ok((res.theta[..truth.len()].to_vec(), res))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridgen::sample_random_grid;
    use crate::neuralnet::{Network, NetworkMeta, HIDDEN_LAYERS};
    use rand::Rng;

    /// Random network whose scaling covers the rHeston box, a flat level,
    /// T and K.
    fn test_net(seed: u64) -> Network {
        let g = Network::glorot(6, &HIDDEN_LAYERS, seed);
        let dims = g.dims().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let weights = (0..dims.len() - 1).map(|l| g.weights(l).to_vec()).collect();
        let biases = (0..dims.len() - 1)
            .map(|l| (0..dims[l + 1]).map(|_| rng.random_range(-0.2..0.2)).collect())
            .collect();
        Network::from_parts(
            dims,
            weights,
            biases,
            vec![0.01, 0.15, -0.95, 0.01, 0.003, 0.13],
            vec![0.25, 0.65, -0.5, 0.16, 2.5, 1.48],
            NetworkMeta {
                input_names: ["H", "nu", "rho", "xi", "T", "K"].map(String::from).to_vec(),
                ..NetworkMeta::default()
            },
        )
        .unwrap()
    }

    fn grid_quotes(net: &Network, theta: &[f64], seed: u64) -> Vec<Quote> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for s in sample_random_grid(&mut rng) {
            for &k in &s.strikes {
                out.push(Quote {
                    maturity: s.maturity,
                    strike: k,
                    iv: net.forward(&net_input(theta, s.maturity, k)).unwrap(),
                });
            }
        }
        out
    }

    #[test]
    fn fixed_point_recovery() {
        let net = test_net(1);
        let theta0 = vec![0.12, 0.4, -0.7, 0.05];
        let quotes = grid_quotes(&net, &theta0, 3);
        assert_eq!(quotes.len(), 143);
        let problem = CalibrationProblem::new(&net, quotes, None).unwrap();
        let res = calibrate(&problem, &CalibConfig::default()).unwrap();
        assert!(res.rmse < 1e-8, "rmse {}", res.rmse);
        for (a, b) in res.theta.iter().zip(&theta0) {
            assert!((a - b).abs() < 1e-4, "{:?}", res.theta);
        }
        assert!(res.wall_time < 10.0);
        assert_eq!(res.names, vec!["H", "nu", "rho", "xi"]);
        assert!(res.rejected.is_empty());
    }

    #[test]
    fn result_invariants() {
        let net = test_net(2);
        let other = test_net(3);
        // target from a different network: nonzero residuals
        let quotes = grid_quotes(&other, &[0.1, 0.3, -0.6, 0.04], 4);
        let problem = CalibrationProblem::new(&net, quotes, None).unwrap();
        let res = calibrate(&problem, &CalibConfig::default()).unwrap();
        assert!(problem.param_box.contains(&res.theta));
        let r: Vec<f64> = res.residuals.iter().map(|q| q.residual).collect();
        assert!((rmse(&r) - res.rmse).abs() < 1e-12);
        for q in &res.residuals {
            assert!((q.model - q.market - q.residual).abs() < 1e-12);
        }
        for s in &res.starts {
            assert!(res.rmse <= s.initial_rmse + 1e-15);
            assert!(res.rmse <= s.rmse);
        }
        assert_eq!(res.starts.len(), 6);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let net = test_net(4);
        let quotes = grid_quotes(&net, &[0.1, 0.3, -0.6, 0.04], 5);
        let problem = CalibrationProblem::new(&net, quotes, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let theta = problem.param_box.sample(&mut rng);
            let (_, jac) = problem.residuals_and_jacobian(&theta).unwrap();
            let mut fd = DMatrix::zeros(jac.nrows(), jac.ncols());
            for j in 0..theta.len() {
                let (lo, hi) = problem.param_box.ranges[j];
                let h = 1e-5 * (hi - lo);
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[j] += h;
                tm[j] -= h;
                let rp = problem.residuals(&tp).unwrap();
                let rm = problem.residuals(&tm).unwrap();
                for i in 0..rp.len() {
                    fd[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            assert!((&jac - &fd).norm() / jac.norm() < 1e-5);
        }
    }

    #[test]
    fn out_of_band_quotes_rejected() {
        let net = test_net(1);
        let mut quotes = grid_quotes(&net, &[0.1, 0.3, -0.6, 0.04], 1);
        quotes.push(Quote {
            maturity: 0.5,
            strike: 2.0,
            iv: 0.2,
        });
        quotes.push(Quote {
            maturity: 3.0,
            strike: 1.0,
            iv: 0.2,
        });
        let problem = CalibrationProblem::new(&net, quotes, None).unwrap();
        assert_eq!(problem.rejected, vec![143, 144]);
        let res = calibrate(&problem, &CalibConfig::default()).unwrap();
        assert_eq!(res.rejected.len(), 2);

        let bad = vec![
            Quote {
                maturity: 0.5,
                strike: 2.0,
                iv: 0.2
            };
            10
        ];
        assert!(matches!(
            CalibrationProblem::new(&net, bad, None),
            Err(Error::NoAdmissibleQuotes { admissible: 0, .. })
        ));
    }

    #[test]
    fn surface_evaluation() {
        let net = test_net(1);
        let theta = [0.1, 0.3, -0.6, 0.04];
        let pts: Vec<(f64, f64)> = grid_quotes(&net, &theta, 2).iter().map(|q| (q.maturity, q.strike)).collect();
        let ev = evaluate_surface(&net, &theta, &pts).unwrap();
        assert_eq!(ev.vols.len(), 143);
        for (v, &(t, k)) in ev.vols.iter().zip(&pts) {
            assert_eq!(v.to_bits(), net.forward(&net_input(&theta, t, k)).unwrap().to_bits());
        }
        assert!(ev.extrapolated.iter().all(|&e| !e));
        match evaluate_surface(&net, &theta, &[(0.5, 1.0), (0.5, 0.1), (4.0, 1.0)]) {
            Err(Error::Inadmissible(idx)) => assert_eq!(idx, vec![1, 2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stats_layout() {
        let s = error_stats("H", &[-0.06, -0.01, 0.0, 0.01, 0.025, 0.04]);
        assert_eq!(s.min, -0.06);
        assert_eq!(s.max, 0.04);
        assert!((s.med - 0.005).abs() < 1e-15);
        assert!((s.overestimation_ratio - 2.0 / 6.0).abs() < 1e-15);
        assert!((s.tail_02 - 3.0 / 6.0).abs() < 1e-15);
        assert!((s.tail_03 - 2.0 / 6.0).abs() < 1e-15);
        assert!((s.tail_05 - 1.0 / 6.0).abs() < 1e-15);
        assert!((s.q95 - (0.025 + 0.75 * 0.015)).abs() < 1e-15);
        let json = serde_json::to_value(&s).unwrap();
        for key in ["min", "mean", "med", "q95", "max", "std", "overestimation_ratio", "tail_02", "tail_03", "tail_05"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn self_calibration_has_zero_error() {
        let net = test_net(7);
        let cfg = ControlledConfig {
            n_surfaces: 4,
            source: BenchmarkSource::Network,
            model_box: Some(ModelKind::RHeston.default_box().interior(0.1)),
            ..ControlledConfig::default()
        };
        let rep = controlled_experiment(&net, ModelKind::RHeston, &cfg).unwrap();
        assert_eq!(rep.n_failed, 0);
        for s in &rep.stats {
            assert!(s.max.abs() < 1e-4 && s.min.abs() < 1e-4, "{s:?}");
        }
    }

    #[test]
    fn quotes_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        let q = vec![
            Quote {
                maturity: 0.1,
                strike: 0.95,
                iv: 0.2123456789012345,
            },
            Quote {
                maturity: 1.0,
                strike: 1.1,
                iv: 0.18,
            },
        ];
        write_quotes(&path, &q).unwrap();
        assert_eq!(read_quotes(&path).unwrap(), q);
        std::fs::write(&path, "T,K,iv\n0.1,0.9,0.2\n0.2,x,0.3\n").unwrap();
        assert!(matches!(read_quotes(&path), Err(Error::Malformed { line: 3, .. })));
    }
}
