//! Feed-forward pricing surrogate (theta, T, K) -> implied vol: min-max
//! input scaling, ELU hidden layers, identity output, Adam training with
//! early stopping, exact input gradients and JSON persistence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fvc::CurveVariant;
use crate::gridgen::QuoteSet;
use crate::params::ModelKind;

pub const HIDDEN_LAYERS: [usize; 4] = [64, 64, 64, 64];
pub const WEIGHTS_FORMAT: &str = "roughvol-network";
pub const WEIGHTS_VERSION: u32 = 1;

static NN_EVALS: AtomicU64 = AtomicU64::new(0);

/// Single-point network evaluations since process start (forward passes,
/// with or without gradient).
pub fn nn_counters() -> u64 {
    NN_EVALS.load(Ordering::Relaxed)
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn elu_slope(z: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        z.exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 500,
            patience: 50,
            batch_size: 1024,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            val_fraction: 0.1,
            seed: 0,
            hidden: HIDDEN_LAYERS.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience >= self.max_epochs {
            return Err(domain("patience must be below max_epochs"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 0.5) {
            return Err(domain(format!(
                "validation fraction must lie in (0, 0.5), got {}",
                self.val_fraction
            )));
        }
        if self.batch_size == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(domain("batch size and layer widths must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.epsilon > 0.0) {
            return Err(domain("learning rate and epsilon must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(domain("Adam moments must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub model: Option<ModelKind>,
    pub curve: Option<CurveVariant>,
    pub input_names: Vec<String>,
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub train_rmse: f64,
    pub val_rmse: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub dataset_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_rmse: f64,
    pub val_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    n_in: usize,
    n_out: usize,
    /// Row-major (n_out, n_in).
    w: Vec<f64>,
    /// Row-major (n_in, n_out), used by the forward pass.
    wt: Vec<f64>,
    b: Vec<f64>,
}

impl Layer {
    fn new(n_in: usize, n_out: usize, w: Vec<f64>, b: Vec<f64>) -> Self {
        let mut wt = vec![0.0; w.len()];
        for o in 0..n_out {
            for i in 0..n_in {
                wt[i * n_out + o] = w[o * n_in + i];
            }
        }
        Layer { n_in, n_out, w, wt, b }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    dims: Vec<usize>,
    layers: Vec<Layer>,
    scale_min: Vec<f64>,
    scale_max: Vec<f64>,
    pub meta: NetworkMeta,
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    format: String,
    version: u32,
    dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    scale_min: Vec<f64>,
    scale_max: Vec<f64>,
    meta: NetworkMeta,
}

impl Network {
    /// Builds a network from row-major weight matrices `(dims[l+1], dims[l])`.
    pub fn from_parts(
        dims: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        scale_min: Vec<f64>,
        scale_max: Vec<f64>,
        meta: NetworkMeta,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) || *dims.last().unwrap() != 1 {
            return Err(Error::Incompatible(format!("invalid layer dims {dims:?}")));
        }
        let n = dims.len() - 1;
        if weights.len() != n || biases.len() != n {
            return Err(Error::Incompatible(format!(
                "expected {n} weight matrices and bias vectors, found {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        if scale_min.len() != dims[0] || scale_max.len() != dims[0] {
            return Err(Error::Incompatible(format!(
                "scaling vectors must have length {}",
                dims[0]
            )));
        }
        let mut layers = Vec::with_capacity(n);
        for (l, (w, b)) in weights.into_iter().zip(biases).enumerate() {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            if w.len() != n_in * n_out || b.len() != n_out {
                return Err(Error::Incompatible(format!(
                    "layer {l}: expected {n_out}x{n_in} weights and {n_out} biases"
                )));
            }
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::Incompatible(format!("layer {l} has non-finite weights")));
            }
            layers.push(Layer::new(n_in, n_out, w, b));
        }
        Ok(Network {
            dims,
            layers,
            scale_min,
            scale_max,
            meta,
        })
    }

    /// Glorot-uniform weights, zero biases, identity scaling.
    pub fn glorot(d_in: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![d_in];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let limit = (6.0 / (dims[l] + dims[l + 1]) as f64).sqrt();
            weights.push(
                (0..dims[l] * dims[l + 1])
                    .map(|_| rng.random_range(-limit..limit))
                    .collect(),
            );
            biases.push(vec![0.0; dims[l + 1]]);
        }
        Network::from_parts(
            dims,
            weights,
            biases,
            vec![0.0; d_in],
            vec![1.0; d_in],
            NetworkMeta {
                seed,
                ..NetworkMeta::default()
            },
        )
        .expect("consistent shapes")
    }

    pub fn d_in(&self) -> usize {
        self.dims[0]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn scaling(&self) -> (&[f64], &[f64]) {
        (&self.scale_min, &self.scale_max)
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.layers[layer].w
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.layers[layer].b
    }

    fn range(&self, i: usize) -> f64 {
        let r = self.scale_max[i] - self.scale_min[i];
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }

    pub fn scale_input(&self, input: &[f64]) -> Vec<f64> {
        input
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - self.scale_min[i]) / self.range(i))
            .collect()
    }

    /// True when some feature falls outside the training range.
    pub fn is_extrapolation(&self, input: &[f64]) -> bool {
        const TOL: f64 = 1e-12;
        self.scale_input(input)
            .iter()
            .any(|&s| !(-TOL..=1.0 + TOL).contains(&s))
    }

    fn check_dim(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.d_in() {
            return Err(Error::Dimension {
                expected: self.d_in(),
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Forward pass on a scaled input; fills the pre-activations of every
    /// layer when `pre` is given.
    fn run(&self, x: &[f64], mut pre: Option<&mut Vec<Vec<f64>>>) -> f64 {
        let last = self.layers.len() - 1;
        let mut act = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.b.clone();
            for (i, &a) in act.iter().enumerate() {
                let row = &layer.wt[i * layer.n_out..(i + 1) * layer.n_out];
                for (zo, &w) in z.iter_mut().zip(row) {
                    *zo += a * w;
                }
            }
            act = if l < last { z.iter().map(|&v| elu(v)).collect() } else { z.clone() };
            if let Some(p) = pre.as_deref_mut() {
                p.push(z);
            }
        }
        act[0]
    }

    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        self.check_dim(input)?;
        NN_EVALS.fetch_add(1, Ordering::Relaxed);
        Ok(self.run(&self.scale_input(input), None))
    }

    /// Output and its exact gradient with respect to the unscaled inputs.
    pub fn forward_with_gradient(&self, input: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(input)?;
        NN_EVALS.fetch_add(1, Ordering::Relaxed);
        let mut pre = Vec::with_capacity(self.layers.len());
        let out = self.run(&self.scale_input(input), Some(&mut pre));
        let mut delta = vec![1.0];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let mut g = vec![0.0; layer.n_in];
            for (o, &d) in delta.iter().enumerate() {
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                for (gi, &w) in g.iter_mut().zip(row) {
                    *gi += d * w;
                }
            }
            if l > 0 {
                for (gi, &z) in g.iter_mut().zip(&pre[l - 1]) {
                    *gi *= elu_slope(z);
                }
            }
            delta = g;
        }
        for (i, d) in delta.iter_mut().enumerate() {
            *d /= self.range(i);
        }
        Ok((out, delta))
    }

    pub fn input_gradient(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_with_gradient(input)?.1)
    }

    /// Checks that the network expects `model` parameters and `curve`
    /// features.
    pub fn expect(&self, model: ModelKind, curve: CurveVariant) -> Result<()> {
        let d = model.param_names().len() + curve.n_features() + 2;
        if self.d_in() != d {
            return Err(Error::Incompatible(format!(
                "{} with {} curve needs {d} inputs, network has {}",
                model.name(),
                curve.name(),
                self.d_in()
            )));
        }
        if let Some(m) = self.meta.model {
            if m != model {
                return Err(Error::Incompatible(format!(
                    "network was trained for {}, not {}",
                    m.name(),
                    model.name()
                )));
            }
        }
        if let Some(c) = self.meta.curve {
            if c != curve {
                return Err(Error::Incompatible(format!(
                    "network was trained with the {} curve, not {}",
                    c.name(),
                    curve.name()
                )));
            }
        }
        Ok(())
    }

    pub fn save_weights(&self, path: &Path) -> Result<()> {
        let file = WeightsFile {
            format: WEIGHTS_FORMAT.into(),
            version: WEIGHTS_VERSION,
            dims: self.dims.clone(),
            weights: self.layers.iter().map(|l| l.w.clone()).collect(),
            biases: self.layers.iter().map(|l| l.b.clone()).collect(),
            scale_min: self.scale_min.clone(),
            scale_max: self.scale_max.clone(),
            meta: self.meta.clone(),
        };
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, &file)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_weights(path: &Path) -> Result<Self> {
        let file: WeightsFile = serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Error::Malformed {
                path: path.display().to_string(),
                line: e.line(),
                reason: e.to_string(),
            })?;
        if file.format != WEIGHTS_FORMAT || file.version != WEIGHTS_VERSION {
            return Err(Error::Incompatible(format!(
                "unsupported weights format {} v{}",
                file.format, file.version
            )));
        }
        Network::from_parts(
            file.dims,
            file.weights,
            file.biases,
            file.scale_min,
            file.scale_max,
            file.meta,
        )
    }
}

/// Absolute-error summary of a network against reference vols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub max: f64,
}

pub fn abs_errors(net: &Network, set: &QuoteSet) -> Result<Vec<f64>> {
    (0..set.records.len())
        .into_par_iter()
        .map(|i| Ok((net.forward(&set.input(i))? - set.records[i].iv).abs()))
        .collect()
}

pub fn error_summary(errors: &[f64]) -> ErrorSummary {
    let n = errors.len();
    let nf = n.max(1) as f64;
    ErrorSummary {
        n,
        mae: errors.iter().sum::<f64>() / nf,
        rmse: (errors.iter().map(|e| e * e).sum::<f64>() / nf).sqrt(),
        max: errors.iter().cloned().fold(0.0, f64::max),
    }
}

pub fn evaluate(net: &Network, set: &QuoteSet) -> Result<ErrorSummary> {
    Ok(error_summary(&abs_errors(net, set)?))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr_t: f64, cfg: &TrainConfig) {
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr_t * *m / (v.sqrt() + cfg.epsilon);
        }
    }
}

/// Dense working copy of the parameters used during training.
struct Trainer {
    w: Vec<Array2<f64>>,
    b: Vec<Array1<f64>>,
}

impl Trainer {
    fn from_network(net: &Network) -> Self {
        Trainer {
            w: net
                .layers
                .iter()
                .map(|l| Array2::from_shape_vec((l.n_out, l.n_in), l.w.clone()).unwrap())
                .collect(),
            b: net.layers.iter().map(|l| Array1::from(l.b.clone())).collect(),
        }
    }

    fn forward(&self, x: &Array2<f64>, pre: &mut Vec<Array2<f64>>, act: &mut Vec<Array2<f64>>) -> Array1<f64> {
        pre.clear();
        act.clear();
        act.push(x.clone());
        let last = self.w.len() - 1;
        for l in 0..self.w.len() {
            let z = act[l].dot(&self.w[l].t()) + &self.b[l];
            if l < last {
                act.push(z.mapv(elu));
            }
            pre.push(z);
        }
        pre[last].column(0).to_owned()
    }

    fn predict(&self, x: &Array2<f64>) -> Array1<f64> {
        let last = self.w.len() - 1;
        let mut a = x.clone();
        for l in 0..self.w.len() {
            let z = a.dot(&self.w[l].t()) + &self.b[l];
            a = if l < last { z.mapv(elu) } else { z };
        }
        a.column(0).to_owned()
    }

    /// Gradients of the batch MSE; returns the MSE.
    fn gradients(
        &self,
        x: &Array2<f64>,
        y: &Array1<f64>,
        gw: &mut [Array2<f64>],
        gb: &mut [Array1<f64>],
    ) -> f64 {
        let mut pre = Vec::new();
        let mut act = Vec::new();
        let out = self.forward(x, &mut pre, &mut act);
        let resid = &out - y;
        let n = y.len() as f64;
        let mse = resid.dot(&resid) / n;
        let mut delta = (resid * (2.0 / n)).insert_axis(Axis(1));
        for l in (0..self.w.len()).rev() {
            gw[l] = delta.t().dot(&act[l]);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut next = delta.dot(&self.w[l]);
                next.zip_mut_with(&pre[l - 1], |d, &z| *d *= elu_slope(z));
                delta = next;
            }
        }
        mse
    }

    fn store(&self, net: &mut Network) {
        for (l, layer) in net.layers.iter_mut().enumerate() {
            *layer = Layer::new(
                layer.n_in,
                layer.n_out,
                self.w[l].iter().cloned().collect(),
                self.b[l].to_vec(),
            );
        }
    }
}

fn rmse_of(trainer: &Trainer, x: &Array2<f64>, y: &Array1<f64>, chunk: usize) -> f64 {
    let mut sse = 0.0;
    let n = y.len();
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let p = trainer.predict(&x.slice(ndarray::s![start..end, ..]).to_owned());
        let r = &p - &y.slice(ndarray::s![start..end]);
        sse += r.dot(&r);
        start = end;
    }
    (sse / n.max(1) as f64).sqrt()
}

fn gather(x: &Array2<f64>, y: &Array1<f64>, idx: &[usize]) -> (Array2<f64>, Array1<f64>) {
    let d = x.ncols();
    let mut bx = Array2::zeros((idx.len(), d));
    let mut by = Array1::zeros(idx.len());
    for (r, &i) in idx.iter().enumerate() {
        bx.row_mut(r).assign(&x.row(i));
        by[r] = y[i];
    }
    (bx, by)
}

/// Splits parameter-set groups into training and validation folds.
fn split_groups(groups: &[usize], frac: f64, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_groups = groups.iter().max().map_or(0, |g| g + 1);
    if n_groups < 2 {
        return Err(domain("training needs at least two parameter sets"));
    }
    let mut order: Vec<usize> = (0..n_groups).collect();
    order.shuffle(rng);
    let n_val = ((frac * n_groups as f64).round() as usize).clamp(1, n_groups - 1);
    let mut is_val = vec![false; n_groups];
    for &g in &order[..n_val] {
        is_val[g] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, &g) in groups.iter().enumerate() {
        if is_val[g] {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    Ok((train, val))
}

/// Trains on raw inputs `theta ++ [T, K]`; `groups[i]` is the parameter-set
/// index of row `i` (rows of one set never straddle the split).
pub fn train_rows(
    inputs: &[Vec<f64>],
    targets: &[f64],
    groups: &[usize],
    cfg: &TrainConfig,
) -> Result<(Network, History)> {
    cfg.validate()?;
    if inputs.is_empty() || inputs.len() != targets.len() || inputs.len() != groups.len() {
        return Err(domain("training rows, targets and groups must be nonempty and aligned"));
    }
    let d = inputs[0].len();
    if inputs.iter().any(|r| r.len() != d) {
        return Err(domain("training rows have inconsistent lengths"));
    }
    if inputs.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(domain("training data contains non-finite values"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::glorot(d, &cfg.hidden, rng.random());
    net.meta.seed = cfg.seed;
    let mut lo = inputs[0].clone();
    let mut hi = inputs[0].clone();
    for r in inputs {
        for j in 0..d {
            lo[j] = lo[j].min(r[j]);
            hi[j] = hi[j].max(r[j]);
        }
    }
    net.scale_min = lo;
    net.scale_max = hi;

    let mut x = Array2::zeros((inputs.len(), d));
    for (i, r) in inputs.iter().enumerate() {
        for (j, v) in net.scale_input(r).into_iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    let y = Array1::from(targets.to_vec());
    let (train_idx, val_idx) = split_groups(groups, cfg.val_fraction, &mut rng)?;
    let (xt, yt) = gather(&x, &y, &train_idx);
    let (xv, yv) = gather(&x, &y, &val_idx);

    let mut trainer = Trainer::from_network(&net);
    let mut opt_w: Vec<Adam> = trainer.w.iter().map(|w| Adam::new(w.len())).collect();
    let mut opt_b: Vec<Adam> = trainer.b.iter().map(|b| Adam::new(b.len())).collect();
    let mut gw: Vec<Array2<f64>> = trainer.w.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
    let mut gb: Vec<Array1<f64>> = trainer.b.iter().map(|b| Array1::zeros(b.raw_dim())).collect();

    let mut order: Vec<usize> = (0..yt.len()).collect();
    let mut history = History {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best_val = f64::INFINITY;
    let mut best = (trainer.w.clone(), trainer.b.clone());
    let mut wait = 0;
    let mut t = 0i32;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (bx, by) = gather(&xt, &yt, batch);
            let mse = trainer.gradients(&bx, &by, &mut gw, &mut gb);
            if !mse.is_finite() {
                return Err(Error::Divergence(epoch));
            }
            sse += mse * batch.len() as f64;
            t += 1;
            let lr_t = cfg.learning_rate * (1.0 - cfg.beta2.powi(t)).sqrt() / (1.0 - cfg.beta1.powi(t));
            for l in 0..trainer.w.len() {
                opt_w[l].step(trainer.w[l].as_slice_mut().unwrap(), gw[l].as_slice().unwrap(), lr_t, cfg);
                opt_b[l].step(trainer.b[l].as_slice_mut().unwrap(), gb[l].as_slice().unwrap(), lr_t, cfg);
            }
        }
        let train_rmse = (sse / yt.len() as f64).sqrt();
        let val_rmse = rmse_of(&trainer, &xv, &yv, 8192);
        if !val_rmse.is_finite() {
            return Err(Error::Divergence(epoch));
        }
        history.epochs.push(EpochStats {
            epoch,
            train_rmse,
            val_rmse,
        });
        if val_rmse < best_val {
            best_val = val_rmse;
            history.best_epoch = epoch;
            best = (trainer.w.clone(), trainer.b.clone());
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    trainer.w = best.0;
    trainer.b = best.1;
    trainer.store(&mut net);
    net.meta.epochs = history.epochs.len();
    net.meta.best_epoch = history.best_epoch;
    net.meta.train_rmse = rmse_of(&trainer, &xt, &yt, 8192);
    net.meta.val_rmse = best_val;
    net.meta.n_train = yt.len();
    net.meta.n_val = yv.len();
    Ok((net, history))
}

/// Trains on a quote set; the network records the model, curve variant,
/// input names and dataset digest.
pub fn train(set: &QuoteSet, cfg: &TrainConfig) -> Result<(Network, History)> {
    if set.records.is_empty() {
        return Err(domain("dataset is empty"));
    }
    let inputs: Vec<Vec<f64>> = (0..set.records.len()).map(|i| set.input(i)).collect();
    let targets: Vec<f64> = set.records.iter().map(|r| r.iv).collect();
    let (mut net, history) = train_rows(&inputs, &targets, &set.groups(), cfg)?;
    net.meta.model = Some(set.meta.model);
    net.meta.curve = Some(set.meta.curve);
    net.meta.input_names = set.meta.columns[..set.meta.columns.len() - 1].to_vec();
    net.meta.dataset_digest = set.digest();
    Ok((net, history))
}
