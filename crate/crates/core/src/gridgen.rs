//! Training-set generation: fixed, adaptive and random grids, random
//! smiles and pure pointwise sampling, plus CSV/JSON serialization.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};
use crate::fvc::{sample_curve, CurveVariant, ForwardVarianceCurve, FvcSampler};
use crate::params::{ModelKind, ParamBox, RBergomiParams, RHestonParams};
use crate::rbergomi::{simulate_paths, smile_from_paths, McConfig, DEFAULT_PATHS, DEFAULT_STEPS_PER_YEAR};
use crate::rheston::{smile, PricerConfig};

/// Edges of the 11 maturity sub-intervals; the last one is closed.
pub const MATURITY_EDGES: [f64; 12] = [
    0.003, 0.030, 0.090, 0.150, 0.300, 0.500, 0.750, 1.000, 1.250, 1.500, 2.000, 2.500,
];
pub const N_MATURITIES: usize = 11;
pub const N_STRIKES: usize = 13;
/// Strikes drawn in the left tail, centre and right tail.
pub const STRIKE_SPLIT: [usize; 3] = [4, 7, 2];
pub const BAND_LOWER: f64 = 0.55;
pub const BAND_UPPER: f64 = 0.30;
pub const CENTRAL_HALF_WIDTH: f64 = 0.20;
pub const T_MIN: f64 = 0.003;
pub const T_MAX: f64 = 2.5;

pub const FIXED_MATURITIES: [f64; 8] = [0.1, 0.3, 0.6, 0.9, 1.2, 1.5, 1.8, 2.0];
pub const ADAPTIVE_MATURITIES: [f64; 8] = [0.01, 0.025, 0.1, 0.3, 0.6, 1.0, 1.5, 2.0];

/// Strike band `[1 - l sqrt(T), 1 + u sqrt(T)]` (moneyness, S0 = 1).
pub fn strike_band(maturity: f64) -> (f64, f64) {
    let s = maturity.sqrt();
    (1.0 - BAND_LOWER * s, 1.0 + BAND_UPPER * s)
}

/// Whether `(T, K)` lies in the region the networks are trained on.
pub fn is_admissible(maturity: f64, strike: f64) -> bool {
    let tol = 1e-12;
    if !(maturity >= T_MIN - tol && maturity <= T_MAX + tol) {
        return false;
    }
    let (lo, hi) = strike_band(maturity);
    strike >= lo - tol && strike <= hi + tol
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridVariant {
    Fixed,
    Adaptive,
    RandomGrid,
    RandomSmile,
    Pointwise,
}

impl GridVariant {
    pub fn name(self) -> &'static str {
        match self {
            GridVariant::Fixed => "fixed",
            GridVariant::Adaptive => "adaptive",
            GridVariant::RandomGrid => "random_grid",
            GridVariant::RandomSmile => "random_smile",
            GridVariant::Pointwise => "pointwise",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "fixed" => Ok(GridVariant::Fixed),
            "adaptive" => Ok(GridVariant::Adaptive),
            "random_grid" => Ok(GridVariant::RandomGrid),
            "random_smile" => Ok(GridVariant::RandomSmile),
            "pointwise" => Ok(GridVariant::Pointwise),
            other => Err(domain(format!("unknown grid variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub variant: GridVariant,
    pub seed: u64,
}

/// Strikes quoted at one maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaturitySlice {
    pub maturity: f64,
    pub strikes: Vec<f64>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// 8 maturities by 11 equally spaced strikes on [0.5, 1.5].
pub fn fixed_grid() -> Vec<MaturitySlice> {
    FIXED_MATURITIES
        .iter()
        .map(|&t| MaturitySlice {
            maturity: t,
            strikes: linspace(0.5, 1.5, 11),
        })
        .collect()
}

/// 8 maturities by 13 equally spaced strikes spanning each band.
pub fn adaptive_grid() -> Vec<MaturitySlice> {
    ADAPTIVE_MATURITIES
        .iter()
        .map(|&t| {
            let (lo, hi) = strike_band(t);
            MaturitySlice {
                maturity: t,
                strikes: linspace(lo, hi, N_STRIKES),
            }
        })
        .collect()
}

/// Uniform on the open interval (lo, hi).
fn uniform_open<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let x = lo + (hi - lo) * rng.random::<f64>();
        if x > lo && x < hi {
            return x;
        }
    }
}

fn sample_maturity<R: Rng + ?Sized>(bucket: usize, rng: &mut R) -> f64 {
    let (lo, hi) = (MATURITY_EDGES[bucket], MATURITY_EDGES[bucket + 1]);
    // half-open sub-intervals, the last one closed
    loop {
        let t = lo + (hi - lo) * rng.random::<f64>();
        if t < hi || bucket == N_MATURITIES - 1 {
            return t;
        }
    }
}

/// 13 sorted strikes split 4/7/2 over the left tail, centre and right tail
/// of the band at `maturity`.
pub fn sample_strikes<R: Rng + ?Sized>(maturity: f64, rng: &mut R) -> Vec<f64> {
    let s = maturity.sqrt();
    let (k_min, k_max) = strike_band(maturity);
    let c_lo = 1.0 - CENTRAL_HALF_WIDTH * s;
    let c_hi = 1.0 + CENTRAL_HALF_WIDTH * s;
    let regions = [(k_min, c_lo), (c_lo, c_hi), (c_hi, k_max)];
    let mut out = Vec::with_capacity(N_STRIKES);
    for (&(lo, hi), &n) in regions.iter().zip(&STRIKE_SPLIT) {
        let mut region: Vec<f64> = (0..n).map(|_| uniform_open(rng, lo, hi)).collect();
        region.sort_by(f64::total_cmp);
        out.extend(region);
    }
    out
}

/// One smile: a maturity from sub-interval `bucket` and its 13 strikes.
pub fn sample_smile<R: Rng + ?Sized>(bucket: usize, rng: &mut R) -> MaturitySlice {
    let maturity = sample_maturity(bucket, rng);
    MaturitySlice {
        maturity,
        strikes: sample_strikes(maturity, rng),
    }
}

/// 11 maturities, one per sub-interval, each with 13 strikes.
pub fn sample_random_grid<R: Rng + ?Sized>(rng: &mut R) -> Vec<MaturitySlice> {
    (0..N_MATURITIES).map(|j| sample_smile(j, rng)).collect()
}

/// Model parameters of either model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    RHeston(RHestonParams),
    RBergomi(RBergomiParams),
}

impl ModelParams {
    pub fn from_slice(kind: ModelKind, x: &[f64]) -> Result<Self> {
        Ok(match kind {
            ModelKind::RHeston => ModelParams::RHeston(RHestonParams::from_slice(x)?),
            ModelKind::RBergomi => ModelParams::RBergomi(RBergomiParams::from_slice(x)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::RHeston(_) => ModelKind::RHeston,
            ModelParams::RBergomi(_) => ModelKind::RBergomi,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            ModelParams::RHeston(p) => p.to_vec(),
            ModelParams::RBergomi(p) => p.to_vec(),
        }
    }
}

/// Settings shared by all generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub pricer: PricerConfig,
    pub mc_paths: usize,
    pub mc_steps_per_year: usize,
    /// Model parameter box; the model's default box when absent.
    pub model_box: Option<ParamBox>,
    pub curve_sampler: FvcSampler,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            pricer: PricerConfig::default(),
            mc_paths: DEFAULT_PATHS,
            mc_steps_per_year: DEFAULT_STEPS_PER_YEAR,
            model_box: None,
            curve_sampler: FvcSampler::default(),
        }
    }
}

/// Pricing effort spent on one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenCost {
    /// Characteristic-function passes (one per rHeston smile).
    pub cf_passes: u64,
    /// Characteristic-function evaluations over all passes.
    pub cf_evals: u64,
    /// Monte Carlo simulations (one per rBergomi parameter set).
    pub simulations: u64,
    pub mc_paths: u64,
}

impl std::ops::AddAssign for GenCost {
    fn add_assign(&mut self, o: GenCost) {
        self.cf_passes += o.cf_passes;
        self.cf_evals += o.cf_evals;
        self.simulations += o.simulations;
        self.mc_paths += o.mc_paths;
    }
}

/// Implied vols of one slice; `error` is set when the pricer failed for the
/// whole slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricedSlice {
    pub maturity: f64,
    pub strikes: Vec<f64>,
    pub vols: Vec<Option<f64>>,
    pub error: Option<String>,
}

/// Prices all slices with the model's true pricer: one CF pass per slice
/// for rHeston, one simulation covering every maturity for rBergomi.
pub fn price_slices(
    params: &ModelParams,
    curve: &ForwardVarianceCurve,
    slices: &[MaturitySlice],
    cfg: &GenConfig,
    mc_seed: u64,
) -> (Vec<PricedSlice>, GenCost) {
    let mut cost = GenCost::default();
    let failed = |s: &MaturitySlice, e: &Error| PricedSlice {
        maturity: s.maturity,
        strikes: s.strikes.clone(),
        vols: vec![None; s.strikes.len()],
        error: Some(e.to_string()),
    };
    match params {
        ModelParams::RHeston(p) => {
            let out = slices
                .iter()
                .map(|s| {
                    cost.cf_passes += 1;
                    match smile(p, curve, s.maturity, &s.strikes, &cfg.pricer) {
                        Ok(r) => {
                            cost.cf_evals += r.cf_evals as u64;
                            PricedSlice {
                                maturity: s.maturity,
                                strikes: s.strikes.clone(),
                                vols: r.vols,
                                error: None,
                            }
                        }
                        Err(e) => failed(s, &e),
                    }
                })
                .collect();
            (out, cost)
        }
        ModelParams::RBergomi(p) => {
            let mut mats: Vec<f64> = slices.iter().map(|s| s.maturity).collect();
            mats.sort_by(f64::total_cmp);
            mats.dedup();
            let mc = McConfig {
                n_paths: cfg.mc_paths,
                steps_per_year: cfg.mc_steps_per_year,
                maturities: mats,
                seed: mc_seed,
                antithetic: true,
            };
            cost.simulations += 1;
            cost.mc_paths += cfg.mc_paths as u64;
            let paths = match simulate_paths(p, curve, &mc) {
                Ok(paths) => paths,
                Err(e) => return (slices.iter().map(|s| failed(s, &e)).collect(), cost),
            };
            let out = slices
                .iter()
                .map(|s| match smile_from_paths(&paths, s.maturity, &s.strikes) {
                    Ok(r) => PricedSlice {
                        maturity: s.maturity,
                        strikes: s.strikes.clone(),
                        vols: r.vols,
                        error: None,
                    },
                    Err(e) => failed(s, &e),
                })
                .collect();
            (out, cost)
        }
    }
}

/// One training quadruplet: parameters (model then curve), T, K, vol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteRecord {
    pub theta: Vec<f64>,
    pub maturity: f64,
    pub strike: f64,
    pub iv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub model: ModelKind,
    pub curve: CurveVariant,
    pub generator: GridVariant,
    pub seed: u64,
    pub columns: Vec<String>,
    /// Parameter sets drawn (records for the pointwise generator).
    pub n_sets: usize,
    pub n_records: usize,
    /// Quotes requested before dropping failures.
    pub requested: usize,
    pub failed_inversions: usize,
    pub failed_pricings: usize,
    /// First failure messages, for diagnosis.
    pub failure_log: Vec<String>,
    pub config: GenConfig,
    pub cost: GenCost,
    pub curve_draws: u64,
    pub curve_rejections: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuoteSet {
    pub meta: DatasetMeta,
    pub records: Vec<QuoteRecord>,
}

impl QuoteSet {
    /// Number of leading parameter columns (model plus curve).
    pub fn n_params(&self) -> usize {
        self.meta.columns.len() - 3
    }

    /// Parameter-set index of every record: consecutive records sharing a
    /// parameter vector belong to the same set.
    pub fn groups(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.records.len());
        let mut g = 0;
        for (i, r) in self.records.iter().enumerate() {
            if i > 0 && r.theta != self.records[i - 1].theta {
                g += 1;
            }
            out.push(g);
        }
        out
    }

    /// SHA-256 of the column names and record values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.meta.columns {
            h.update(c.as_bytes());
            h.update([0u8]);
        }
        for r in &self.records {
            for v in r.theta.iter().chain([&r.maturity, &r.strike, &r.iv]) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Network input row `theta ++ [T, K]`.
    pub fn input(&self, i: usize) -> Vec<f64> {
        let r = &self.records[i];
        let mut x = r.theta.clone();
        x.push(r.maturity);
        x.push(r.strike);
        x
    }
}

pub fn dataset_columns(model: ModelKind, curve: CurveVariant) -> Vec<String> {
    let mut cols: Vec<String> = model.param_names().iter().map(|s| s.to_string()).collect();
    cols.extend(curve.feature_names());
    cols.extend(["T", "K", "iv"].iter().map(|s| s.to_string()));
    cols
}

const FAILURE_LOG_LIMIT: usize = 100;

struct ItemOutput {
    records: Vec<QuoteRecord>,
    requested: usize,
    failed_inversions: usize,
    failed_pricings: usize,
    failures: Vec<String>,
    cost: GenCost,
    draws: u64,
    rejections: u64,
}

fn generate_item(
    model: ModelKind,
    curve_variant: CurveVariant,
    variant: GridVariant,
    seed: u64,
    index: usize,
    cfg: &GenConfig,
) -> Result<ItemOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let model_box = cfg.model_box.clone().unwrap_or_else(|| model.default_box());
    let params = ModelParams::from_slice(model, &model_box.sample(&mut rng))?;
    let mut sampler = cfg.curve_sampler.clone();
    sampler.draws = 0;
    sampler.rejections = 0;
    let curve = sample_curve(curve_variant, &mut sampler, &mut rng)?;
    let slices = match variant {
        GridVariant::Fixed => fixed_grid(),
        GridVariant::Adaptive => adaptive_grid(),
        GridVariant::RandomGrid => sample_random_grid(&mut rng),
        GridVariant::RandomSmile => vec![sample_smile(index % N_MATURITIES, &mut rng)],
        GridVariant::Pointwise => {
            let t = sample_maturity(index % N_MATURITIES, &mut rng);
            let (lo, hi) = strike_band(t);
            vec![MaturitySlice {
                maturity: t,
                strikes: vec![uniform_open(&mut rng, lo, hi)],
            }]
        }
    };
    let mc_seed = rng.next_u64();
    let (priced, cost) = price_slices(&params, &curve, &slices, cfg, mc_seed);

    let mut theta = params.to_vec();
    theta.extend(curve.features());
    let mut out = ItemOutput {
        records: Vec::new(),
        requested: 0,
        failed_inversions: 0,
        failed_pricings: 0,
        failures: Vec::new(),
        cost,
        draws: sampler.draws,
        rejections: sampler.rejections,
    };
    for s in priced {
        out.requested += s.strikes.len();
        if let Some(e) = &s.error {
            out.failed_pricings += s.strikes.len();
            out.failures.push(format!("set {index}, T = {}: {e}", s.maturity));
            continue;
        }
        for (&k, v) in s.strikes.iter().zip(&s.vols) {
            match v {
                Some(iv) => out.records.push(QuoteRecord {
                    theta: theta.clone(),
                    maturity: s.maturity,
                    strike: k,
                    iv: *iv,
                }),
                None => {
                    out.failed_inversions += 1;
                    out.failures
                        .push(format!("set {index}, T = {}, K = {k}: implied-vol inversion failed", s.maturity));
                }
            }
        }
    }
    Ok(out)
}

/// Generates `count` items of the given variant: parameter sets for the
/// grid and smile generators, single records for pointwise. Items are
/// priced in parallel and assembled in index order.
pub fn generate_dataset(
    model: ModelKind,
    curve: CurveVariant,
    spec: &GridSpec,
    count: usize,
    cfg: &GenConfig,
) -> Result<QuoteSet> {
    if count == 0 {
        return Err(domain("count must be at least 1"));
    }
    let items: Vec<Result<ItemOutput>> = (0..count)
        .into_par_iter()
        .map(|i| generate_item(model, curve, spec.variant, spec.seed, i, cfg))
        .collect();
    let mut meta = DatasetMeta {
        model,
        curve,
        generator: spec.variant,
        seed: spec.seed,
        columns: dataset_columns(model, curve),
        n_sets: count,
        n_records: 0,
        requested: 0,
        failed_inversions: 0,
        failed_pricings: 0,
        failure_log: Vec::new(),
        config: cfg.clone(),
        cost: GenCost::default(),
        curve_draws: 0,
        curve_rejections: 0,
    };
    let mut records = Vec::new();
    for item in items {
        let item = item?;
        records.extend(item.records);
        meta.requested += item.requested;
        meta.failed_inversions += item.failed_inversions;
        meta.failed_pricings += item.failed_pricings;
        meta.cost += item.cost;
        meta.curve_draws += item.draws;
        meta.curve_rejections += item.rejections;
        for f in item.failures {
            if meta.failure_log.len() < FAILURE_LOG_LIMIT {
                meta.failure_log.push(f);
            }
        }
    }
    meta.n_records = records.len();
    Ok(QuoteSet { meta, records })
}

/// `n` records, each with its own parameters, maturity and strike.
pub fn generate_pointwise(model: ModelKind, curve: CurveVariant, n: usize, seed: u64, cfg: &GenConfig) -> Result<QuoteSet> {
    let spec = GridSpec {
        variant: GridVariant::Pointwise,
        seed,
    };
    generate_dataset(model, curve, &spec, n, cfg)
}

/// `q` smiles of 13 strikes, maturities cycling through the sub-intervals.
pub fn generate_random_smiles(
    model: ModelKind,
    curve: CurveVariant,
    q: usize,
    seed: u64,
    cfg: &GenConfig,
) -> Result<QuoteSet> {
    let spec = GridSpec {
        variant: GridVariant::RandomSmile,
        seed,
    };
    generate_dataset(model, curve, &spec, q, cfg)
}

/// Path of the JSON metadata written next to a dataset CSV.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

pub fn write_dataset(path: &Path, set: &QuoteSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(&set.meta.columns)?;
    let mut row: Vec<String> = Vec::with_capacity(set.meta.columns.len());
    for r in &set.records {
        row.clear();
        row.extend(r.theta.iter().map(|v| v.to_string()));
        row.push(r.maturity.to_string());
        row.push(r.strike.to_string());
        row.push(r.iv.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    let mut meta = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(&mut meta, &set.meta)?;
    meta.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<QuoteSet> {
    let shown = path.display().to_string();
    let malformed = |line: usize, reason: String| Error::Malformed {
        path: shown.clone(),
        line,
        reason,
    };
    let meta_path = sidecar_path(path);
    let meta: DatasetMeta = serde_json::from_reader(std::io::BufReader::new(File::open(&meta_path)?))
        .map_err(|e| Error::Malformed {
            path: meta_path.display().to_string(),
            line: e.line(),
            reason: e.to_string(),
        })?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| malformed(1, e.to_string()))?,
        None => return Err(malformed(1, "empty file".into())),
    };
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    if header != meta.columns {
        return Err(malformed(1, format!("header {header:?} does not match {:?}", meta.columns)));
    }
    let width = header.len();
    let mut records = Vec::with_capacity(meta.n_records);
    for (i, row) in rows.enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| malformed(line, e.to_string()))?;
        if row.len() != width {
            return Err(malformed(line, format!("expected {width} fields, found {}", row.len())));
        }
        let mut vals = Vec::with_capacity(width);
        for field in row.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| malformed(line, format!("'{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(malformed(line, format!("non-finite value '{field}'")));
            }
            vals.push(v);
        }
        let iv = vals.pop().unwrap();
        let strike = vals.pop().unwrap();
        let maturity = vals.pop().unwrap();
        records.push(QuoteRecord {
            theta: vals,
            maturity,
            strike,
            iv,
        });
    }
    if records.len() != meta.n_records {
        return Err(malformed(
            records.len() + 1,
            format!("metadata declares {} records, file has {}", meta.n_records, records.len()),
        ));
    }
    Ok(QuoteSet { meta, records })
}
