//! Learning-curve and in/out-of-sample experiments, with an on-disk cache
//! for datasets and trained networks.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibrate::quantile;
use crate::error::{domain, Result};
use crate::fvc::CurveVariant;
use crate::gridgen::{generate_dataset, read_dataset, write_dataset, GenConfig, GridSpec, GridVariant, QuoteSet};
use crate::neuralnet::{abs_errors, train, Network, TrainConfig};
use crate::params::ModelKind;

/// Short hex key of any serializable configuration.
pub fn config_key<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable key");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

#[derive(Serialize)]
struct DatasetKey<'a> {
    model: ModelKind,
    curve: CurveVariant,
    spec: &'a GridSpec,
    count: usize,
    gen: &'a GenConfig,
}

/// Generates a dataset, or reads it from `cache` if an identical run was
/// stored there before.
pub fn cached_dataset(
    cache: Option<&Path>,
    model: ModelKind,
    curve: CurveVariant,
    spec: &GridSpec,
    count: usize,
    gen: &GenConfig,
) -> Result<QuoteSet> {
    let Some(dir) = cache else {
        return generate_dataset(model, curve, spec, count, gen);
    };
    let key = config_key(&DatasetKey {
        model,
        curve,
        spec,
        count,
        gen,
    });
    let path = dir.join(format!("data-{}-{}-{key}.csv", model.name(), spec.variant.name()));
    if path.exists() {
        if let Ok(set) = read_dataset(&path) {
            return Ok(set);
        }
    }
    std::fs::create_dir_all(dir)?;
    let set = generate_dataset(model, curve, spec, count, gen)?;
    write_dataset(&path, &set)?;
    Ok(set)
}

/// Trains a network, or loads it from `cache` when the same dataset and
/// configuration were trained before.
pub fn cached_network(cache: Option<&Path>, set: &QuoteSet, cfg: &TrainConfig) -> Result<Network> {
    let Some(dir) = cache else {
        return Ok(train(set, cfg)?.0);
    };
    let key = config_key(&(set.digest(), cfg));
    let path = dir.join(format!("net-{}-{key}.json", set.meta.model.name()));
    if path.exists() {
        if let Ok(net) = Network::load_weights(&path) {
            return Ok(net);
        }
    }
    std::fs::create_dir_all(dir)?;
    let (net, _) = train(set, cfg)?;
    net.save_weights(&path)?;
    Ok(net)
}

/// First `n` records of a dataset (whole parameter sets except possibly
/// the last one).
pub fn prefix(set: &QuoteSet, n: usize) -> QuoteSet {
    let mut out = set.clone();
    out.records.truncate(n);
    out.meta.n_records = out.records.len();
    out.meta.n_sets = out.groups().last().map_or(0, |g| g + 1);
    out
}

/// Pricing passes needed for the records of `set`: one characteristic-
/// function pass or simulation per smile (per record when pointwise).
pub fn pricing_passes(set: &QuoteSet) -> usize {
    let per_set = match (set.meta.model, set.meta.generator) {
        (ModelKind::RBergomi, _) => 1,
        (_, GridVariant::RandomGrid) => crate::gridgen::N_MATURITIES,
        (_, GridVariant::Fixed | GridVariant::Adaptive) => 8,
        (_, GridVariant::RandomSmile | GridVariant::Pointwise) => 1,
    };
    set.meta.n_sets * per_set
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCandle {
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
    pub max: f64,
}

pub fn candle(errors: &[f64]) -> ErrorCandle {
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    ErrorCandle {
        mean: s.iter().sum::<f64>() / s.len().max(1) as f64,
        q05: quantile(&s, 0.05),
        q95: quantile(&s, 0.95),
        max: *s.last().unwrap_or(&f64::NAN),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurveConfig {
    pub model: ModelKind,
    pub curve: CurveVariant,
    /// Training-set sizes as powers of two (records).
    pub sizes_log2: Vec<u32>,
    pub regimes: Vec<GridVariant>,
    /// Training seeds; each yields one row per (regime, size).
    pub seeds: Vec<u64>,
    pub data_seed: u64,
    pub test_records: usize,
    pub test_seed: u64,
    pub gen: GenConfig,
    pub train: TrainConfig,
}

impl Default for LearningCurveConfig {
    fn default() -> Self {
        LearningCurveConfig {
            model: ModelKind::RHeston,
            curve: CurveVariant::Flat,
            sizes_log2: vec![13, 15, 17],
            regimes: vec![GridVariant::RandomSmile, GridVariant::Pointwise],
            seeds: vec![0, 1, 2],
            data_seed: 1,
            test_records: 4096,
            test_seed: 999,
            gen: GenConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurveRow {
    pub regime: GridVariant,
    pub log2_n: u32,
    pub n_records: usize,
    pub pricing_passes: usize,
    pub seed: u64,
    pub mae: f64,
    pub q05: f64,
    pub q95: f64,
    pub max: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurveReport {
    pub config: LearningCurveConfig,
    pub test_records: usize,
    pub rows: Vec<LearningCurveRow>,
}

impl LearningCurveReport {
    pub fn row(&self, regime: GridVariant, log2_n: u32, seed: u64) -> Option<&LearningCurveRow> {
        self.rows
            .iter()
            .find(|r| r.regime == regime && r.log2_n == log2_n && r.seed == seed)
    }
}

/// Items to draw so that `regime` yields at least `n` records.
fn items_for(regime: GridVariant, n: usize) -> usize {
    match regime {
        GridVariant::Pointwise => n,
        GridVariant::RandomSmile => n.div_ceil(13),
        GridVariant::RandomGrid => n.div_ceil(143),
        GridVariant::Fixed => n.div_ceil(88),
        GridVariant::Adaptive => n.div_ceil(104),
    }
}

/// Out-of-sample error against a pointwise test set, for every regime,
/// size and seed. Smaller training sets are prefixes of the largest one.
pub fn learning_curve(cfg: &LearningCurveConfig, cache: Option<&Path>) -> Result<LearningCurveReport> {
    let max_log2 = *cfg.sizes_log2.iter().max().ok_or_else(|| domain("no training sizes"))?;
    if cfg.test_records == 0 || cfg.seeds.is_empty() || cfg.regimes.is_empty() {
        return Err(domain("learning curve needs regimes, seeds and a test set"));
    }
    let test = cached_dataset(
        cache,
        cfg.model,
        cfg.curve,
        &GridSpec {
            variant: GridVariant::Pointwise,
            seed: cfg.test_seed,
        },
        cfg.test_records,
        &cfg.gen,
    )?;
    let mut rows = Vec::new();
    for &regime in &cfg.regimes {
        let full = cached_dataset(
            cache,
            cfg.model,
            cfg.curve,
            &GridSpec {
                variant: regime,
                seed: cfg.data_seed,
            },
            // slack for dropped inversions
            items_for(regime, 1usize << max_log2) * 65 / 64 + 1,
            &cfg.gen,
        )?;
        for &log2_n in &cfg.sizes_log2 {
            let data = prefix(&full, 1usize << log2_n);
            for &seed in &cfg.seeds {
                let tc = TrainConfig {
                    seed,
                    ..cfg.train.clone()
                };
                let net = cached_network(cache, &data, &tc)?;
                let c = candle(&abs_errors(&net, &test)?);
                rows.push(LearningCurveRow {
                    regime,
                    log2_n,
                    n_records: data.records.len(),
                    pricing_passes: pricing_passes(&data),
                    seed,
                    mae: c.mean,
                    q05: c.q05,
                    q95: c.q95,
                    max: c.max,
                    epochs: net.meta.epochs,
                });
            }
        }
    }
    Ok(LearningCurveReport {
        config: cfg.clone(),
        test_records: test.records.len(),
        rows,
    })
}

/// One point of a 45-degree plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FortyFivePoint {
    pub maturity: f64,
    pub strike: f64,
    pub reference: f64,
    pub network: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FortyFiveReport {
    pub label: String,
    pub summary: ErrorCandle,
    pub points: Vec<FortyFivePoint>,
}

/// Network vols against reference vols on every record of `set`.
pub fn fortyfive(net: &Network, set: &QuoteSet, label: &str) -> Result<FortyFiveReport> {
    let mut points = Vec::with_capacity(set.records.len());
    let mut errors = Vec::with_capacity(set.records.len());
    for (i, r) in set.records.iter().enumerate() {
        let v = net.forward(&set.input(i))?;
        errors.push((v - r.iv).abs());
        points.push(FortyFivePoint {
            maturity: r.maturity,
            strike: r.strike,
            reference: r.iv,
            network: v,
        });
    }
    Ok(FortyFiveReport {
        label: label.to_string(),
        summary: candle(&errors),
        points,
    })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

/// Default cache directory under the build tree.
pub fn default_cache_dir(target_dir: &Path) -> PathBuf {
    target_dir.join("roughvol-cache")
}
