use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use roughvol::calibrate::{
    calibrate, controlled_experiment, network_box, read_quotes, BenchmarkSource, CalibConfig, CalibrationProblem,
    ControlledConfig,
};
use roughvol::experiments::{learning_curve, write_csv, write_json, FortyFiveReport, LearningCurveConfig};
use roughvol::fvc::{CurveVariant, ForwardVarianceCurve};
use roughvol::gridgen::{
    adaptive_grid, fixed_grid, generate_dataset, read_dataset, sidecar_path, write_dataset, GenConfig, GridSpec,
    GridVariant, MaturitySlice, QuoteSet,
};
use roughvol::neuralnet::{train, Network, TrainConfig};
use roughvol::noarb::{scan, PriceSource, ScanConfig, ViolationReport};
use roughvol::params::{ModelKind, RBergomiParams, RHestonParams};
use roughvol::rbergomi::{simulate_paths, smile_from_paths, McConfig};
use roughvol::rheston::{smile, PricerConfig};
use roughvol::{bsm, experiments, Error};

use crate::manifest::{RunClock, RunManifest};
use crate::{
    CalibrateArgs, Cli, Command, ControlledArgs, Experiment, FortyfiveArgs, GenerateArgs, LatticeArgs,
    LearningCurveArgs, ModelArgs, NoarbArgs, PriceArgs, ScanArgs, TrainArgs,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    PricerFailures { failed: usize, requested: usize },
    Missing(String),
    Core(Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::PricerFailures { .. } => 3,
            CliError::Missing(_) => 6,
            CliError::Core(e) => match e {
                Error::Divergence(_) => 4,
                Error::NoAdmissibleQuotes { .. } => 5,
                Error::Incompatible(_) => 6,
                Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 6,
                Error::Domain(_) | Error::Dimension { .. } => 2,
                _ => 1,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::PricerFailures { failed, requested } => {
                write!(f, "{failed} of {requested} requested quotes failed to price or invert")
            }
            CliError::Missing(m) => write!(f, "missing prerequisite: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage<E: fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing(format!("{} does not exist", path.display())))
    }
}

fn load_net(path: &Path) -> Result<Network> {
    require(path)?;
    Ok(Network::load_weights(path)?)
}

fn load_set(path: &Path) -> Result<QuoteSet> {
    require(path)?;
    Ok(read_dataset(path)?)
}

/// Common context of one invocation.
struct Run<'a> {
    out: PathBuf,
    argv: &'a [String],
    clock: RunClock,
}

impl Run<'_> {
    fn path(&self, file: String) -> PathBuf {
        self.out.join(file)
    }

    fn finish(
        &self,
        subcommand: &str,
        name: &str,
        config: serde_json::Value,
        seeds: Vec<u64>,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
        mc_paths: u64,
    ) -> Result<()> {
        let mut m: RunManifest = self.clock.finish(subcommand, self.argv, config, seeds);
        m.inputs = inputs;
        m.outputs = outputs;
        m.counters.mc_paths = mc_paths;
        let path = self.path(format!("{name}.manifest.json"));
        m.write(&path)?;
        eprintln!("manifest: {}", path.display());
        Ok(())
    }
}

pub fn run(cli: Cli, argv: &[String]) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        // a replayed manifest may try to configure the pool a second time
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    std::fs::create_dir_all(&cli.out).map_err(Error::from)?;
    let run = Run {
        out: cli.out.clone(),
        argv,
        clock: RunClock::start(),
    };
    match cli.command {
        Command::Generate(a) => generate(&run, a),
        Command::Train(a) => train_cmd(&run, a),
        Command::Calibrate(a) => calibrate_cmd(&run, a),
        Command::Price(a) => price(&run, a),
        Command::Scan(a) => scan_cmd(&run, a),
        Command::Experiment(Experiment::LearningCurve(a)) => learning_curve_cmd(&run, a),
        Command::Experiment(Experiment::Controlled(a)) => controlled(&run, a),
        Command::Experiment(Experiment::Noarb(a)) => noarb(&run, a),
        Command::Experiment(Experiment::Fortyfive(a)) => fortyfive(&run, a),
        Command::Rerun { manifest } => {
            require(&manifest)?;
            let m = RunManifest::read(&manifest)?;
            if m.subcommand == "rerun" {
                return Err(usage("manifest records a rerun"));
            }
            let cli = <Cli as clap::Parser>::try_parse_from(&m.argv).map_err(usage)?;
            self::run(cli, &m.argv)
        }
    }
}

fn generate(run: &Run, a: GenerateArgs) -> Result<()> {
    let model = ModelKind::parse(&a.model).map_err(usage)?;
    let curve = CurveVariant::parse(&a.curve).map_err(usage)?;
    let regime = GridVariant::parse(&a.regime).map_err(usage)?;
    let count = match (regime, a.sets, a.n) {
        (GridVariant::Pointwise, None, Some(n)) => n,
        (GridVariant::Pointwise, _, _) => return Err(usage("the pointwise regime takes --n (records), not --sets")),
        (_, Some(s), None) => s,
        _ => return Err(usage(format!("the {} regime takes --sets, not --n", regime.name()))),
    };
    if count == 0 {
        return Err(usage("nothing to generate"));
    }
    let mut gen = GenConfig::default();
    if let Some(p) = a.mc_paths {
        if p < 2 {
            return Err(usage("--mc-paths must be at least 2"));
        }
        gen.mc_paths = p;
    }
    let set = generate_dataset(model, curve, &GridSpec { variant: regime, seed: a.seed }, count, &gen)?;
    let name = a
        .name
        .unwrap_or_else(|| format!("{}-{}-{}-seed{}", model.name(), curve.name(), regime.name(), a.seed));
    let path = run.path(format!("{name}.csv"));
    write_dataset(&path, &set)?;
    let meta = &set.meta;
    println!(
        "{} records from {} parameter sets ({} failed inversions, {} failed pricings) -> {}",
        meta.n_records,
        meta.n_sets,
        meta.failed_inversions,
        meta.failed_pricings,
        path.display()
    );
    run.finish(
        "generate",
        &name,
        json!({ "model": model, "curve": curve, "regime": regime, "count": count, "seed": a.seed, "generator": gen }),
        vec![a.seed],
        vec![],
        vec![path.clone(), sidecar_path(&path)],
        meta.cost.mc_paths,
    )?;
    check_failure_rate(meta.requested, meta.n_records)
}

/// Errors when more than half of the requested quotes were dropped.
fn check_failure_rate(requested: usize, kept: usize) -> Result<()> {
    let failed = requested - kept;
    if 2 * failed > requested {
        return Err(CliError::PricerFailures { failed, requested });
    }
    Ok(())
}

fn train_cmd(run: &Run, a: TrainArgs) -> Result<()> {
    let set = load_set(&a.data)?;
    let cfg = TrainConfig {
        max_epochs: a.epochs,
        patience: a.patience,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        val_fraction: a.val_fraction,
        seed: a.seed,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(usage)?;
    let (net, history) = train(&set, &cfg)?;
    let name = a.name.unwrap_or_else(|| {
        let stem = a.data.file_stem().map(|s| s.to_string_lossy().into_owned());
        format!("{}-net", stem.unwrap_or_else(|| "dataset".into()))
    });
    let weights = run.path(format!("{name}.weights.json"));
    let hist = run.path(format!("{name}.history.csv"));
    net.save_weights(&weights)?;
    write_csv(&hist, &history.epochs)?;
    println!(
        "{} epochs (best {}, early stop: {}), validation RMSE {:.3e} -> {}",
        history.epochs.len(),
        history.best_epoch,
        history.stopped_early,
        net.meta.val_rmse,
        weights.display()
    );
    run.finish(
        "train",
        &name,
        json!({ "train": cfg, "dataset_digest": set.digest() }),
        vec![a.seed],
        vec![a.data],
        vec![weights, hist],
        0,
    )
}

fn calibrate_cmd(run: &Run, a: CalibrateArgs) -> Result<()> {
    let net = load_net(&a.weights)?;
    require(&a.quotes)?;
    let quotes = read_quotes(&a.quotes)?;
    let cfg = CalibConfig {
        multistart: a.multistart,
        max_iter: a.max_iter,
        seed: a.seed,
        ..CalibConfig::default()
    };
    let problem = CalibrationProblem::new(&net, quotes, None)?;
    let res = calibrate(&problem, &cfg)?;
    let json_path = run.path(format!("{}.json", a.name));
    let fit_path = run.path(format!("{}.fit.csv", a.name));
    write_json(&json_path, &res)?;
    write_csv(&fit_path, &res.residuals)?;
    let fitted: Vec<String> = res.names.iter().zip(&res.theta).map(|(n, v)| format!("{n} = {v:.6}")).collect();
    println!(
        "{}; RMSE {:.3e} over {} quotes ({} rejected) in {:.3} s",
        fitted.join(", "),
        res.rmse,
        res.residuals.len(),
        res.rejected.len(),
        res.wall_time
    );
    run.finish(
        "calibrate",
        &a.name,
        json!({ "calibration": cfg }),
        vec![a.seed],
        vec![a.weights, a.quotes],
        vec![json_path, fit_path],
        0,
    )
}

fn build_curve(m: &ModelArgs) -> Result<(CurveVariant, ForwardVarianceCurve)> {
    let variant = CurveVariant::parse(&m.curve).map_err(usage)?;
    let curve = ForwardVarianceCurve::from_features(variant, &m.xi).map_err(usage)?;
    Ok((variant, curve))
}

#[derive(Serialize)]
struct PriceRow {
    #[serde(rename = "T")]
    maturity: f64,
    #[serde(rename = "K")]
    strike: f64,
    price: Option<f64>,
    iv: Option<f64>,
    iv_se: Option<f64>,
    /// Network inputs outside the training ranges.
    extrapolated: bool,
}

fn price_slices(a: &PriceArgs) -> Result<Vec<MaturitySlice>> {
    match (&a.grid, a.maturity) {
        (Some(g), None) if a.strikes.is_empty() => match g.as_str() {
            "fixed" => Ok(fixed_grid()),
            "adaptive" => Ok(adaptive_grid()),
            other => Err(usage(format!("unknown grid '{other}' (fixed or adaptive)"))),
        },
        (None, Some(t)) if !a.strikes.is_empty() => Ok(vec![MaturitySlice {
            maturity: t,
            strikes: a.strikes.clone(),
        }]),
        _ => Err(usage("give either --grid, or --maturity with --strikes")),
    }
}

fn price(run: &Run, a: PriceArgs) -> Result<()> {
    let slices = price_slices(&a)?;
    let mut rows = Vec::new();
    let mut inputs = Vec::new();
    let mut mc_paths = 0;
    if let Some(w) = &a.model.weights {
        let net = load_net(w)?;
        inputs.push(w.clone());
        if a.model.params.len() + 2 != net.d_in() {
            return Err(usage(format!("the network takes {} parameter inputs", net.d_in() - 2)));
        }
        for s in &slices {
            for &k in &s.strikes {
                let mut x = a.model.params.clone();
                x.extend([s.maturity, k]);
                let iv = net.forward(&x)?;
                rows.push(PriceRow {
                    maturity: s.maturity,
                    strike: k,
                    price: bsm::bs_call_price(1.0, k, s.maturity, iv.max(0.0)).ok(),
                    iv: Some(iv),
                    iv_se: None,
                    extrapolated: net.is_extrapolation(&x),
                });
            }
        }
    } else {
        let (_, curve) = build_curve(&a.model)?;
        match ModelKind::parse(&a.model.model).map_err(usage)? {
            ModelKind::RHeston => {
                let p = RHestonParams::from_slice(&a.model.params).map_err(usage)?;
                for s in &slices {
                    let sm = smile(&p, &curve, s.maturity, &s.strikes, &PricerConfig::default())?;
                    for (i, &k) in s.strikes.iter().enumerate() {
                        rows.push(PriceRow {
                            maturity: s.maturity,
                            strike: k,
                            price: Some(sm.prices[i]),
                            iv: sm.vols[i],
                            iv_se: None,
                            extrapolated: false,
                        });
                    }
                }
            }
            ModelKind::RBergomi => {
                let p = RBergomiParams::from_slice(&a.model.params).map_err(usage)?;
                let mut mats: Vec<f64> = slices.iter().map(|s| s.maturity).collect();
                mats.sort_by(f64::total_cmp);
                mats.dedup();
                let paths = simulate_paths(&p, &curve, &McConfig::new(mats, a.mc_paths, a.seed)).map_err(usage)?;
                mc_paths = a.mc_paths as u64;
                for s in &slices {
                    let sm = smile_from_paths(&paths, s.maturity, &s.strikes)?;
                    for (i, &k) in s.strikes.iter().enumerate() {
                        rows.push(PriceRow {
                            maturity: s.maturity,
                            strike: k,
                            price: Some(sm.prices[i]),
                            iv: sm.vols[i],
                            iv_se: sm.vol_se[i],
                            extrapolated: false,
                        });
                    }
                }
            }
        }
    }
    let path = run.path(format!("{}.csv", a.name));
    write_csv(&path, &rows)?;
    println!("{} quotes -> {}", rows.len(), path.display());
    run.finish(
        "price",
        &a.name,
        json!({
            "model": a.model.model, "params": a.model.params, "curve": a.model.curve, "xi": a.model.xi,
            "slices": slices, "mc_paths": a.mc_paths, "pricer": PricerConfig::default(),
        }),
        vec![a.seed],
        inputs,
        vec![path],
        mc_paths,
    )
}

fn scan_config(l: &LatticeArgs) -> Result<ScanConfig> {
    let mut cfg = if l.coarse { ScanConfig::coarse() } else { ScanConfig::default() };
    cfg.dt = l.dt.unwrap_or(cfg.dt);
    cfg.dk = l.dk.unwrap_or(cfg.dk);
    cfg.eps = l.eps.unwrap_or(cfg.eps);
    cfg.t_min = l.t_min.unwrap_or(cfg.t_min);
    cfg.t_max = l.t_max.unwrap_or(cfg.t_max);
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Offender {
    condition: roughvol::noarb::Condition,
    maturities: String,
    strikes: String,
    value: f64,
}

fn offenders(rep: &ViolationReport) -> Vec<Offender> {
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    rep.violations
        .iter()
        .map(|v| Offender {
            condition: v.condition,
            maturities: join(&v.maturities),
            strikes: join(&v.strikes),
            value: v.value,
        })
        .collect()
}

fn scan_cmd(run: &Run, a: ScanArgs) -> Result<()> {
    let cfg = scan_config(&a.lattice)?;
    let net;
    let mut inputs = Vec::new();
    let source = if let Some(w) = &a.model.weights {
        net = load_net(w)?;
        inputs.push(w.clone());
        if a.model.params.len() + 2 != net.d_in() {
            return Err(usage(format!("the network takes {} parameter inputs", net.d_in() - 2)));
        }
        PriceSource::Network {
            net: &net,
            theta: a.model.params.clone(),
        }
    } else {
        if ModelKind::parse(&a.model.model).map_err(usage)? != ModelKind::RHeston {
            return Err(usage("scan prices with a network or the rHeston pricer"));
        }
        PriceSource::RHeston {
            params: RHestonParams::from_slice(&a.model.params).map_err(usage)?,
            curve: build_curve(&a.model)?.1,
            pricer: PricerConfig::default(),
        }
    };
    let rep = scan(&cfg, &source)?;
    let json_path = run.path(format!("{}.json", a.name));
    let csv_path = run.path(format!("{}.offenders.csv", a.name));
    write_json(&json_path, &json!({ "config": cfg, "report": rep }))?;
    write_csv(&csv_path, &offenders(&rep))?;
    println!(
        "{} violations over {} points ({} butterflies, {} calendar pairs checked, {} skipped) -> {}",
        rep.counts.total(),
        rep.total_points,
        rep.butterflies_checked,
        rep.calendar_checked,
        rep.calendar_skipped,
        json_path.display()
    );
    run.finish(
        "scan",
        &a.name,
        json!({ "scan": cfg, "source": rep.source }),
        vec![],
        inputs,
        vec![json_path, csv_path],
        0,
    )
}

#[derive(Serialize)]
struct LearningCurveSummary {
    regime: GridVariant,
    log2_n: u32,
    n_records: usize,
    pricing_passes: usize,
    seeds: usize,
    mae_mean: f64,
    mae_min: f64,
    mae_max: f64,
    q05_mean: f64,
    q95_mean: f64,
}

fn learning_curve_cmd(run: &Run, a: LearningCurveArgs) -> Result<()> {
    let regimes = a
        .regimes
        .iter()
        .map(|r| GridVariant::parse(r))
        .collect::<roughvol::Result<Vec<_>>>()
        .map_err(usage)?;
    let cfg = LearningCurveConfig {
        model: ModelKind::parse(&a.model).map_err(usage)?,
        curve: CurveVariant::parse(&a.curve).map_err(usage)?,
        sizes_log2: a.sizes.clone(),
        regimes,
        seeds: a.seeds.clone(),
        data_seed: a.seed,
        test_records: a.test_records,
        test_seed: a.test_seed,
        gen: GenConfig::default(),
        train: TrainConfig {
            max_epochs: a.epochs,
            patience: a.patience,
            ..TrainConfig::default()
        },
    };
    cfg.train.validate().map_err(usage)?;
    if a.sizes.iter().any(|&s| !(4..=24).contains(&s)) {
        return Err(usage("training sizes must be powers of two between 2^4 and 2^24"));
    }
    let cache = a.cache.clone().unwrap_or_else(|| run.out.join("cache"));
    let rep = learning_curve(&cfg, Some(&cache))?;

    let mut summary: Vec<LearningCurveSummary> = Vec::new();
    for r in &rep.rows {
        let group: Vec<_> = rep
            .rows
            .iter()
            .filter(|x| x.regime == r.regime && x.log2_n == r.log2_n)
            .collect();
        if summary.iter().any(|s| s.regime == r.regime && s.log2_n == r.log2_n) {
            continue;
        }
        let n = group.len() as f64;
        summary.push(LearningCurveSummary {
            regime: r.regime,
            log2_n: r.log2_n,
            n_records: r.n_records,
            pricing_passes: r.pricing_passes,
            seeds: group.len(),
            mae_mean: group.iter().map(|x| x.mae).sum::<f64>() / n,
            mae_min: group.iter().map(|x| x.mae).fold(f64::INFINITY, f64::min),
            mae_max: group.iter().map(|x| x.mae).fold(f64::NEG_INFINITY, f64::max),
            q05_mean: group.iter().map(|x| x.q05).sum::<f64>() / n,
            q95_mean: group.iter().map(|x| x.q95).sum::<f64>() / n,
        });
    }
    let rows_path = run.path(format!("{}.csv", a.name));
    let summary_path = run.path(format!("{}.summary.csv", a.name));
    let json_path = run.path(format!("{}.json", a.name));
    write_csv(&rows_path, &rep.rows)?;
    write_csv(&summary_path, &summary)?;
    write_json(&json_path, &rep)?;
    for s in &summary {
        println!(
            "{:>12} 2^{:<2} mean MAE {:.3e} ({} seeds, {} pricing passes)",
            s.regime.name(),
            s.log2_n,
            s.mae_mean,
            s.seeds,
            s.pricing_passes
        );
    }
    let mut seeds = a.seeds.clone();
    seeds.extend([a.seed, a.test_seed]);
    run.finish(
        "experiment learning-curve",
        &a.name,
        serde_json::to_value(&cfg).map_err(Error::from)?,
        seeds,
        vec![cache],
        vec![rows_path, summary_path, json_path],
        0,
    )
}

fn controlled(run: &Run, a: ControlledArgs) -> Result<()> {
    let net = load_net(&a.weights)?;
    let model = net
        .meta
        .model
        .ok_or_else(|| CliError::Missing("weights file carries no model tag".into()))?;
    let source = match a.source.as_str() {
        "pricer" => BenchmarkSource::Pricer,
        "network" => BenchmarkSource::Network,
        other => return Err(usage(format!("unknown source '{other}' (pricer or network)"))),
    };
    if a.surfaces == 0 {
        return Err(usage("--surfaces must be positive"));
    }
    let cfg = ControlledConfig {
        n_surfaces: a.surfaces,
        seed: a.seed,
        source,
        calib: CalibConfig {
            multistart: a.multistart,
            seed: a.seed,
            ..CalibConfig::default()
        },
        ..ControlledConfig::default()
    };
    let rep = controlled_experiment(&net, model, &cfg)?;

    let stats_path = run.path(format!("{}.stats.csv", a.name));
    let surfaces_path = run.path(format!("{}.surfaces.csv", a.name));
    let json_path = run.path(format!("{}.json", a.name));
    let mut stats = rep.stats.clone();
    stats.push(rep.wall_time.clone());
    write_csv(&stats_path, &stats)?;
    write_json(&json_path, &rep)?;

    let names: Vec<String> = net.meta.input_names[..net.d_in() - 2].to_vec();
    let mut w = csv::Writer::from_path(&surfaces_path)?;
    let mut header = vec!["surface".to_string(), "level".into()];
    header.extend(model.param_names().iter().map(|n| format!("true_{n}")));
    header.extend(names.iter().map(|n| format!("est_{n}")));
    header.extend(["rmse", "n_quotes", "wall_time", "error"].map(String::from));
    w.write_record(&header)?;
    for (i, s) in rep.surfaces.iter().enumerate() {
        let mut rec = vec![i.to_string(), s.level.to_string()];
        rec.extend(s.true_params.iter().map(|v| v.to_string()));
        rec.extend((0..names.len()).map(|j| s.estimate.get(j).map(|v| v.to_string()).unwrap_or_default()));
        rec.extend([
            s.rmse.to_string(),
            s.n_quotes.to_string(),
            s.wall_time.to_string(),
            s.error.clone().unwrap_or_default(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush().map_err(Error::from)?;

    for st in &rep.stats {
        println!(
            "{:>6}: mean {:+.4} std {:.4} med {:+.4} q95 {:.4} tail@0.05 {:.3}",
            st.parameter, st.mean, st.std, st.med, st.q95, st.tail_05
        );
    }
    println!("{} surfaces, {} failed", rep.n_surfaces, rep.n_failed);
    run.finish(
        "experiment controlled",
        &a.name,
        serde_json::to_value(&cfg).map_err(Error::from)?,
        vec![a.seed],
        vec![a.weights],
        vec![stats_path, surfaces_path, json_path],
        0,
    )
}

#[derive(Serialize)]
struct NoarbRow {
    draw: usize,
    source: &'static str,
    theta: String,
    total_points: usize,
    butterflies_checked: usize,
    calendar_checked: usize,
    calendar_skipped: usize,
    vertical_positive: usize,
    vertical_monotone: usize,
    butterfly: usize,
    calendar: usize,
    total: usize,
}

impl NoarbRow {
    fn new(draw: usize, source: &'static str, theta: &[f64], rep: &ViolationReport) -> Self {
        NoarbRow {
            draw,
            source,
            theta: theta.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"),
            total_points: rep.total_points,
            butterflies_checked: rep.butterflies_checked,
            calendar_checked: rep.calendar_checked,
            calendar_skipped: rep.calendar_skipped,
            vertical_positive: rep.counts.vertical_positive,
            vertical_monotone: rep.counts.vertical_monotone,
            butterfly: rep.counts.butterfly,
            calendar: rep.counts.calendar,
            total: rep.counts.total(),
        }
    }
}

fn noarb(run: &Run, a: NoarbArgs) -> Result<()> {
    let net = load_net(&a.weights)?;
    let cfg = scan_config(&a.lattice)?;
    if !(0.0..0.5).contains(&a.interior) {
        return Err(usage("--interior must lie in [0, 0.5)"));
    }
    if a.with_pricer
        && (net.meta.model != Some(ModelKind::RHeston) || net.meta.curve != Some(CurveVariant::Flat))
    {
        return Err(usage("--with-pricer needs a flat-curve rHeston network"));
    }
    let bx = network_box(&net).interior(a.interior);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for d in 0..a.draws {
        let theta = bx.sample(&mut rng);
        let rep = scan(&cfg, &PriceSource::Network { net: &net, theta: theta.clone() })?;
        rows.push(NoarbRow::new(d, "network", &theta, &rep));
        reports.push(json!({ "draw": d, "source": "network", "theta": theta, "report": rep }));
        if a.with_pricer {
            let src = PriceSource::RHeston {
                params: RHestonParams::from_slice(&theta[..3])?,
                curve: ForwardVarianceCurve::flat(theta[3]),
                pricer: PricerConfig::default(),
            };
            let rep = scan(&cfg, &src)?;
            rows.push(NoarbRow::new(d, "pricer", &theta, &rep));
            reports.push(json!({ "draw": d, "source": "pricer", "theta": theta, "report": rep }));
        }
    }
    let csv_path = run.path(format!("{}.csv", a.name));
    let json_path = run.path(format!("{}.json", a.name));
    write_csv(&csv_path, &rows)?;
    write_json(
        &json_path,
        &json!({
            "config": cfg,
            "parameter_sets": "sampled uniformly from the network's training box",
            "reports": reports,
        }),
    )?;
    for src in ["network", "pricer"] {
        let sel: Vec<&NoarbRow> = rows.iter().filter(|r| r.source == src).collect();
        if !sel.is_empty() {
            println!(
                "{src}: {} violations over {} points in {} scans",
                sel.iter().map(|r| r.total).sum::<usize>(),
                sel.iter().map(|r| r.total_points).sum::<usize>(),
                sel.len()
            );
        }
    }
    run.finish(
        "experiment noarb",
        &a.name,
        json!({ "scan": cfg, "draws": a.draws, "interior": a.interior, "with_pricer": a.with_pricer }),
        vec![a.seed],
        vec![a.weights],
        vec![csv_path, json_path],
        0,
    )
}

/// At most `limit` records, drawn without replacement and kept in order.
fn subsample(set: QuoteSet, limit: Option<usize>, rng: &mut ChaCha8Rng) -> QuoteSet {
    match limit {
        Some(l) if l < set.records.len() => {
            let mut idx = sample(rng, set.records.len(), l).into_vec();
            idx.sort_unstable();
            QuoteSet {
                records: idx.iter().map(|&i| set.records[i].clone()).collect(),
                meta: set.meta,
            }
        }
        _ => set,
    }
}

fn fortyfive(run: &Run, a: FortyfiveArgs) -> Result<()> {
    let net = load_net(&a.weights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut inputs = vec![a.weights.clone(), a.data.clone()];
    let mut sets = vec![("in", subsample(load_set(&a.data)?, a.limit, &mut rng))];
    if let Some(t) = &a.test {
        sets.push(("out", subsample(load_set(t)?, a.limit, &mut rng)));
        inputs.push(t.clone());
    }
    let mut outputs = Vec::new();
    let mut summaries = Vec::new();
    for (label, set) in &sets {
        net.expect(set.meta.model, set.meta.curve)?;
        let rep: FortyFiveReport = experiments::fortyfive(&net, set, label)?;
        let path = run.path(format!("{}.{label}.csv", a.name));
        write_csv(&path, &rep.points)?;
        println!(
            "{label}-sample: {} points, mean |err| {:.3e}, q95 {:.3e}, max {:.3e}",
            rep.points.len(),
            rep.summary.mean,
            rep.summary.q95,
            rep.summary.max
        );
        summaries.push(json!({ "label": rep.label, "n": rep.points.len(), "summary": rep.summary }));
        outputs.push(path);
    }
    let json_path = run.path(format!("{}.json", a.name));
    write_json(&json_path, &summaries)?;
    outputs.push(json_path);
    run.finish(
        "experiment fortyfive",
        &a.name,
        json!({ "limit": a.limit }),
        vec![a.seed],
        inputs,
        outputs,
        0,
    )
}
