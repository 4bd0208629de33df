use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

fn roughvol(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roughvol"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("ROUGHVOL_OUT")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> Output {
    let o = roughvol(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    (header, r.records().map(|x| x.unwrap()).collect())
}

/// A small dataset and a briefly trained network shared by several tests.
struct Fixture {
    _dir: TempDir,
    out: PathBuf,
    data: PathBuf,
    weights: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let out = dir.path().to_path_buf();
        ok(&out, &["generate", "--regime", "random-grid", "--sets", "20", "--seed", "3", "--name", "train"]);
        ok(&out, &["train", "--data", out.join("train.csv").to_str().unwrap(), "--epochs", "40", "--patience", "5", "--name", "net"]);
        Fixture {
            data: out.join("train.csv"),
            weights: out.join("net.weights.json"),
            out,
            _dir: dir,
        }
    })
}

#[test]
fn help_for_every_subcommand() {
    let dir = TempDir::new().unwrap();
    for sub in [
        vec!["generate"],
        vec!["train"],
        vec!["calibrate"],
        vec!["price"],
        vec!["scan"],
        vec!["experiment", "learning-curve"],
        vec!["experiment", "controlled"],
        vec!["experiment", "noarb"],
        vec!["experiment", "fortyfive"],
        vec!["rerun"],
    ] {
        let mut args = sub.clone();
        args.push("--help");
        let o = roughvol(dir.path(), &args);
        assert_eq!(code(&o), 0, "{sub:?}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));
    }
}

#[test]
fn flag_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    for args in [
        vec!["generate", "--regime", "diagonal", "--sets", "1"],
        vec!["generate", "--regime", "random-grid", "--n", "5"],
        vec!["generate", "--regime", "pointwise", "--sets", "5"],
        vec!["generate", "--model", "sabr", "--sets", "1"],
        vec!["generate", "--sets", "many"],
        vec!["frobnicate"],
        vec!["price", "--params", "0.1,0.3,-0.7", "--xi", "0.04"],
        vec!["price", "--params", "0.9,0.3,-0.7", "--xi", "0.04", "--maturity", "1", "--strikes", "1"],
        vec!["--threads", "0", "generate", "--sets", "1"],
    ] {
        let o = roughvol(dir.path(), &args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn random_grid_row_count_and_manifest() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    ok(out, &["generate", "--model", "rheston", "--curve", "flat", "--regime", "random-grid", "--sets", "100", "--seed", "7"]);
    let stem = "rheston-flat-random_grid-seed7";
    let (_, rows) = csv_rows(&out.join(format!("{stem}.csv")));
    let meta = json(&out.join(format!("{stem}.meta.json")));
    assert_eq!(meta["requested"], 14_300);
    let failed = meta["failed_inversions"].as_u64().unwrap() + meta["failed_pricings"].as_u64().unwrap();
    assert_eq!(rows.len() as u64 + failed, 14_300);
    let m = json(&out.join(format!("{stem}.manifest.json")));
    assert_eq!(m["subcommand"], "generate");
    assert_eq!(m["counters"]["cf_passes"], 1100);
    assert_eq!(m["seeds"][0], 7);
    assert!(m["wall_time"].as_f64().unwrap() > 0.0);
    let manifests = std::fs::read_dir(out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".manifest.json"))
        .count();
    assert_eq!(manifests, 1);
}

#[test]
fn pointwise_row_count() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    ok(out, &["generate", "--regime", "pointwise", "--n", "1430", "--seed", "2", "--name", "pw"]);
    let (header, rows) = csv_rows(&out.join("pw.csv"));
    let meta = json(&out.join("pw.meta.json"));
    assert_eq!(header.iter().collect::<Vec<_>>(), ["H", "nu", "rho", "xi", "T", "K", "iv"]);
    assert_eq!(meta["requested"], 1430);
    assert_eq!(rows.len() as u64, meta["n_records"].as_u64().unwrap());
    let failed = meta["failed_inversions"].as_u64().unwrap() + meta["failed_pricings"].as_u64().unwrap();
    assert_eq!(meta["n_records"].as_u64().unwrap() + failed, 1430);
}

#[test]
fn generation_is_byte_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["generate", "--regime", "random-smile", "--sets", "6", "--seed", "11", "--name", "d"];
    ok(a.path(), &args);
    let mut threaded = vec!["--threads", "1"];
    threaded.extend(args);
    ok(b.path(), &threaded);
    let first = std::fs::read(a.path().join("d.csv")).unwrap();
    assert_eq!(first, std::fs::read(b.path().join("d.csv")).unwrap());

    // replay from the manifest alone
    std::fs::remove_file(a.path().join("d.csv")).unwrap();
    let manifest = a.path().join("d.manifest.json");
    ok(a.path(), &["rerun", manifest.to_str().unwrap()]);
    assert_eq!(first, std::fs::read(a.path().join("d.csv")).unwrap());
}

#[test]
fn training_history_and_reproducibility() {
    let f = fixture();
    let (header, rows) = csv_rows(&f.out.join("net.history.csv"));
    assert_eq!(header.iter().collect::<Vec<_>>(), ["epoch", "train_rmse", "val_rmse"]);
    assert!(!rows.is_empty() && rows.len() <= 40);
    let net = json(&f.weights);
    let best = net["meta"]["best_epoch"].as_u64().unwrap() as usize;
    assert!(best <= rows.len() && rows.len() <= best + 5);
    assert_eq!(net["dims"], serde_json::json!([6, 64, 64, 64, 64, 1]));

    let dir = TempDir::new().unwrap();
    let data = f.data.to_str().unwrap();
    ok(dir.path(), &["train", "--data", data, "--epochs", "40", "--patience", "5", "--name", "net"]);
    assert_eq!(
        std::fs::read(&f.weights).unwrap(),
        std::fs::read(dir.path().join("net.weights.json")).unwrap()
    );
}

#[test]
fn divergence_exits_4() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let o = roughvol(dir.path(), &["train", "--data", f.data.to_str().unwrap(), "--epochs", "10", "--patience", "2", "--lr", "1e300"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

/// Box centre of the network's parameter inputs.
fn centre(weights: &Path) -> Vec<f64> {
    let w = json(weights);
    let lo = w["scale_min"].as_array().unwrap();
    let hi = w["scale_max"].as_array().unwrap();
    (0..lo.len() - 2)
        .map(|i| 0.5 * (lo[i].as_f64().unwrap() + hi[i].as_f64().unwrap()))
        .collect()
}

fn join(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

#[test]
fn calibrates_self_generated_target() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    let weights = f.weights.to_str().unwrap();
    let mut theta = centre(&f.weights);
    theta[0] *= 1.1;
    ok(out, &["price", "--weights", weights, "--params", &join(&theta), "--grid", "adaptive", "--name", "target"]);
    let (_, rows) = csv_rows(&out.join("target.csv"));
    assert_eq!(rows.len(), 104);
    let mut quotes = String::from("T,K,iv\n");
    for r in &rows {
        quotes += &format!("{},{},{}\n", &r[0], &r[1], &r[3]);
    }
    quotes += "0.1,3.0,0.2\n";
    std::fs::write(out.join("q.csv"), quotes).unwrap();

    ok(out, &["calibrate", "--weights", weights, "--quotes", out.join("q.csv").to_str().unwrap(), "--name", "fit"]);
    let res = json(&out.join("fit.json"));
    assert!(res["rmse"].as_f64().unwrap() < 1e-8, "{}", res["rmse"]);
    let wall = res["wall_time"].as_f64().unwrap();
    assert!(wall > 0.0 && wall < 10.0);
    assert_eq!(res["rejected"].as_array().unwrap().len(), 1);
    assert_eq!(res["rejected"][0]["K"], 3.0);
    let (header, fits) = csv_rows(&out.join("fit.fit.csv"));
    assert_eq!(header.iter().collect::<Vec<_>>(), ["index", "maturity", "strike", "market", "model", "residual"]);
    assert_eq!(fits.len(), 104);
    assert!(out.join("fit.manifest.json").exists());
}

#[test]
fn calibration_prerequisites() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    std::fs::write(out.join("q.csv"), "T,K,iv\n0.1,3.0,0.2\n2.0,0.2,0.3\n").unwrap();
    let q = out.join("q.csv");
    let o = roughvol(out, &["calibrate", "--weights", f.weights.to_str().unwrap(), "--quotes", q.to_str().unwrap()]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
    let o = roughvol(out, &["calibrate", "--weights", "absent.json", "--quotes", q.to_str().unwrap()]);
    assert_eq!(code(&o), 6);
    let o = roughvol(out, &["experiment", "controlled", "--weights", "absent.json"]);
    assert_eq!(code(&o), 6);
    let o = roughvol(out, &["experiment", "fortyfive", "--weights", f.weights.to_str().unwrap(), "--data", "absent.csv"]);
    assert_eq!(code(&o), 6);
}

#[test]
fn prices_and_scans_true_pricer() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    ok(out, &["price", "--params", "0.1,0.3,-0.7", "--xi", "0.04", "--maturity", "0.5", "--strikes", "0.9,1.0,1.1"]);
    let (header, rows) = csv_rows(&out.join("prices.csv"));
    assert_eq!(header.iter().collect::<Vec<_>>(), ["T", "K", "price", "iv", "iv_se", "extrapolated"]);
    assert_eq!(rows.len(), 3);
    let atm: f64 = rows[1][3].parse().unwrap();
    assert!(atm > 0.1 && atm < 0.3);

    ok(out, &["price", "--model", "rbergomi", "--params", "0.1,1.5,-0.7", "--xi", "0.04", "--maturity", "0.5", "--strikes", "1.0", "--mc-paths", "4000", "--name", "mc"]);
    let (_, rows) = csv_rows(&out.join("mc.csv"));
    assert!(rows[0][4].parse::<f64>().unwrap() > 0.0);

    ok(out, &["scan", "--params", "0.1,0.3,-0.7", "--xi", "0.04", "--coarse", "--t-max", "0.5"]);
    let rep = json(&out.join("scan.json"));
    assert!(rep["report"]["total_points"].as_u64().unwrap() > 100);
    assert_eq!(rep["report"]["violations"].as_array().unwrap().len(), 0);
    assert!(out.join("scan.offenders.csv").exists());
}

#[test]
fn controlled_experiment_columns() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    ok(out, &["experiment", "controlled", "--weights", f.weights.to_str().unwrap(), "--surfaces", "2", "--multistart", "1"]);
    let (header, rows) = csv_rows(&out.join("controlled.stats.csv"));
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        [
            "parameter",
            "n",
            "min",
            "mean",
            "med",
            "q95",
            "max",
            "std",
            "overestimation_ratio",
            "tail_02",
            "tail_03",
            "tail_05"
        ]
    );
    let names: Vec<&str> = rows.iter().map(|r| r.get(0).unwrap()).collect();
    assert_eq!(names, ["H", "nu", "rho", "wall_time"]);
    let (_, surfaces) = csv_rows(&out.join("controlled.surfaces.csv"));
    assert_eq!(surfaces.len(), 2);
}

#[test]
fn noarb_and_fortyfive_experiments() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    let weights = f.weights.to_str().unwrap();
    ok(out, &["experiment", "noarb", "--weights", weights, "--draws", "2", "--coarse", "--t-max", "0.3", "--with-pricer"]);
    let rep = json(&out.join("noarb.json"));
    let reports = rep["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 4);
    assert!(reports.iter().all(|r| r["report"]["total_points"].as_u64().unwrap() > 0));
    let (header, _) = csv_rows(&out.join("noarb.csv"));
    assert!(header.iter().any(|h| h == "total_points"));

    ok(out, &["generate", "--regime", "pointwise", "--n", "50", "--seed", "9", "--name", "test"]);
    ok(out, &[
        "experiment", "fortyfive", "--weights", weights, "--data", f.data.to_str().unwrap(),
        "--test", out.join("test.csv").to_str().unwrap(), "--limit", "200",
    ]);
    let (header, rows) = csv_rows(&out.join("fortyfive.in.csv"));
    assert_eq!(header.iter().collect::<Vec<_>>(), ["maturity", "strike", "reference", "network"]);
    assert_eq!(rows.len(), 200);
    let (_, rows) = csv_rows(&out.join("fortyfive.out.csv"));
    assert_eq!(rows.len(), 50);
    let summary = json(&out.join("fortyfive.json"));
    assert_eq!(summary[0]["label"], "in");
}

#[test]
fn learning_curve_rows_per_size() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    ok(out, &[
        "experiment", "learning-curve", "--sizes", "6,7", "--seeds", "0", "--test-records", "32",
        "--epochs", "5", "--patience", "2",
    ]);
    let (header, rows) = csv_rows(&out.join("learning-curve.csv"));
    assert!(header.iter().any(|h| h == "log2_n"));
    assert_eq!(rows.len(), 4);
    let (_, summary) = csv_rows(&out.join("learning-curve.summary.csv"));
    let sizes: Vec<&str> = summary.iter().map(|r| r.get(1).unwrap()).collect();
    assert_eq!(sizes, ["6", "7", "6", "7"]);
}
