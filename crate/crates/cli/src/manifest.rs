//! Run manifests: one JSON file per invocation, written next to its outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use roughvol::neuralnet::nn_counters;
use roughvol::rbergomi::mc_counters;
use roughvol::rheston::cf_counters;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub cf_passes: u64,
    pub cf_evals: u64,
    pub mc_simulations: u64,
    /// Sum of simulated paths, where the subcommand knows it.
    pub mc_paths: u64,
    pub nn_evals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Command line that produced the run; `roughvol rerun` replays it.
    pub argv: Vec<String>,
    /// Fully resolved configuration, defaults included.
    pub config: Value,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_time: f64,
    pub version: String,
    pub counters: Counters,
}

/// Snapshot of the global counters and clock at the start of a run.
pub struct RunClock {
    started: Instant,
    cf: (u64, u64),
    mc: u64,
    nn: u64,
}

impl RunClock {
    pub fn start() -> Self {
        RunClock {
            started: Instant::now(),
            cf: cf_counters(),
            mc: mc_counters().0,
            nn: nn_counters(),
        }
    }

    pub fn finish(&self, subcommand: &str, argv: &[String], config: Value, seeds: Vec<u64>) -> RunManifest {
        let cf = cf_counters();
        RunManifest {
            subcommand: subcommand.to_string(),
            argv: argv.to_vec(),
            config,
            seeds,
            threads: rayon::current_num_threads(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_time: self.started.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            counters: Counters {
                cf_passes: cf.0 - self.cf.0,
                cf_evals: cf.1 - self.cf.1,
                mc_simulations: mc_counters().0 - self.mc,
                mc_paths: 0,
                nn_evals: nn_counters() - self.nn,
            },
        }
    }
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> roughvol::Result<()> {
        roughvol::experiments::write_json(path, self)
    }

    pub fn read(path: &Path) -> roughvol::Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}
