//! Training runs: one CSV and one checkpoint per seed, plus a manifest.
//!
//! Layout of a run directory:
//!
//! ```text
//! <output>/<run_id>/
//!     config.toml          resolved configuration
//!     manifest.json        schema version, config hash, code version, timings
//!     seed_<n>.csv         long-format metrics
//!     seed_<n>.qtable.json tabular checkpoint, or
//!     seed_<n>.bin         neural checkpoint
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use adastack::metrics::MetricsLog;
use adastack::neural::{train_ppo, train_reinforce};
use adastack::tabular::train_q;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AgentKind, RunConfig};
use crate::error::{create_dir_all, write, HarnessError, Result};

/// Version of the CSV layouts written by the harness. Bump on any change
/// to column names or order.
pub const CSV_SCHEMA_VERSION: u32 = 1;
/// Header of every per-seed metrics CSV.
pub const METRICS_HEADER: [&str; 5] = ["run_id", "seed", "step", "metric", "value"];

/// A trained model of either kind.
#[derive(Debug, Clone)]
pub enum Checkpoint {
    Q(adastack::tabular::QTable),
    Neural(adastack::neural::NeuralAgent),
}

impl Checkpoint {
    pub fn file_name(agent: AgentKind, seed: u64) -> String {
        match agent {
            AgentKind::Q => format!("seed_{seed}.qtable.json"),
            AgentKind::Ppo | AgentKind::Reinforce => format!("seed_{seed}.bin"),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Checkpoint::Q(q) => q.save_json(path)?,
            Checkpoint::Neural(a) => a.save(path)?,
        }
        Ok(())
    }

    pub fn load(agent: AgentKind, path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(HarnessError::data(format!("checkpoint {} does not exist", path.display())));
        }
        Ok(match agent {
            AgentKind::Q => Checkpoint::Q(adastack::tabular::QTable::load_json(path)?),
            AgentKind::Ppo | AgentKind::Reinforce => Checkpoint::Neural(adastack::neural::NeuralAgent::load(path)?),
        })
    }
}

/// Trains one seed in memory.
pub fn train_seed(cfg: &RunConfig, seed: u64) -> Result<(Checkpoint, MetricsLog)> {
    let mut env = cfg.env.build()?;
    Ok(match cfg.agent {
        AgentKind::Q => {
            let (q, log) = train_q(env.as_mut(), &cfg.q_config(seed))?;
            (Checkpoint::Q(q), log)
        }
        AgentKind::Ppo => {
            let (a, log) = train_ppo(env.as_mut(), &cfg.ppo_config(seed))?;
            (Checkpoint::Neural(a), log)
        }
        AgentKind::Reinforce => {
            let (a, log) = train_reinforce(env.as_mut(), &cfg.reinforce_config(seed))?;
            (Checkpoint::Neural(a), log)
        }
    })
}

/// Formats a metrics log as long-format CSV bytes.
pub fn metrics_csv(run_id: &str, log: &MetricsLog) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    for row in log {
        for (metric, value) in row.metrics() {
            w.write_record([run_id, &row.seed.to_string(), &row.step.to_string(), metric, &value.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| HarnessError::data(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub csv: String,
    pub checkpoint: String,
    pub rows: usize,
    /// Success rate pooled over the last tenth of training.
    pub final_success: Option<f64>,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub csv_schema: u32,
    pub run_id: String,
    pub config_hash: String,
    pub code_version: String,
    pub agent: AgentKind,
    pub seeds: Vec<SeedRecord>,
    pub wall_clock_secs: f64,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = crate::error::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
            path,
            message: e.to_string(),
        })
    }
}

/// Where a run writes its artefacts.
pub fn run_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output.join(cfg.run_id())
}

/// Validates, trains every seed in parallel on the global rayon pool, and
/// writes the run directory. Returns its path.
pub fn run(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let start = Instant::now();
    let dir = run_dir(cfg);
    create_dir_all(&dir)?;
    write(&dir.join("config.toml"), cfg.to_toml())?;
    let records: Vec<SeedRecord> = cfg.seeds.par_iter().map(|&seed| run_one(cfg, &dir, seed)).collect::<Result<_>>()?;
    let manifest = Manifest {
        csv_schema: CSV_SCHEMA_VERSION,
        run_id: cfg.run_id(),
        config_hash: cfg.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        agent: cfg.agent,
        seeds: records,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| HarnessError::data(e.to_string()))?;
    write(&dir.join("manifest.json"), json + "\n")?;
    Ok(dir)
}

fn run_one(cfg: &RunConfig, dir: &Path, seed: u64) -> Result<SeedRecord> {
    let start = Instant::now();
    let (ckpt, log) = train_seed(cfg, seed)?;
    let csv_name = format!("seed_{seed}.csv");
    let ckpt_name = Checkpoint::file_name(cfg.agent, seed);
    let bytes = metrics_csv(&cfg.run_id(), &log)?;
    let path = dir.join(&csv_name);
    let mut f = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    f.write_all(&bytes).map_err(|e| HarnessError::io(&path, e))?;
    ckpt.save(&dir.join(&ckpt_name))?;
    Ok(SeedRecord {
        seed,
        csv: csv_name,
        checkpoint: ckpt_name,
        rows: log.len(),
        final_success: adastack::metrics::final_success(&log, 0.1),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// One parsed line of a metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub run_id: String,
    pub seed: u64,
    pub step: u64,
    pub metric: String,
    pub value: f64,
}

/// Reads a per-seed metrics CSV, checking the header.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::data(format!("{}: {other:?}", path.display())),
    })?;
    let header = r.headers()?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(HarnessError::data(format!(
            "{}: expected header {}, found {}",
            path.display(),
            METRICS_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EnvConfig;
    use adastack::{MemoryMode, Mode};

    fn tiny(dir: &Path) -> RunConfig {
        let mut c = RunConfig::new(
            EnvConfig::PassiveTmaze {
                length: 1,
                mode: Mode::Continual,
                random_corridor: false,
            },
            AgentKind::Q,
            MemoryMode::AdaptiveStack,
            2,
            vec![0, 1],
        );
        c.total_steps = 2_000;
        c.output = dir.to_path_buf();
        c
    }

    #[test]
    fn writes_csvs_checkpoints_and_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny(tmp.path());
        let dir = run(&cfg).unwrap();
        let m = Manifest::load(&dir).unwrap();
        assert_eq!(m.seeds.len(), 2);
        assert_eq!(m.config_hash, cfg.hash());
        for s in &m.seeds {
            let recs = read_metrics(&dir.join(&s.csv)).unwrap();
            let mut steps: Vec<u64> = recs.iter().map(|r| r.step).collect();
            steps.dedup();
            assert_eq!(steps.len(), 20);
            assert!(dir.join(&s.checkpoint).exists());
        }
        let back = RunConfig::load(&dir.join("config.toml")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn header_mismatch_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("x.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert_eq!(read_metrics(&p).unwrap_err().kind(), "data");
    }

    #[test]
    fn missing_checkpoint_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(Checkpoint::load(AgentKind::Q, &tmp.path().join("none.json")).is_err());
    }
}
