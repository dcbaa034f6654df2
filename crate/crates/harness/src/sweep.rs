//! Grid sweeps: every (cell, seed) pair is an independent job on a worker
//! pool; results are merged on one thread in grid order so the output does
//! not depend on the number of workers.
//!
//! Layout of a sweep directory:
//!
//! ```text
//! <base.output>/<name>/
//!     <cell_id>/config.toml, seed_<n>.csv, checkpoints
//!     aggregate.csv   run_id,step,metric,mean,std,n
//!     summary.csv     run_id,metric,mean,std,n   (final 10% of training)
//!     failures.csv    run_id,seed,kind,message
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use adastack::metrics::{final_mean, final_success, mean_std, MetricsLog};
use rayon::prelude::*;

use crate::config::{RunConfig, SweepConfig};
use crate::error::{create_dir_all, write, HarnessError, Result};
use crate::run::{metrics_csv, train_seed, Checkpoint};

pub const AGGREGATE_HEADER: [&str; 6] = ["run_id", "step", "metric", "mean", "std", "n"];
pub const SUMMARY_HEADER: [&str; 5] = ["run_id", "metric", "mean", "std", "n"];
pub const FAILURES_HEADER: [&str; 4] = ["run_id", "seed", "kind", "message"];

/// Share of training used for the summary table.
pub const FINAL_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub run_id: String,
    /// `None` when the whole cell was rejected before training.
    pub seed: Option<u64>,
    pub kind: String,
    pub message: String,
}

/// Final-window statistics of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub run_id: String,
    /// `(metric, mean, std, n)` in a fixed metric order.
    pub metrics: Vec<(String, f64, f64, usize)>,
}

impl CellSummary {
    pub fn get(&self, metric: &str) -> Option<(f64, f64, usize)> {
        self.metrics.iter().find(|m| m.0 == metric).map(|m| (m.1, m.2, m.3))
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub dir: PathBuf,
    pub summaries: Vec<CellSummary>,
    pub failures: Vec<Failure>,
}

struct Job<'a> {
    cell: usize,
    cfg: &'a RunConfig,
    seed: u64,
}

/// Runs the sweep on `parallelism` worker threads.
pub fn sweep(cfg: &SweepConfig, parallelism: usize) -> Result<SweepOutcome> {
    if parallelism == 0 {
        return Err(HarnessError::config("parallelism must be >= 1"));
    }
    let cells = cfg.cells()?;
    let root = cfg.base.output.join(&cfg.name);
    create_dir_all(&root)?;

    let mut failures = Vec::new();
    let mut jobs = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        match &c.config {
            Ok(rc) => {
                create_dir_all(&root.join(&c.id))?;
                write(&root.join(&c.id).join("config.toml"), rc.to_toml())?;
                jobs.extend(rc.seeds.iter().map(|&seed| Job { cell: i, cfg: rc, seed }));
            }
            Err(msg) => failures.push(Failure {
                run_id: c.id.clone(),
                seed: None,
                kind: "invalid_config".into(),
                message: msg.clone(),
            }),
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| HarnessError::config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<MetricsLog>> = pool.install(|| jobs.par_iter().map(|j| run_job(j, &root.join(&cells[j.cell].id))).collect());

    let mut logs: Vec<Vec<MetricsLog>> = vec![Vec::new(); cells.len()];
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(log) => logs[job.cell].push(log),
            Err(e) => failures.push(Failure {
                run_id: cells[job.cell].id.clone(),
                seed: Some(job.seed),
                kind: e.kind().into(),
                message: e.to_string(),
            }),
        }
    }

    let mut agg = csv_writer();
    agg.write_record(AGGREGATE_HEADER)?;
    let mut sum = csv_writer();
    sum.write_record(SUMMARY_HEADER)?;
    let mut summaries = Vec::new();
    for (c, seed_logs) in cells.iter().zip(&logs) {
        if seed_logs.is_empty() {
            continue;
        }
        for (step, metric, vals) in curve_points(seed_logs) {
            let (m, s) = mean_std(&vals);
            agg.write_record([c.id.as_str(), &step.to_string(), metric, &m.to_string(), &s.to_string(), &vals.len().to_string()])?;
        }
        let summary = summarize(&c.id, seed_logs);
        for (metric, m, s, n) in &summary.metrics {
            sum.write_record([c.id.as_str(), metric, &m.to_string(), &s.to_string(), &n.to_string()])?;
        }
        summaries.push(summary);
    }
    let mut fail = csv_writer();
    fail.write_record(FAILURES_HEADER)?;
    for f in &failures {
        let seed = f.seed.map(|s| s.to_string()).unwrap_or_default();
        fail.write_record([f.run_id.as_str(), &seed, &f.kind, &f.message])?;
    }
    write(&root.join("aggregate.csv"), finish(agg)?)?;
    write(&root.join("summary.csv"), finish(sum)?)?;
    write(&root.join("failures.csv"), finish(fail)?)?;
    Ok(SweepOutcome {
        dir: root,
        summaries,
        failures,
    })
}

fn run_job(job: &Job<'_>, dir: &Path) -> Result<MetricsLog> {
    let (ckpt, log) = train_seed(job.cfg, job.seed)?;
    write(&dir.join(format!("seed_{}.csv", job.seed)), metrics_csv(&job.cfg.run_id(), &log)?)?;
    ckpt.save(&dir.join(Checkpoint::file_name(job.cfg.agent, job.seed)))?;
    Ok(log)
}

/// Per-step values across seeds, keyed by step then metric order of first
/// appearance.
fn curve_points(logs: &[MetricsLog]) -> Vec<(u64, &'static str, Vec<f64>)> {
    let mut by_step: BTreeMap<u64, Vec<(&'static str, Vec<f64>)>> = BTreeMap::new();
    for log in logs {
        for row in log {
            let slot = by_step.entry(row.step).or_default();
            for (metric, v) in row.metrics() {
                match slot.iter_mut().find(|(m, _)| *m == metric) {
                    Some((_, vals)) => vals.push(v),
                    None => slot.push((metric, vec![v])),
                }
            }
        }
    }
    by_step
        .into_iter()
        .flat_map(|(step, ms)| ms.into_iter().map(move |(m, v)| (step, m, v)))
        .collect()
}

const SUMMARY_METRICS: [&str; 8] = [
    "return",
    "success",
    "total_reward",
    "reward_regret",
    "memory_regret",
    "memory_regret_steps",
    "active_regret",
    "passive_regret",
];

/// Final-window mean of every metric per seed, then mean and std over seeds.
/// Success is pooled over goals inside each seed's window.
pub fn summarize(run_id: &str, logs: &[MetricsLog]) -> CellSummary {
    let mut metrics = Vec::new();
    for metric in SUMMARY_METRICS {
        let vals: Vec<f64> = logs
            .iter()
            .filter_map(|l| match metric {
                "success" => final_success(l, FINAL_WINDOW),
                _ => final_mean(l, metric, FINAL_WINDOW),
            })
            .collect();
        if !vals.is_empty() {
            let (m, s) = mean_std(&vals);
            metrics.push((metric.to_string(), m, s, vals.len()));
        }
    }
    CellSummary {
        run_id: run_id.to_string(),
        metrics,
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| HarnessError::data(e.to_string()))
}
