use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use delta_core::artifacts::{
    write_accuracy_matrix, write_confusion, write_confusion_normalized, write_loss_log,
};
use delta_core::experiment::{ExperimentSpec, MeanStd, SeedMetrics};
use delta_core::stream::load_csv_dataset;
use delta_core::{ExperimentOutcome, Method, Stage2Loss};

use crate::error::{CliError, CliResult};
use crate::summary::{PointSummary, RunSummary, SeedSummary, Setting};

/// Environment variable holding the number of parallel seed workers.
pub const WORKERS_ENV: &str = "DELTA_WORKERS";

pub const DEFAULT_RHOS: [f64; 5] = [0.005, 0.03, 0.07, 0.1, 1.0];
pub const DEFAULT_PAIRINGS: [usize; 5] = [1, 2, 5, 10, 15];

/// Runs seeds of one configuration on a fixed-size worker pool. Each worker
/// owns its run state; results are collected in seed order.
pub struct Runner {
    pool: rayon::ThreadPool,
}

impl Runner {
    pub fn new(workers: usize) -> CliResult<Self> {
        if workers == 0 {
            return Err(CliError::Config(format!(
                "{WORKERS_ENV} must be at least 1"
            )));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
        Ok(Self { pool })
    }

    /// Reads the worker count from the environment, defaulting to the number of CPUs.
    pub fn from_env() -> CliResult<Self> {
        let workers = match std::env::var(WORKERS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                CliError::Config(format!(
                    "{WORKERS_ENV} must be a positive integer, got {v:?}"
                ))
            })?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        Self::new(workers)
    }

    /// Runs every seed of `spec`, writing per-seed artifacts under `dir/seed_<s>/`.
    pub fn run_point(
        &self,
        spec: &ExperimentSpec,
        label: &str,
        setting: Option<Setting>,
        dir: &Path,
    ) -> CliResult<PointSummary> {
        spec.validate()?;
        let seeds = self.pool.install(|| {
            spec.seeds
                .par_iter()
                .map(|&seed| {
                    let outcome = spec.run_seed(seed)?;
                    let metrics = SeedMetrics::from_outcome(seed, &outcome)?;
                    write_seed_artifacts(
                        &dir.join(format!("seed_{seed}")),
                        spec,
                        &outcome,
                        &metrics,
                    )?;
                    Ok(SeedSummary::from(&metrics))
                })
                .collect::<CliResult<Vec<_>>>()
        })?;
        Ok(PointSummary::new(label, setting, seeds))
    }
}

#[derive(Serialize)]
struct RunRecord<'a> {
    seed: u64,
    config: &'a ExperimentSpec,
    per_task_average_accuracy: &'a [f64],
    average_accuracy: f64,
    average_forgetting: Option<f64>,
    head_accuracy: Option<f64>,
    median_accuracy: Option<f64>,
    tail_accuracy: Option<f64>,
    steps: usize,
    stream_samples: usize,
    wall_clock_secs: f64,
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn write_text(path: PathBuf, text: &str) -> CliResult<()> {
    fs::write(&path, text).map_err(CliError::io(path))
}

fn write_seed_artifacts(
    dir: &Path,
    spec: &ExperimentSpec,
    outcome: &ExperimentOutcome,
    metrics: &SeedMetrics,
) -> CliResult<()> {
    create_dir(dir)?;
    let record = RunRecord {
        seed: metrics.seed,
        config: spec,
        per_task_average_accuracy: &metrics.per_task_average_accuracy,
        average_accuracy: metrics.average_accuracy,
        average_forgetting: metrics.average_forgetting,
        head_accuracy: metrics.breakdown.head,
        median_accuracy: metrics.breakdown.median,
        tail_accuracy: metrics.breakdown.tail,
        steps: outcome.steps,
        stream_samples: outcome.stream_samples_consumed,
        wall_clock_secs: metrics.wall_clock_secs,
    };
    write_text(
        dir.join("run.json"),
        &serde_json::to_string_pretty(&record)?,
    )?;
    write_accuracy_matrix(dir.join("accuracy_matrix.csv"), &outcome.accuracy)?;
    for (t, conf) in outcome.confusions.iter().enumerate() {
        write_confusion(dir.join(format!("confusion_{}.csv", t + 1)), conf)?;
        write_confusion_normalized(
            dir.join(format!("confusion_{}_normalized.csv", t + 1)),
            conf,
        )?;
    }
    write_loss_log(dir.join("loss_log.csv"), &outcome.loss_log)?;
    outcome
        .final_state
        .network
        .save_json(dir.join("model.json"))?;
    Ok(())
}

fn write_summary(out: &Path, summary: &RunSummary) -> CliResult<()> {
    write_text(
        out.join("summary.json"),
        &serde_json::to_string_pretty(summary)?,
    )
}

fn cell(v: Option<MeanStd>) -> (String, String) {
    v.map_or((String::new(), String::new()), |s| {
        (s.mean.to_string(), s.std.to_string())
    })
}

pub fn run(spec: &ExperimentSpec, out: &Path, runner: &Runner) -> CliResult<RunSummary> {
    create_dir(out)?;
    let point = runner.run_point(spec, "run", None, out)?;
    let summary = RunSummary {
        command: "run".into(),
        points: vec![point],
    };
    write_summary(out, &summary)?;
    Ok(summary)
}

/// One run per imbalance ratio; writes `sweep_imbalance.csv`.
pub fn sweep_imbalance(
    spec: &ExperimentSpec,
    rhos: &[f64],
    out: &Path,
    runner: &Runner,
) -> CliResult<RunSummary> {
    if rhos.is_empty() {
        return Err(CliError::Config(
            "--rhos must list at least one ratio".into(),
        ));
    }
    let variants = rhos
        .iter()
        .map(|&rho| {
            let mut s = spec.clone();
            s.stream.rho = rho;
            s.validate()?;
            Ok(s)
        })
        .collect::<CliResult<Vec<_>>>()?;
    create_dir(out)?;
    let mut csv =
        String::from("rho,mean_accuracy,std_accuracy,mean_forgetting,std_forgetting,seeds\n");
    let mut points = Vec::new();
    for (&rho, s) in rhos.iter().zip(&variants) {
        let label = format!("rho={rho}");
        let setting = Setting {
            name: "rho".into(),
            value: rho.into(),
        };
        let p = runner.run_point(s, &label, Some(setting), &out.join(format!("rho_{rho}")))?;
        let (fm, fs) = cell(p.average_forgetting);
        let _ = writeln!(
            csv,
            "{rho},{},{},{fm},{fs},{}",
            p.average_accuracy.mean, p.average_accuracy.std, p.average_accuracy.n
        );
        points.push(p);
    }
    write_text(out.join("sweep_imbalance.csv"), &csv)?;
    let summary = RunSummary {
        command: "sweep-imbalance".into(),
        points,
    };
    write_summary(out, &summary)?;
    Ok(summary)
}

/// One run per pairing count `m`; writes `sweep_pairing.csv` with accuracy,
/// forgetting and mean per-seed wall-clock.
pub fn sweep_pairing(
    spec: &ExperimentSpec,
    ms: &[usize],
    out: &Path,
    runner: &Runner,
) -> CliResult<RunSummary> {
    if ms.is_empty() {
        return Err(CliError::Config(
            "--ms must list at least one pairing count".into(),
        ));
    }
    create_dir(out)?;
    let mut csv = String::from(
        "m,mean_accuracy,std_accuracy,mean_forgetting,std_forgetting,mean_wall_clock_secs,std_wall_clock_secs\n",
    );
    let mut points = Vec::new();
    for &m in ms {
        let mut s = spec.clone();
        s.train.pairing.exemplars_per_input = m;
        let setting = Setting {
            name: "pairing".into(),
            value: m.into(),
        };
        let p = runner.run_point(
            &s,
            &format!("m={m}"),
            Some(setting),
            &out.join(format!("m_{m}")),
        )?;
        let (fm, fs) = cell(p.average_forgetting);
        let _ = writeln!(
            csv,
            "{m},{},{},{fm},{fs},{},{}",
            p.average_accuracy.mean,
            p.average_accuracy.std,
            p.wall_clock_secs.mean,
            p.wall_clock_secs.std
        );
        points.push(p);
    }
    write_text(out.join("sweep_pairing.csv"), &csv)?;
    let summary = RunSummary {
        command: "sweep-pairing".into(),
        points,
    };
    write_summary(out, &summary)?;
    Ok(summary)
}

/// Two-stage training with a cross-entropy classifier stage against the
/// equalization loss, on identical seeds; writes `compare_losses.csv`.
pub fn compare_losses(spec: &ExperimentSpec, out: &Path, runner: &Runner) -> CliResult<RunSummary> {
    create_dir(out)?;
    let mut csv = String::from(
        "loss,mean_accuracy,std_accuracy,mean_head_accuracy,std_head_accuracy,mean_tail_accuracy,std_tail_accuracy\n",
    );
    let mut points = Vec::new();
    for (label, dir, loss) in [
        ("contrastive+CE", "ce", Stage2Loss::CrossEntropy),
        ("contrastive+EQ", "eq", Stage2Loss::Equalization),
    ] {
        let mut s = spec.clone();
        s.train.method = Method::Delta;
        s.train.stage2_loss = loss;
        let setting = Setting {
            name: "stage2_loss".into(),
            value: serde_json::to_value(loss)?,
        };
        let p = runner.run_point(&s, label, Some(setting), &out.join(dir))?;
        let (hm, hs) = cell(p.head_accuracy);
        let (tm, ts) = cell(p.tail_accuracy);
        let _ = writeln!(
            csv,
            "{label},{},{},{hm},{hs},{tm},{ts}",
            p.average_accuracy.mean, p.average_accuracy.std
        );
        points.push(p);
    }
    write_text(out.join("compare_losses.csv"), &csv)?;
    let summary = RunSummary {
        command: "compare-losses".into(),
        points,
    };
    write_summary(out, &summary)?;
    Ok(summary)
}

/// Class histogram of a buffer: either a saved snapshot or the buffer left at
/// the end of a run of the first seed (saved to `out/buffer.csv`).
pub fn inspect_buffer(
    spec: &ExperimentSpec,
    snapshot: Option<&Path>,
    out: &Path,
) -> CliResult<BTreeMap<usize, usize>> {
    let samples = match snapshot {
        Some(path) => load_csv_dataset(path)?,
        None => {
            let seed = *spec
                .seeds
                .first()
                .ok_or_else(|| CliError::Config("seeds must be non-empty".into()))?;
            let outcome = spec.run_seed(seed)?;
            create_dir(out)?;
            outcome
                .final_state
                .buffer
                .write_snapshot(out.join("buffer.csv"))?;
            outcome.final_state.buffer.slots().to_vec()
        }
    };
    let mut hist = BTreeMap::new();
    for s in &samples {
        *hist.entry(s.label).or_insert(0) += 1;
    }
    Ok(hist)
}

pub fn histogram_csv(hist: &BTreeMap<usize, usize>) -> String {
    let mut text = String::from("class,count\n");
    for (class, count) in hist {
        let _ = writeln!(text, "{class},{count}");
    }
    text
}
