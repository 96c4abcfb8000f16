//! Multi-seed experiment driver and its CSV outputs.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PreparedExperiment};
use crate::error::{Error, Result};
use crate::optimizer::{run, RunConfig, RunRecord};

pub const SUMMARY_HEADER: &str = "method,k,runs,mean_f_gap,se_f_gap,mean_bits";
pub const METHODS_HEADER: &str =
    "method,runs,diverged,reached_target,mean_iters_to_target,mean_total_bits,mean_output_f_gap,theorem_bound";

/// `f_gap` statistics for one method at one checkpoint. Runs that halted
/// before `k` do not contribute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub method: String,
    pub k: usize,
    pub runs: usize,
    pub mean_f_gap: f64,
    pub se_f_gap: f64,
    /// Mean cumulative uplink bits through iteration `k`.
    pub mean_bits: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub diverged: usize,
    pub reached_target: usize,
    /// Over the runs that reached the target.
    pub mean_iters_to_target: Option<f64>,
    pub mean_total_bits: f64,
    pub mean_output_f_gap: f64,
    pub theorem_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnexpectedDivergence {
    pub method: String,
    pub seed: u64,
    pub k: usize,
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub method: String,
    pub seed: u64,
    pub record: RunRecord,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub runs: Vec<SeedRun>,
    pub checkpoints: Vec<CheckpointSummary>,
    pub methods: Vec<MethodSummary>,
    pub unexpected: Vec<UnexpectedDivergence>,
}

impl ExperimentOutcome {
    pub fn summary_csv(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        for c in &self.checkpoints {
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{:e}\n",
                c.method, c.k, c.runs, c.mean_f_gap, c.se_f_gap, c.mean_bits
            ));
        }
        out
    }

    pub fn methods_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
        let mut out = format!("{METHODS_HEADER}\n");
        for m in &self.methods {
            out.push_str(&format!(
                "{},{},{},{},{},{:e},{:e},{}\n",
                m.method,
                m.runs,
                m.diverged,
                m.reached_target,
                opt(m.mean_iters_to_target),
                m.mean_total_bits,
                m.mean_output_f_gap,
                opt(m.theorem_bound)
            ));
        }
        out
    }

    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn runs_of<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a SeedRun> + 'a {
        self.runs.iter().filter(move |r| r.method == name)
    }
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Runs every (method, seed) pair in parallel. Results are ordered by
/// method, then by seed, regardless of scheduling.
pub fn execute(prepared: &PreparedExperiment) -> Result<ExperimentOutcome> {
    let cfg = &prepared.resolved;
    let seeds = cfg.seeds();
    let jobs: Vec<(usize, u64)> = (0..prepared.methods.len())
        .flat_map(|m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let records: Vec<Result<RunRecord>> = jobs
        .par_iter()
        .map(|&(m, seed)| {
            let config = RunConfig {
                seed,
                ..prepared.methods[m].run.clone()
            };
            run(&prepared.problem, &config)
        })
        .collect();

    let mut runs = Vec::with_capacity(jobs.len());
    for (&(m, seed), record) in jobs.iter().zip(records) {
        runs.push(SeedRun {
            method: prepared.methods[m].name.clone(),
            seed,
            record: record?,
        });
    }

    let target = cfg.target_gap;
    let checkpoint_list = cfg.checkpoints.clone().unwrap_or_default();
    let mut checkpoints = Vec::new();
    let mut methods = Vec::new();
    let mut unexpected = Vec::new();
    if !seeds.is_empty() {
        for method in &prepared.methods {
            let mine: Vec<&SeedRun> = runs.iter().filter(|r| r.method == method.name).collect();
            for &k in &checkpoint_list {
                let rows: Vec<_> = mine.iter().filter_map(|r| r.record.row(k).map(|row| (r, row))).collect();
                let gaps: Vec<f64> = rows.iter().map(|(_, row)| row.f_gap).collect();
                let (mean_f_gap, se_f_gap) = mean_se(&gaps);
                let mean_bits = mean(rows.iter().map(|(r, _)| r.record.rows[..=k].iter().map(|x| x.bits_up).sum::<u64>() as f64));
                checkpoints.push(CheckpointSummary {
                    method: method.name.clone(),
                    k,
                    runs: rows.len(),
                    mean_f_gap,
                    se_f_gap,
                    mean_bits,
                });
            }
            let reached: Vec<f64> = match target {
                Some(t) => mine.iter().filter_map(|r| r.record.first_reaching(t)).map(|k| k as f64).collect(),
                None => Vec::new(),
            };
            methods.push(MethodSummary {
                method: method.name.clone(),
                runs: mine.len(),
                diverged: mine.iter().filter(|r| r.record.diverged).count(),
                reached_target: reached.len(),
                mean_iters_to_target: (!reached.is_empty()).then(|| mean(reached.iter().copied())),
                mean_total_bits: mean(mine.iter().map(|r| r.record.total_bits() as f64)),
                mean_output_f_gap: mean(mine.iter().map(|r| prepared.problem.suboptimality(&r.record.output_point))),
                theorem_bound: method.bound,
            });
            if !method.expect_divergence {
                for r in mine.iter().filter(|r| r.record.diverged) {
                    unexpected.push(UnexpectedDivergence {
                        method: method.name.clone(),
                        seed: r.seed,
                        k: r.record.rows.last().map_or(0, |row| row.k),
                    });
                }
            }
        }
    }
    Ok(ExperimentOutcome {
        runs,
        checkpoints,
        methods,
        unexpected,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `resolved_config.json`, per-run `<method>_seed<seed>.csv`,
/// `summary.csv` and `methods.csv` into `out_dir`.
pub fn write_outputs(prepared: &PreparedExperiment, outcome: &ExperimentOutcome, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let resolved = serde_json::to_string_pretty(&prepared.resolved)?;
    write(&out_dir.join("resolved_config.json"), &(resolved + "\n"))?;
    for r in &outcome.runs {
        write(&out_dir.join(format!("{}_seed{}.csv", r.method, r.seed)), &r.record.to_csv())?;
    }
    write(&out_dir.join("summary.csv"), &outcome.summary_csv())?;
    write(&out_dir.join("methods.csv"), &outcome.methods_csv())
}

/// Validates, runs and writes. `out_dir` overrides the configured output.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentOutcome> {
    let prepared = config.prepare()?;
    let outcome = execute(&prepared)?;
    if let Some(dir) = out_dir.or(config.output.as_deref()) {
        write_outputs(&prepared, &outcome, dir)?;
    }
    Ok(outcome)
}
