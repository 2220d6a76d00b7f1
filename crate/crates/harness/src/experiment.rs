use std::path::{Path, PathBuf};

use num_traits::Signed;
use rayon::prelude::*;
use serde::Serialize;
use vartrack_core::counter::{DetTracker, PartitionOnly, RandTracker};
use vartrack_core::engine::{replay_estimates, run_simulation, Protocol};
use vartrack_core::freq::{generate_workload, run_freq_tracking, FreqProtocol, FreqWorkloadSpec};
use vartrack_core::rational::{big_to_f64, q_to_f64};
use vartrack_core::rng::{derive_seed, label};
use vartrack_core::single_site::run_single_site;
use vartrack_core::stream::{make_generator, prefix_values, Stream, StreamKind};
use vartrack_core::variability::variability_series;
use vartrack_core::Q;

use crate::checks::{CheckDef, Eval, Outcome, TrialData};
use crate::config::{ExperimentConfig, TrackerSpec};
use crate::error::{HarnessError, Result};
use crate::formats::{
    fraction_big, load_replay, single_site_rows, trace_rows, write_blocks_csv, write_file,
    write_json, write_message_log, write_trace_csv, write_variability_csv,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialSeeds {
    pub stream: u64,
    pub tracker: u64,
    pub hash: u64,
}

impl TrialSeeds {
    pub fn derive(base: u64, trial: usize) -> Self {
        TrialSeeds {
            stream: derive_seed(base, label::TRIAL, trial as u64),
            tracker: derive_seed(base, label::SITE_COINS, trial as u64),
            hash: derive_seed(base, label::HASH, trial as u64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seeds: TrialSeeds,
    pub timesteps: usize,
    pub messages: u64,
    pub bits: u64,
    /// Exact `v(n)`; `F1`-variability for frequency runs.
    pub variability: String,
    pub variability_f64: f64,
    /// `max_t |f - f_hat| / |f|` over `f != 0` (`/ F1` for frequency runs).
    pub max_relative_error: f64,
    /// Fraction of timesteps (item-timesteps for frequency runs) outside the guarantee.
    pub failure_rate: f64,
    pub blocks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: &'static str,
    pub topic: &'static str,
    /// `None` for checks pooled over all trials.
    pub trial: Option<usize>,
    pub status: Status,
    #[serde(flatten)]
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub name: String,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialSummary>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl Report {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }

    pub fn result(&self, check: &str) -> impl Iterator<Item = &CheckResult> + '_ {
        let check = check.to_string();
        self.checks.iter().filter(move |c| c.check == check)
    }
}

struct TrialRun {
    summary: TrialSummary,
    data: TrialData,
}

fn stream_for(config: &ExperimentConfig, seed: u64) -> Result<Stream> {
    let mut spec = config.stream.clone();
    spec.seed = seed;
    match &spec.kind {
        StreamKind::Replay { path } => {
            let mut s = load_replay(Path::new(path), spec.k, 0)?;
            s.spec = spec.clone();
            Ok(s)
        }
        _ => Ok(make_generator(&spec)?),
    }
}

fn relative_error_stats<'a>(rows: impl Iterator<Item = (i64, Q)> + 'a) -> f64 {
    rows.filter(|(f, _)| *f != 0)
        .map(|(f, f_hat)| {
            q_to_f64(
                &((Q::from_integer(f as i128) - f_hat).abs() / Q::from_integer((f as i128).abs())),
            )
        })
        .fold(0.0, f64::max)
}

fn counter_trial<P: Protocol<Input = i64>>(
    protocol: &P,
    stream: Stream,
    trial: usize,
    seeds: TrialSeeds,
    replay: bool,
    rerun: bool,
) -> Result<TrialRun> {
    let trace = run_simulation(protocol, &stream)?;
    let replayed = if replay {
        Some(replay_estimates(protocol, &trace)?)
    } else {
        None
    };
    let rerun_identical = if rerun {
        Some(run_simulation(protocol, &stream)? == trace)
    } else {
        None
    };
    let failures = trace.rows.iter().filter(|r| !r.within_bound).count();
    let summary = TrialSummary {
        trial,
        seeds,
        timesteps: trace.len(),
        messages: trace.messages_total(),
        bits: trace.rows.last().map_or(0, |r| r.bits_cumulative),
        variability: fraction_big(&trace.variability),
        variability_f64: big_to_f64(&trace.variability),
        max_relative_error: relative_error_stats(trace.rows.iter().map(|r| (r.f, r.f_hat))),
        failure_rate: if trace.is_empty() {
            0.0
        } else {
            failures as f64 / trace.len() as f64
        },
        blocks: trace.blocks.len(),
    };
    Ok(TrialRun {
        summary,
        data: TrialData::Counter {
            stream,
            trace,
            replayed,
            rerun_identical,
        },
    })
}

fn run_trial(config: &ExperimentConfig, checks: &[&CheckDef], trial: usize) -> Result<TrialRun> {
    let seeds = TrialSeeds::derive(config.seed, trial);
    let wants = |name: &str| checks.iter().any(|c| c.name == name);
    let (replay, rerun) = (wants("playback_fidelity"), wants("trace_determinism"));
    let eps = config.eps;
    match &config.tracker {
        TrackerSpec::Det => counter_trial(
            &DetTracker { eps },
            stream_for(config, seeds.stream)?,
            trial,
            seeds,
            replay,
            rerun,
        ),
        TrackerSpec::Rand => {
            let protocol = RandTracker {
                eps,
                seed: seeds.tracker,
            };
            counter_trial(
                &protocol,
                stream_for(config, seeds.stream)?,
                trial,
                seeds,
                replay,
                rerun,
            )
        }
        TrackerSpec::PartitionOnly => counter_trial(
            &PartitionOnly { eps },
            stream_for(config, seeds.stream)?,
            trial,
            seeds,
            replay,
            rerun,
        ),
        TrackerSpec::SingleSite => {
            let stream = stream_for(config, seeds.stream)?;
            let values = prefix_values(&stream);
            let run = run_single_site(&values, eps, stream.f0);
            let v = variability_series(&stream).total();
            let summary = TrialSummary {
                trial,
                seeds,
                timesteps: values.len(),
                messages: run.messages,
                bits: run.messages * vartrack_core::engine::WORD_BITS,
                variability: fraction_big(&v),
                variability_f64: big_to_f64(&v),
                max_relative_error: relative_error_stats(
                    run.rows
                        .iter()
                        .map(|r| (r.f, Q::from_integer(r.f_hat as i128))),
                ),
                failure_rate: if values.is_empty() {
                    0.0
                } else {
                    run.correctness_violations() as f64 / values.len() as f64
                },
                blocks: 0,
            };
            Ok(TrialRun {
                summary,
                data: TrialData::Single {
                    stream,
                    values,
                    run,
                },
            })
        }
        TrackerSpec::Freq(f) => {
            let workload = generate_workload(&FreqWorkloadSpec {
                universe: f.universe,
                n: config.stream.n,
                k: config.stream.k,
                insert_prob: f.insert_prob,
                seed: seeds.stream,
                assignment: config.stream.assignment,
            })?;
            let protocol = FreqProtocol::new(eps, f.mode, f.universe, seeds.hash)?;
            let run = run_freq_tracking(&protocol, &workload)?;
            let max_rel = run
                .rows
                .iter()
                .filter(|r| r.f1 > 0)
                .map(|r| q_to_f64(&(r.max_abs_error / Q::from_integer(r.f1 as i128))))
                .fold(0.0, f64::max);
            let summary = TrialSummary {
                trial,
                seeds,
                timesteps: run.rows.len(),
                messages: run.messages,
                bits: vartrack_core::engine::account_log(&run.log, run.k).bits_total,
                variability: fraction_big(&run.f1_variability),
                variability_f64: big_to_f64(&run.f1_variability),
                max_relative_error: max_rel,
                failure_rate: run.failure_rate(),
                blocks: run.blocks.len(),
            };
            Ok(TrialRun {
                summary,
                data: TrialData::Freq { workload, run },
            })
        }
    }
}

fn write_trial_outputs(dir: &Path, trial: usize, data: &TrialData) -> Result<()> {
    let file = |stem: &str, ext: &str| dir.join(format!("{stem}_{trial}.{ext}"));
    match data {
        TrialData::Counter { stream, trace, .. } => {
            write_file(&file("trace", "csv"), |w| {
                write_trace_csv(w, trace_rows(trace))
            })?;
            write_file(&file("messages", "jsonl"), |w| {
                write_message_log(w, &trace.log)
            })?;
            write_file(&file("blocks", "csv"), |w| {
                write_blocks_csv(w, &trace.blocks)
            })?;
            write_file(&file("variability", "csv"), |w| {
                write_variability_csv(w, &variability_series(stream))
            })?;
        }
        TrialData::Single { stream, run, .. } => {
            write_file(&file("trace", "csv"), |w| {
                write_trace_csv(w, single_site_rows(run))
            })?;
            write_file(&file("variability", "csv"), |w| {
                write_variability_csv(w, &variability_series(stream))
            })?;
        }
        TrialData::Freq { run, .. } => {
            write_file(&file("messages", "jsonl"), |w| {
                write_message_log(w, &run.log)
            })?;
            write_file(&file("blocks", "csv"), |w| write_blocks_csv(w, &run.blocks))?;
        }
    }
    Ok(())
}

fn status(outcome: &Option<Outcome>) -> Status {
    match outcome {
        None => Status::Skipped,
        Some(o) if o.passed => Status::Pass,
        Some(_) => Status::Fail,
    }
}

/// Runs every trial, evaluates the configured checks and writes outputs
/// when `config.outputs` is set. Check failures are recorded in the report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let checks = config.resolved_checks()?;
    if let Some(dir) = &config.outputs {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let one = |i: usize| -> Result<TrialRun> {
        let run = run_trial(config, &checks, i)?;
        if let Some(dir) = &config.outputs {
            write_trial_outputs(dir, i, &run.data)?;
        }
        Ok(run)
    };
    let runs: Vec<TrialRun> = if config.parallel {
        (0..config.trials)
            .into_par_iter()
            .map(one)
            .collect::<Result<_>>()?
    } else {
        (0..config.trials).map(one).collect::<Result<_>>()?
    };

    let mut results = Vec::new();
    for def in &checks {
        match def.eval {
            Eval::PerTrial(f) => {
                for (i, run) in runs.iter().enumerate() {
                    let outcome = f(config, &run.data);
                    results.push(CheckResult {
                        check: def.name,
                        topic: def.topic,
                        trial: Some(i),
                        status: status(&outcome),
                        outcome,
                    });
                }
            }
            Eval::Pooled(f) => {
                let data: Vec<&TrialData> = runs.iter().map(|r| &r.data).collect();
                let outcome = f(config, &data);
                results.push(CheckResult {
                    check: def.name,
                    topic: def.topic,
                    trial: None,
                    status: status(&outcome),
                    outcome,
                });
            }
        }
    }
    let passed = results.iter().all(|r| r.status != Status::Fail);
    let report = Report {
        name: config.name.clone(),
        config: config.clone(),
        trials: runs.into_iter().map(|r| r.summary).collect(),
        checks: results,
        passed,
    };
    if let Some(dir) = &config.outputs {
        write_json(&dir.join("report.json"), &report)?;
    }
    Ok(report)
}

pub fn report_path(config: &ExperimentConfig) -> Option<PathBuf> {
    config.outputs.as_ref().map(|d| d.join("report.json"))
}
