//! Named bound and invariant checks.
//!
//! Per-trial checks look at one trial's artifacts; pooled checks look at all
//! trials together (Monte Carlo rates). A check returns `None` when it does
//! not apply to the trial at hand, e.g. the harmonic identity on a walk.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::Serialize;
use vartrack_core::counter::{block_fact_violations, BlockFact};
use vartrack_core::engine::{account_log, BlockRecord, MessageClass, MessageKind, Trace};
use vartrack_core::freq::{CrPrecis, FreqMode, FreqRun, FreqWorkload};
use vartrack_core::hard_instances::{flip_closed_form, ValueSequence};
use vartrack_core::rational::big_to_f64;
use vartrack_core::single_site::{message_bound, SingleSiteRun};
use vartrack_core::stream::{prefix_values, Stream, StreamKind};
use vartrack_core::variability::variability_series;
use vartrack_core::{Eps, Q};

use crate::config::{ExperimentConfig, TrackerSpec};
use crate::formats::{display_big, fraction_big};

/// Artifacts of one finished trial.
#[derive(Debug, Clone)]
pub enum TrialData {
    Counter {
        stream: Stream,
        trace: Trace,
        /// `f_hat(t)` rebuilt from the message log, when requested.
        replayed: Option<Vec<Q>>,
        /// Whether a second run reproduced the trace, when requested.
        rerun_identical: Option<bool>,
    },
    Freq {
        workload: FreqWorkload,
        run: FreqRun,
    },
    Single {
        stream: Stream,
        values: Vec<i64>,
        run: SingleSiteRun,
    },
}

impl TrialData {
    fn stream(&self) -> Option<&Stream> {
        match self {
            TrialData::Counter { stream, .. } | TrialData::Single { stream, .. } => Some(stream),
            TrialData::Freq { .. } => None,
        }
    }
}

/// One measurement against one bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub relation: &'static str,
    pub bound: String,
    pub measured: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Outcome {
    fn count(measured: usize, detail: Option<String>) -> Self {
        Outcome {
            relation: "<=",
            bound: "0".into(),
            measured: measured.to_string(),
            passed: measured == 0,
            detail,
        }
    }

    fn le_big(measured: &BigRational, bound: &BigRational) -> Self {
        Outcome {
            relation: "<=",
            bound: display_big(bound),
            measured: display_big(measured),
            passed: measured <= bound,
            detail: None,
        }
    }

    fn le_f64(measured: f64, bound: f64) -> Self {
        Outcome {
            relation: "<=",
            bound: format!("{bound:.6}"),
            measured: format!("{measured:.6}"),
            passed: measured <= bound,
            detail: None,
        }
    }

    fn equal(measured: String, expected: String) -> Self {
        let passed = measured == expected;
        Outcome {
            relation: "==",
            bound: expected,
            measured,
            passed,
            detail: None,
        }
    }

    fn with_detail(mut self, detail: String) -> Self {
        self.detail = Some(detail);
        self
    }
}

type TrialFn = fn(&ExperimentConfig, &TrialData) -> Option<Outcome>;
type PooledFn = fn(&ExperimentConfig, &[&TrialData]) -> Option<Outcome>;

#[derive(Clone, Copy)]
pub enum Eval {
    PerTrial(TrialFn),
    Pooled(PooledFn),
}

pub struct CheckDef {
    pub name: &'static str,
    pub description: &'static str,
    /// Short topic label for grouping.
    pub topic: &'static str,
    trackers: &'static [&'static str],
    pub eval: Eval,
}

impl CheckDef {
    pub fn applies_to(&self, tracker: &TrackerSpec) -> bool {
        self.trackers.contains(&tracker.name())
    }

    pub fn trackers(&self) -> &'static [&'static str] {
        self.trackers
    }
}

impl std::fmt::Debug for CheckDef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CheckDef")
            .field("name", &self.name)
            .finish()
    }
}

const COUNTER: &[&str] = &["det", "rand", "partition_only"];
const STREAMED: &[&str] = &["det", "rand", "partition_only", "single_site"];
const DET: &[&str] = &["det"];
const RAND: &[&str] = &["rand"];
const FREQ: &[&str] = &["freq"];
const SINGLE: &[&str] = &["single_site"];

static REGISTRY: &[CheckDef] = &[
    CheckDef {
        name: "block_length_bounds",
        description: "every completed block has ceil(2^(r-1)) k <= |B_j| <= 2^r k",
        topic: "block partition",
        trackers: COUNTER,
        eval: Eval::PerTrial(block_length_bounds),
    },
    CheckDef {
        name: "block_message_bound",
        description: "at most 5k partition messages per completed block",
        topic: "block partition",
        trackers: COUNTER,
        eval: Eval::PerTrial(block_message_bound),
    },
    CheckDef {
        name: "block_envelope",
        description: "r = 0: |f - f(n_j)| <= k and |f| <= 5k; r >= 1: |f - f(n_j)| <= 2^r k and 2^r k <= |f| <= 5 2^r k",
        topic: "block partition",
        trackers: COUNTER,
        eval: Eval::PerTrial(block_envelope),
    },
    CheckDef {
        name: "block_variability",
        description: "v_j >= 1/5 on every completed block",
        topic: "block partition",
        trackers: COUNTER,
        eval: Eval::PerTrial(block_variability),
    },
    CheckDef {
        name: "partition_message_bound",
        description: "partition messages <= 25 k v + 3k",
        topic: "block partition",
        trackers: COUNTER,
        eval: Eval::PerTrial(partition_message_bound),
    },
    CheckDef {
        name: "det_error_guarantee",
        description: "|f - f_hat| <= eps |f| at every timestep",
        topic: "deterministic tracker",
        trackers: DET,
        eval: Eval::PerTrial(det_error_guarantee),
    },
    CheckDef {
        name: "det_message_bound",
        description: "total messages <= 25 k v + 3k + 5 k v / eps",
        topic: "deterministic tracker",
        trackers: DET,
        eval: Eval::PerTrial(det_message_bound),
    },
    CheckDef {
        name: "det_block_messages",
        description: "in-block tracker messages <= k when r = 0 and <= 2k/eps when r >= 1",
        topic: "deterministic tracker",
        trackers: DET,
        eval: Eval::PerTrial(det_block_messages),
    },
    CheckDef {
        name: "rand_failure_rate",
        description: "fraction of (trial, timestep) pairs outside eps |f| is < 1/3 within a 3 sigma binomial margin",
        topic: "randomized tracker",
        trackers: RAND,
        eval: Eval::Pooled(rand_failure_rate),
    },
    CheckDef {
        name: "rand_block_messages",
        description: "mean in-block tracker messages minus 30 sqrt(k) v_j / eps is <= 3 standard errors",
        topic: "randomized tracker",
        trackers: RAND,
        eval: Eval::Pooled(rand_block_messages),
    },
    CheckDef {
        name: "playback_fidelity",
        description: "replaying the logged site messages reproduces f_hat(t) at every t",
        topic: "tracing",
        trackers: COUNTER,
        eval: Eval::PerTrial(playback_fidelity),
    },
    CheckDef {
        name: "trace_determinism",
        description: "a second run with the same seeds yields an identical trace",
        topic: "engine",
        trackers: COUNTER,
        eval: Eval::PerTrial(trace_determinism),
    },
    CheckDef {
        name: "broadcast_accounting",
        description: "each logged broadcast is charged k messages",
        topic: "engine",
        trackers: COUNTER,
        eval: Eval::PerTrial(broadcast_accounting),
    },
    CheckDef {
        name: "variability_at_most_n",
        description: "v(n) <= n",
        topic: "variability",
        trackers: STREAMED,
        eval: Eval::PerTrial(variability_at_most_n),
    },
    CheckDef {
        name: "monotone_harmonic",
        description: "monotone streams from 0 have v(n) = H_f(n) exactly",
        topic: "variability",
        trackers: STREAMED,
        eval: Eval::PerTrial(monotone_harmonic),
    },
    CheckDef {
        name: "flip_closed_form",
        description: "flip-family streams have unclamped variability (6m+9)/(2m+6) r / m",
        topic: "hard instances",
        trackers: STREAMED,
        eval: Eval::PerTrial(flip_closed_form_check),
    },
    CheckDef {
        name: "freq_error_guarantee",
        description: "deterministic modes keep every item within eps F1 at every timestep",
        topic: "frequency tracking",
        trackers: FREQ,
        eval: Eval::PerTrial(freq_error_guarantee),
    },
    CheckDef {
        name: "freq_failure_rate",
        description: "cms mode: per-(item, time) failure rate <= 1/9 + 3 sigma over trials",
        topic: "frequency tracking",
        trackers: FREQ,
        eval: Eval::Pooled(freq_failure_rate),
    },
    CheckDef {
        name: "crprecis_query_bound",
        description: "crprecis sketch of the workload answers every item within (eps/3) F1 at every timestep",
        topic: "frequency tracking",
        trackers: FREQ,
        eval: Eval::PerTrial(crprecis_query_bound),
    },
    CheckDef {
        name: "freq_inblock_messages",
        description: "in-block counter messages <= 3k/eps per block, per counter an item touches",
        topic: "frequency tracking",
        trackers: FREQ,
        eval: Eval::PerTrial(freq_inblock_messages),
    },
    CheckDef {
        name: "freq_block_end_reports",
        description: "block-end reports <= 12k/eps per block, per counter an item touches",
        topic: "frequency tracking",
        trackers: FREQ,
        eval: Eval::PerTrial(freq_block_end_reports),
    },
    CheckDef {
        name: "freq_message_total",
        description: "total messages <= 25 k v + 3k + 15 (k/eps) blocks, per counter an item touches",
        topic: "frequency tracking",
        trackers: FREQ,
        eval: Eval::PerTrial(freq_message_total),
    },
    CheckDef {
        name: "single_site_guarantee",
        description: "|f - f_hat| <= eps |f| after every step, f_hat = 0 when f = 0",
        topic: "single site",
        trackers: SINGLE,
        eval: Eval::PerTrial(single_site_guarantee),
    },
    CheckDef {
        name: "single_site_message_bound",
        description: "messages <= (1 + eps)/eps v + Z + 1, Z = zeros and sign changes",
        topic: "single site",
        trackers: SINGLE,
        eval: Eval::PerTrial(single_site_message_bound),
    },
    CheckDef {
        name: "single_site_potential",
        description: "potential recurrence holds at every step of a sign-constant stretch",
        topic: "single site",
        trackers: SINGLE,
        eval: Eval::PerTrial(single_site_potential),
    },
];

pub fn registry() -> &'static [CheckDef] {
    REGISTRY
}

pub fn lookup(name: &str) -> Option<&'static CheckDef> {
    REGISTRY.iter().find(|c| c.name == name)
}

fn big(x: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

fn eps_big(eps: Eps) -> BigRational {
    BigRational::new(eps.numer().into(), eps.denom().into())
}

fn counter(data: &TrialData) -> Option<&Trace> {
    match data {
        TrialData::Counter { trace, .. } => Some(trace),
        _ => None,
    }
}

fn fact_count(trace: &Trace, fact: BlockFact) -> Outcome {
    let bad: Vec<&BlockRecord> = trace
        .blocks
        .iter()
        .filter(|b| block_fact_violations(b, trace.k).contains(&fact))
        .collect();
    let detail = bad.first().map(|b| {
        format!(
            "{} of {} blocks; first j = {} (r = {}, length {}, v_j = {})",
            bad.len(),
            trace.blocks.len(),
            b.j,
            b.r,
            b.len(),
            display_big(&b.v_j)
        )
    });
    Outcome::count(bad.len(), detail)
}

fn block_length_bounds(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    counter(data).map(|t| fact_count(t, BlockFact::Length))
}

fn block_message_bound(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    counter(data).map(|t| fact_count(t, BlockFact::PartitionMessages))
}

fn block_envelope(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    counter(data).map(|t| fact_count(t, BlockFact::Envelope))
}

fn block_variability(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    let trace = counter(data)?;
    let floor = BigRational::new(1.into(), 5.into());
    let min = trace.blocks.iter().map(|b| &b.v_j).min();
    let failures = trace.blocks.iter().filter(|b| b.v_j < floor).count();
    Some(match min {
        None => Outcome {
            relation: ">=",
            bound: "1/5".into(),
            measured: "no completed blocks".into(),
            passed: true,
            detail: None,
        },
        Some(min) => Outcome {
            relation: ">=",
            bound: "1/5".into(),
            measured: display_big(min),
            passed: failures == 0,
            detail: Some(format!(
                "{failures} of {} blocks below 1/5",
                trace.blocks.len()
            )),
        },
    })
}

fn partition_message_bound(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    let trace = counter(data)?;
    let acc = account_log(&trace.log, trace.k);
    let partition: u64 = acc
        .messages_by_kind
        .iter()
        .filter(|(kind, _)| kind.class() == MessageClass::Partition)
        .map(|(_, n)| n)
        .sum();
    let k = big(trace.k as i64);
    let bound = big(25) * &k * &trace.unit_variability + big(3) * &k;
    Some(Outcome::le_big(&big(partition as i64), &bound))
}

fn det_error_guarantee(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    let trace = counter(data)?;
    let bad: Vec<u64> = trace
        .rows
        .iter()
        .filter(|r| !r.within_bound)
        .map(|r| r.t)
        .collect();
    let detail = bad.first().map(|t| format!("first violation at t = {t}"));
    Some(Outcome::count(bad.len(), detail))
}

fn det_message_bound(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    let trace = counter(data)?;
    let k = big(trace.k as i64);
    let v = &trace.unit_variability;
    let bound = big(25) * &k * v + big(3) * &k + big(5) * &k * v / eps_big(trace.eps);
    Some(Outcome::le_big(&big(trace.messages_total() as i64), &bound))
}

fn det_block_messages(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    let trace = counter(data)?;
    let k = trace.k as i128;
    let (num, den) = (trace.eps.numer() as i128, trace.eps.denom() as i128);
    let over = |b: &&BlockRecord| {
        let m = b.tracker_messages as i128;
        if b.r == 0 {
            m > k
        } else {
            m * num > 2 * k * den
        }
    };
    let bad: Vec<&BlockRecord> = trace.blocks.iter().filter(over).collect();
    let worst = trace
        .blocks
        .iter()
        .map(|b| b.tracker_messages)
        .max()
        .unwrap_or(0);
    Some(Outcome::count(
        bad.len(),
        Some(format!("largest in-block count {worst}")),
    ))
}

fn trial_failures(data: &TrialData) -> Option<(u64, u64)> {
    let trace = counter(data)?;
    Some((
        trace.rows.iter().filter(|r| !r.within_bound).count() as u64,
        trace.rows.len() as u64,
    ))
}

/// `observed < p0 + 3 sqrt(p0 (1 - p0) / N)`.
fn binomial_margin(bad: u64, total: u64, p0: f64, strict: bool) -> Outcome {
    let rate = if total == 0 {
        0.0
    } else {
        bad as f64 / total as f64
    };
    let sigma = if total == 0 {
        0.0
    } else {
        (p0 * (1.0 - p0) / total as f64).sqrt()
    };
    let limit = p0 + 3.0 * sigma;
    Outcome {
        relation: if strict { "<" } else { "<=" },
        bound: format!("{limit:.6}"),
        measured: format!("{rate:.6}"),
        passed: if strict { rate < limit } else { rate <= limit },
        detail: Some(format!("{bad} of {total} pairs")),
    }
}

fn rand_failure_rate(_: &ExperimentConfig, trials: &[&TrialData]) -> Option<Outcome> {
    let (mut bad, mut total) = (0, 0);
    for data in trials {
        let (b, t) = trial_failures(data)?;
        bad += b;
        total += t;
    }
    Some(binomial_margin(bad, total, 1.0 / 3.0, true))
}

/// Per-block `(tracker messages, 30 sqrt(k) v_j / eps)` over all trials.
pub fn rand_block_pairs(trace: &Trace) -> impl Iterator<Item = (f64, f64)> + '_ {
    let scale = 30.0 * (trace.k as f64).sqrt() / trace.eps.to_f64();
    trace
        .blocks
        .iter()
        .map(move |b| (b.tracker_messages as f64, scale * big_to_f64(&b.v_j)))
}

/// Mean and standard error of `messages - bound` over blocks.
pub fn mean_excess(pairs: &[(f64, f64)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    if pairs.is_empty() {
        return (0.0, 0.0);
    }
    let diffs: Vec<f64> = pairs.iter().map(|(m, b)| m - b).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = if pairs.len() > 1 {
        diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, (var / n).sqrt())
}

fn rand_block_messages(_: &ExperimentConfig, trials: &[&TrialData]) -> Option<Outcome> {
    let mut pairs = Vec::new();
    for data in trials {
        pairs.extend(rand_block_pairs(counter(data)?));
    }
    let (mean, se) = mean_excess(&pairs);
    let mean_msgs = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len().max(1) as f64;
    let mean_bound = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len().max(1) as f64;
    Some(Outcome::le_f64(mean, 3.0 * se).with_detail(format!(
        "{} blocks; mean messages {mean_msgs:.4}, mean bound {mean_bound:.4}",
        pairs.len()
    )))
}

fn playback_fidelity(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    let TrialData::Counter {
        trace,
        replayed: Some(replayed),
        ..
    } = data
    else {
        return None;
    };
    let mismatches = trace
        .rows
        .iter()
        .zip(replayed)
        .filter(|(row, est)| row.f_hat != **est)
        .count()
        + trace.rows.len().abs_diff(replayed.len());
    Some(Outcome::count(mismatches, None))
}

fn trace_determinism(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    let TrialData::Counter {
        rerun_identical: Some(same),
        ..
    } = data
    else {
        return None;
    };
    Some(Outcome::equal(
        if *same { "identical" } else { "differs" }.into(),
        "identical".into(),
    ))
}

fn broadcast_accounting(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    let trace = counter(data)?;
    let entries = trace
        .log
        .iter()
        .filter(|e| e.message.kind == MessageKind::RBroadcast)
        .count() as u64;
    let acc = account_log(&trace.log, trace.k);
    let charged = acc
        .messages_by_kind
        .get(&MessageKind::RBroadcast)
        .copied()
        .unwrap_or(0);
    Some(Outcome::equal(
        charged.to_string(),
        (entries * trace.k as u64).to_string(),
    ))
}

fn variability_at_most_n(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    let stream = data.stream()?;
    let v = variability_series(stream).total();
    Some(Outcome::le_big(&v, &big(stream.len() as i64)))
}

fn monotone_harmonic(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    let stream = data.stream()?;
    if stream.spec.kind != StreamKind::Monotone || stream.f0 != 0 {
        return None;
    }
    let values = prefix_values(stream);
    let f_n = values.last().copied().unwrap_or(0);
    let h = (1..=f_n).fold(BigRational::zero(), |acc, i| {
        acc + BigRational::new(1.into(), i.into())
    });
    Some(Outcome::equal(
        fraction_big(&variability_series(stream).total()),
        fraction_big(&h),
    ))
}

fn flip_closed_form_check(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    let stream = data.stream()?;
    let StreamKind::DetFamily { m, r } = &stream.spec.kind else {
        return None;
    };
    let mut values = vec![stream.f0];
    values.extend(prefix_values(stream));
    Some(match ValueSequence::from_values(*m, values) {
        Ok(seq) => Outcome::equal(
            fraction_big(&seq.variability),
            fraction_big(&flip_closed_form(*m, *r)),
        ),
        Err(e) => Outcome::equal(
            format!("invalid sequence: {e}"),
            fraction_big(&flip_closed_form(*m, *r)),
        ),
    })
}

fn freq_run(data: &TrialData) -> Option<(&FreqWorkload, &FreqRun)> {
    match data {
        TrialData::Freq { workload, run } => Some((workload, run)),
        _ => None,
    }
}

fn freq_mode(config: &ExperimentConfig) -> Option<FreqMode> {
    match &config.tracker {
        TrackerSpec::Freq(f) => Some(f.mode),
        _ => None,
    }
}

/// Counters one item touches.
fn keys_per_item(config: &ExperimentConfig) -> Option<i128> {
    let TrackerSpec::Freq(f) = &config.tracker else {
        return None;
    };
    Some(match f.mode {
        FreqMode::CrPrecis => CrPrecis::dims_for(config.eps, f.universe).ok()?.0 as i128,
        _ => 1,
    })
}

fn freq_error_guarantee(config: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    if freq_mode(config)? == FreqMode::CountMin {
        return None;
    }
    let (_, run) = freq_run(data)?;
    let first = run
        .rows
        .iter()
        .find(|r| r.violations > 0)
        .map(|r| format!("first violation at t = {}", r.t));
    Some(Outcome::count(run.total_violations(), first))
}

fn freq_failure_rate(config: &ExperimentConfig, trials: &[&TrialData]) -> Option<Outcome> {
    if freq_mode(config)? != FreqMode::CountMin {
        return None;
    }
    let (mut bad, mut total) = (0u64, 0u64);
    for data in trials {
        let (_, run) = freq_run(data)?;
        bad += run.total_violations() as u64;
        total += run.rows.len() as u64 * run.universe;
    }
    Some(binomial_margin(bad, total, 1.0 / 9.0, false))
}

/// Feeds the workload to one CR-precis sketch and checks every item at every step.
pub fn crprecis_violations(eps: Eps, workload: &FreqWorkload) -> vartrack_core::Result<(usize, Q)> {
    let mut sketch = CrPrecis::new(eps, workload.universe)?;
    let mut truth = vec![0i64; workload.universe as usize];
    let mut f1 = 0i64;
    let mut bad = 0;
    let mut worst = Q::zero();
    let (num, den) = (eps.numer() as i128, eps.denom() as i128);
    for up in &workload.updates {
        sketch.update(up.item, up.sign)?;
        truth[up.item as usize] += up.sign as i64;
        f1 += up.sign as i64;
        for (item, &f) in truth.iter().enumerate() {
            let est = sketch.query(item as u64)?;
            let err = (est - vartrack_core::rational::Small::from_integer(f)).abs();
            let err = Q::new(*err.numer() as i128, *err.denom() as i128);
            // err > (eps / 3) F1
            if *err.numer() * 3 * den > num * f1 as i128 * *err.denom() {
                bad += 1;
            }
            if f1 > 0 {
                worst = worst.max(err / Q::from_integer(f1 as i128));
            }
        }
    }
    Ok((bad, worst))
}

fn crprecis_query_bound(config: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    if freq_mode(config)? != FreqMode::CrPrecis {
        return None;
    }
    let (workload, _) = freq_run(data)?;
    Some(match crprecis_violations(config.eps, workload) {
        Ok((bad, worst)) => Outcome::count(bad, Some(format!("max error / F1 = {}", worst))),
        Err(e) => Outcome::count(usize::MAX, Some(e.to_string())),
    })
}

fn per_block(
    config: &ExperimentConfig,
    data: &TrialData,
    constant: i128,
    pick: fn(&BlockRecord) -> u64,
) -> Option<Outcome> {
    let (_, run) = freq_run(data)?;
    let keys = keys_per_item(config)?;
    let k = run.k as i128;
    let (num, den) = (config.eps.numer() as i128, config.eps.denom() as i128);
    // count > constant * keys * k / eps
    let bad = run
        .blocks
        .iter()
        .filter(|b| pick(b) as i128 * num > constant * keys * k * den)
        .count();
    let worst = run.blocks.iter().map(pick).max().unwrap_or(0);
    let limit = BigRational::new((constant * keys * k * den).into(), num.into());
    Some(Outcome::count(
        bad,
        Some(format!(
            "largest per-block count {worst}, limit {}",
            display_big(&limit)
        )),
    ))
}

fn freq_inblock_messages(config: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    per_block(config, data, 3, |b| b.tracker_messages)
}

fn freq_block_end_reports(config: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    per_block(config, data, 12, |b| b.report_messages)
}

fn freq_message_total(config: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    let (_, run) = freq_run(data)?;
    let keys = big(keys_per_item(config)? as i64);
    let k = big(run.k as i64);
    let blocks = big(run.blocks.len() as i64 + 1);
    let bound = big(25) * &k * &run.f1_variability
        + big(3) * &k
        + big(15) * &keys * &k / eps_big(config.eps) * blocks;
    Some(Outcome::le_big(&big(run.messages as i64), &bound))
}

fn single(data: &TrialData) -> Option<(&[i64], &SingleSiteRun)> {
    match data {
        TrialData::Single { values, run, .. } => Some((values, run)),
        _ => None,
    }
}

fn single_site_guarantee(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    let (_, run) = single(data)?;
    let zero_miss = run.rows.iter().filter(|r| r.f == 0 && r.f_hat != 0).count();
    Some(Outcome::count(
        run.correctness_violations() + zero_miss,
        None,
    ))
}

fn single_site_message_bound(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    let (values, run) = single(data)?;
    let bound = message_bound(values, run.eps, run.f0);
    Some(Outcome::le_big(&big(run.messages as i64), &bound))
}

fn single_site_potential(_: &ExperimentConfig, data: &TrialData) -> Option<Outcome> {
    let (_, run) = single(data)?;
    let bad = run.recurrence_violations();
    let detail = bad.first().map(|t| format!("first violation at t = {t}"));
    Some(Outcome::count(bad.len(), detail))
}
