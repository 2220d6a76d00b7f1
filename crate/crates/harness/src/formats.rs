//! On-disk formats: trace and block CSV, message-log and family JSONL,
//! variability CSV, replay files and sketch JSON.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use vartrack_core::engine::{BlockRecord, Direction, LoggedMessage, MessageKind, Trace};
use vartrack_core::hard_instances::{match_threshold, overlap, ValueSequence};
use vartrack_core::rational::fraction_string;
use vartrack_core::single_site::SingleSiteRun;
use vartrack_core::stream::{parse_replay, Stream};
use vartrack_core::variability::{variability_increment, VariabilitySeries};
use vartrack_core::Eps;

use crate::error::{HarnessError, Result};

/// One trace row as written to CSV. `f_hat` is an exact fraction string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCsvRow {
    pub t: u64,
    pub f: i64,
    pub f_hat: String,
    pub v: f64,
    pub messages_cumulative: u64,
    pub bits_cumulative: u64,
    pub within_bound: bool,
}

pub fn trace_rows(trace: &Trace) -> impl Iterator<Item = TraceCsvRow> + '_ {
    trace.rows.iter().map(|r| TraceCsvRow {
        t: r.t,
        f: r.f,
        f_hat: fraction_string(&r.f_hat),
        v: r.v,
        messages_cumulative: r.messages_cumulative,
        bits_cumulative: r.bits_cumulative,
        within_bound: r.within_bound,
    })
}

/// Single-site runs share the trace layout; each message carries one word.
pub fn single_site_rows(run: &SingleSiteRun) -> Vec<TraceCsvRow> {
    let (num, den) = (run.eps.numer() as i128, run.eps.denom() as i128);
    let mut prev = run.f0;
    let mut v = 0.0;
    let mut sent = 0u64;
    run.rows
        .iter()
        .map(|r| {
            let inc = variability_increment(r.f, r.f - prev);
            prev = r.f;
            v += *inc.numer() as f64 / *inc.denom() as f64;
            sent += r.sent as u64;
            let err = (r.f as i128 - r.f_hat as i128).abs();
            TraceCsvRow {
                t: r.t,
                f: r.f,
                f_hat: format!("{}/1", r.f_hat),
                v,
                messages_cumulative: sent,
                bits_cumulative: sent * vartrack_core::engine::WORD_BITS,
                within_bound: err * den <= num * (r.f as i128).abs(),
            }
        })
        .collect()
}

pub fn write_trace_csv<W: Write>(
    out: W,
    rows: impl IntoIterator<Item = TraceCsvRow>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| HarnessError::io("<trace>", e))?;
    Ok(())
}

/// One message-log line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageLine {
    pub t: u64,
    pub step: u64,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<usize>,
    pub kind: MessageKind,
    pub payload: Vec<i64>,
    pub size_bits: u64,
}

impl From<&LoggedMessage> for MessageLine {
    fn from(e: &LoggedMessage) -> Self {
        MessageLine {
            t: e.t,
            step: e.step,
            direction: e.message.direction,
            site: e.message.site,
            kind: e.message.kind,
            payload: e.message.payload.clone(),
            size_bits: e.message.size_bits(),
        }
    }
}

pub fn write_message_log<W: Write>(mut out: W, log: &[LoggedMessage]) -> Result<()> {
    for entry in log {
        serde_json::to_writer(&mut out, &MessageLine::from(entry))?;
        out.write_all(b"\n")
            .map_err(|e| HarnessError::io("<messages>", e))?;
    }
    Ok(())
}

pub fn read_message_log<R: BufRead>(input: R) -> Result<Vec<MessageLine>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| HarnessError::io("<messages>", e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_variability_csv<W: Write>(out: W, series: &VariabilitySeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "v_increment", "v_cumulative"])?;
    for (t, inc, cum) in series.csv_rows() {
        w.write_record([t.to_string(), inc, cum])?;
    }
    w.flush()
        .map_err(|e| HarnessError::io("<variability>", e))?;
    Ok(())
}

pub fn write_blocks_csv<W: Write>(out: W, blocks: &[BlockRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["j", "n_j", "n_j_next", "r", "messages", "v_j"])?;
    for b in blocks {
        w.write_record([
            b.j.to_string(),
            b.start.to_string(),
            b.end.to_string(),
            b.r.to_string(),
            b.messages().to_string(),
            format!("{}/{}", b.v_j.numer(), b.v_j.denom()),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io("<blocks>", e))?;
    Ok(())
}

/// One family member per JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyLine {
    pub index: usize,
    pub m: i64,
    /// `f(0)`; flip families always start at `m`.
    #[serde(default)]
    pub f0: Option<i64>,
    pub n: usize,
    pub switches: Vec<usize>,
    /// Unclamped `sum |f'/f|`.
    pub variability: String,
    pub clamped_variability: String,
}

impl FamilyLine {
    pub fn new(index: usize, seq: &ValueSequence) -> Self {
        FamilyLine {
            index,
            m: seq.m,
            f0: Some(seq.values[0]),
            n: seq.n(),
            switches: seq.switches.clone(),
            variability: format!("{}/{}", seq.variability.numer(), seq.variability.denom()),
            clamped_variability: format!(
                "{}/{}",
                seq.clamped_variability.numer(),
                seq.clamped_variability.denom()
            ),
        }
    }

    pub fn to_sequence(&self) -> Result<ValueSequence> {
        let f0 = self.f0.unwrap_or(self.m);
        Ok(vartrack_core::hard_instances::switch_sequence(
            self.m,
            f0,
            &self.switches,
            self.n,
        )?)
    }
}

pub fn write_family_jsonl<W: Write>(mut out: W, family: &[ValueSequence]) -> Result<()> {
    for (i, seq) in family.iter().enumerate() {
        serde_json::to_writer(&mut out, &FamilyLine::new(i, seq))?;
        out.write_all(b"\n")
            .map_err(|e| HarnessError::io("<family>", e))?;
    }
    Ok(())
}

pub fn read_family_jsonl<R: BufRead>(input: R) -> Result<Vec<FamilyLine>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| HarnessError::io("<family>", e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// A family passes the match check when fewer than half its pairs match.
pub const MAX_MATCH_RATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyVerdict {
    pub sequences: usize,
    /// Lines whose recorded variability differs from the recomputed one.
    pub variability_mismatches: Vec<usize>,
    /// Index pairs with identical values.
    pub duplicate_pairs: Vec<(usize, usize)>,
    /// Index pairs that match (overlap at least `ceil(3n/5)`); only with an `eps`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matching_pairs: Option<Vec<(usize, usize)>>,
    /// Matching pairs over all pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub match_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_overlap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub match_threshold: Option<usize>,
}

impl FamilyVerdict {
    pub fn ok(&self) -> bool {
        self.variability_mismatches.is_empty()
            && self.duplicate_pairs.is_empty()
            && self.match_rate.is_none_or(|r| r < MAX_MATCH_RATE)
    }

    /// Counts instead of pair lists, for terminal output.
    pub fn summary(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "sequences": self.sequences,
            "variability_mismatches": self.variability_mismatches.len(),
            "duplicate_pairs": self.duplicate_pairs.len(),
            "ok": self.ok(),
        });
        if let (Some(pairs), Some(o), Some(t)) =
            (&self.matching_pairs, self.max_overlap, self.match_threshold)
        {
            v["matching_pairs"] = pairs.len().into();
            v["match_rate"] = self.match_rate.into();
            v["max_overlap"] = o.into();
            v["match_threshold"] = t.into();
        }
        v
    }
}

/// Rebuilds every line from its switch indices, recomputes both variabilities
/// and checks all pairs for duplicates, and for matches when `eps` is given.
/// Matches are only a failure when they reach `MAX_MATCH_RATE`.
pub fn verify_family(lines: &[FamilyLine], eps: Option<Eps>) -> Result<FamilyVerdict> {
    let seqs = lines
        .iter()
        .map(FamilyLine::to_sequence)
        .collect::<Result<Vec<_>>>()?;
    let variability_mismatches = lines
        .iter()
        .zip(&seqs)
        .filter(|(line, seq)| **line != FamilyLine::new(line.index, seq))
        .map(|(line, _)| line.index)
        .collect();
    let n = seqs.first().map_or(0, ValueSequence::n);
    let threshold = match_threshold(n);
    let mut duplicate_pairs = Vec::new();
    let mut matching_pairs = Vec::new();
    let mut max_overlap = 0;
    for a in 0..seqs.len() {
        for b in a + 1..seqs.len() {
            if seqs[a].values == seqs[b].values {
                duplicate_pairs.push((lines[a].index, lines[b].index));
            }
            if let Some(eps) = eps {
                let o = overlap(&seqs[a], &seqs[b], eps)?;
                max_overlap = max_overlap.max(o);
                if o >= threshold {
                    matching_pairs.push((lines[a].index, lines[b].index));
                }
            }
        }
    }
    Ok(FamilyVerdict {
        sequences: seqs.len(),
        variability_mismatches,
        duplicate_pairs,
        match_rate: eps.map(|_| {
            let total = seqs.len() * seqs.len().saturating_sub(1) / 2;
            if total == 0 {
                0.0
            } else {
                matching_pairs.len() as f64 / total as f64
            }
        }),
        matching_pairs: eps.map(|_| matching_pairs),
        max_overlap: eps.map(|_| max_overlap),
        match_threshold: eps.map(|_| threshold),
    })
}

pub fn load_replay(path: &Path, k: usize, f0: i64) -> Result<Stream> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(parse_replay(&text, k, f0)?)
}

pub fn read_jsonl_file<T, F>(path: &Path, read: F) -> Result<T>
where
    F: FnOnce(BufReader<fs::File>) -> Result<T>,
{
    let file = fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read(BufReader::new(file))
}

/// Creates `path` and hands a buffered writer to `write`.
pub fn write_file<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
{
    let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w)?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n").map_err(|e| HarnessError::io(path, e))
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn fraction_big(q: &num_rational::BigRational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

/// Exact `p/q` when short, else a decimal prefixed with `~`.
pub fn display_big(q: &num_rational::BigRational) -> String {
    let exact = fraction_big(q);
    if exact.len() <= 24 {
        exact
    } else {
        format!("~{:.6}", vartrack_core::rational::big_to_f64(q))
    }
}
