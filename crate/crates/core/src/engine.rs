//! Synchronous message-passing engine: one coordinator, `k` sites, a FIFO of
//! in-flight messages drained to empty after every update.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::vec::Vec;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{Eps, ExactSum, Small, Q};
use crate::stream::{unit_steps, Stream};
use crate::variability::variability_increment;

pub const WORD_BITS: u64 = 64;

/// Bound on messages a single update may cause before the run is aborted.
const MAX_MESSAGES_PER_STEP: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    SiteToCoordinator,
    CoordinatorToSite,
    Broadcast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    CountReport,
    BlockRequest,
    BlockReply,
    RBroadcast,
    DriftReport,
    DriftReportPlus,
    DriftReportMinus,
    FreqDelta,
    FreqReport,
    FullValue,
}

/// What a message is spent on, for per-block accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageClass {
    Partition,
    Tracker,
    BlockEndReport,
}

impl MessageKind {
    pub fn class(self) -> MessageClass {
        match self {
            MessageKind::CountReport
            | MessageKind::BlockRequest
            | MessageKind::BlockReply
            | MessageKind::RBroadcast => MessageClass::Partition,
            MessageKind::FreqReport => MessageClass::BlockEndReport,
            _ => MessageClass::Tracker,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::CountReport => "CountReport",
            MessageKind::BlockRequest => "BlockRequest",
            MessageKind::BlockReply => "BlockReply",
            MessageKind::RBroadcast => "RBroadcast",
            MessageKind::DriftReport => "DriftReport",
            MessageKind::DriftReportPlus => "DriftReportPlus",
            MessageKind::DriftReportMinus => "DriftReportMinus",
            MessageKind::FreqDelta => "FreqDelta",
            MessageKind::FreqReport => "FreqReport",
            MessageKind::FullValue => "FullValue",
        }
    }
}

/// `site` is the sender for site-to-coordinator messages, the recipient for
/// coordinator-to-site messages and `None` for broadcasts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub direction: Direction,
    pub site: Option<usize>,
    pub kind: MessageKind,
    pub payload: Vec<i64>,
}

impl Message {
    pub fn to_coordinator(site: usize, kind: MessageKind, payload: Vec<i64>) -> Self {
        Self {
            direction: Direction::SiteToCoordinator,
            site: Some(site),
            kind,
            payload,
        }
    }

    pub fn to_site(site: usize, kind: MessageKind, payload: Vec<i64>) -> Self {
        Self {
            direction: Direction::CoordinatorToSite,
            site: Some(site),
            kind,
            payload,
        }
    }

    pub fn broadcast(kind: MessageKind, payload: Vec<i64>) -> Self {
        Self {
            direction: Direction::Broadcast,
            site: None,
            kind,
            payload,
        }
    }

    /// Size of one copy of the message.
    pub fn size_bits(&self) -> u64 {
        WORD_BITS * self.payload.len() as u64
    }

    /// Messages charged: a broadcast costs one per site.
    pub fn count(&self, k: usize) -> u64 {
        match self.direction {
            Direction::Broadcast => k as u64,
            _ => 1,
        }
    }

    pub fn word(&self, i: usize) -> Result<i64> {
        self.payload
            .get(i)
            .copied()
            .ok_or_else(|| Error::Protocol(format!("{} payload has no word {i}", self.kind.name())))
    }

    pub fn sender(&self) -> Result<usize> {
        self.site
            .ok_or_else(|| Error::Protocol(format!("{} has no site", self.kind.name())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedMessage {
    /// Stream timestep during which the message was sent.
    pub t: u64,
    /// Unit step (after splitting large updates) during which it was sent.
    pub step: u64,
    #[serde(flatten)]
    pub message: Message,
}

/// Block-partition state exposed by coordinators that run one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockState {
    pub j: u64,
    pub r: u32,
    pub f_at_block: i64,
}

pub trait SiteNode {
    type Input;
    fn on_input(&mut self, input: &Self::Input, out: &mut Vec<Message>) -> Result<()>;
    fn on_message(&mut self, msg: &Message, out: &mut Vec<Message>) -> Result<()>;
}

pub trait CoordinatorNode {
    fn on_message(&mut self, msg: &Message, out: &mut Vec<Message>) -> Result<()>;
    fn estimate(&self) -> Q;
    fn block(&self) -> Option<BlockState> {
        None
    }
}

/// A protocol: how to build the coordinator and the sites.
pub trait Protocol {
    type Input;
    type Site: SiteNode<Input = Self::Input>;
    type Coordinator: CoordinatorNode;

    fn eps(&self) -> Eps;
    fn build(&self, k: usize, f0: i64) -> Result<(Self::Coordinator, Vec<Self::Site>)>;
}

/// A completed block `B_j = (n_j, n_{j+1}]`, positions in unit steps.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    pub j: u64,
    pub start: u64,
    pub end: u64,
    pub r: u32,
    pub f_start: i64,
    pub f_end: i64,
    pub partition_messages: u64,
    pub tracker_messages: u64,
    pub report_messages: u64,
    pub min_abs_f: i64,
    pub max_abs_f: i64,
    /// `max |f(n) - f(n_j)|` over the block.
    pub max_abs_dev: i64,
    pub v_j: BigRational,
}

impl BlockRecord {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn messages(&self) -> u64 {
        self.partition_messages + self.tracker_messages + self.report_messages
    }
}

#[derive(Debug, Clone)]
struct OpenBlock {
    state: BlockState,
    start: u64,
    partition: u64,
    tracker: u64,
    reports: u64,
    min_abs: i64,
    max_abs: i64,
    max_dev: i64,
    v: ExactSum,
}

impl OpenBlock {
    fn new(state: BlockState, start: u64) -> Self {
        Self {
            state,
            start,
            partition: 0,
            tracker: 0,
            reports: 0,
            min_abs: i64::MAX,
            max_abs: 0,
            max_dev: 0,
            v: ExactSum::new(),
        }
    }
}

/// Follows the coordinator's block index and cuts [`BlockRecord`]s.
#[derive(Debug, Clone, Default)]
pub struct BlockMeter {
    open: Option<OpenBlock>,
    pub records: Vec<BlockRecord>,
}

impl BlockMeter {
    pub fn new(initial: Option<BlockState>) -> Self {
        Self {
            open: initial.map(|s| OpenBlock::new(s, 0)),
            records: Vec::new(),
        }
    }

    pub fn on_message(&mut self, kind: MessageKind, count: u64) {
        if let Some(open) = &mut self.open {
            match kind.class() {
                MessageClass::Partition => open.partition += count,
                MessageClass::Tracker => open.tracker += count,
                MessageClass::BlockEndReport => open.reports += count,
            }
        }
    }

    /// Records `f` after unit step `step` and closes the block if the
    /// coordinator has moved on.
    pub fn after_step(&mut self, step: u64, f: i64, v_inc: Small, state: Option<BlockState>) {
        let (Some(open), Some(state)) = (&mut self.open, state) else {
            return;
        };
        open.min_abs = open.min_abs.min(f.abs());
        open.max_abs = open.max_abs.max(f.abs());
        open.max_dev = open.max_dev.max((f - open.state.f_at_block).abs());
        open.v.add(v_inc);
        if state.j != open.state.j {
            let done = core::mem::replace(open, OpenBlock::new(state, step));
            self.records.push(BlockRecord {
                j: done.state.j,
                start: done.start,
                end: step,
                r: done.state.r,
                f_start: done.state.f_at_block,
                f_end: state.f_at_block,
                partition_messages: done.partition,
                tracker_messages: done.tracker,
                report_messages: done.reports,
                min_abs_f: done.min_abs,
                max_abs_f: done.max_abs,
                max_abs_dev: done.max_dev,
                v_j: done.v.value(),
            });
        }
    }
}

/// Coordinator, sites and the message queue between them.
pub struct Network<C, S> {
    pub coordinator: C,
    pub sites: Vec<S>,
    pub log: Vec<LoggedMessage>,
    pub messages: u64,
    pub bits: u64,
    pub meter: BlockMeter,
    queue: VecDeque<Message>,
    scratch: Vec<Message>,
}

impl<C: CoordinatorNode, S: SiteNode> Network<C, S> {
    pub fn new(coordinator: C, sites: Vec<S>) -> Self {
        let meter = BlockMeter::new(coordinator.block());
        Self {
            coordinator,
            sites,
            log: Vec::new(),
            messages: 0,
            bits: 0,
            meter,
            queue: VecDeque::new(),
            scratch: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.sites.len()
    }

    /// Hands `input` to `site` and delivers everything it sets off.
    pub fn deliver(&mut self, t: u64, step: u64, site: usize, input: &S::Input) -> Result<()> {
        let k = self.k();
        let node = self.sites.get_mut(site).ok_or(Error::OutOfRange {
            index: site,
            len: k,
        })?;
        node.on_input(input, &mut self.scratch)?;
        self.queue.extend(self.scratch.drain(..));
        self.pump(t, step)
    }

    fn pump(&mut self, t: u64, step: u64) -> Result<()> {
        let k = self.k();
        let mut handled = 0usize;
        while let Some(msg) = self.queue.pop_front() {
            handled += 1;
            if handled > MAX_MESSAGES_PER_STEP {
                return Err(Error::Protocol(format!("message storm at step {step}")));
            }
            let count = msg.count(k);
            self.messages += count;
            self.bits += count * msg.size_bits();
            self.meter.on_message(msg.kind, count);
            match msg.direction {
                Direction::SiteToCoordinator => {
                    if msg.sender()? >= k {
                        return Err(Error::Protocol(format!(
                            "sender {:?} out of range",
                            msg.site
                        )));
                    }
                    self.coordinator.on_message(&msg, &mut self.scratch)?
                }
                Direction::CoordinatorToSite => {
                    let i = msg.sender()?;
                    let node = self
                        .sites
                        .get_mut(i)
                        .ok_or(Error::OutOfRange { index: i, len: k })?;
                    node.on_message(&msg, &mut self.scratch)?
                }
                Direction::Broadcast => {
                    for node in &mut self.sites {
                        node.on_message(&msg, &mut self.scratch)?;
                    }
                }
            }
            self.queue.extend(self.scratch.drain(..));
            self.log.push(LoggedMessage {
                t,
                step,
                message: msg,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub f: i64,
    pub f_hat: Q,
    /// `v(t)` of the stream as given (before unit splitting).
    pub v: f64,
    pub messages_cumulative: u64,
    pub bits_cumulative: u64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub k: usize,
    pub eps: Eps,
    pub f0: i64,
    pub rows: Vec<TraceRow>,
    pub log: Vec<LoggedMessage>,
    pub blocks: Vec<BlockRecord>,
    /// Unit steps processed by the protocol.
    pub steps: u64,
    pub variability: BigRational,
    /// Variability of the unit-step stream, the `v` in the message bounds.
    pub unit_variability: BigRational,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn messages_total(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.messages_cumulative)
    }

    pub fn all_within_bound(&self) -> bool {
        self.rows.iter().all(|r| r.within_bound)
    }
}

/// Runs `protocol` over `stream`, one unit step at a time.
pub fn run_simulation<P: Protocol<Input = i64>>(protocol: &P, stream: &Stream) -> Result<Trace> {
    let k = stream.k();
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    stream.validate()?;
    let eps = protocol.eps();
    let (coordinator, sites) = protocol.build(k, stream.f0)?;
    let mut net = Network::new(coordinator, sites);
    let mut rows = Vec::with_capacity(stream.len());
    let mut f = stream.f0;
    let mut step = 0u64;
    let mut v = ExactSum::new();
    let mut unit_v = ExactSum::new();
    let mut v_f64 = 0.0;
    for u in &stream.updates {
        let f_prev = f;
        for d in unit_steps(u.delta) {
            step += 1;
            f += d;
            net.deliver(u.t, step, u.site, &d)?;
            let inc = variability_increment(f, d);
            unit_v.add(inc);
            net.meter.after_step(step, f, inc, net.coordinator.block());
        }
        let inc = variability_increment(f, f - f_prev);
        v.add(inc);
        v_f64 += *inc.numer() as f64 / *inc.denom() as f64;
        let f_hat = net.coordinator.estimate();
        rows.push(TraceRow {
            t: u.t,
            f,
            f_hat,
            v: v_f64,
            messages_cumulative: net.messages,
            bits_cumulative: net.bits,
            within_bound: eps.within(
                Q::from_integer(f as i128) - f_hat,
                Q::from_integer(f as i128),
            ),
        });
    }
    Ok(Trace {
        k,
        eps,
        f0: stream.f0,
        rows,
        log: net.log,
        blocks: net.meter.records,
        steps: step,
        variability: v.value(),
        unit_variability: unit_v.value(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Account {
    pub messages_total: u64,
    pub bits_total: u64,
    pub messages_by_kind: BTreeMap<MessageKind, u64>,
    pub max_block_messages: u64,
}

pub fn account(trace: &Trace) -> Account {
    let mut acc = account_log(&trace.log, trace.k);
    acc.max_block_messages = trace
        .blocks
        .iter()
        .map(BlockRecord::messages)
        .max()
        .unwrap_or(0);
    acc
}

pub fn account_log(log: &[LoggedMessage], k: usize) -> Account {
    let mut acc = Account::default();
    for entry in log {
        let count = entry.message.count(k);
        acc.messages_total += count;
        acc.bits_total += count * entry.message.size_bits();
        *acc.messages_by_kind.entry(entry.message.kind).or_insert(0) += count;
    }
    acc
}

/// `f_hat(t)` as recorded during the run.
pub fn historical_query(trace: &Trace, t: usize) -> Result<Q> {
    if t == 0 || t > trace.len() {
        return Err(Error::OutOfRange {
            index: t,
            len: trace.len(),
        });
    }
    Ok(trace.rows[t - 1].f_hat)
}

/// Rebuilds `f_hat(1..=n)` by feeding the logged site-to-coordinator messages
/// to a fresh coordinator.
pub fn replay_estimates<P: Protocol>(protocol: &P, trace: &Trace) -> Result<Vec<Q>> {
    let (mut coordinator, _) = protocol.build(trace.k, trace.f0)?;
    let mut sink = Vec::new();
    let mut out = Vec::with_capacity(trace.len());
    let mut log = trace.log.iter().peekable();
    for row in &trace.rows {
        while let Some(entry) = log.next_if(|e| e.t <= row.t) {
            if entry.message.direction == Direction::SiteToCoordinator {
                coordinator.on_message(&entry.message, &mut sink)?;
                sink.clear();
            }
        }
        out.push(coordinator.estimate());
    }
    Ok(out)
}

/// Replayed `f_hat(t)` from the log prefix up to `t`.
pub fn replay_estimate<P: Protocol>(protocol: &P, trace: &Trace, t: usize) -> Result<Q> {
    if t == 0 || t > trace.len() {
        return Err(Error::OutOfRange {
            index: t,
            len: trace.len(),
        });
    }
    let (mut coordinator, _) = protocol.build(trace.k, trace.f0)?;
    let mut sink = Vec::new();
    for entry in trace.log.iter().take_while(|e| e.t <= t as u64) {
        if entry.message.direction == Direction::SiteToCoordinator {
            coordinator.on_message(&entry.message, &mut sink)?;
            sink.clear();
        }
    }
    Ok(coordinator.estimate())
}

/// Sum of per-block variabilities; equals the unit variability up to the last closed block.
pub fn blocks_variability(blocks: &[BlockRecord]) -> BigRational {
    blocks
        .iter()
        .fold(BigRational::zero(), |acc, b| acc + &b.v_j)
}
