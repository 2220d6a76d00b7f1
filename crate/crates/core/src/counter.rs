//! Counting over `k` sites: the block partition protocol and the
//! deterministic and randomized in-block drift trackers that ride on it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::engine::{
    BlockRecord, BlockState, CoordinatorNode, Message, MessageKind, Protocol, SiteNode,
};
use crate::error::{param_err, Error, Result};
use crate::rational::{ceil_half_pow2, isqrt_u128, pow2, Eps, Q};
use crate::rng::{bernoulli_exact, label, rng_for, SimRng};

/// Block exponent after a block ends at value `f`: the `r >= 1` with
/// `2^r 2k <= |f| < 2^r 4k`, or 0 when `|f| < 4k`.
pub fn update_r(f_block_end: i64, k: usize) -> u32 {
    let a = f_block_end.unsigned_abs() as u128;
    let k = k.max(1) as u128;
    if a < 4 * k {
        return 0;
    }
    let q = a / (2 * k);
    127 - q.leading_zeros()
}

/// `|delta| = 1 and r = 0`, or `|delta| >= eps 2^r`.
pub fn det_condition(delta_i: i64, r: u32, eps: Eps) -> bool {
    (delta_i.unsigned_abs() == 1 && r == 0) || (delta_i != 0 && eps.int_at_least(delta_i, pow2(r)))
}

/// Denominator of the rational lower bound on `sqrt(k)`.
const SQRT_DENOM_BITS: u32 = 32;

/// `a/b <= sqrt(k)` with `b = 2^32`, exact when `k` is a perfect square.
pub fn sqrt_lower(k: usize) -> Q {
    let k = k as u128;
    let root = isqrt_u128(k);
    if root * root == k {
        return Q::from_integer(root as i128);
    }
    let b = 1u128 << SQRT_DENOM_BITS;
    Q::new(isqrt_u128(k * b * b) as i128, b as i128)
}

/// `min{1, 3 / (eps 2^r sqrt(k))}`. The square root is bounded from below,
/// so for non-square `k` the probability is rounded up.
pub fn rand_probability(eps: Eps, r: u32, k: usize) -> Result<Q> {
    if k == 0 {
        return Err(param_err!("k must be at least 1"));
    }
    let p = Q::from_integer(3) / (eps.as_q() * Q::from_integer(pow2(r)) * sqrt_lower(k));
    Ok(if p > Q::one() { Q::one() } else { p })
}

/// `d - 1 + 1/p`.
pub fn rand_update_estimate(d: i64, p: Q) -> Result<Q> {
    if p <= Q::zero() || p > Q::one() {
        return Err(Error::Contract(format!(
            "sampling probability must lie in (0, 1], got {p}"
        )));
    }
    Ok(Q::from_integer(d as i128 - 1) + p.recip())
}

/// Site side of the partition protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSite {
    pub id: usize,
    pub r: u32,
    /// Updates since the last count report.
    pub c: i64,
    /// Change in f at this site since the last broadcast.
    pub f_i: i64,
}

impl PartitionSite {
    pub fn new(id: usize, r: u32) -> Self {
        Self {
            id,
            r,
            c: 0,
            f_i: 0,
        }
    }

    pub fn on_update(&mut self, delta: i64, out: &mut Vec<Message>) {
        self.c += 1;
        self.f_i += delta;
        if self.c as i128 == ceil_half_pow2(self.r) {
            out.push(Message::to_coordinator(
                self.id,
                MessageKind::CountReport,
                vec![self.c],
            ));
            self.c = 0;
        }
    }

    pub fn reply(&self, out: &mut Vec<Message>) {
        out.push(Message::to_coordinator(
            self.id,
            MessageKind::BlockReply,
            vec![self.c, self.f_i],
        ));
    }

    /// Applies a broadcast and returns the new `r`.
    pub fn on_broadcast(&mut self, msg: &Message) -> Result<u32> {
        let r = msg.word(0)?;
        self.r = u32::try_from(r).map_err(|_| Error::Protocol(format!("bad r {r}")))?;
        self.c = 0;
        self.f_i = 0;
        Ok(self.r)
    }
}

/// Coordinator side of the partition protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionCoordinator {
    pub k: usize,
    pub j: u64,
    pub r: u32,
    pub t_hat: i128,
    pub t_target: i128,
    /// Exact `f(n_j)`.
    pub f_at_block: i64,
    replies: Vec<Option<(i64, i64)>>,
    awaiting: usize,
}

impl PartitionCoordinator {
    pub fn new(k: usize, f0: i64) -> Self {
        let r = update_r(f0, k);
        Self {
            k,
            j: 0,
            r,
            t_hat: 0,
            t_target: ceil_half_pow2(r) * k as i128,
            f_at_block: f0,
            replies: vec![None; k],
            awaiting: 0,
        }
    }

    pub fn state(&self) -> BlockState {
        BlockState {
            j: self.j,
            r: self.r,
            f_at_block: self.f_at_block,
        }
    }

    pub fn on_count(&mut self, c: i64, out: &mut Vec<Message>) -> Result<()> {
        if self.awaiting > 0 {
            return Err(Error::Protocol(
                "count report during an open block-end round".into(),
            ));
        }
        if c <= 0 {
            return Err(Error::Protocol(format!(
                "count report must be positive, got {c}"
            )));
        }
        self.t_hat += c as i128;
        if self.t_hat >= self.t_target {
            self.awaiting = self.k;
            out.extend(
                (0..self.k).map(|i| Message::to_site(i, MessageKind::BlockRequest, Vec::new())),
            );
        }
        Ok(())
    }

    /// Returns the new `r` when this reply completes a block-end round.
    pub fn on_reply(
        &mut self,
        site: usize,
        c: i64,
        f_i: i64,
        out: &mut Vec<Message>,
    ) -> Result<Option<u32>> {
        if self.awaiting == 0 {
            return Err(Error::Protocol("block reply without a request".into()));
        }
        let slot = self.replies.get_mut(site).ok_or(Error::OutOfRange {
            index: site,
            len: self.k,
        })?;
        if slot.replace((c, f_i)).is_some() {
            return Err(Error::Protocol(format!(
                "duplicate block reply from site {site}"
            )));
        }
        self.awaiting -= 1;
        if self.awaiting > 0 {
            return Ok(None);
        }
        let drift: i64 = self
            .replies
            .iter_mut()
            .map(|s| s.take().expect("all replies present").1)
            .sum();
        self.f_at_block += drift;
        self.r = update_r(self.f_at_block, self.k);
        self.t_target = ceil_half_pow2(self.r) * self.k as i128;
        self.t_hat = 0;
        self.j += 1;
        out.push(Message::broadcast(
            MessageKind::RBroadcast,
            vec![self.r as i64],
        ));
        Ok(Some(self.r))
    }
}

/// In-block tracker running at a site.
pub trait SiteTracker {
    fn on_update(&mut self, site: usize, delta: i64, r: u32, out: &mut Vec<Message>) -> Result<()>;
    fn reset(&mut self, r: u32);
}

/// In-block tracker running at the coordinator.
pub trait CoordinatorTracker {
    fn on_report(&mut self, msg: &Message) -> Result<()>;
    fn reset(&mut self, r: u32);
    /// Current drift estimate `d_hat`.
    fn drift(&self) -> Q;
}

impl SiteTracker for () {
    fn on_update(&mut self, _: usize, _: i64, _: u32, _: &mut Vec<Message>) -> Result<()> {
        Ok(())
    }
    fn reset(&mut self, _: u32) {}
}

impl CoordinatorTracker for () {
    fn on_report(&mut self, msg: &Message) -> Result<()> {
        Err(Error::Protocol(format!(
            "unexpected {} without a tracker",
            msg.kind.name()
        )))
    }
    fn reset(&mut self, _: u32) {}
    fn drift(&self) -> Q {
        Q::zero()
    }
}

#[derive(Debug, Clone)]
pub struct CounterSite<T> {
    pub partition: PartitionSite,
    pub tracker: T,
}

impl<T: SiteTracker> SiteNode for CounterSite<T> {
    type Input = i64;

    fn on_input(&mut self, delta: &i64, out: &mut Vec<Message>) -> Result<()> {
        if delta.unsigned_abs() != 1 {
            return Err(Error::Contract(format!(
                "counter sites take unit updates, got {delta}"
            )));
        }
        // Drift reports go out ahead of the count report.
        self.tracker
            .on_update(self.partition.id, *delta, self.partition.r, out)?;
        self.partition.on_update(*delta, out);
        Ok(())
    }

    fn on_message(&mut self, msg: &Message, out: &mut Vec<Message>) -> Result<()> {
        match msg.kind {
            MessageKind::BlockRequest => self.partition.reply(out),
            MessageKind::RBroadcast => {
                let r = self.partition.on_broadcast(msg)?;
                self.tracker.reset(r);
            }
            other => {
                return Err(Error::Protocol(format!(
                    "site cannot handle {}",
                    other.name()
                )))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CounterCoordinator<T> {
    pub partition: PartitionCoordinator,
    pub tracker: T,
}

impl<T: CoordinatorTracker> CoordinatorNode for CounterCoordinator<T> {
    fn on_message(&mut self, msg: &Message, out: &mut Vec<Message>) -> Result<()> {
        match msg.kind {
            MessageKind::CountReport => self.partition.on_count(msg.word(0)?, out),
            MessageKind::BlockReply => {
                if let Some(r) =
                    self.partition
                        .on_reply(msg.sender()?, msg.word(0)?, msg.word(1)?, out)?
                {
                    self.tracker.reset(r);
                }
                Ok(())
            }
            _ => self.tracker.on_report(msg),
        }
    }

    fn estimate(&self) -> Q {
        Q::from_integer(self.partition.f_at_block as i128) + self.tracker.drift()
    }

    fn block(&self) -> Option<BlockState> {
        Some(self.partition.state())
    }
}

/// Site half of the deterministic tracker.
#[derive(Debug, Clone)]
pub struct DetSite {
    eps: Eps,
    pub d: i64,
    pub delta: i64,
}

impl SiteTracker for DetSite {
    fn on_update(&mut self, site: usize, x: i64, r: u32, out: &mut Vec<Message>) -> Result<()> {
        self.d += x;
        self.delta += x;
        if det_condition(self.delta, r, self.eps) {
            out.push(Message::to_coordinator(
                site,
                MessageKind::DriftReport,
                vec![self.d],
            ));
            self.delta = 0;
        }
        Ok(())
    }

    fn reset(&mut self, _: u32) {
        self.d = 0;
        self.delta = 0;
    }
}

/// Coordinator half of the deterministic tracker: `d_hat_i = d_i`.
#[derive(Debug, Clone)]
pub struct DetCoordinator {
    d_hat: Vec<i64>,
    sum: i64,
}

impl CoordinatorTracker for DetCoordinator {
    fn on_report(&mut self, msg: &Message) -> Result<()> {
        if msg.kind != MessageKind::DriftReport {
            return Err(Error::Protocol(format!(
                "det tracker cannot handle {}",
                msg.kind.name()
            )));
        }
        let i = msg.sender()?;
        let d = msg.word(0)?;
        let len = self.d_hat.len();
        let slot = self
            .d_hat
            .get_mut(i)
            .ok_or(Error::OutOfRange { index: i, len })?;
        self.sum += d - *slot;
        *slot = d;
        Ok(())
    }

    fn reset(&mut self, _: u32) {
        self.d_hat.iter_mut().for_each(|d| *d = 0);
        self.sum = 0;
    }

    fn drift(&self) -> Q {
        Q::from_integer(self.sum as i128)
    }
}

/// Site half of the randomized tracker: copies for `+1` and `-1` updates.
#[derive(Debug, Clone)]
pub struct RandSite {
    eps: Eps,
    k: usize,
    p: Q,
    rng: SimRng,
    pub d_plus: i64,
    pub d_minus: i64,
}

impl SiteTracker for RandSite {
    fn on_update(&mut self, site: usize, x: i64, _: u32, out: &mut Vec<Message>) -> Result<()> {
        let (d, kind) = if x > 0 {
            self.d_plus += 1;
            (self.d_plus, MessageKind::DriftReportPlus)
        } else {
            self.d_minus += 1;
            (self.d_minus, MessageKind::DriftReportMinus)
        };
        if bernoulli_exact(&mut self.rng, &self.p) {
            out.push(Message::to_coordinator(site, kind, vec![d]));
        }
        Ok(())
    }

    fn reset(&mut self, r: u32) {
        self.p = rand_probability(self.eps, r, self.k).expect("k >= 1");
        self.d_plus = 0;
        self.d_minus = 0;
    }
}

#[derive(Debug, Clone)]
pub struct RandCoordinator {
    eps: Eps,
    k: usize,
    pub p: Q,
    plus: Vec<Q>,
    minus: Vec<Q>,
    sum: Q,
}

impl CoordinatorTracker for RandCoordinator {
    fn on_report(&mut self, msg: &Message) -> Result<()> {
        let i = msg.sender()?;
        if i >= self.k {
            return Err(Error::OutOfRange {
                index: i,
                len: self.k,
            });
        }
        let est = rand_update_estimate(msg.word(0)?, self.p)?;
        let (slot, sign) = match msg.kind {
            MessageKind::DriftReportPlus => (&mut self.plus[i], 1),
            MessageKind::DriftReportMinus => (&mut self.minus[i], -1),
            other => {
                return Err(Error::Protocol(format!(
                    "rand tracker cannot handle {}",
                    other.name()
                )))
            }
        };
        self.sum += (est - *slot) * Q::from_integer(sign);
        *slot = est;
        Ok(())
    }

    fn reset(&mut self, r: u32) {
        self.p = rand_probability(self.eps, r, self.k).expect("k >= 1");
        self.plus
            .iter_mut()
            .chain(self.minus.iter_mut())
            .for_each(|d| *d = Q::zero());
        self.sum = Q::zero();
    }

    fn drift(&self) -> Q {
        self.sum
    }
}

/// Feeds `d` unit increments to one site's `+1` copy at block scale `r` and
/// returns the coordinator's `d_hat`.
pub fn drift_estimate_trial(eps: Eps, r: u32, k: usize, d: u64, seed: u64) -> Result<Q> {
    let p = rand_probability(eps, r, k)?;
    let mut site = RandSite {
        eps,
        k,
        p,
        rng: rng_for(seed, label::SITE_COINS, 0),
        d_plus: 0,
        d_minus: 0,
    };
    let mut coord = RandCoordinator {
        eps,
        k,
        p,
        plus: vec![Q::zero(); k],
        minus: vec![Q::zero(); k],
        sum: Q::zero(),
    };
    let mut out = Vec::new();
    for _ in 0..d {
        site.on_update(0, 1, r, &mut out)?;
        for msg in out.drain(..) {
            coord.on_report(&msg)?;
        }
    }
    Ok(coord.drift())
}

fn partition_nodes(k: usize, f0: i64) -> Result<(PartitionCoordinator, Vec<PartitionSite>)> {
    if k == 0 {
        return Err(param_err!("k must be at least 1"));
    }
    let coord = PartitionCoordinator::new(k, f0);
    let sites = (0..k).map(|i| PartitionSite::new(i, coord.r)).collect();
    Ok((coord, sites))
}

/// The block partition alone; the estimate is `f(n_j)`.
#[derive(Debug, Clone, Copy)]
pub struct PartitionOnly {
    pub eps: Eps,
}

impl Protocol for PartitionOnly {
    type Input = i64;
    type Site = CounterSite<()>;
    type Coordinator = CounterCoordinator<()>;

    fn eps(&self) -> Eps {
        self.eps
    }

    fn build(&self, k: usize, f0: i64) -> Result<(Self::Coordinator, Vec<Self::Site>)> {
        let (partition, sites) = partition_nodes(k, f0)?;
        let sites = sites
            .into_iter()
            .map(|partition| CounterSite {
                partition,
                tracker: (),
            })
            .collect();
        Ok((
            CounterCoordinator {
                partition,
                tracker: (),
            },
            sites,
        ))
    }
}

/// Deterministic tracker: `|f - f_hat| <= eps |f|` at every step.
#[derive(Debug, Clone, Copy)]
pub struct DetTracker {
    pub eps: Eps,
}

impl Protocol for DetTracker {
    type Input = i64;
    type Site = CounterSite<DetSite>;
    type Coordinator = CounterCoordinator<DetCoordinator>;

    fn eps(&self) -> Eps {
        self.eps
    }

    fn build(&self, k: usize, f0: i64) -> Result<(Self::Coordinator, Vec<Self::Site>)> {
        let (partition, sites) = partition_nodes(k, f0)?;
        let sites = sites
            .into_iter()
            .map(|partition| CounterSite {
                partition,
                tracker: DetSite {
                    eps: self.eps,
                    d: 0,
                    delta: 0,
                },
            })
            .collect();
        let tracker = DetCoordinator {
            d_hat: vec![0; k],
            sum: 0,
        };
        Ok((CounterCoordinator { partition, tracker }, sites))
    }
}

/// Randomized tracker: the guarantee holds with probability at least 2/3 per step.
#[derive(Debug, Clone, Copy)]
pub struct RandTracker {
    pub eps: Eps,
    pub seed: u64,
}

impl Protocol for RandTracker {
    type Input = i64;
    type Site = CounterSite<RandSite>;
    type Coordinator = CounterCoordinator<RandCoordinator>;

    fn eps(&self) -> Eps {
        self.eps
    }

    fn build(&self, k: usize, f0: i64) -> Result<(Self::Coordinator, Vec<Self::Site>)> {
        let (partition, sites) = partition_nodes(k, f0)?;
        let p = rand_probability(self.eps, partition.r, k)?;
        let sites = sites
            .into_iter()
            .map(|partition| {
                let rng = rng_for(self.seed, label::SITE_COINS, partition.id as u64);
                let tracker = RandSite {
                    eps: self.eps,
                    k,
                    p,
                    rng,
                    d_plus: 0,
                    d_minus: 0,
                };
                CounterSite { partition, tracker }
            })
            .collect();
        let tracker = RandCoordinator {
            eps: self.eps,
            k,
            p,
            plus: vec![Q::zero(); k],
            minus: vec![Q::zero(); k],
            sum: Q::zero(),
        };
        Ok((CounterCoordinator { partition, tracker }, sites))
    }
}

/// A block fact that a completed block failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockFact {
    /// `ceil(2^(r-1)) k <= |B_j| <= 2^r k`.
    Length,
    /// At most `5k` partition messages.
    PartitionMessages,
    /// Value envelope around `f(n_j)`.
    Envelope,
    /// `v_j >= 1/5`.
    Variability,
}

pub fn block_fact_violations(b: &BlockRecord, k: usize) -> Vec<BlockFact> {
    let k = k as i128;
    let len = b.len() as i128;
    let scale = pow2(b.r) * k;
    let mut out = Vec::new();
    if len < ceil_half_pow2(b.r) * k || len > scale {
        out.push(BlockFact::Length);
    }
    if b.partition_messages as i128 > 5 * k {
        out.push(BlockFact::PartitionMessages);
    }
    let (dev, lo, hi) = (
        b.max_abs_dev as i128,
        b.min_abs_f as i128,
        b.max_abs_f as i128,
    );
    let envelope_ok = if b.r == 0 {
        dev <= k && hi <= 5 * k
    } else {
        dev <= scale && scale <= lo && hi <= 5 * scale
    };
    if !envelope_ok {
        out.push(BlockFact::Envelope);
    }
    if b.v_j < num_rational::BigRational::new(1.into(), 5.into()) {
        out.push(BlockFact::Variability);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{replay_estimates, run_simulation};
    use crate::stream::Stream;

    fn eps(n: i64, d: i64) -> Eps {
        Eps::new(n, d).unwrap()
    }

    #[test]
    fn update_r_examples() {
        assert_eq!(update_r(16, 2), 2);
        assert_eq!(update_r(7, 2), 0);
        assert_eq!(update_r(-20, 2), 2);
        assert_eq!(update_r(8, 2), 1);
        assert_eq!(update_r(15, 2), 1);
        assert_eq!(update_r(0, 1), 0);
    }

    #[test]
    fn det_condition_examples() {
        assert!(det_condition(1, 0, eps(1, 2)));
        assert!(det_condition(-1, 0, eps(1, 100)));
        assert!(det_condition(-2, 4, eps(1, 8)));
        assert!(!det_condition(1, 4, eps(1, 8)));
        assert!(!det_condition(0, 0, eps(1, 2)));
    }

    #[test]
    fn rand_probability_examples() {
        assert_eq!(rand_probability(eps(1, 2), 0, 4).unwrap(), Q::one());
        assert_eq!(rand_probability(eps(1, 10), 5, 100).unwrap(), Q::new(3, 32));
        assert_eq!(rand_probability(eps(1, 1), 2, 9).unwrap(), Q::new(1, 4));
        // Non-square k rounds p up, by a relative margin below 1e-9.
        let p = rand_probability(eps(1, 1), 6, 2).unwrap();
        let exact = 3.0 / (64.0 * 2f64.sqrt());
        let pf = crate::rational::q_to_f64(&p);
        assert!(pf >= exact && (pf - exact) / exact < 1e-9);
    }

    #[test]
    fn rand_update_estimate_examples() {
        assert_eq!(
            rand_update_estimate(7, Q::new(1, 4)).unwrap(),
            Q::from_integer(10)
        );
        assert_eq!(
            rand_update_estimate(7, Q::one()).unwrap(),
            Q::from_integer(7)
        );
        assert!(rand_update_estimate(7, Q::zero()).is_err());
    }

    #[test]
    fn partition_site_thresholds() {
        let mut out = Vec::new();
        let mut s = PartitionSite::new(0, 0);
        s.on_update(1, &mut out);
        assert_eq!(out.len(), 1);
        out.clear();
        let mut s = PartitionSite::new(0, 3);
        for _ in 0..3 {
            s.on_update(1, &mut out);
        }
        assert!(out.is_empty());
        s.on_update(-1, &mut out);
        assert_eq!(out[0].payload, vec![4]);
        assert_eq!(s.f_i, 2);
        s.on_broadcast(&Message::broadcast(MessageKind::RBroadcast, vec![1]))
            .unwrap();
        assert_eq!((s.c, s.f_i, s.r), (0, 0, 1));
    }

    #[test]
    fn first_update_ends_a_block_when_k_is_one() {
        let trace = run_simulation(
            &PartitionOnly { eps: eps(1, 2) },
            &Stream::from_deltas(&[1], 1, 0),
        )
        .unwrap();
        assert_eq!(trace.blocks.len(), 1);
        assert_eq!(trace.blocks[0].len(), 1);
        // count report, request, reply, broadcast
        assert_eq!(trace.messages_total(), 4);
        assert_eq!(trace.rows[0].f_hat, Q::one());
    }

    #[test]
    fn block_end_round_costs_three_k() {
        let k = 3;
        let trace = run_simulation(
            &PartitionOnly { eps: eps(1, 2) },
            &Stream::from_deltas(&[1, 1, 1], k, 0),
        )
        .unwrap();
        let b = &trace.blocks[0];
        assert_eq!(b.partition_messages, 3 + 3 * k as u64);
        assert_eq!(b.f_end, 3);
    }

    #[test]
    fn det_tracker_small_monotone() {
        let trace = run_simulation(
            &DetTracker { eps: eps(1, 2) },
            &Stream::from_deltas(&[1, 1, 1], 1, 0),
        )
        .unwrap();
        assert!(trace.all_within_bound());
        assert!(trace
            .rows
            .iter()
            .all(|r| r.f_hat == Q::from_integer(r.f as i128)));
    }

    #[test]
    fn det_tracker_r0_blocks_are_exact() {
        let s = Stream::from_deltas(&[1, -1, -1, 1, 1, 1, -1, 1], 4, 0);
        let trace = run_simulation(&DetTracker { eps: eps(1, 4) }, &s).unwrap();
        assert!(trace
            .rows
            .iter()
            .all(|r| r.f_hat == Q::from_integer(r.f as i128)));
    }

    #[test]
    fn rand_tracker_is_seed_deterministic() {
        let s = Stream::from_deltas(&[1; 300], 3, 0);
        let a = run_simulation(
            &RandTracker {
                eps: eps(1, 4),
                seed: 5,
            },
            &s,
        )
        .unwrap();
        let b = run_simulation(
            &RandTracker {
                eps: eps(1, 4),
                seed: 5,
            },
            &s,
        )
        .unwrap();
        assert_eq!(a, b);
        let replay = replay_estimates(
            &RandTracker {
                eps: eps(1, 4),
                seed: 5,
            },
            &a,
        )
        .unwrap();
        assert_eq!(replay, a.rows.iter().map(|r| r.f_hat).collect::<Vec<_>>());
    }

    #[test]
    fn rand_tracker_with_p_one_is_exact() {
        // eps 2^r sqrt(k) <= 3 keeps p = 1 for small r.
        let s = Stream::from_deltas(&[1, 1, -1, 1, 1, 1, 1, -1, 1, 1], 1, 0);
        let trace = run_simulation(
            &RandTracker {
                eps: eps(1, 2),
                seed: 1,
            },
            &s,
        )
        .unwrap();
        assert!(trace
            .rows
            .iter()
            .all(|r| r.f_hat == Q::from_integer(r.f as i128)));
    }

    #[test]
    fn non_unit_input_is_rejected_by_sites() {
        let (_, mut sites) = DetTracker { eps: eps(1, 2) }.build(1, 0).unwrap();
        assert!(sites[0].on_input(&2, &mut Vec::new()).is_err());
    }

    #[test]
    fn short_high_blocks_have_small_variability() {
        // k = 1 monotone: the block after f = 5 has r = 1 and one step to f = 6.
        let trace = run_simulation(
            &PartitionOnly { eps: eps(1, 2) },
            &Stream::from_deltas(&[1; 6], 1, 0),
        )
        .unwrap();
        let b = trace.blocks.iter().find(|b| b.f_start == 5).unwrap();
        assert_eq!((b.r, b.len()), (1, 1));
        assert_eq!(block_fact_violations(b, 1), vec![BlockFact::Variability]);
    }
}
