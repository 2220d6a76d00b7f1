//! Item-frequency tracking over `k` sites. The block partition runs on
//! `F1`; per key (an item, or a sketch counter) each site reports drift once
//! it reaches `eps 2^r / 3`, and reports its full count at block ends.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::counter::{PartitionCoordinator, PartitionSite};
use crate::engine::{
    BlockRecord, BlockState, CoordinatorNode, LoggedMessage, Message, MessageKind, Network,
    Protocol, SiteNode,
};
use crate::error::{param_err, Error, Result};
use crate::rational::{pow2, Eps, Small, Q};
use crate::rng::{label, rng_for};
use crate::stream::SiteAssignment;

/// `min{1, 1/F1}`, and 1 at `F1 = 0`.
pub fn f1_variability_increment(f1: u64) -> Small {
    if f1 <= 1 {
        Small::from_integer(1)
    } else {
        Small::new(1, f1 as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreqUpdate {
    pub t: u64,
    pub site: usize,
    pub item: u64,
    pub sign: i8,
}

/// Mersenne prime `2^61 - 1`, the default hash modulus.
pub const HASH_PRIME: u64 = (1 << 61) - 1;

const SKETCH_VERSION: u32 = 1;

fn check_item(item: u64, universe: u64) -> Result<()> {
    if item >= universe {
        return Err(Error::Input(format!(
            "item {item} outside universe of size {universe}"
        )));
    }
    Ok(())
}

fn check_sign(sign: i8) -> Result<()> {
    if sign != 1 && sign != -1 {
        return Err(Error::Input(format!("sign must be +1 or -1, got {sign}")));
    }
    Ok(())
}

/// Single-row Count-Min sketch with `ceil(27/eps)` counters and hash
/// `((a x + b) mod p) mod width`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMinSketch {
    pub version: u32,
    pub universe: u64,
    pub width: usize,
    pub a: u64,
    pub b: u64,
    pub prime: u64,
    pub counters: Vec<i64>,
}

impl CountMinSketch {
    pub fn width_for(eps: Eps) -> usize {
        ((27 * eps.denom() + eps.numer() - 1) / eps.numer()) as usize
    }

    /// Draws the hash from `seed`.
    pub fn new(eps: Eps, universe: u64, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, label::HASH, 0);
        let a = rng.gen_range(1..HASH_PRIME);
        let b = rng.gen_range(0..HASH_PRIME);
        Self::with_hash(universe, Self::width_for(eps), a, b, HASH_PRIME)
    }

    pub fn with_hash(universe: u64, width: usize, a: u64, b: u64, prime: u64) -> Result<Self> {
        if universe == 0 || width == 0 {
            return Err(param_err!("universe and width must be positive"));
        }
        if prime <= universe || !is_prime(prime) {
            return Err(param_err!(
                "hash modulus {prime} must be a prime above the universe size {universe}"
            ));
        }
        if a == 0 || a >= prime || b >= prime {
            return Err(param_err!("hash needs 0 < a < p and 0 <= b < p"));
        }
        Ok(Self {
            version: SKETCH_VERSION,
            universe,
            width,
            a,
            b,
            prime,
            counters: vec![0; width],
        })
    }

    pub fn bucket(&self, item: u64) -> Result<usize> {
        check_item(item, self.universe)?;
        let h = (self.a as u128 * item as u128 + self.b as u128) % self.prime as u128;
        Ok((h % self.width as u128) as usize)
    }

    pub fn update(&mut self, item: u64, sign: i8) -> Result<()> {
        check_sign(sign)?;
        let c = self.bucket(item)?;
        self.counters[c] += sign as i64;
        Ok(())
    }

    pub fn query(&self, item: u64) -> Result<i64> {
        Ok(self.counters[self.bucket(item)?])
    }

    fn same_shape(&self, other: &Self) -> bool {
        (self.universe, self.width, self.a, self.b, self.prime)
            == (other.universe, other.width, other.a, other.b, other.prime)
    }

    /// Counter-wise sum; both sketches must share parameters.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if !self.same_shape(other) {
            return Err(param_err!(
                "cannot merge sketches with different parameters"
            ));
        }
        self.counters
            .iter_mut()
            .zip(&other.counters)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }
}

/// CR-precis: `ceil(3/eps)` rows, row `r` counts residues modulo the `r`-th
/// prime at or above `ceil(6 log|U| / (eps log(1/eps)))`. Queries average the rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrPrecis {
    pub version: u32,
    pub universe: u64,
    pub cols: u64,
    pub moduli: Vec<u64>,
    pub counters: Vec<Vec<i64>>,
}

impl CrPrecis {
    pub fn dims_for(eps: Eps, universe: u64) -> Result<(usize, u64)> {
        if eps.value() == Small::from_integer(1) {
            return Err(param_err!("CR-precis needs eps < 1 (log(1/eps) = 0)"));
        }
        if universe < 2 {
            return Err(param_err!("CR-precis needs a universe of at least 2 items"));
        }
        let rows = ((3 * eps.denom() + eps.numer() - 1) / eps.numer()) as usize;
        let e = eps.to_f64();
        let cols = libm::ceil(6.0 * libm::log(universe as f64) / (e * libm::log(1.0 / e))) as u64;
        Ok((rows, cols.max(2)))
    }

    pub fn new(eps: Eps, universe: u64) -> Result<Self> {
        let (rows, cols) = Self::dims_for(eps, universe)?;
        Ok(Self::with_dims(rows, cols, universe))
    }

    pub fn with_dims(rows: usize, cols: u64, universe: u64) -> Self {
        let moduli = primes_from(cols, rows);
        let counters = moduli.iter().map(|&q| vec![0; q as usize]).collect();
        Self {
            version: SKETCH_VERSION,
            universe,
            cols,
            moduli,
            counters,
        }
    }

    pub fn rows(&self) -> usize {
        self.moduli.len()
    }

    /// Flat counter indices of `item`, one per row.
    pub fn cells(&self, item: u64) -> Result<impl Iterator<Item = usize> + '_> {
        check_item(item, self.universe)?;
        let mut offset = 0usize;
        Ok(self.moduli.iter().map(move |&q| {
            let cell = offset + (item % q) as usize;
            offset += q as usize;
            cell
        }))
    }

    pub fn num_cells(&self) -> usize {
        self.moduli.iter().map(|&q| q as usize).sum()
    }

    pub fn update(&mut self, item: u64, sign: i8) -> Result<()> {
        check_sign(sign)?;
        check_item(item, self.universe)?;
        for (row, &q) in self.counters.iter_mut().zip(&self.moduli) {
            row[(item % q) as usize] += sign as i64;
        }
        Ok(())
    }

    /// Average over rows of the item's counters.
    pub fn query(&self, item: u64) -> Result<Small> {
        check_item(item, self.universe)?;
        let sum: i64 = self
            .counters
            .iter()
            .zip(&self.moduli)
            .map(|(row, &q)| row[(item % q) as usize])
            .sum();
        Ok(Small::new(sum, self.rows() as i64))
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if (self.universe, &self.moduli) != (other.universe, &other.moduli) {
            return Err(param_err!(
                "cannot merge sketches with different parameters"
            ));
        }
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    /// Most rows two distinct items can share a cell in: their difference is
    /// below `|U|`, so the product of the shared moduli must be too.
    pub fn max_shared_rows(&self) -> usize {
        let mut product: u128 = 1;
        let mut shared = 0;
        for &q in &self.moduli {
            product = product.saturating_mul(q as u128);
            if product >= self.universe as u128 {
                break;
            }
            shared += 1;
        }
        shared
    }
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    // Deterministic Miller-Rabin for 64-bit inputs.
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mul(acc, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        acc
    };
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// The `count` smallest primes `>= from`.
pub fn primes_from(from: u64, count: usize) -> Vec<u64> {
    (from.max(2)..)
        .filter(|&n| is_prime(n))
        .take(count)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FreqMode {
    #[serde(rename = "exact_counters")]
    ExactCounters,
    #[serde(rename = "cms")]
    CountMin,
    #[serde(rename = "crprecis")]
    CrPrecis,
}

/// Which counters an item touches and how the coordinator reads an item back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyMap {
    Exact { universe: u64 },
    CountMin(CountMinSketch),
    CrPrecis(CrPrecis),
}

impl KeyMap {
    pub fn new(mode: FreqMode, eps: Eps, universe: u64, seed: u64) -> Result<Self> {
        if universe == 0 {
            return Err(param_err!("universe must be non-empty"));
        }
        Ok(match mode {
            FreqMode::ExactCounters => KeyMap::Exact { universe },
            FreqMode::CountMin => KeyMap::CountMin(CountMinSketch::new(eps, universe, seed)?),
            FreqMode::CrPrecis => KeyMap::CrPrecis(CrPrecis::new(eps, universe)?),
        })
    }

    pub fn universe(&self) -> u64 {
        match self {
            KeyMap::Exact { universe } => *universe,
            KeyMap::CountMin(s) => s.universe,
            KeyMap::CrPrecis(s) => s.universe,
        }
    }

    pub fn num_keys(&self) -> usize {
        match self {
            KeyMap::Exact { universe } => *universe as usize,
            KeyMap::CountMin(s) => s.width,
            KeyMap::CrPrecis(s) => s.num_cells(),
        }
    }

    pub fn keys(&self, item: u64, out: &mut Vec<usize>) -> Result<()> {
        out.clear();
        match self {
            KeyMap::Exact { universe } => {
                check_item(item, *universe)?;
                out.push(item as usize);
            }
            KeyMap::CountMin(s) => out.push(s.bucket(item)?),
            KeyMap::CrPrecis(s) => out.extend(s.cells(item)?),
        }
        Ok(())
    }

    /// `(sum of the item's key totals, divisor)`: the estimate is their ratio.
    pub fn combine(&self, item: u64, totals: &[i64]) -> Result<(i64, i64)> {
        Ok(match self {
            KeyMap::Exact { .. } | KeyMap::CountMin(_) => {
                let mut keys = Vec::with_capacity(1);
                self.keys(item, &mut keys)?;
                (totals[keys[0]], 1)
            }
            KeyMap::CrPrecis(s) => (s.cells(item)?.map(|c| totals[c]).sum(), s.rows() as i64),
        })
    }
}

/// In-block condition `|delta| >= eps 2^r / 3`; at `r = 0` this is any change.
pub fn freq_condition(delta: i64, r: u32, eps: Eps) -> bool {
    delta != 0 && eps.int_at_least(delta.saturating_mul(3), pow2(r))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct KeyState {
    f: i64,
    /// The coordinator's value for this key.
    reported: i64,
    /// Change since the last in-block report.
    delta: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreqInput {
    pub item: u64,
    pub sign: i8,
}

pub struct FreqSite {
    eps: Eps,
    pub partition: PartitionSite,
    map: KeyMap,
    keys: Vec<KeyState>,
    scratch: Vec<usize>,
}

impl SiteNode for FreqSite {
    type Input = FreqInput;

    fn on_input(&mut self, input: &FreqInput, out: &mut Vec<Message>) -> Result<()> {
        check_sign(input.sign)?;
        self.map.keys(input.item, &mut self.scratch)?;
        let r = self.partition.r;
        for &key in &self.scratch {
            let st = &mut self.keys[key];
            st.f += input.sign as i64;
            st.delta += input.sign as i64;
            if freq_condition(st.delta, r, self.eps) {
                out.push(Message::to_coordinator(
                    self.partition.id,
                    MessageKind::FreqDelta,
                    vec![key as i64, st.delta],
                ));
                st.reported += st.delta;
                st.delta = 0;
            }
        }
        // Every update moves F1 by one.
        self.partition.on_update(input.sign as i64, out);
        Ok(())
    }

    fn on_message(&mut self, msg: &Message, out: &mut Vec<Message>) -> Result<()> {
        match msg.kind {
            MessageKind::BlockRequest => self.partition.reply(out),
            MessageKind::RBroadcast => {
                let r = self.partition.on_broadcast(msg)?;
                let id = self.partition.id;
                for (key, st) in self.keys.iter_mut().enumerate() {
                    let err = st.f - st.reported;
                    // Keys whose count or outstanding error reaches the new threshold are refreshed.
                    if freq_condition(st.f, r, self.eps) || freq_condition(err, r, self.eps) {
                        out.push(Message::to_coordinator(
                            id,
                            MessageKind::FreqReport,
                            vec![key as i64, st.f],
                        ));
                        st.reported = st.f;
                    }
                    st.delta = 0;
                }
            }
            other => {
                return Err(Error::Protocol(format!(
                    "freq site cannot handle {}",
                    other.name()
                )))
            }
        }
        Ok(())
    }
}

pub struct FreqCoordinator {
    pub partition: PartitionCoordinator,
    map: KeyMap,
    num_keys: usize,
    f_hat: Vec<i64>,
    totals: Vec<i64>,
}

impl FreqCoordinator {
    pub fn map(&self) -> &KeyMap {
        &self.map
    }

    /// Per-key sums over sites of the coordinator's estimates.
    pub fn totals(&self) -> &[i64] {
        &self.totals
    }

    pub fn item_estimate(&self, item: u64) -> Result<Q> {
        let (sum, div) = self.map.combine(item, &self.totals)?;
        Ok(Q::new(sum as i128, div as i128))
    }

    fn slot(&mut self, msg: &Message) -> Result<(usize, usize)> {
        let site = msg.sender()?;
        let key =
            usize::try_from(msg.word(0)?).map_err(|_| Error::Protocol("negative key".into()))?;
        if key >= self.num_keys || site >= self.partition.k {
            return Err(Error::Protocol(format!(
                "key {key} or site {site} out of range"
            )));
        }
        Ok((site * self.num_keys + key, key))
    }
}

impl CoordinatorNode for FreqCoordinator {
    fn on_message(&mut self, msg: &Message, out: &mut Vec<Message>) -> Result<()> {
        match msg.kind {
            MessageKind::CountReport => self.partition.on_count(msg.word(0)?, out),
            MessageKind::BlockReply => {
                self.partition
                    .on_reply(msg.sender()?, msg.word(0)?, msg.word(1)?, out)?;
                Ok(())
            }
            MessageKind::FreqDelta => {
                let (slot, key) = self.slot(msg)?;
                let d = msg.word(1)?;
                self.f_hat[slot] += d;
                self.totals[key] += d;
                Ok(())
            }
            MessageKind::FreqReport => {
                let (slot, key) = self.slot(msg)?;
                let f = msg.word(1)?;
                self.totals[key] += f - self.f_hat[slot];
                self.f_hat[slot] = f;
                Ok(())
            }
            other => Err(Error::Protocol(format!(
                "freq coordinator cannot handle {}",
                other.name()
            ))),
        }
    }

    /// `F1` at the last block boundary.
    fn estimate(&self) -> Q {
        Q::from_integer(self.partition.f_at_block as i128)
    }

    fn block(&self) -> Option<BlockState> {
        Some(self.partition.state())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreqProtocol {
    pub eps: Eps,
    pub map: KeyMap,
}

impl FreqProtocol {
    pub fn new(eps: Eps, mode: FreqMode, universe: u64, hash_seed: u64) -> Result<Self> {
        Ok(Self {
            eps,
            map: KeyMap::new(mode, eps, universe, hash_seed)?,
        })
    }
}

impl Protocol for FreqProtocol {
    type Input = FreqInput;
    type Site = FreqSite;
    type Coordinator = FreqCoordinator;

    fn eps(&self) -> Eps {
        self.eps
    }

    fn build(&self, k: usize, f0: i64) -> Result<(FreqCoordinator, Vec<FreqSite>)> {
        if k == 0 {
            return Err(param_err!("k must be at least 1"));
        }
        if f0 != 0 {
            return Err(param_err!(
                "frequency tracking starts from an empty dataset"
            ));
        }
        let num_keys = self.map.num_keys();
        let partition = PartitionCoordinator::new(k, 0);
        let sites = (0..k)
            .map(|i| FreqSite {
                eps: self.eps,
                partition: PartitionSite::new(i, partition.r),
                map: self.map.clone(),
                keys: vec![KeyState::default(); num_keys],
                scratch: Vec::new(),
            })
            .collect();
        let coord = FreqCoordinator {
            partition,
            map: self.map.clone(),
            num_keys,
            f_hat: vec![0; k * num_keys],
            totals: vec![0; num_keys],
        };
        Ok((coord, sites))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreqWorkloadSpec {
    pub universe: u64,
    pub n: usize,
    pub k: usize,
    /// Probability of an insertion while the dataset is non-empty.
    pub insert_prob: f64,
    pub seed: u64,
    pub assignment: SiteAssignment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreqWorkload {
    pub universe: u64,
    pub k: usize,
    pub updates: Vec<FreqUpdate>,
}

/// Random insert/delete workload. Items are skewed towards small ids.
/// A deletion removes a uniformly chosen present copy at the site holding
/// it, so every per-site count stays non-negative.
pub fn generate_workload(spec: &FreqWorkloadSpec) -> Result<FreqWorkload> {
    if spec.universe == 0 || spec.k == 0 {
        return Err(param_err!("universe and k must be positive"));
    }
    if !(0.0..=1.0).contains(&spec.insert_prob) {
        return Err(param_err!("insert_prob must lie in [0, 1]"));
    }
    let mut rng = rng_for(spec.seed, label::WORKLOAD, 0);
    let u = spec.universe as usize;
    let mut copies = vec![0u64; u * spec.k];
    let mut total = 0u64;
    let mut updates = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let t = i as u64 + 1;
        if total == 0 || rng.gen_bool(spec.insert_prob) {
            let x: f64 = rng.gen();
            let item = ((x * x * spec.universe as f64) as u64).min(spec.universe - 1);
            let site = match spec.assignment {
                SiteAssignment::RoundRobin => i % spec.k,
                SiteAssignment::Uniform => rng.gen_range(0..spec.k),
            };
            copies[site * u + item as usize] += 1;
            total += 1;
            updates.push(FreqUpdate {
                t,
                site,
                item,
                sign: 1,
            });
        } else {
            let mut pick = rng.gen_range(0..total);
            let idx = copies
                .iter()
                .position(|&c| {
                    if pick < c {
                        true
                    } else {
                        pick -= c;
                        false
                    }
                })
                .expect("a copy exists");
            copies[idx] -= 1;
            total -= 1;
            updates.push(FreqUpdate {
                t,
                site: idx / u,
                item: (idx % u) as u64,
                sign: -1,
            });
        }
    }
    Ok(FreqWorkload {
        universe: spec.universe,
        k: spec.k,
        updates,
    })
}

/// Checks numbering, ranges and that no frequency goes negative.
pub fn validate_workload(w: &FreqWorkload) -> Result<()> {
    let mut freq = vec![0i64; w.universe as usize];
    for (i, u) in w.updates.iter().enumerate() {
        if u.t != i as u64 + 1 || u.site >= w.k {
            return Err(Error::Input(format!(
                "bad update header at position {}",
                i + 1
            )));
        }
        check_sign(u.sign)?;
        check_item(u.item, w.universe)?;
        let f = &mut freq[u.item as usize];
        *f += u.sign as i64;
        if *f < 0 {
            return Err(Error::Input(format!(
                "t = {}: item {} deleted while absent",
                u.t, u.item
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreqRow {
    pub t: u64,
    pub f1: u64,
    /// `max_l |f_l - f_hat_l|`.
    pub max_abs_error: Q,
    /// Items with `|f_l - f_hat_l| > eps F1`.
    pub violations: usize,
    pub messages_cumulative: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreqRun {
    pub eps: Eps,
    pub k: usize,
    pub universe: u64,
    pub rows: Vec<FreqRow>,
    pub log: Vec<LoggedMessage>,
    pub blocks: Vec<BlockRecord>,
    pub messages: u64,
    /// `F1`-variability of the workload.
    pub f1_variability: num_rational::BigRational,
}

impl FreqRun {
    pub fn total_violations(&self) -> usize {
        self.rows.iter().map(|r| r.violations).sum()
    }

    /// Fraction of (item, time) pairs outside `eps F1`.
    pub fn failure_rate(&self) -> f64 {
        let pairs = self.rows.len() as f64 * self.universe as f64;
        if pairs == 0.0 {
            0.0
        } else {
            self.total_violations() as f64 / pairs
        }
    }
}

/// Runs the tracker and compares every item estimate with an exact oracle after every update.
pub fn run_freq_tracking(protocol: &FreqProtocol, workload: &FreqWorkload) -> Result<FreqRun> {
    if protocol.map.universe() != workload.universe {
        return Err(param_err!(
            "protocol universe differs from workload universe"
        ));
    }
    let eps = protocol.eps;
    let (coord, sites) = protocol.build(workload.k, 0)?;
    let mut net = Network::new(coord, sites);
    let u = workload.universe as usize;
    let mut freq = vec![0i64; u];
    let mut f1 = 0i64;
    let mut f1_v = crate::rational::ExactSum::new();
    let mut rows = Vec::with_capacity(workload.updates.len());
    let (en, ed) = (eps.numer() as i128, eps.denom() as i128);
    for (i, up) in workload.updates.iter().enumerate() {
        if up.t != i as u64 + 1 {
            return Err(Error::Input(format!("update {i} has t = {}", up.t)));
        }
        check_sign(up.sign)?;
        check_item(up.item, workload.universe)?;
        let f = &mut freq[up.item as usize];
        *f += up.sign as i64;
        if *f < 0 {
            return Err(Error::Input(format!(
                "t = {}: item {} deleted while absent",
                up.t, up.item
            )));
        }
        f1 += up.sign as i64;
        net.deliver(
            up.t,
            up.t,
            up.site,
            &FreqInput {
                item: up.item,
                sign: up.sign,
            },
        )?;
        let inc = f1_variability_increment(f1 as u64);
        f1_v.add(inc);
        net.meter.after_step(up.t, f1, inc, net.coordinator.block());

        let mut max_err = Q::zero();
        let mut violations = 0usize;
        for (item, &truth) in freq.iter().enumerate() {
            let (sum, div) = net
                .coordinator
                .map
                .combine(item as u64, &net.coordinator.totals)?;
            let (sum, div) = (sum as i128, div as i128);
            let gap = (sum - div * truth as i128).abs();
            // gap / div > eps F1
            if gap * ed > en * f1 as i128 * div {
                violations += 1;
            }
            let err = Q::new(gap, div);
            if err > max_err {
                max_err = err;
            }
        }
        rows.push(FreqRow {
            t: up.t,
            f1: f1 as u64,
            max_abs_error: max_err,
            violations,
            messages_cumulative: net.messages,
        });
    }
    Ok(FreqRun {
        eps,
        k: workload.k,
        universe: workload.universe,
        rows,
        log: net.log,
        blocks: net.meter.records,
        messages: net.messages,
        f1_variability: f1_v.value(),
    })
}
