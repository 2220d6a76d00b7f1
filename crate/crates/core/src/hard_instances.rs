//! Lower-bound sequence families: the deterministic flip family over
//! `{m, m+3}` and the randomized switch family, with overlap/match checks and
//! a small Index-style encode/decode round trip.

use alloc::format;
use alloc::vec::Vec;

use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;

use crate::error::{param_err, Error, Result};
use crate::rational::{Eps, ExactSum, Small, Q};
use crate::rng::{bernoulli_exact, label, rng_for};
use crate::variability::{raw_increment, variability_increment};

/// `f(0..=n)` over `{m, m+3}` with the indices where it switches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueSequence {
    pub m: i64,
    pub values: Vec<i64>,
    pub switches: Vec<usize>,
    /// `sum |f'(t)/f(t)|` without the clamp at 1; this is the quantity the
    /// flip-family closed form describes.
    pub variability: BigRational,
    /// Clamped variability as used everywhere else.
    pub clamped_variability: BigRational,
}

impl ValueSequence {
    pub fn from_values(m: i64, values: Vec<i64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Contract("a value sequence needs f(0)".into()));
        }
        if let Some(bad) = values.iter().find(|&&v| v != m && v != m + 3) {
            return Err(Error::Contract(format!(
                "value {bad} is neither {m} nor {}",
                m + 3
            )));
        }
        let mut raw = ExactSum::new();
        let mut clamped = ExactSum::new();
        let mut switches = Vec::new();
        for t in 1..values.len() {
            let d = values[t] - values[t - 1];
            if d != 0 {
                switches.push(t);
                raw.add(raw_increment(values[t], d));
                clamped.add(variability_increment(values[t], d));
            }
        }
        Ok(Self {
            m,
            values,
            switches,
            variability: raw.value(),
            clamped_variability: clamped.value(),
        })
    }

    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn deltas(&self) -> Vec<i64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// `(6m+9)/(2m+6) * r / m`, the flip-family variability.
pub fn flip_closed_form(m: i64, r: usize) -> BigRational {
    BigRational::new((6 * m + 9).into(), (2 * m + 6).into())
        * BigRational::new((r as i64).into(), m.into())
}

/// `f_S(0) = m`, `f_S(t) = 2m+3 - f_S(t-1)` for `t` in `S`, else unchanged.
pub fn flip_sequence(set: &[usize], m: i64, n: usize) -> Result<ValueSequence> {
    switch_sequence(m, m, set, n)
}

/// Starts at `f0` (`m` or `m+3`) and flips at each index of `set`.
pub fn switch_sequence(m: i64, f0: i64, set: &[usize], n: usize) -> Result<ValueSequence> {
    if set.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Contract(
            "switch indices must be strictly increasing".into(),
        ));
    }
    if set.first().is_some_and(|&s| s == 0) || set.last().is_some_and(|&s| s > n) {
        return Err(Error::Contract(format!(
            "switch indices must lie in [1, {n}]"
        )));
    }
    let mut values = Vec::with_capacity(n + 1);
    values.push(f0);
    let mut next = set.iter().peekable();
    for t in 1..=n {
        let prev = values[t - 1];
        if next.peek() == Some(&&t) {
            next.next();
            values.push(2 * m + 3 - prev);
        } else {
            values.push(prev);
        }
    }
    ValueSequence::from_values(m, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlipFamilySpec {
    pub m: i64,
    pub n: usize,
    pub r: usize,
}

impl FlipFamilySpec {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(param_err!("m must be >= 2, got {}", self.m));
        }
        if (self.n as i64) < 2 * self.m {
            return Err(param_err!("n must be >= 2m, got n = {}", self.n));
        }
        if !self.r.is_multiple_of(2) || self.r > self.n {
            return Err(param_err!("r must be even and at most n, got {}", self.r));
        }
        Ok(())
    }

    pub fn eps(&self) -> Eps {
        Eps::reciprocal(self.m).expect("m >= 2")
    }

    /// `C(n, r)`, saturating at `u128::MAX`.
    pub fn family_size(&self) -> u128 {
        binomial(self.n as u64, self.r as u64)
    }

    /// `(n/r)^r`, the counting lower bound on the family size.
    pub fn counting_bound(&self) -> f64 {
        if self.r == 0 {
            return 1.0;
        }
        libm::pow(self.n as f64 / self.r as f64, self.r as f64)
    }
}

/// `C(n, k)` with saturation.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        let num = (n - i) as u128;
        let den = (i + 1) as u128;
        let g = num_integer::gcd(acc, den);
        let (a, d) = (acc / g, den / g);
        let num = num / d;
        acc = match a.checked_mul(num) {
            Some(v) => v,
            None => return u128::MAX,
        };
    }
    acc
}

/// Subsets of `[1, n]` of size `r` in colexicographic order.
pub struct ColexSubsets {
    n: usize,
    current: Option<Vec<usize>>,
}

impl ColexSubsets {
    pub fn new(n: usize, r: usize) -> Self {
        let current = (r <= n).then(|| (1..=r).collect());
        Self { n, current }
    }
}

impl Iterator for ColexSubsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let mut s = out.clone();
        let r = s.len();
        let mut advanced = false;
        for i in 0..r {
            let limit = if i + 1 < r { s[i + 1] } else { self.n + 1 };
            if s[i] + 1 < limit {
                s[i] += 1;
                for (j, slot) in s.iter_mut().enumerate().take(i) {
                    *slot = j + 1;
                }
                advanced = true;
                break;
            }
        }
        if advanced {
            self.current = Some(s);
        }
        Some(out)
    }
}

/// Colex rank of a sorted subset of `[1, n]`: `sum_i C(s_i - 1, i + 1)`.
pub fn colex_rank(set: &[usize]) -> u128 {
    set.iter()
        .enumerate()
        .map(|(i, &s)| binomial(s as u64 - 1, i as u64 + 1))
        .sum()
}

/// Inverse of [`colex_rank`] for `r`-subsets of `[1, n]`.
pub fn colex_unrank(mut rank: u128, n: usize, r: usize) -> Result<Vec<usize>> {
    if rank >= binomial(n as u64, r as u64) {
        return Err(param_err!("rank {rank} exceeds C({n}, {r})"));
    }
    let mut set = alloc::vec![0; r];
    let mut hi = n;
    for i in (0..r).rev() {
        // Largest s with C(s - 1, i + 1) <= rank.
        let mut s = hi;
        while binomial(s as u64 - 1, i as u64 + 1) > rank {
            s -= 1;
        }
        set[i] = s;
        rank -= binomial(s as u64 - 1, i as u64 + 1);
        hi = s - 1;
    }
    Ok(set)
}

/// The first `count` members of the flip family in colex order of their switch sets.
pub fn flip_family(spec: &FlipFamilySpec, count: usize) -> Result<Vec<ValueSequence>> {
    spec.validate()?;
    if count as u128 > spec.family_size() {
        return Err(param_err!(
            "count {count} exceeds C({}, {}) = {}",
            spec.n,
            spec.r,
            spec.family_size()
        ));
    }
    ColexSubsets::new(spec.n, spec.r)
        .take(count)
        .map(|s| flip_sequence(&s, spec.m, spec.n))
        .collect()
}

/// Positions `1 <= t <= n` with `|f(t) - g(t)| <= eps * max{f(t), g(t)}`.
pub fn overlap(f: &ValueSequence, g: &ValueSequence, eps: Eps) -> Result<usize> {
    overlap_values(&f.values[1..], &g.values[1..], eps)
}

pub fn overlap_values(f: &[i64], g: &[i64], eps: Eps) -> Result<usize> {
    if f.len() != g.len() {
        return Err(Error::Contract(format!(
            "length mismatch: {} vs {}",
            f.len(),
            g.len()
        )));
    }
    let (num, den) = (eps.numer() as i128, eps.denom() as i128);
    Ok(f.iter()
        .zip(g)
        .filter(|(&a, &b)| ((a - b).unsigned_abs() as i128) * den <= num * a.max(b) as i128)
        .count())
}

/// `overlap >= ceil(3n/5)`.
pub fn matches(f: &ValueSequence, g: &ValueSequence, eps: Eps) -> Result<bool> {
    let n = f.n();
    Ok(overlap(f, g, eps)? >= match_threshold(n))
}

pub fn match_threshold(n: usize) -> usize {
    (3 * n).div_ceil(5)
}

/// `p = v m / (6 n)` for `eps = 1/m`; requires `v > 0`, `n > 3 v m` and `p <= 1`.
pub fn switch_probability(m: i64, v: Small, n: usize) -> Result<Q> {
    if v <= Small::zero() {
        return Err(param_err!("target variability must be positive"));
    }
    let (vn, vd) = (*v.numer() as i128, *v.denom() as i128);
    if (n as i128) * vd <= 3 * vn * m as i128 {
        return Err(param_err!(
            "switch family needs n > 3v/eps, got n = {n}, v = {v}, m = {m}"
        ));
    }
    let p = Q::new(vn * m as i128, 6 * n as i128 * vd);
    if p > Q::from_integer(1) {
        return Err(param_err!("switch probability {p} exceeds 1"));
    }
    Ok(p)
}

/// One switch-process path: start at `m` or `m+3` with probability 1/2, then
/// switch at each step with probability `p`.
pub fn sample_switch_sequence<R: Rng + ?Sized>(
    rng: &mut R,
    m: i64,
    n: usize,
    p: &Q,
) -> ValueSequence {
    let mut values = Vec::with_capacity(n + 1);
    values.push(if rng.gen_bool(0.5) { m } else { m + 3 });
    for t in 1..=n {
        let prev = values[t - 1];
        values.push(if bernoulli_exact(rng, p) {
            2 * m + 3 - prev
        } else {
            prev
        });
    }
    ValueSequence::from_values(m, values).expect("values stay in {m, m+3}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchFamilySpec {
    pub eps: Eps,
    pub v: Small,
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    /// Forces the switch probability, bypassing the `v`/`n` preconditions.
    pub p_override: Option<Q>,
}

impl SwitchFamilySpec {
    pub fn m(&self) -> Result<i64> {
        crate::stream::eps_to_m(self.eps)
    }

    pub fn probability(&self) -> Result<Q> {
        let m = self.m()?;
        match &self.p_override {
            Some(p) if *p < Q::zero() || *p > Q::from_integer(1) => {
                Err(param_err!("p must lie in [0, 1]"))
            }
            Some(p) => Ok(*p),
            None => switch_probability(m, self.v, self.n),
        }
    }

    /// Survivors may switch at most `2v/(6 eps) = v m / 3` times.
    pub fn switch_cap(&self) -> Result<usize> {
        let m = self.m()? as i128;
        Ok(((*self.v.numer() as i128 * m) / (3 * *self.v.denom() as i128)).max(0) as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchFamilyStats {
    pub sampled: usize,
    pub survivors: usize,
    /// Switch count of every sampled sequence, survivors or not.
    pub switch_counts: Vec<usize>,
    pub mean_switches: f64,
    pub pairwise_match_rate: Option<f64>,
    pub max_variability: BigRational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchFamily {
    pub sequences: Vec<ValueSequence>,
    pub stats: SwitchFamilyStats,
    pub requested: usize,
}

impl SwitchFamily {
    /// Missing survivors; the family is never padded.
    pub fn shortfall(&self) -> usize {
        self.requested.saturating_sub(self.sequences.len())
    }

    pub fn require_full(&self) -> Result<&Self> {
        if self.shortfall() > 0 {
            return Err(Error::Contract(format!(
                "only {} of {} sequences survived the switch filter",
                self.sequences.len(),
                self.requested
            )));
        }
        Ok(self)
    }
}

/// Samples `2 * count` switch sequences, drops those switching more than
/// `v m / 3` times and keeps up to `count` survivors.
pub fn switch_family(spec: &SwitchFamilySpec) -> Result<SwitchFamily> {
    let m = spec.m()?;
    if spec.eps > Eps::new(1, 2)? {
        return Err(param_err!("switch family needs eps <= 1/2"));
    }
    let p = spec.probability()?;
    let cap = spec.switch_cap()?;
    let sampled = 2 * spec.count;
    let mut rng = rng_for(spec.seed, label::FAMILY, 0);
    let mut switch_counts = Vec::with_capacity(sampled);
    let mut sequences = Vec::new();
    for _ in 0..sampled {
        let seq = sample_switch_sequence(&mut rng, m, spec.n, &p);
        switch_counts.push(seq.switches.len());
        if (spec.p_override.is_some() || seq.switches.len() <= cap) && sequences.len() < spec.count
        {
            sequences.push(seq);
        }
    }
    let mean_switches = switch_counts.iter().sum::<usize>() as f64 / sampled.max(1) as f64;
    let pairwise_match_rate = if sequences.len() >= 2 {
        Some(empirical_match_rate(
            &sequences,
            spec.eps,
            usize::MAX,
            spec.seed,
        )?)
    } else {
        None
    };
    let max_variability = sequences
        .iter()
        .map(|s| s.variability.clone())
        .max()
        .unwrap_or_else(BigRational::zero);
    let stats = SwitchFamilyStats {
        sampled,
        survivors: sequences.len(),
        switch_counts,
        mean_switches,
        pairwise_match_rate,
        max_variability,
    };
    Ok(SwitchFamily {
        sequences,
        stats,
        requested: spec.count,
    })
}

/// Fraction of matching pairs among `pairs` sampled distinct pairs; when
/// `pairs` covers all pairs, every pair is checked once.
pub fn empirical_match_rate(
    family: &[ValueSequence],
    eps: Eps,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let len = family.len();
    if len < 2 {
        return Err(param_err!("match rate needs at least two sequences"));
    }
    let total = len * (len - 1) / 2;
    let mut hits = 0usize;
    let checked = if pairs >= total {
        for i in 0..len {
            for j in i + 1..len {
                hits += matches(&family[i], &family[j], eps)? as usize;
            }
        }
        total
    } else {
        let mut rng = rng_for(seed, label::TRIAL, 0);
        for _ in 0..pairs {
            let i = rng.gen_range(0..len);
            let mut j = rng.gen_range(0..len - 1);
            if j >= i {
                j += 1;
            }
            hits += matches(&family[i], &family[j], eps)? as usize;
        }
        pairs
    };
    Ok(hits as f64 / checked.max(1) as f64)
}

/// Reads a flip-family member back from estimates that are each within
/// `|f - f_hat| <= f/m` of the true value. Needs `m >= 4`: below that the
/// tolerance bands around `m` and `m+3` overlap.
pub fn decode_flip_estimates(estimates: &[Q], m: i64) -> Result<Vec<usize>> {
    if m < 4 {
        return Err(param_err!(
            "estimates only separate m and m+3 for m >= 4, got {m}"
        ));
    }
    let cut = Q::from_integer(m as i128 + 1);
    let mut prev = m;
    let mut switches = Vec::new();
    for (i, e) in estimates.iter().enumerate() {
        let v = if *e <= cut { m } else { m + 3 };
        if v != prev {
            switches.push(i + 1);
        }
        prev = v;
    }
    Ok(switches)
}

/// Largest `b` such that every `b`-bit string names a distinct `r`-subset of `[1, n]`.
pub fn index_capacity_bits(n: usize, r: usize) -> u32 {
    let size = binomial(n as u64, r as u64);
    if size == 0 {
        0
    } else {
        127 - size.leading_zeros()
    }
}

/// Alice's side: a bit string (little-endian integer) becomes a switch set.
pub fn index_encode(bits: &[bool], n: usize, r: usize) -> Result<Vec<usize>> {
    if bits.len() > 127 {
        return Err(param_err!("at most 127 bits are supported"));
    }
    let rank = bits
        .iter()
        .enumerate()
        .fold(0u128, |acc, (i, &b)| acc | ((b as u128) << i));
    colex_unrank(rank, n, r)
}

/// Bob's side: a switch set back to `len` bits.
pub fn index_decode(set: &[usize], len: usize) -> Vec<bool> {
    let rank = colex_rank(set);
    (0..len).map(|i| (rank >> i) & 1 == 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn flip_sequence_examples() {
        let empty = flip_sequence(&[], 3, 6).unwrap();
        assert!(empty.values.iter().all(|&v| v == 3));
        assert!(empty.variability.is_zero());

        let s = flip_sequence(&[1, 3], 2, 4).unwrap();
        assert_eq!(s.values, vec![2, 5, 5, 2, 2]);
        assert_eq!(s.variability, q(21, 10));
        assert_eq!(s.variability, flip_closed_form(2, 2));
        // 3/2 clamps to 1 at m = 2.
        assert_eq!(s.clamped_variability, q(8, 5));

        assert!(flip_sequence(&[3, 1], 2, 4).is_err());
        assert!(flip_sequence(&[0, 2], 2, 4).is_err());
        assert!(flip_sequence(&[2, 5], 2, 4).is_err());
    }

    #[test]
    fn flip_family_examples() {
        let spec = FlipFamilySpec { m: 2, n: 4, r: 2 };
        let fam = flip_family(&spec, 6).unwrap();
        assert_eq!(fam.len(), 6);
        for i in 0..6 {
            for j in i + 1..6 {
                assert_ne!(fam[i].values, fam[j].values);
            }
        }
        assert_eq!(flip_family(&spec, 1).unwrap()[0].switches, vec![1, 2]);
        assert!(flip_family(&spec, 7).is_err());
        assert!(fam.iter().all(|s| s.variability == flip_closed_form(2, 2)));
    }

    #[test]
    fn colex_order_and_ranks() {
        let sets: Vec<_> = ColexSubsets::new(4, 2).collect();
        assert_eq!(
            sets,
            vec![
                vec![1, 2],
                vec![1, 3],
                vec![2, 3],
                vec![1, 4],
                vec![2, 4],
                vec![3, 4]
            ]
        );
        for (i, s) in sets.iter().enumerate() {
            assert_eq!(colex_rank(s), i as u128);
            assert_eq!(&colex_unrank(i as u128, 4, 2).unwrap(), s);
        }
        assert!(colex_unrank(6, 4, 2).is_err());
        assert_eq!(
            ColexSubsets::new(5, 0).collect::<Vec<_>>(),
            vec![Vec::<usize>::new()]
        );
        assert_eq!(ColexSubsets::new(3, 3).count(), 1);
        assert_eq!(ColexSubsets::new(7, 3).count(), 35);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(10, 0), 1);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(60, 30), 118264581564861424);
        assert_eq!(binomial(1000, 500), u128::MAX);
    }

    #[test]
    fn overlap_examples() {
        let eps = Eps::new(1, 2).unwrap();
        let lo = ValueSequence::from_values(2, vec![2; 6]).unwrap();
        let hi = ValueSequence::from_values(2, vec![5; 6]).unwrap();
        assert_eq!(overlap(&lo, &lo, eps).unwrap(), 5);
        assert_eq!(overlap(&lo, &hi, eps).unwrap(), 0);
        assert!(!matches(&lo, &hi, eps).unwrap());
        assert!(matches(&lo, &lo, eps).unwrap());

        let one_off = ValueSequence::from_values(2, vec![2, 2, 5, 2, 2, 2]).unwrap();
        assert_eq!(overlap(&lo, &one_off, eps).unwrap(), 4);
        let short = ValueSequence::from_values(2, vec![2; 3]).unwrap();
        assert!(overlap(&lo, &short, eps).is_err());
    }

    #[test]
    fn match_boundary_is_inclusive() {
        // n = 5, threshold 3: exactly 3 agreeing positions match.
        let eps = Eps::new(1, 2).unwrap();
        let f = ValueSequence::from_values(2, vec![2, 2, 2, 2, 2, 2]).unwrap();
        let g = ValueSequence::from_values(2, vec![2, 2, 2, 2, 5, 5]).unwrap();
        assert_eq!(match_threshold(5), 3);
        assert_eq!(overlap(&f, &g, eps).unwrap(), 3);
        assert!(matches(&f, &g, eps).unwrap());
        let h = ValueSequence::from_values(2, vec![2, 2, 2, 5, 5, 5]).unwrap();
        assert!(!matches(&f, &h, eps).unwrap());
    }

    #[test]
    fn switch_probability_example() {
        assert_eq!(
            switch_probability(4, Small::from_integer(24), 400).unwrap(),
            Q::new(1, 25)
        );
        assert!(switch_probability(4, Small::from_integer(24), 288).is_err());
        assert!(switch_probability(4, Small::from_integer(0), 400).is_err());
    }

    #[test]
    fn forced_zero_probability_gives_constant_sequences() {
        let spec = SwitchFamilySpec {
            eps: Eps::new(1, 4).unwrap(),
            v: Small::from_integer(24),
            n: 400,
            count: 200,
            seed: 11,
            p_override: Some(Q::from_integer(0)),
        };
        let fam = switch_family(&spec).unwrap();
        assert_eq!(fam.sequences.len(), 200);
        assert!(fam.sequences.iter().all(|s| s.switches.is_empty()));
        let rate = fam.stats.pairwise_match_rate.unwrap();
        // Same start with probability ~1/2.
        assert!((rate - 0.5).abs() < 0.1, "rate {rate}");
    }

    #[test]
    fn survivors_respect_variability_cap() {
        let spec = SwitchFamilySpec {
            eps: Eps::new(1, 4).unwrap(),
            v: Small::from_integer(24),
            n: 400,
            count: 50,
            seed: 3,
            p_override: None,
        };
        let fam = switch_family(&spec).unwrap();
        assert_eq!(spec.switch_cap().unwrap(), 32);
        for s in &fam.sequences {
            assert!(s.switches.len() <= 32);
            assert!(s.variability <= q(24, 1));
        }
        fam.require_full().unwrap();
    }

    #[test]
    fn decode_requires_separated_bands() {
        assert!(decode_flip_estimates(&[], 3).is_err());
        let est = [
            Q::from_integer(5),
            Q::new(21, 4),
            Q::from_integer(7),
            Q::from_integer(3),
        ];
        assert_eq!(decode_flip_estimates(&est, 4).unwrap(), vec![2, 4]);
    }

    #[test]
    fn index_round_trip() {
        let bits = vec![true, false, true, true, false, false, true];
        let set = index_encode(&bits, 20, 6).unwrap();
        assert_eq!(set.len(), 6);
        assert_eq!(index_decode(&set, bits.len()), bits);
        assert!(index_capacity_bits(20, 6) >= 7);
    }
}
