//! Streams of signed integer updates spread over `k` sites, plus seeded
//! generators for the input classes the tracking bounds are stated for.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_rational::BigRational;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::hard_instances::{flip_sequence, sample_switch_sequence, switch_probability};
use crate::rational::{Eps, ExactSum, Small};
use crate::rng::{label, rng_for};
use crate::variability::variability_increment;

/// One timestep's event: `delta = f(t) - f(t-1)` arrives at `site`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Update {
    pub t: u64,
    pub site: usize,
    pub delta: i64,
}

/// How updates are attributed to sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteAssignment {
    #[default]
    RoundRobin,
    Uniform,
}

/// Input class of a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamKind {
    Monotone,
    UnbiasedWalk,
    BiasedWalk {
        mu: f64,
    },
    NearlyMonotone {
        beta: f64,
    },
    /// One member of the flip family: switches between `m` and `m + 3` at `r` random indices.
    DetFamily {
        m: i64,
        r: usize,
    },
    /// One member of the random switch family with `eps = 1/m` and target variability `v`.
    RandFamily {
        eps: Eps,
        v: u64,
    },
    /// Updates read from a replay file; resolved by the caller.
    Replay {
        path: String,
    },
}

impl StreamKind {
    pub fn name(&self) -> &'static str {
        match self {
            StreamKind::Monotone => "monotone",
            StreamKind::UnbiasedWalk => "unbiased_walk",
            StreamKind::BiasedWalk { .. } => "biased_walk",
            StreamKind::NearlyMonotone { .. } => "nearly_monotone",
            StreamKind::DetFamily { .. } => "det_family",
            StreamKind::RandFamily { .. } => "rand_family",
            StreamKind::Replay { .. } => "replay",
        }
    }
}

fn default_k() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    #[serde(flatten)]
    pub kind: StreamKind,
    pub n: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub assignment: SiteAssignment,
}

/// Timestep after which nearly monotone streams satisfy `f-(n) <= beta * f(n)`.
pub const NEARLY_MONOTONE_T0: usize = 10;

/// Longest insertion run in the nearly monotone sawtooth.
const SAWTOOTH_MAX_RUN: u32 = 16;

impl StreamSpec {
    pub fn new(kind: StreamKind, n: usize, k: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            k,
            seed,
            assignment: SiteAssignment::RoundRobin,
        }
    }

    pub fn with_assignment(mut self, assignment: SiteAssignment) -> Self {
        self.assignment = assignment;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(param_err!("k must be at least 1"));
        }
        let replay = matches!(self.kind, StreamKind::Replay { .. });
        if self.n == 0 && !replay {
            return Err(param_err!("n must be at least 1"));
        }
        match &self.kind {
            StreamKind::BiasedWalk { mu } if !(*mu > 0.0 && *mu <= 1.0) => {
                Err(param_err!("mu must lie in (0, 1], got {mu}"))
            }
            StreamKind::NearlyMonotone { beta } if !(*beta >= 1.0 && beta.is_finite()) => {
                Err(param_err!("beta must be >= 1, got {beta}"))
            }
            StreamKind::DetFamily { m, r } => {
                if *m < 2 {
                    return Err(param_err!("flip family needs m >= 2, got {m}"));
                }
                if r % 2 != 0 || *r > self.n {
                    return Err(param_err!(
                        "flip family needs an even r <= n, got r = {r}, n = {}",
                        self.n
                    ));
                }
                Ok(())
            }
            StreamKind::RandFamily { eps, v } => {
                let m = eps_to_m(*eps)?;
                switch_probability(m, Small::from_integer(*v as i64), self.n).map(|_| ())
            }
            _ => Ok(()),
        }
    }
}

/// `m` with `eps = 1/m`; families are only defined for such epsilons.
pub fn eps_to_m(eps: Eps) -> Result<i64> {
    if eps.numer() != 1 || eps.denom() < 2 {
        return Err(param_err!(
            "family epsilon must be 1/m with m >= 2, got {eps}"
        ));
    }
    Ok(eps.denom())
}

/// A fully materialized stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub spec: StreamSpec,
    pub updates: Vec<Update>,
    pub f0: i64,
}

impl Stream {
    /// Builds a stream from explicit deltas with round-robin site assignment.
    pub fn from_deltas(deltas: &[i64], k: usize, f0: i64) -> Self {
        let spec = StreamSpec::new(
            StreamKind::Replay {
                path: String::new(),
            },
            deltas.len(),
            k,
            0,
        );
        let updates = deltas
            .iter()
            .enumerate()
            .map(|(i, &delta)| Update {
                t: i as u64 + 1,
                site: i % k.max(1),
                delta,
            })
            .collect();
        Stream { spec, updates, f0 }
    }

    pub fn len(&self) -> usize {
        self.updates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.updates.is_empty()
    }

    pub fn k(&self) -> usize {
        self.spec.k
    }

    pub fn deltas(&self) -> Vec<i64> {
        self.updates.iter().map(|u| u.delta).collect()
    }

    /// Checks timestep numbering and site bounds.
    pub fn validate(&self) -> Result<()> {
        for (i, u) in self.updates.iter().enumerate() {
            if u.t != i as u64 + 1 {
                return Err(Error::Input(format!(
                    "update {i} has t = {}, expected {}",
                    u.t,
                    i + 1
                )));
            }
            if u.site >= self.spec.k {
                return Err(Error::Input(format!(
                    "update at t = {} names site {} but k = {}",
                    u.t, u.site, self.spec.k
                )));
            }
        }
        Ok(())
    }

    /// Unit-step deltas seen by the protocols: zero updates vanish and
    /// `|delta| > 1` becomes `|delta|` unit steps.
    pub fn unit_deltas(&self) -> Vec<i64> {
        self.updates
            .iter()
            .flat_map(|u| unit_steps(u.delta))
            .collect()
    }
}

/// `f(t) = f0 + sum of deltas up to t`, for `t = 1..=n`.
pub fn prefix_values(stream: &Stream) -> Vec<i64> {
    prefix_values_from(stream.f0, stream.updates.iter().map(|u| u.delta))
}

pub fn prefix_values_from<I: IntoIterator<Item = i64>>(f0: i64, deltas: I) -> Vec<i64> {
    deltas
        .into_iter()
        .scan(f0, |f, d| {
            *f += d;
            Some(*f)
        })
        .collect()
}

/// The unit steps a single delta expands into (`delta = 0` yields none).
pub fn unit_steps(delta: i64) -> impl Iterator<Item = i64> {
    core::iter::repeat_n(delta.signum(), delta.unsigned_abs() as usize)
}

/// Replaces an update with `|delta| > 1` by `|delta|` updates of `sign(delta)`.
pub fn split_large_update(delta: i64, _f_prev: i64) -> Result<Vec<i64>> {
    if delta.unsigned_abs() <= 1 {
        return Err(Error::Contract(format!(
            "split_large_update needs |delta| > 1, got {delta}"
        )));
    }
    Ok(unit_steps(delta).collect())
}

/// Variability added by the unit steps of a split update starting from `f_prev`.
pub fn split_variability(delta: i64, f_prev: i64) -> BigRational {
    let mut f = f_prev;
    let mut sum = ExactSum::new();
    for step in unit_steps(delta) {
        f += step;
        sum.add(variability_increment(f, step));
    }
    sum.value()
}

fn harmonic(n: u64) -> ExactSum {
    (1..=n as i64).map(|i| Small::new(1, i)).collect()
}

/// `(f'/f(n)) * (1 + H(f'))` for a positive split (`f_prev >= 0`, `delta > 1`).
pub fn split_positive_bound(delta: i64, f_prev: i64) -> Result<BigRational> {
    if delta <= 1 || f_prev < 0 {
        return Err(Error::Contract(format!(
            "positive split bound needs delta > 1 and f_prev >= 0, got ({delta}, {f_prev})"
        )));
    }
    let f_n = f_prev + delta;
    let mut h = harmonic(delta as u64);
    h.add(Small::from_integer(1));
    Ok(h.value() * BigRational::new(delta.into(), f_n.into()))
}

/// `3|f'|/f(n)` for a negative split with `f(n) >= 1`.
pub fn split_negative_bound(delta: i64, f_prev: i64) -> Result<BigRational> {
    let f_n = f_prev + delta;
    if delta >= -1 || f_n < 1 {
        return Err(Error::Contract(format!(
            "negative split bound needs delta < -1 and f(n) >= 1, got ({delta}, {f_prev})"
        )));
    }
    Ok(BigRational::new((3 * delta.abs()).into(), f_n.into()))
}

/// Materializes the stream described by `spec`.
///
/// Replay streams need file access and are resolved with [`parse_replay`].
pub fn make_generator(spec: &StreamSpec) -> Result<Stream> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = rng_for(spec.seed, label::DELTAS, 0);
    let (deltas, f0): (Vec<i64>, i64) = match &spec.kind {
        StreamKind::Monotone => (alloc::vec![1; n], 0),
        StreamKind::UnbiasedWalk => (
            (0..n)
                .map(|_| if rng.gen_bool(0.5) { 1 } else { -1 })
                .collect(),
            0,
        ),
        StreamKind::BiasedWalk { mu } => {
            let p_up = (1.0 + mu) / 2.0;
            (
                (0..n)
                    .map(|_| if rng.gen_bool(p_up) { 1 } else { -1 })
                    .collect(),
                0,
            )
        }
        StreamKind::NearlyMonotone { beta } => (nearly_monotone_deltas(&mut rng, n, *beta), 0),
        StreamKind::DetFamily { m, r } => {
            let mut set: Vec<usize> = rand::seq::index::sample(&mut rng, n, *r)
                .into_iter()
                .map(|i| i + 1)
                .collect();
            set.sort_unstable();
            let seq = flip_sequence(&set, *m, n)?;
            (seq.deltas(), seq.values[0])
        }
        StreamKind::RandFamily { eps, v } => {
            let m = eps_to_m(*eps)?;
            let p = switch_probability(m, Small::from_integer(*v as i64), n)?;
            let seq = sample_switch_sequence(&mut rng, m, n, &p);
            (seq.deltas(), seq.values[0])
        }
        StreamKind::Replay { path } => {
            return Err(param_err!(
                "replay stream {path:?} must be loaded from its file"
            ));
        }
    };
    let sites = assign_sites(spec, n);
    let updates = deltas
        .into_iter()
        .zip(sites)
        .enumerate()
        .map(|(i, (delta, site))| Update {
            t: i as u64 + 1,
            site,
            delta,
        })
        .collect();
    Ok(Stream {
        spec: spec.clone(),
        updates,
        f0,
    })
}

fn assign_sites(spec: &StreamSpec, n: usize) -> Vec<usize> {
    match spec.assignment {
        SiteAssignment::RoundRobin => (0..n).map(|i| i % spec.k).collect(),
        SiteAssignment::Uniform => {
            let mut rng = rng_for(spec.seed, label::SITES, 0);
            (0..n).map(|_| rng.gen_range(0..spec.k)).collect()
        }
    }
}

/// Sawtooth: `NEARLY_MONOTONE_T0` insertions, then random insertion runs each
/// followed by a deletion burst of at most `(beta-1)/beta` of the run. A
/// deletion is only taken while `f- + 1 <= beta * (f - 1)`, so the premise
/// `f-(n) <= beta f(n)` holds at every step from `t0` on.
fn nearly_monotone_deltas<R: Rng>(rng: &mut R, n: usize, beta: f64) -> Vec<i64> {
    let warmup = n.min(NEARLY_MONOTONE_T0);
    let mut deltas = Vec::with_capacity(n);
    deltas.resize(warmup, 1);
    let (mut f, mut f_minus) = (warmup as i64, 0i64);
    while deltas.len() < n {
        let run = rng.gen_range(1..=SAWTOOTH_MAX_RUN) as usize;
        let up = run.min(n - deltas.len());
        deltas.resize(deltas.len() + up, 1);
        f += up as i64;
        let burst = libm::floor(run as f64 * (beta - 1.0) / beta) as usize;
        for _ in 0..burst {
            if deltas.len() >= n || (f_minus + 1) as f64 > beta * (f - 1) as f64 {
                break;
            }
            deltas.push(-1);
            f -= 1;
            f_minus += 1;
        }
    }
    deltas
}

/// Parses the replay format: one `t site delta` triple per line, ASCII decimal.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_replay(text: &str, k: usize, f0: i64) -> Result<Stream> {
    if k == 0 {
        return Err(param_err!("k must be at least 1"));
    }
    let mut updates = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |reason: String| Error::Format {
            line: idx + 1,
            reason,
        };
        let mut fields = line.split_whitespace();
        let mut next = |name: &str| fields.next().ok_or_else(|| fail(format!("missing {name}")));
        let t: u64 = next("t")?
            .parse()
            .map_err(|_| fail("t is not an integer".into()))?;
        let site: usize = next("site")?
            .parse()
            .map_err(|_| fail("site is not an integer".into()))?;
        let delta: i64 = next("delta")?
            .parse()
            .map_err(|_| fail("delta is not an integer".into()))?;
        if fields.next().is_some() {
            return Err(fail("expected exactly three fields".into()));
        }
        if t != updates.len() as u64 + 1 {
            return Err(fail(format!(
                "expected t = {}, found {t}",
                updates.len() + 1
            )));
        }
        if site >= k {
            return Err(fail(format!("site {site} out of range for k = {k}")));
        }
        updates.push(Update { t, site, delta });
    }
    let spec = StreamSpec::new(
        StreamKind::Replay {
            path: String::new(),
        },
        updates.len(),
        k,
        0,
    );
    Ok(Stream { spec, updates, f0 })
}

/// Writes a stream in the replay format.
pub fn format_replay(stream: &Stream) -> String {
    let mut out = String::with_capacity(stream.len() * 8);
    for u in &stream.updates {
        out.push_str(&format!("{} {} {}\n", u.t, u.site, u.delta));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn spec(kind: StreamKind, n: usize, k: usize, seed: u64) -> StreamSpec {
        StreamSpec::new(kind, n, k, seed)
    }

    #[test]
    fn monotone_stream_counts_up() {
        let s = make_generator(&spec(StreamKind::Monotone, 3, 1, 0)).unwrap();
        assert_eq!(s.deltas(), vec![1, 1, 1]);
        assert_eq!(prefix_values(&s), vec![1, 2, 3]);
    }

    #[test]
    fn biased_walk_with_full_drift_is_monotone() {
        let s = make_generator(&spec(StreamKind::BiasedWalk { mu: 1.0 }, 5, 2, 9)).unwrap();
        assert_eq!(s.deltas(), vec![1; 5]);
    }

    #[test]
    fn prefix_values_examples() {
        assert_eq!(prefix_values_from(0, [1, -1, 1]), vec![1, 0, 1]);
        assert!(prefix_values_from(0, []).is_empty());
        assert_eq!(prefix_values_from(2, [1, 1, -1]), vec![3, 4, 3]);
    }

    #[test]
    fn round_robin_and_uniform_sites_stay_in_range() {
        let rr = make_generator(&spec(StreamKind::UnbiasedWalk, 10, 3, 1)).unwrap();
        assert_eq!(
            rr.updates.iter().map(|u| u.site).collect::<Vec<_>>(),
            vec![0, 1, 2, 0, 1, 2, 0, 1, 2, 0]
        );
        let un = make_generator(
            &spec(StreamKind::UnbiasedWalk, 500, 3, 1).with_assignment(SiteAssignment::Uniform),
        )
        .unwrap();
        assert!(un.updates.iter().all(|u| u.site < 3));
        assert!((0..3).all(|s| un.updates.iter().any(|u| u.site == s)));
        un.validate().unwrap();
    }

    #[test]
    fn generators_are_seed_deterministic() {
        let a = make_generator(&spec(StreamKind::UnbiasedWalk, 200, 2, 42)).unwrap();
        let b = make_generator(&spec(StreamKind::UnbiasedWalk, 200, 2, 42)).unwrap();
        let c = make_generator(&spec(StreamKind::UnbiasedWalk, 200, 2, 43)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.deltas(), c.deltas());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(make_generator(&spec(StreamKind::Monotone, 0, 1, 0)).is_err());
        assert!(make_generator(&spec(StreamKind::Monotone, 5, 0, 0)).is_err());
        assert!(make_generator(&spec(StreamKind::BiasedWalk { mu: 0.0 }, 5, 1, 0)).is_err());
        assert!(make_generator(&spec(StreamKind::BiasedWalk { mu: 1.5 }, 5, 1, 0)).is_err());
        assert!(make_generator(&spec(StreamKind::NearlyMonotone { beta: 0.5 }, 5, 1, 0)).is_err());
        assert!(make_generator(&spec(StreamKind::DetFamily { m: 2, r: 3 }, 8, 1, 0)).is_err());
        assert!(make_generator(&spec(StreamKind::Replay { path: "x".into() }, 5, 1, 0)).is_err());
    }

    #[test]
    fn nearly_monotone_premise_holds_after_t0() {
        for beta in [1.0, 1.5, 2.0, 4.0] {
            for seed in 0..5 {
                let s = make_generator(&spec(StreamKind::NearlyMonotone { beta }, 3000, 1, seed))
                    .unwrap();
                let (mut f, mut f_minus) = (0i64, 0i64);
                for (i, d) in s.deltas().into_iter().enumerate() {
                    f += d;
                    if d < 0 {
                        f_minus -= d;
                    }
                    if i + 1 >= NEARLY_MONOTONE_T0 {
                        assert!(
                            f_minus as f64 <= beta * f as f64,
                            "beta {beta} seed {seed} t {}",
                            i + 1
                        );
                    }
                }
                if beta > 1.0 {
                    assert!(f_minus > 0, "sawtooth should delete for beta {beta}");
                } else {
                    assert_eq!(f_minus, 0);
                }
            }
        }
    }

    #[test]
    fn family_streams_start_at_m() {
        let s = make_generator(&spec(StreamKind::DetFamily { m: 4, r: 6 }, 64, 2, 3)).unwrap();
        assert_eq!(s.f0, 4);
        let values = prefix_values(&s);
        assert!(values.iter().all(|&v| v == 4 || v == 7));
        assert_eq!(s.deltas().iter().filter(|&&d| d != 0).count(), 6);
        let eps = Eps::reciprocal(4).unwrap();
        let r = make_generator(&spec(StreamKind::RandFamily { eps, v: 24 }, 400, 2, 3)).unwrap();
        assert!(r.f0 == 4 || r.f0 == 7);
        assert!(prefix_values(&r).iter().all(|&v| v == 4 || v == 7));
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_large_update(3, 1).unwrap(), vec![1, 1, 1]);
        assert_eq!(split_large_update(-2, 2).unwrap(), vec![-1, -1]);
        assert_eq!(
            prefix_values_from(2, split_large_update(-2, 2).unwrap()),
            vec![1, 0]
        );
        assert!(split_large_update(1, 0).is_err());
        assert!(split_large_update(0, 0).is_err());
        assert!(split_large_update(-1, 4).is_err());

        let added = split_variability(3, 1);
        assert_eq!(added, BigRational::new(13.into(), 12.into()));
        assert_eq!(
            split_positive_bound(3, 1).unwrap(),
            BigRational::new(17.into(), 8.into())
        );
        assert!(added <= split_positive_bound(3, 1).unwrap());
        assert_eq!(
            split_variability(2, 0),
            BigRational::new(3.into(), 2.into())
        );
    }

    #[test]
    fn replay_round_trip_and_errors() {
        let s = make_generator(&spec(StreamKind::UnbiasedWalk, 20, 3, 5)).unwrap();
        let text = format_replay(&s);
        let back = parse_replay(&text, 3, 0).unwrap();
        assert_eq!(back.updates, s.updates);

        let with_comments = "# header\n1 0 1\n\n2 1 -3\n";
        assert_eq!(
            parse_replay(with_comments, 2, 0).unwrap().deltas(),
            vec![1, -3]
        );
        assert!(matches!(
            parse_replay("1 0 1\n3 0 1\n", 1, 0),
            Err(Error::Format { line: 2, .. })
        ));
        assert!(matches!(
            parse_replay("1 5 1\n", 2, 0),
            Err(Error::Format { line: 1, .. })
        ));
        assert!(matches!(
            parse_replay("1 0\n", 1, 0),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            parse_replay("1 0 x\n", 1, 0),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            parse_replay("1 0 1 2\n", 1, 0),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn unit_expansion() {
        let s = Stream::from_deltas(&[0, 3, -2, 1], 2, 0);
        assert_eq!(s.unit_deltas(), vec![1, 1, 1, -1, -1, 1]);
    }
}
