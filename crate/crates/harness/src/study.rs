//! Monte Carlo variability studies over a grid of stream lengths.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use vartrack_core::rng::{derive_seed, label};
use vartrack_core::stream::{make_generator, prefix_values, StreamKind, StreamSpec};
use vartrack_core::variability::{
    variability_bound, variability_increment, variability_total, BoundKind, BoundParams,
};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StudyKind {
    Monotone,
    Unbiased,
    Biased { mu: f64 },
    NearlyMonotone { beta: f64 },
}

impl StudyKind {
    fn stream_kind(self) -> StreamKind {
        match self {
            StudyKind::Monotone => StreamKind::Monotone,
            StudyKind::Unbiased => StreamKind::UnbiasedWalk,
            StudyKind::Biased { mu } => StreamKind::BiasedWalk { mu },
            StudyKind::NearlyMonotone { beta } => StreamKind::NearlyMonotone { beta },
        }
    }

    /// Growth function with `c = 1`: `ln n`, `sqrt(n) ln n`, `ln(n) / mu` or `beta ln(beta f(n))`.
    fn growth(self, n: usize, f_n: i64) -> Result<f64> {
        let base = BoundParams {
            n: n as u64,
            ..Default::default()
        };
        Ok(match self {
            StudyKind::Monotone => (n as f64).ln(),
            StudyKind::Unbiased => variability_bound(BoundKind::Unbiased, &base, 1.0)?,
            StudyKind::Biased { mu } => variability_bound(
                BoundKind::Biased,
                &BoundParams {
                    mu: Some(mu),
                    ..base
                },
                1.0,
            )?,
            StudyKind::NearlyMonotone { beta } => variability_bound(
                BoundKind::NearlyMonotone,
                &BoundParams {
                    beta: Some(beta),
                    f_n: Some(f_n as f64),
                    ..base
                },
                1.0,
            )?,
        })
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StudyKind::Monotone => write!(f, "monotone"),
            StudyKind::Unbiased => write!(f, "unbiased"),
            StudyKind::Biased { mu } => write!(f, "biased({mu})"),
            StudyKind::NearlyMonotone { beta } => write!(f, "nearly_monotone({beta})"),
        }
    }
}

/// Parses `monotone`, `unbiased`, `biased(0.5)` or `nearly_monotone(2)`.
impl FromStr for StudyKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let arg = |prefix: &str| -> Option<Result<f64>> {
            let inner = s
                .strip_prefix(prefix)?
                .strip_prefix('(')?
                .strip_suffix(')')?;
            Some(
                inner
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| HarnessError::Config(format!("bad parameter in `{s}`: {e}"))),
            )
        };
        match s {
            "monotone" => return Ok(StudyKind::Monotone),
            "unbiased" => return Ok(StudyKind::Unbiased),
            _ => {}
        }
        if let Some(mu) = arg("biased") {
            let mu = mu?;
            if !(mu > 0.0 && mu <= 1.0) {
                return Err(HarnessError::Config(format!(
                    "mu must lie in (0, 1], got {mu}"
                )));
            }
            return Ok(StudyKind::Biased { mu });
        }
        if let Some(beta) = arg("nearly_monotone") {
            let beta = beta?;
            if !(beta >= 1.0 && beta.is_finite()) {
                return Err(HarnessError::Config(format!(
                    "beta must be >= 1, got {beta}"
                )));
            }
            return Ok(StudyKind::NearlyMonotone { beta });
        }
        Err(HarnessError::Config(format!("unknown study kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub n: usize,
    pub trials: usize,
    pub mean_v: f64,
    pub std_v: f64,
    /// Mean growth function value at `c = 1`.
    pub bound: f64,
    /// `mean_v / bound`, the per-n estimate of `c`.
    pub ratio: f64,
    /// Largest per-trial `v / growth`.
    pub max_trial_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyTable {
    pub kind: StudyKind,
    pub seed: u64,
    pub rows: Vec<StudyRow>,
    /// Least-squares `c` for `mean_v ~ c * bound` over the grid.
    pub fitted_c: f64,
    /// `max ratio / min ratio` across the grid.
    pub ratio_spread: f64,
    /// `ratio_spread <= 2`.
    pub stable: bool,
    /// Monotone only: every trial's `v(n)` equals `H_n` exactly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub harmonic_exact: Option<bool>,
}

pub const STABILITY_FACTOR: f64 = 2.0;

fn harmonic(n: usize) -> num_rational::BigRational {
    (1..=n as i64).fold(
        num_rational::BigRational::from_integer(0.into()),
        |acc, i| acc + num_rational::BigRational::new(1.into(), i.into()),
    )
}

/// `c = sum(y g) / sum(g^2)`.
pub fn least_squares_c(points: &[(f64, f64)]) -> f64 {
    let num: f64 = points.iter().map(|(g, y)| g * y).sum();
    let den: f64 = points.iter().map(|(g, _)| g * g).sum();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn variability_study(
    kind: StudyKind,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<StudyTable> {
    if trials == 0 || n_grid.is_empty() || n_grid.contains(&0) {
        return Err(HarnessError::Config(
            "a study needs trials >= 1 and a grid of positive n".into(),
        ));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    let mut harmonic_exact = matches!(kind, StudyKind::Monotone).then_some(true);
    for (gi, &n) in n_grid.iter().enumerate() {
        let grid_seed = derive_seed(seed, label::TRIAL, gi as u64);
        let h_n = matches!(kind, StudyKind::Monotone).then(|| harmonic(n));
        let samples: Vec<(f64, f64, bool)> = (0..trials)
            .into_par_iter()
            .map(|i| -> Result<(f64, f64, bool)> {
                let spec = StreamSpec::new(
                    kind.stream_kind(),
                    n,
                    1,
                    derive_seed(grid_seed, label::TRIAL, i as u64),
                );
                let stream = make_generator(&spec)?;
                let values = prefix_values(&stream);
                let mut prev = stream.f0;
                let v: f64 = values
                    .iter()
                    .map(|&f| {
                        let inc = variability_increment(f, f - prev);
                        prev = f;
                        *inc.numer() as f64 / *inc.denom() as f64
                    })
                    .sum();
                let f_n = values.last().copied().unwrap_or(stream.f0);
                let exact = h_n
                    .as_ref()
                    .is_none_or(|h| variability_total(stream.f0, &stream.deltas()) == *h);
                Ok((v, kind.growth(n, f_n.max(1))?, exact))
            })
            .collect::<Result<_>>()?;
        let t = samples.len() as f64;
        let mean_v = samples.iter().map(|s| s.0).sum::<f64>() / t;
        let std_v = if samples.len() > 1 {
            (samples.iter().map(|s| (s.0 - mean_v).powi(2)).sum::<f64>() / (t - 1.0)).sqrt()
        } else {
            0.0
        };
        let bound = samples.iter().map(|s| s.1).sum::<f64>() / t;
        let max_trial_ratio = samples.iter().map(|s| s.0 / s.1).fold(0.0, f64::max);
        if let Some(h) = harmonic_exact.as_mut() {
            *h &= samples.iter().all(|s| s.2);
        }
        rows.push(StudyRow {
            n,
            trials,
            mean_v,
            std_v,
            bound,
            ratio: mean_v / bound,
            max_trial_ratio,
        });
    }
    let fitted_c = least_squares_c(&rows.iter().map(|r| (r.bound, r.mean_v)).collect::<Vec<_>>());
    let hi = rows.iter().map(|r| r.ratio).fold(f64::MIN, f64::max);
    let lo = rows.iter().map(|r| r.ratio).fold(f64::MAX, f64::min);
    let ratio_spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    Ok(StudyTable {
        kind,
        seed,
        rows,
        fitted_c,
        ratio_spread,
        stable: ratio_spread <= STABILITY_FACTOR,
        harmonic_exact,
    })
}
