//! f-variability: `v(n) = sum_t min{1, |f'(t)/f(t)|}` with `|f'/f| = 1` at `f = 0`.

use alloc::string::String;
use alloc::vec::Vec;
use core::str::FromStr;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::rational::{fraction_string, ExactSum, Small};
use crate::stream::Stream;

/// `v'(t)` for `f(t) = f_t` reached by a step of `delta_t`.
pub fn variability_increment(f_t: i64, delta_t: i64) -> Small {
    if delta_t == 0 {
        return Small::zero();
    }
    let (num, den) = (delta_t.unsigned_abs(), f_t.unsigned_abs());
    if den == 0 || num >= den {
        Small::from_integer(1)
    } else {
        Small::new(num as i64, den as i64)
    }
}

/// `|delta_t / f_t|` without the clamp at 1 (still 1 at `f_t = 0`).
pub fn raw_increment(f_t: i64, delta_t: i64) -> Small {
    if delta_t == 0 {
        return Small::zero();
    }
    if f_t == 0 {
        return Small::from_integer(1);
    }
    Small::new(delta_t.unsigned_abs() as i64, f_t.unsigned_abs() as i64)
}

/// Per-step increments of a stream. Cumulative values are exact but produced
/// on demand: a reduced prefix sum per step would dominate the runtime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariabilitySeries {
    pub increments: Vec<Small>,
}

impl VariabilitySeries {
    pub fn from_values(f0: i64, values: &[i64]) -> Self {
        let mut prev = f0;
        let increments = values
            .iter()
            .map(|&f| {
                let inc = variability_increment(f, f - prev);
                prev = f;
                inc
            })
            .collect();
        Self { increments }
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// `v(n)`.
    pub fn total(&self) -> BigRational {
        self.increments
            .iter()
            .copied()
            .collect::<ExactSum>()
            .value()
    }

    /// `v(t)` for `1 <= t <= n`.
    pub fn at(&self, t: usize) -> Result<BigRational> {
        if t == 0 || t > self.len() {
            return Err(Error::OutOfRange {
                index: t,
                len: self.len(),
            });
        }
        Ok(self.increments[..t]
            .iter()
            .copied()
            .collect::<ExactSum>()
            .value())
    }

    /// `sum_{a < t <= b} v'(t)`, the variability accrued over `(a, b]`.
    pub fn range_sum(&self, a: usize, b: usize) -> Result<BigRational> {
        if a > b || b > self.len() {
            return Err(Error::OutOfRange {
                index: b,
                len: self.len(),
            });
        }
        Ok(self.increments[a..b]
            .iter()
            .copied()
            .collect::<ExactSum>()
            .value())
    }

    /// Exact running values `v(1), ..., v(n)`.
    pub fn cumulative(&self) -> impl Iterator<Item = BigRational> + '_ {
        let mut sum = ExactSum::new();
        self.increments.iter().map(move |&inc| {
            sum.add(inc);
            sum.value()
        })
    }

    pub fn cumulative_f64(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.increments
            .iter()
            .map(|inc| {
                acc += *inc.numer() as f64 / *inc.denom() as f64;
                acc
            })
            .collect()
    }

    /// CSV rows `(t, v_increment, v_cumulative)` with exact `p/q` strings.
    pub fn csv_rows(&self) -> impl Iterator<Item = (usize, String, String)> + '_ {
        self.increments
            .iter()
            .zip(self.cumulative())
            .enumerate()
            .map(|(i, (inc, cum))| (i + 1, fraction_string(inc), fraction_string(&cum)))
    }
}

pub fn variability_series(stream: &Stream) -> VariabilitySeries {
    let mut f = stream.f0;
    let increments = stream
        .updates
        .iter()
        .map(|u| {
            f += u.delta;
            variability_increment(f, u.delta)
        })
        .collect();
    VariabilitySeries { increments }
}

/// Variability of the unit-step stream the protocols actually process.
pub fn unit_variability(stream: &Stream) -> BigRational {
    let mut f = stream.f0;
    let mut sum = ExactSum::new();
    for d in stream.unit_deltas() {
        f += d;
        sum.add(variability_increment(f, d));
    }
    sum.value()
}

pub fn variability_total(f0: i64, deltas: &[i64]) -> BigRational {
    let mut f = f0;
    deltas
        .iter()
        .map(|&d| {
            f += d;
            variability_increment(f, d)
        })
        .collect::<ExactSum>()
        .value()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Unbiased,
    Biased,
    NearlyMonotone,
}

impl FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unbiased" | "unbiased_walk" => Ok(BoundKind::Unbiased),
            "biased" | "biased_walk" => Ok(BoundKind::Biased),
            "nearly_monotone" => Ok(BoundKind::NearlyMonotone),
            other => Err(param_err!("unknown bound kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundParams {
    pub n: u64,
    pub mu: Option<f64>,
    pub beta: Option<f64>,
    pub f_n: Option<f64>,
}

/// Growth function of the expected-variability theorems, scaled by `c`.
///
/// unbiased: `c sqrt(n) ln n`; biased: `c ln(n) / mu`; nearly monotone: `c beta ln(beta f(n))`.
pub fn variability_bound(kind: BoundKind, params: &BoundParams, c: f64) -> Result<f64> {
    let n = params.n as f64;
    match kind {
        BoundKind::Unbiased => {
            if params.n == 0 {
                return Err(param_err!("unbiased bound needs n >= 1"));
            }
            Ok(c * libm::sqrt(n) * libm::log(n))
        }
        BoundKind::Biased => {
            let mu = params
                .mu
                .ok_or_else(|| param_err!("biased bound needs mu"))?;
            if params.n == 0 || !(mu > 0.0 && mu <= 1.0) {
                return Err(param_err!("biased bound needs n >= 1 and mu in (0, 1]"));
            }
            Ok(c * libm::log(n) / mu)
        }
        BoundKind::NearlyMonotone => {
            let beta = params
                .beta
                .ok_or_else(|| param_err!("nearly monotone bound needs beta"))?;
            let f_n = params
                .f_n
                .ok_or_else(|| param_err!("nearly monotone bound needs f(n)"))?;
            if beta < 1.0 || f_n <= 0.0 {
                return Err(param_err!(
                    "nearly monotone bound needs beta >= 1 and f(n) > 0"
                ));
            }
            Ok(c * beta * libm::log(beta * f_n))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::small_to_big;
    use alloc::vec;

    fn q(n: i64, d: i64) -> BigRational {
        small_to_big(Small::new(n, d))
    }

    #[test]
    fn increment_examples() {
        assert_eq!(variability_increment(0, 1), Small::from_integer(1));
        assert_eq!(variability_increment(5, 1), Small::new(1, 5));
        assert_eq!(variability_increment(2, -3), Small::from_integer(1));
        assert_eq!(variability_increment(0, 0), Small::zero());
        assert_eq!(variability_increment(-4, -1), Small::new(1, 4));
        assert_eq!(raw_increment(2, -3), Small::new(3, 2));
    }

    #[test]
    fn series_examples() {
        let s = Stream::from_deltas(&[1, 1, 1], 1, 0);
        let cum: Vec<_> = variability_series(&s).cumulative().collect();
        assert_eq!(cum, vec![q(1, 1), q(3, 2), q(11, 6)]);

        let e = Stream::from_deltas(&[3], 1, 2);
        assert_eq!(variability_series(&e).increments, vec![Small::new(3, 5)]);

        let z = Stream::from_deltas(&[0, 0, 0], 1, 0);
        assert!(variability_series(&z).cumulative().all(|c| c.is_zero()));
    }

    #[test]
    fn range_and_at_agree_with_cumulative() {
        let s = Stream::from_deltas(&[1, 1, -1, 2, -3, 0, 1], 1, 0);
        let series = variability_series(&s);
        let cum: Vec<_> = series.cumulative().collect();
        for t in 1..=series.len() {
            assert_eq!(series.at(t).unwrap(), cum[t - 1]);
        }
        assert_eq!(series.range_sum(2, 5).unwrap(), &cum[4] - &cum[1]);
        assert!(series.at(0).is_err());
        assert!(series.at(8).is_err());
        let f64s = series.cumulative_f64();
        assert!((f64s[6] - crate::rational::big_to_f64(&cum[6])).abs() < 1e-12);
    }

    #[test]
    fn csv_rows_use_fraction_strings() {
        let s = Stream::from_deltas(&[1, 1], 1, 0);
        let rows: Vec<_> = variability_series(&s).csv_rows().collect();
        assert_eq!(rows[0], (1, "1/1".into(), "1/1".into()));
        assert_eq!(rows[1], (2, "1/2".into(), "3/2".into()));
    }

    #[test]
    fn bound_examples() {
        let p = BoundParams {
            n: 10_000,
            ..Default::default()
        };
        assert!((variability_bound(BoundKind::Unbiased, &p, 1.0).unwrap() - 921.034).abs() < 0.01);
        let p = BoundParams {
            n: 10_000,
            mu: Some(0.5),
            ..Default::default()
        };
        assert!((variability_bound(BoundKind::Biased, &p, 1.0).unwrap() - 18.4207).abs() < 0.001);
        let p = BoundParams {
            beta: Some(1.0),
            f_n: Some(1024.0),
            ..Default::default()
        };
        assert!(
            (variability_bound(BoundKind::NearlyMonotone, &p, 1.0).unwrap() - 6.9315).abs() < 0.001
        );
        assert!("sideways".parse::<BoundKind>().is_err());
        assert!(variability_bound(
            BoundKind::Biased,
            &BoundParams {
                n: 10,
                ..Default::default()
            },
            1.0
        )
        .is_err());
    }

    #[test]
    fn unit_variability_of_split_stream() {
        let s = Stream::from_deltas(&[3], 1, 1);
        assert_eq!(unit_variability(&s), q(13, 12));
        assert_eq!(variability_total(0, &[1, 1, 1]), q(11, 6));
    }
}
