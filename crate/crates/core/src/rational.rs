//! Exact arithmetic helpers.
//!
//! Small rationals (`Ratio<i64>` / `Ratio<i128>`) carry per-step quantities;
//! [`ExactSum`] accumulates long sums of small rationals without reducing at
//! every step, which keeps harmonic-type sums over 10^4 terms cheap.

use alloc::format;
use alloc::string::String;
use core::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, Zero};

use crate::error::{param_err, Error, Result};

/// Coordinator-side estimates: exact rationals wide enough for `1/p` terms.
pub type Q = Ratio<i128>;

/// Per-step increments and small parameters.
pub type Small = Ratio<i64>;

/// Relative error parameter, an exact rational in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Eps(Small);

impl Eps {
    pub fn new(numer: i64, denom: i64) -> Result<Self> {
        if denom == 0 {
            return Err(param_err!("epsilon denominator is zero"));
        }
        Self::from_ratio(Small::new(numer, denom))
    }

    pub fn from_ratio(value: Small) -> Result<Self> {
        if value <= Small::zero() || value > Small::one() {
            return Err(param_err!("epsilon must lie in (0, 1], got {value}"));
        }
        Ok(Eps(value))
    }

    /// `1/m` for integer `m >= 1`.
    pub fn reciprocal(m: i64) -> Result<Self> {
        if m < 1 {
            return Err(param_err!("epsilon = 1/m needs m >= 1, got {m}"));
        }
        Self::new(1, m)
    }

    pub fn value(self) -> Small {
        self.0
    }

    pub fn numer(self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(self) -> i64 {
        *self.0.denom()
    }

    pub fn as_q(self) -> Q {
        Q::new(self.numer() as i128, self.denom() as i128)
    }

    pub fn to_f64(self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    /// `|error| <= eps * |scale|`, decided exactly.
    pub fn within(self, error: Q, scale: Q) -> bool {
        error.abs() * self.denom() as i128 <= scale.abs() * self.numer() as i128
    }

    /// `|lhs| >= eps * scale` for integer operands, decided exactly.
    pub fn int_at_least(self, lhs: i64, scale: i128) -> bool {
        (lhs.unsigned_abs() as i128) * self.denom() as i128 >= scale * self.numer() as i128
    }
}

impl core::fmt::Display for Eps {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}

impl FromStr for Eps {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let value = parse_small(s)?;
        Eps::from_ratio(value)
    }
}

impl serde::Serialize for Eps {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> core::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Eps {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> core::result::Result<Self, D::Error> {
        let s: String = serde::Deserialize::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses `"p/q"`, `"p"` or a short decimal such as `"0.25"`.
pub fn parse_small(s: &str) -> Result<Small> {
    let s = s.trim();
    let bad = || Error::Format {
        line: 0,
        reason: format!("not a rational: {s:?}"),
    };
    if let Some((p, q)) = s.split_once('/') {
        let p: i64 = p.trim().parse().map_err(|_| bad())?;
        let q: i64 = q.trim().parse().map_err(|_| bad())?;
        if q == 0 {
            return Err(bad());
        }
        return Ok(Small::new(p, q));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || frac.len() > 12 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = whole.starts_with('-');
        let whole: i64 = if whole.is_empty() || whole == "-" {
            0
        } else {
            whole.parse().map_err(|_| bad())?
        };
        let scale = 10i64.pow(frac.len() as u32);
        let frac: i64 = frac.parse().map_err(|_| bad())?;
        let mag = whole.abs() * scale + frac;
        return Ok(Small::new(if negative { -mag } else { mag }, scale));
    }
    let p: i64 = s.parse().map_err(|_| bad())?;
    Ok(Small::from_integer(p))
}

/// Formats a rational as `"p/q"`; the denominator is always written.
pub fn fraction_string<T>(value: &Ratio<T>) -> String
where
    T: Clone + Integer + core::fmt::Display,
{
    format!("{}/{}", value.numer(), value.denom())
}

/// `2^r` as a wide integer.
pub fn pow2(r: u32) -> i128 {
    1i128 << r
}

/// `ceil(2^(r-1))`: 1 for `r = 0`, else `2^(r-1)`.
pub fn ceil_half_pow2(r: u32) -> i128 {
    if r == 0 {
        1
    } else {
        1i128 << (r - 1)
    }
}

pub fn small_to_q(value: Small) -> Q {
    Q::new(*value.numer() as i128, *value.denom() as i128)
}

pub fn q_to_f64(value: &Q) -> f64 {
    *value.numer() as f64 / *value.denom() as f64
}

pub fn big_to_f64(value: &BigRational) -> f64 {
    // Scale down both parts so the quotient survives f64 conversion.
    let shift = value
        .numer()
        .bits()
        .max(value.denom().bits())
        .saturating_sub(900);
    let n: BigInt = value.numer() >> shift;
    let d: BigInt = value.denom() >> shift;
    bigint_to_f64(&n) / bigint_to_f64(&d)
}

fn bigint_to_f64(value: &BigInt) -> f64 {
    let (sign, digits) = value.to_u64_digits();
    let mut acc = 0.0f64;
    for digit in digits.iter().rev() {
        acc = acc * 18_446_744_073_709_551_616.0 + *digit as f64;
    }
    if sign == num_bigint::Sign::Minus {
        -acc
    } else {
        acc
    }
}

pub fn small_to_big(value: Small) -> BigRational {
    BigRational::new(BigInt::from(*value.numer()), BigInt::from(*value.denom()))
}

pub fn q_to_big(value: &Q) -> BigRational {
    BigRational::new(BigInt::from(*value.numer()), BigInt::from(*value.denom()))
}

/// Running exact sum of small rationals.
///
/// The denominator is kept at the lcm of all denominators seen so far, so an
/// addition costs one big-by-small multiply; reduction happens on [`ExactSum::value`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactSum {
    numer: BigInt,
    denom: BigInt,
}

impl Default for ExactSum {
    fn default() -> Self {
        Self::new()
    }
}

impl ExactSum {
    pub fn new() -> Self {
        Self {
            numer: BigInt::zero(),
            denom: BigInt::one(),
        }
    }

    pub fn add(&mut self, q: Small) {
        if q.is_zero() {
            return;
        }
        let b = *q.denom();
        let rem = i64::try_from(&self.denom % b).expect("remainder below an i64 modulus");
        let g = rem.gcd(&b);
        let scale = b / g;
        let part: BigInt = &self.denom / g;
        if scale != 1 {
            self.numer *= scale;
            self.denom *= scale;
        }
        self.numer += part * *q.numer();
    }

    pub fn is_zero(&self) -> bool {
        self.numer.is_zero()
    }

    pub fn value(&self) -> BigRational {
        BigRational::new(self.numer.clone(), self.denom.clone())
    }

    pub fn to_f64(&self) -> f64 {
        big_to_f64(&BigRational::new_raw(
            self.numer.clone(),
            self.denom.clone(),
        ))
    }
}

impl Extend<Small> for ExactSum {
    fn extend<I: IntoIterator<Item = Small>>(&mut self, iter: I) {
        for q in iter {
            self.add(q);
        }
    }
}

impl FromIterator<Small> for ExactSum {
    fn from_iter<I: IntoIterator<Item = Small>>(iter: I) -> Self {
        let mut sum = ExactSum::new();
        sum.extend(iter);
        sum
    }
}

/// Largest `a` with `a^2 <= n`.
pub fn isqrt_u128(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = libm::sqrt(n as f64) as u128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

/// Absolute value helper for signed ratios.
pub fn abs_q(q: &Q) -> Q {
    q.abs()
}
