//! One site tracking an arbitrary integer value: send `f` whenever
//! `|f - f_hat| > eps |f|`.

use alloc::vec::Vec;

use num_rational::{BigRational, Ratio};

use crate::rational::{Eps, ExactSum};
use crate::variability::variability_increment;

type R = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingleSiteState {
    pub f: i64,
    pub f_hat: i64,
    pub eps: Eps,
    pub messages: u64,
}

impl SingleSiteState {
    /// Starts with `f = f_hat = f0`.
    pub fn new(eps: Eps, f0: i64) -> Self {
        Self {
            f: f0,
            f_hat: f0,
            eps,
            messages: 0,
        }
    }

    /// `|f - f_hat| / |f|`, undefined at `f = 0`.
    pub fn phi(&self) -> Option<R> {
        phi(self.f, self.f_hat)
    }
}

fn phi(f: i64, f_hat: i64) -> Option<R> {
    (f != 0).then(|| R::new((f as i128 - f_hat as i128).abs(), (f as i128).abs()))
}

/// Moves to `new_f`; returns whether `f` was sent.
pub fn single_site_step(state: &mut SingleSiteState, new_f: i64) -> bool {
    state.f = new_f;
    let err = (new_f as i128 - state.f_hat as i128).unsigned_abs() as i128;
    let send = err * state.eps.denom() as i128 > (new_f as i128).abs() * state.eps.numer() as i128;
    if send {
        state.f_hat = new_f;
        state.messages += 1;
    }
    send
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingleSiteRow {
    pub t: u64,
    pub f: i64,
    pub f_hat: i64,
    pub sent: bool,
    /// Potential before the send decision.
    pub phi_pre: Option<R>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingleSiteRun {
    pub eps: Eps,
    pub f0: i64,
    pub rows: Vec<SingleSiteRow>,
    pub messages: u64,
}

impl SingleSiteRun {
    pub fn correctness_violations(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| {
                let err = (r.f as i128 - r.f_hat as i128).abs();
                err * self.eps.denom() as i128 > (r.f as i128).abs() * self.eps.numer() as i128
            })
            .count()
    }

    /// Steps inside sign-constant nonzero stretches where
    /// `Phi_pre(n) <= Phi(n-1) + (1 + Phi(n-1)) |f'(n)| / |f(n)|` fails.
    pub fn recurrence_violations(&self) -> Vec<u64> {
        let mut out = Vec::new();
        let (mut f_prev, mut hat_prev) = (self.f0, self.f0);
        for row in &self.rows {
            if f_prev != 0 && row.f != 0 && (f_prev > 0) == (row.f > 0) {
                let before = phi(f_prev, hat_prev).expect("nonzero");
                let step = R::new(
                    (row.f as i128 - f_prev as i128).abs(),
                    (row.f as i128).abs(),
                );
                let bound = before + (R::from_integer(1) + before) * step;
                if row.phi_pre.expect("nonzero") > bound {
                    out.push(row.t);
                }
            }
            f_prev = row.f;
            hat_prev = row.f_hat;
        }
        out
    }
}

pub fn run_single_site(values: &[i64], eps: Eps, f0: i64) -> SingleSiteRun {
    let mut state = SingleSiteState::new(eps, f0);
    let rows = values
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let phi_pre = phi(f, state.f_hat);
            let sent = single_site_step(&mut state, f);
            SingleSiteRow {
                t: i as u64 + 1,
                f,
                f_hat: state.f_hat,
                sent,
                phi_pre,
            }
        })
        .collect();
    SingleSiteRun {
        eps,
        f0,
        rows,
        messages: state.messages,
    }
}

/// Steps where `f(t) = 0` or `f` changes sign.
pub fn zero_or_sign_changes(f0: i64, values: &[i64]) -> u64 {
    let mut prev = f0;
    values
        .iter()
        .filter(|&&f| {
            let hit = f == 0 || (prev as i128) * (f as i128) < 0;
            prev = f;
            hit
        })
        .count() as u64
}

/// `(1+eps)/eps * v + Z + 1`.
pub fn message_bound(values: &[i64], eps: Eps, f0: i64) -> BigRational {
    let mut prev = f0;
    let v: ExactSum = values
        .iter()
        .map(|&f| {
            let inc = variability_increment(f, f - prev);
            prev = f;
            inc
        })
        .collect();
    let e = BigRational::new(eps.numer().into(), eps.denom().into());
    let one = BigRational::from_integer(1.into());
    let z = BigRational::from_integer((zero_or_sign_changes(f0, values) as i64).into());
    (&one + &e) / &e * v.value() + z + one
}

/// Convenience: does the run respect [`message_bound`]?
pub fn within_message_bound(run: &SingleSiteRun, values: &[i64]) -> bool {
    let bound = message_bound(values, run.eps, run.f0);
    BigRational::from_integer((run.messages as i64).into()) <= bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn eps(n: i64, d: i64) -> Eps {
        Eps::new(n, d).unwrap()
    }

    #[test]
    fn step_examples() {
        let mut s = SingleSiteState {
            f: 10,
            f_hat: 10,
            eps: eps(1, 10),
            messages: 0,
        };
        assert!(!single_site_step(&mut s, 10));
        let mut s = SingleSiteState {
            f: 8,
            f_hat: 8,
            eps: eps(1, 10),
            messages: 0,
        };
        assert!(single_site_step(&mut s, 10));
        assert_eq!(s.f_hat, 10);
        let mut s = SingleSiteState {
            f: 1,
            f_hat: 1,
            eps: eps(1, 10),
            messages: 0,
        };
        assert!(single_site_step(&mut s, 0));
        assert_eq!(s.f_hat, 0);
    }

    #[test]
    fn constant_sequence_sends_once() {
        let run = run_single_site(&[7; 20], eps(1, 4), 0);
        assert_eq!(run.messages, 1);
        assert!(run.rows[0].sent);
    }

    #[test]
    fn monotone_doubling_pattern() {
        let values: Vec<i64> = (1..=20).collect();
        let half = run_single_site(&values, eps(1, 2), 0);
        let sent: Vec<i64> = half.rows.iter().filter(|r| r.sent).map(|r| r.f).collect();
        assert_eq!(sent, vec![1, 3, 7, 15]);
        // At eps = 1 the error |f - 0| never exceeds |f|.
        assert_eq!(run_single_site(&values, eps(1, 1), 0).messages, 0);
    }

    #[test]
    fn bound_and_recurrence_on_a_mixed_walk() {
        let values = vec![1, 2, 3, 2, 1, 0, -1, -2, -4, -3, 5, 6, 7, 8, 0, 0, 1];
        for e in [eps(1, 1), eps(1, 2), eps(1, 10)] {
            let run = run_single_site(&values, e, 0);
            assert_eq!(run.correctness_violations(), 0);
            assert!(run.recurrence_violations().is_empty());
            assert!(within_message_bound(&run, &values));
        }
        // three zeros and the -3 -> 5 crossing
        assert_eq!(zero_or_sign_changes(0, &values), 4);
    }
}
