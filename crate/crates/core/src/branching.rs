//! Critical binary branching: exact law of the total progeny and a
//! simulator of the population-count chain.
//!
//! Each particle gives birth and dies at the same per-capita rate. Starting
//! from one particle the process goes extinct almost surely, but the total
//! progeny has infinite mean, so the simulator works against an event budget.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Largest `k` whose pmf is evaluated from exact integers.
pub const EXACT_PMF_MAX_K: u64 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BranchingError {
    #[error("progeny size must be at least 1")]
    ZeroProgeny,
    #[error("rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("event budget of {0} exceeded before extinction")]
    BudgetExceeded(u64),
}

/// Result of one run of the branching process until extinction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgenyOutcome {
    /// Initial particle plus the number of births.
    pub progeny: u64,
    /// Absorption time at zero.
    pub extinction_time: f64,
}

/// Catalan number `C_m` for `m <= 63`, via `C_m = C_{m-1} 2(2m-1)/(m+1)`.
fn catalan_u128(m: u64) -> u128 {
    debug_assert!(m < EXACT_PMF_MAX_K);
    let mut c: u128 = 1;
    for i in 1..=m as u128 {
        c = c * 2 * (2 * i - 1) / (i + 1);
    }
    c
}

/// `P(J = k) = 2^{-(2k-1)} (1/k) binom(2(k-1), k-1) = C_{k-1} / 2^{2k-1}`,
/// the total progeny law of the critical binary branching process.
pub fn total_progeny_pmf(k: u64) -> Result<f64, BranchingError> {
    if k == 0 {
        return Err(BranchingError::ZeroProgeny);
    }
    if k <= EXACT_PMF_MAX_K {
        let c = catalan_u128(k - 1) as f64;
        // Scaling by a power of two is exact.
        return Ok(c * 2f64.powi(-(2 * k as i32 - 1)));
    }
    let kf = k as f64;
    let ln = -(2.0 * kf - 1.0) * std::f64::consts::LN_2 - kf.ln() + ln_gamma(2.0 * kf - 1.0)
        - 2.0 * ln_gamma(kf);
    Ok(ln.exp())
}

/// `P(J > k)`, computed as one minus the partial sum.
pub fn total_progeny_tail(k: u64) -> f64 {
    let head: f64 = (1..=k).map(|j| total_progeny_pmf(j).unwrap()).sum();
    (1.0 - head).max(0.0)
}

/// Simulates the count chain from one particle until extinction, with birth
/// and death each at per-capita rate `rate`.
///
/// `max_events` bounds the total number of births and deaths; runs that hit
/// it return [`BranchingError::BudgetExceeded`]. Such runs always have
/// progeny above `max_events / 2`, so they never affect the law on smaller
/// sizes.
pub fn simulate_total_progeny<R: Rng + ?Sized>(
    rate: f64,
    max_events: u64,
    rng: &mut R,
) -> Result<ProgenyOutcome, BranchingError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(BranchingError::InvalidRate(rate));
    }
    let mut alive: u64 = 1;
    let mut births: u64 = 0;
    let mut events: u64 = 0;
    let mut t = 0.0;
    while alive > 0 {
        if events >= max_events {
            return Err(BranchingError::BudgetExceeded(max_events));
        }
        let e: f64 = Exp1.sample(rng);
        t += e / (2.0 * rate * alive as f64);
        if rng.random::<bool>() {
            alive += 1;
            births += 1;
        } else {
            alive -= 1;
        }
        events += 1;
    }
    Ok(ProgenyOutcome {
        progeny: 1 + births,
        extinction_time: t,
    })
}
