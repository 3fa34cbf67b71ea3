//! Kingman's coalescent with immigration.
//!
//! New singleton blocks arrive at rate `d_imm` and every pair of blocks
//! merges at rate 1, so the block count is a birth-death chain with up-rate
//! `d_imm` and down-rate `k(k-1)/2`. The chain is reversible with stationary
//! law `nu_k ∝ (2 d_imm)^k / (k! (k-1)!)`.
//!
//! Looking backwards from a stationary time, the blocks present at time zero
//! are tracked by the ancestral process: a particle system whose total size
//! is the stationary block count and in which `p` distinguished particles
//! carry types. A type's death count equals the size of the corresponding
//! block.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tail mass allowed beyond the truncation point of the stationary law.
pub const TAIL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImmigrationError {
    #[error("immigration rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("tail mass {tail:e} beyond k_max = {k_max} is not negligible")]
    TailTooLarge { k_max: u64, tail: f64 },
    #[error("block counts start at 1")]
    ZeroBlocks,
    #[error("at least one typed particle is required")]
    NoTypes,
    #[error("at least one replicate is required")]
    NoReplicates,
    #[error("event budget of {0} exceeded")]
    BudgetExceeded(u64),
}

/// Immigration rate of the coalescent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImmigrationParams {
    pub d_imm: f64,
}

impl ImmigrationParams {
    pub fn new(d_imm: f64) -> Result<Self, ImmigrationError> {
        check_rate(d_imm)?;
        Ok(ImmigrationParams { d_imm })
    }

    /// Rate `n d` used when coupling to the erosion process at scale `n`.
    pub fn scaled(n: u64, d: f64) -> Result<Self, ImmigrationError> {
        Self::new(n as f64 * d)
    }
}

fn check_rate(d_imm: f64) -> Result<(), ImmigrationError> {
    if d_imm > 0.0 && d_imm.is_finite() {
        Ok(())
    } else {
        Err(ImmigrationError::InvalidRate(d_imm))
    }
}

/// Unnormalized log weights `ln nu_k - c` for `k = 1..=k_max`, shifted so the
/// largest is zero, plus an upper bound on the relative mass beyond `k_max`.
fn log_weights(d_imm: f64, k_max: u64) -> (Vec<f64>, f64) {
    let l2d = (2.0 * d_imm).ln();
    let mut lw = Vec::with_capacity(k_max as usize);
    let mut cur = l2d;
    lw.push(cur);
    for k in 1..k_max {
        let kf = k as f64;
        cur += l2d - (kf * (kf + 1.0)).ln();
        lw.push(cur);
    }
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for w in &mut lw {
        *w -= max;
    }
    // Ratios nu_{k+1}/nu_k = 2d/(k(k+1)) decrease in k, so the tail is
    // dominated by a geometric series once the first ratio is below one.
    let kf = k_max as f64;
    let r = 2.0 * d_imm / (kf * (kf + 1.0));
    let tail = if r < 1.0 {
        lw[k_max as usize - 1].exp() * r / (1.0 - r)
    } else {
        f64::INFINITY
    };
    (lw, tail)
}

/// Stationary law of the block count on `{1, …, k_max}`; entry `k - 1`
/// holds `nu_k`.
///
/// Fails if the mass beyond `k_max` may exceed [`TAIL_TOLERANCE`].
pub fn block_count_stationary_pmf(d_imm: f64, k_max: u64) -> Result<Vec<f64>, ImmigrationError> {
    check_rate(d_imm)?;
    if k_max == 0 {
        return Err(ImmigrationError::ZeroBlocks);
    }
    let (lw, tail) = log_weights(d_imm, k_max);
    let w: Vec<f64> = lw.iter().map(|x| x.exp()).collect();
    let z: f64 = w.iter().sum();
    let rel_tail = tail / z;
    if rel_tail.is_nan() || rel_tail >= TAIL_TOLERANCE {
        return Err(ImmigrationError::TailTooLarge {
            k_max,
            tail: rel_tail,
        });
    }
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// Smallest `k_max` for which [`block_count_stationary_pmf`] succeeds.
pub fn default_k_max(d_imm: f64) -> u64 {
    // The mode sits near sqrt(2 d); start there and walk out.
    let ok = |k| block_count_stationary_pmf(d_imm, k).is_ok();
    let mut lo = ((2.0 * d_imm).sqrt().floor() as u64).max(1);
    if ok(lo) {
        return lo;
    }
    let mut hi = lo + 4;
    while !ok(hi) {
        lo = hi;
        hi += hi / 4;
    }
    // Success is monotone in k_max: lo fails, hi succeeds.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Tabulated stationary block-count law with an inverse-cdf sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCountLaw {
    d_imm: f64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl BlockCountLaw {
    pub fn new(d_imm: f64) -> Result<Self, ImmigrationError> {
        check_rate(d_imm)?;
        let pmf = block_count_stationary_pmf(d_imm, default_k_max(d_imm))?;
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(BlockCountLaw { d_imm, pmf, cdf })
    }

    pub fn d_imm(&self) -> f64 {
        self.d_imm
    }

    pub fn k_max(&self) -> u64 {
        self.pmf.len() as u64
    }

    /// `nu_k`, zero outside the tabulated support.
    pub fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.pmf.get(k as usize - 1).copied().unwrap_or(0.0)
    }

    /// The law as a map `k -> nu_k`.
    pub fn to_map(&self) -> BTreeMap<u64, f64> {
        (1..=self.k_max()).map(|k| (k, self.pmf(k))).collect()
    }

    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        let i = self.cdf.partition_point(|&c| c <= u);
        (i.min(self.cdf.len() - 1) + 1) as u64
    }
}

/// A block-count path: `states[i]` holds on `[times[i], times[i + 1])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCountPath {
    pub times: Vec<f64>,
    pub states: Vec<u64>,
    pub t_end: f64,
}

impl BlockCountPath {
    /// Fraction of `[0, t_end]` spent in each state.
    pub fn occupancy(&self) -> BTreeMap<u64, f64> {
        let mut occ = BTreeMap::new();
        for (i, &s) in self.states.iter().enumerate() {
            let end = self.times.get(i + 1).copied().unwrap_or(self.t_end);
            *occ.entry(s).or_insert(0.0) += (end - self.times[i]) / self.t_end;
        }
        occ
    }

    /// For each state, the number of jumps out of it and how many were up.
    pub fn jump_counts(&self) -> BTreeMap<u64, (u64, u64)> {
        let mut counts = BTreeMap::new();
        for w in self.states.windows(2) {
            let e = counts.entry(w[0]).or_insert((0, 0));
            e.0 += 1;
            if w[1] > w[0] {
                e.1 += 1;
            }
        }
        counts
    }
}

/// Simulates the block-count chain from `initial` on `[0, t_end]`.
pub fn simulate_block_count<R: Rng + ?Sized>(
    d_imm: f64,
    t_end: f64,
    initial: u64,
    rng: &mut R,
) -> Result<BlockCountPath, ImmigrationError> {
    check_rate(d_imm)?;
    if initial == 0 {
        return Err(ImmigrationError::ZeroBlocks);
    }
    let mut times = vec![0.0];
    let mut states = vec![initial];
    let mut k = initial;
    let mut t = 0.0;
    loop {
        let down = (k * (k - 1)) as f64 / 2.0;
        let total = d_imm + down;
        let e: f64 = Exp1.sample(rng);
        t += e / total;
        if t >= t_end {
            break;
        }
        if rng.random::<f64>() * total < d_imm {
            k += 1;
        } else {
            k -= 1;
        }
        times.push(t);
        states.push(k);
    }
    Ok(BlockCountPath {
        times,
        states,
        t_end,
    })
}

/// Current state of the ancestral process: `typed_counts[i]` particles of
/// type `i` among `total` particles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AncestralState {
    pub typed_counts: Vec<u64>,
    pub total: u64,
}

impl AncestralState {
    pub fn typed_total(&self) -> u64 {
        self.typed_counts.iter().sum()
    }
}

/// Outcome for one type of the ancestral process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgenyRecord {
    /// Number of deaths of this type, the size of the block it tracks.
    pub deaths: u64,
    /// Time at which the last particle of the type died, or the time of
    /// censoring.
    pub lifetime: f64,
    /// Set when tracking stopped at the censoring threshold; `deaths` is then
    /// a lower bound.
    pub censored: bool,
}

/// Limits for [`simulate_ancestral`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AncestralOptions {
    /// Maximum number of births and deaths.
    pub max_events: u64,
    /// Stop tracking a type once its death count reaches this value.
    pub censor_deaths: Option<u64>,
}

impl Default for AncestralOptions {
    fn default() -> Self {
        AncestralOptions {
            max_events: 10_000_000,
            censor_deaths: None,
        }
    }
}

/// Result of one run of the ancestral process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AncestralSample {
    pub records: Vec<ProgenyRecord>,
    /// Stationary block count the run started from.
    pub initial_total: u64,
    /// Draws of the initial block count rejected for being below `p`.
    pub rejections: u64,
    pub events: u64,
}

/// Runs the ancestral process of `p` uniformly chosen blocks of a
/// stationary configuration, building the stationary law on the fly.
pub fn simulate_ancestral<R: Rng + ?Sized>(
    p: usize,
    d_imm: f64,
    options: AncestralOptions,
    rng: &mut R,
) -> Result<AncestralSample, ImmigrationError> {
    let law = BlockCountLaw::new(d_imm)?;
    simulate_ancestral_with(&law, p, options, rng)
}

/// [`simulate_ancestral`] with a precomputed stationary law.
///
/// With `k` particles, a type-`i` particle is born at rate `(d/k) a_i` and
/// dies at rate `((k-1)/2) a_i`; untyped particles do the same in
/// proportion to `k - sum a`. Every particle thus jumps at the same rate, so
/// an event picks a uniform particle and then a birth with probability
/// `d / (d + k(k-1)/2)`.
pub fn simulate_ancestral_with<R: Rng + ?Sized>(
    law: &BlockCountLaw,
    p: usize,
    options: AncestralOptions,
    rng: &mut R,
) -> Result<AncestralSample, ImmigrationError> {
    if p == 0 {
        return Err(ImmigrationError::NoTypes);
    }
    let d = law.d_imm();
    let mut rejections = 0;
    let mut k = law.sample(rng);
    while k < p as u64 {
        rejections += 1;
        k = law.sample(rng);
    }
    if rejections > 0 {
        log::debug!("resampled the initial block count {rejections} time(s) to reach {p} types");
    }
    let initial_total = k;
    let mut state = AncestralState {
        typed_counts: vec![1; p],
        total: k,
    };
    let mut records = vec![
        ProgenyRecord {
            deaths: 0,
            lifetime: 0.0,
            censored: false,
        };
        p
    ];
    let mut live_typed = p as u64;
    let mut t = 0.0;
    let mut events = 0;
    while live_typed > 0 {
        if events >= options.max_events {
            return Err(ImmigrationError::BudgetExceeded(options.max_events));
        }
        let kf = state.total as f64;
        let total_rate = d + kf * (kf - 1.0) / 2.0;
        let e: f64 = Exp1.sample(rng);
        t += e / total_rate;
        let birth = rng.random::<f64>() * total_rate < d;
        let idx = rng.random_range(0..state.total);
        events += 1;
        if idx < live_typed {
            let mut j = idx;
            let mut ty = 0;
            while j >= state.typed_counts[ty] {
                j -= state.typed_counts[ty];
                ty += 1;
            }
            if birth {
                state.typed_counts[ty] += 1;
                live_typed += 1;
            } else {
                state.typed_counts[ty] -= 1;
                live_typed -= 1;
                let r = &mut records[ty];
                r.deaths += 1;
                if state.typed_counts[ty] == 0 {
                    r.lifetime = t;
                } else if options.censor_deaths.is_some_and(|c| r.deaths >= c) {
                    // The remaining particles of this type carry on untyped.
                    r.lifetime = t;
                    r.censored = true;
                    live_typed -= state.typed_counts[ty];
                    state.typed_counts[ty] = 0;
                }
            }
        }
        if birth {
            state.total += 1;
        } else {
            state.total -= 1;
        }
        assert!(state.typed_total() == live_typed && live_typed <= state.total);
    }
    Ok(AncestralSample {
        records,
        initial_total,
        rejections,
        events,
    })
}

/// One row of [`rescaled_block_count_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RescaledCount {
    pub n: u64,
    pub mean: f64,
    pub stderr: f64,
    /// Limit value `sqrt(2 d)`.
    pub target: f64,
}

/// For each `n`, the mean and standard error of `N / sqrt(n)` over
/// `replicates` stationary block counts at immigration rate `n d`.
pub fn rescaled_block_count_check<R: Rng + ?Sized>(
    n_values: &[u64],
    d: f64,
    replicates: usize,
    rng: &mut R,
) -> Result<Vec<RescaledCount>, ImmigrationError> {
    n_values
        .iter()
        .map(|&n| {
            let law = BlockCountLaw::new(n as f64 * d)?;
            let xs: Vec<f64> = (0..replicates)
                .map(|_| law.sample(rng) as f64 / (n as f64).sqrt())
                .collect();
            let (mean, stderr) =
                crate::stats::mean_stderr(&xs).map_err(|_| ImmigrationError::NoReplicates)?;
            Ok(RescaledCount {
                n,
                mean,
                stderr,
                target: (2.0 * d).sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::{total_progeny_pmf, total_progeny_tail};
    use crate::stats::{split_rng, tv_distance};

    #[test]
    fn detailed_balance_and_normalization() {
        for d in [0.5, 1.0, 3.0, 50.0] {
            let k_max = default_k_max(d).max(60);
            let nu = block_count_stationary_pmf(d, k_max).unwrap();
            assert!((nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for k in 1..k_max as usize {
                let kf = k as f64;
                let lhs = d * nu[k - 1];
                let rhs = kf * (kf + 1.0) / 2.0 * nu[k];
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1e-300), "d {d} k {k}");
            }
        }
    }

    #[test]
    fn half_rate_ratio() {
        let nu = block_count_stationary_pmf(0.5, 30).unwrap();
        assert!((nu[1] / nu[0] - 0.5).abs() < 1e-15);
        // Closed form: nu_k ∝ 1/(k!(k-1)!) at d = 1/2.
        let w: Vec<f64> = (1..=30u32)
            .map(|k| {
                let f = |m: u32| (1..=m).map(f64::from).product::<f64>();
                1.0 / (f(k) * f(k - 1))
            })
            .collect();
        let z: f64 = w.iter().sum();
        for (a, b) in nu.iter().zip(&w) {
            assert!((a - b / z).abs() < 1e-14);
        }
    }

    #[test]
    fn truncation_is_checked() {
        assert!(matches!(
            block_count_stationary_pmf(100.0, 5),
            Err(ImmigrationError::TailTooLarge { .. })
        ));
        assert!(block_count_stationary_pmf(0.0, 5).is_err());
        let k = default_k_max(1e4);
        assert!(block_count_stationary_pmf(1e4, k).is_ok());
        assert!(block_count_stationary_pmf(1e4, k - 1).is_err());
    }

    #[test]
    fn law_sampler_matches_pmf() {
        let law = BlockCountLaw::new(2.0).unwrap();
        let mut rng = split_rng(4, 0);
        let e: crate::stats::EmpiricalPmf<u64> =
            (0..100_000).map(|_| law.sample(&mut rng)).collect();
        let t = crate::stats::chi_square_gof(&e, &law.to_map(), 5).unwrap();
        assert!(t.p_value > 0.01, "{t:?}");
    }

    #[test]
    fn first_move_from_one_is_up() {
        for s in 0..200 {
            let mut rng = split_rng(11, s);
            let path = simulate_block_count(1.0, 100.0, 1, &mut rng).unwrap();
            assert_eq!(path.states[1], 2);
        }
    }

    #[test]
    fn occupancy_matches_stationary_law() {
        let mut rng = split_rng(12, 0);
        let path = simulate_block_count(1.0, 1e5, 1, &mut rng).unwrap();
        let law = BlockCountLaw::new(1.0).unwrap();
        let tv = tv_distance(&path.occupancy(), &law.to_map()).unwrap();
        assert!(tv < 0.02, "tv {tv}");
        let occ_mean: f64 = path.occupancy().iter().map(|(k, p)| *k as f64 * p).sum();
        assert!(
            (occ_mean - law.mean()).abs() < 0.02,
            "{occ_mean} vs {}",
            law.mean()
        );
    }

    #[test]
    fn up_step_fraction() {
        let d = 3.0;
        let mut rng = split_rng(13, 0);
        let path = simulate_block_count(d, 2e4, 1, &mut rng).unwrap();
        for (k, (jumps, ups)) in path.jump_counts() {
            if jumps < 2000 {
                continue;
            }
            let p = d / (d + (k * (k - 1)) as f64 / 2.0);
            let frac = ups as f64 / jumps as f64;
            let se = (p * (1.0 - p) / jumps as f64).sqrt();
            assert!((frac - p).abs() < 4.0 * se + 1e-12, "k {k}: {frac} vs {p}");
        }
    }

    #[test]
    fn ancestral_invariants() {
        let law = BlockCountLaw::new(20.0).unwrap();
        for s in 0..300 {
            let mut rng = split_rng(14, s);
            let opts = AncestralOptions {
                censor_deaths: Some(1000),
                ..Default::default()
            };
            let out = simulate_ancestral_with(&law, 3, opts, &mut rng).unwrap();
            assert!(out.initial_total >= 3);
            for r in &out.records {
                assert!(r.deaths >= 1 && r.lifetime > 0.0);
                assert!(r.censored || r.deaths < 1000);
            }
        }
    }

    #[test]
    fn censoring_caps_death_counts() {
        let law = BlockCountLaw::new(50.0).unwrap();
        let opts = AncestralOptions {
            censor_deaths: Some(5),
            ..Default::default()
        };
        for s in 0..300 {
            let mut rng = split_rng(15, s);
            let out = simulate_ancestral_with(&law, 2, opts, &mut rng).unwrap();
            for r in &out.records {
                assert!(r.deaths <= 5);
                if r.censored {
                    assert_eq!(r.deaths, 5);
                }
            }
        }
    }

    #[test]
    fn rejection_rate_vanishes_at_large_rate() {
        let law = BlockCountLaw::new(100.0).unwrap();
        let mut rejected = 0;
        let runs = 2000;
        for s in 0..runs {
            let mut rng = split_rng(16, s);
            let opts = AncestralOptions {
                censor_deaths: Some(13),
                ..Default::default()
            };
            rejected += simulate_ancestral_with(&law, 5, opts, &mut rng)
                .unwrap()
                .rejections;
        }
        let rate = rejected as f64 / (rejected as f64 + runs as f64);
        assert!(rate < 0.01, "rejection rate {rate}");
        // At a small rate the conditioning is active.
        let small = BlockCountLaw::new(0.5).unwrap();
        let mut rng = split_rng(16, 9999);
        let opts = AncestralOptions {
            censor_deaths: Some(13),
            ..Default::default()
        };
        let out = (0..200)
            .map(|_| simulate_ancestral_with(&small, 3, opts, &mut rng))
            .map(|r| r.unwrap().rejections)
            .sum::<u64>();
        assert!(out > 0);
    }

    #[test]
    fn ancestral_death_counts_near_branching_limit() {
        let law = BlockCountLaw::new(1e3).unwrap();
        let opts = AncestralOptions {
            censor_deaths: Some(13),
            ..Default::default()
        };
        let mut rng = split_rng(17, 0);
        let mut counts = crate::stats::EmpiricalPmf::new();
        for _ in 0..20_000 {
            let out = simulate_ancestral_with(&law, 1, opts, &mut rng).unwrap();
            counts.add(out.records[0].deaths.min(13));
        }
        let mut expected: BTreeMap<u64, f64> = (1..=12)
            .map(|k| (k, total_progeny_pmf(k).unwrap()))
            .collect();
        expected.insert(13, total_progeny_tail(12));
        let tv = tv_distance(&counts.pmf(), &expected).unwrap();
        assert!(tv < 0.03, "tv {tv}");
    }

    #[test]
    fn rescaled_counts_approach_limit() {
        let mut rng = split_rng(18, 0);
        let rows = rescaled_block_count_check(&[10_000], 1.0, 2000, &mut rng).unwrap();
        assert!((rows[0].mean - 2f64.sqrt()).abs() < 0.02, "{:?}", rows[0]);
    }

    #[test]
    fn bit_reproducible() {
        let law = BlockCountLaw::new(30.0).unwrap();
        let run = || {
            let mut rng = split_rng(19, 3);
            simulate_ancestral_with(&law, 2, AncestralOptions::default(), &mut rng).unwrap()
        };
        assert_eq!(run(), run());
        let a = simulate_block_count(2.0, 50.0, 3, &mut split_rng(1, 1)).unwrap();
        let b = simulate_block_count(2.0, 50.0, 3, &mut split_rng(1, 1)).unwrap();
        assert_eq!(a, b);
    }
}
