//! Bridges, the standard flow of bridges, and a stationary sampler for the
//! erosion coalescent built from the flow.
//!
//! A bridge is a non-decreasing right-continuous map of `[0, 1]` onto itself
//! of the form `B(u) = drift * u + sum_i beta_i 1{u >= v_i}`. In the standard
//! flow, the bridge over a window of length `t` has `N_t` atoms, where `N_t`
//! is the block count at time `t` of Kingman's coalescent come down from
//! infinity; the masses are Dirichlet(1, …, 1), the locations i.i.d. uniform,
//! and there is no drift.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, Exp, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::erosion::ErosionParams;
use crate::partitions::Partition;

/// Tolerance on `drift + sum of masses = 1`.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Default relative truncation error of the entrance from infinity.
pub const DEFAULT_EPS: f64 = 1e-3;

/// Levels above this are crossed in aggregated Gaussian jumps.
const AGG_MIN: u64 = 64;
/// Fewest levels covered by one aggregated jump.
const AGG_SPAN: u64 = 32;
/// Standard deviations of slack kept between an aggregated jump and `t`.
const AGG_SIGMAS: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BridgeError {
    #[error("atom location {0} outside (0, 1)")]
    LocationOutOfRange(f64),
    #[error("atom locations are not distinct")]
    DuplicateLocation,
    #[error("invalid mass {0}")]
    InvalidMass(f64),
    #[error("drift plus masses sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("argument {0} outside [0, 1]")]
    OutOfDomain(f64),
    #[error("composition is only defined for zero-drift bridges")]
    DriftComposition,
    #[error("window length must be positive, got {0}")]
    InvalidTime(f64),
}

/// A bridge with finitely many atoms plus a linear part.
///
/// Atoms are stored sorted by location together with the running total of
/// their masses, so evaluation is a single binary search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BridgeRepr", into = "BridgeRepr")]
pub struct Bridge {
    locations: Vec<f64>,
    levels: Vec<f64>,
    drift: f64,
}

#[derive(Serialize, Deserialize)]
struct BridgeRepr {
    atoms: Vec<(f64, f64)>,
    drift: f64,
}

impl TryFrom<BridgeRepr> for Bridge {
    type Error = BridgeError;
    fn try_from(r: BridgeRepr) -> Result<Self, Self::Error> {
        Bridge::new(r.atoms, r.drift)
    }
}

impl From<Bridge> for BridgeRepr {
    fn from(b: Bridge) -> Self {
        BridgeRepr {
            atoms: b.atoms(),
            drift: b.drift,
        }
    }
}

impl Bridge {
    /// Builds a bridge from `(location, mass)` pairs in any order.
    pub fn new(mut atoms: Vec<(f64, f64)>, drift: f64) -> Result<Self, BridgeError> {
        if !(drift >= 0.0 && drift.is_finite()) {
            return Err(BridgeError::InvalidMass(drift));
        }
        for &(v, beta) in &atoms {
            if !(v > 0.0 && v < 1.0) {
                return Err(BridgeError::LocationOutOfRange(v));
            }
            if !(beta >= 0.0 && beta.is_finite()) {
                return Err(BridgeError::InvalidMass(beta));
            }
        }
        atoms.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(BridgeError::DuplicateLocation);
        }
        let mut acc = 0.0;
        let mut locations = Vec::with_capacity(atoms.len());
        let mut levels = Vec::with_capacity(atoms.len());
        for (v, beta) in atoms {
            acc += beta;
            locations.push(v);
            levels.push(acc);
        }
        Self::from_levels(locations, levels, drift)
    }

    fn from_levels(locations: Vec<f64>, levels: Vec<f64>, drift: f64) -> Result<Self, BridgeError> {
        let total = drift + levels.last().copied().unwrap_or(0.0);
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(BridgeError::NotNormalized(total));
        }
        Ok(Bridge {
            locations,
            levels,
            drift,
        })
    }

    /// `B(u) = u`.
    pub fn identity() -> Self {
        Bridge {
            locations: Vec::new(),
            levels: Vec::new(),
            drift: 1.0,
        }
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn atom_count(&self) -> usize {
        self.locations.len()
    }

    /// `(location, mass)` pairs sorted by location.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        let mut prev = 0.0;
        self.locations
            .iter()
            .zip(&self.levels)
            .map(|(&v, &l)| {
                let m = l - prev;
                prev = l;
                (v, m)
            })
            .collect()
    }

    fn check_domain(u: f64) -> Result<(), BridgeError> {
        if (0.0..=1.0).contains(&u) {
            Ok(())
        } else {
            Err(BridgeError::OutOfDomain(u))
        }
    }

    /// Atom mass at or left of `u`.
    fn level_at(&self, u: f64) -> f64 {
        match self.locations.partition_point(|&v| v <= u) {
            0 => 0.0,
            j => self.levels[j - 1],
        }
    }

    /// `B(u)`.
    pub fn eval(&self, u: f64) -> Result<f64, BridgeError> {
        Self::check_domain(u)?;
        Ok(self.eval_unchecked(u))
    }

    fn eval_unchecked(&self, u: f64) -> f64 {
        let level = self.level_at(u);
        if self.drift == 0.0 {
            level
        } else {
            self.drift * u + level
        }
    }

    /// `inf { t : B(t) > u }` for `u < 1`, and `1` at `u = 1`.
    ///
    /// For zero-drift bridges the result is always an atom location.
    pub fn inverse(&self, u: f64) -> Result<f64, BridgeError> {
        Self::check_domain(u)?;
        if u == 1.0 {
            return Ok(1.0);
        }
        // First atom at which B exceeds u.
        let (mut j, mut hi) = (0, self.locations.len());
        while j < hi {
            let mid = j + (hi - j) / 2;
            if self.drift * self.locations[mid] + self.levels[mid] <= u {
                j = mid + 1;
            } else {
                hi = mid;
            }
        }
        let (seg_start, seg_level) = match j {
            0 => (0.0, 0.0),
            _ => (self.locations[j - 1], self.levels[j - 1]),
        };
        let seg_end = self.locations.get(j).copied().unwrap_or(1.0);
        if self.drift > 0.0 {
            let t = (u - seg_level) / self.drift;
            if t < seg_end {
                return Ok(t.max(seg_start));
            }
        }
        Ok(seg_end)
    }

    /// The composition `outer ∘ inner` of two zero-drift bridges.
    ///
    /// The result jumps only at atoms of `inner`; the level after inner atom
    /// `j` is `outer` evaluated at the level of `inner` there. Atoms that
    /// receive no mass are dropped.
    pub fn compose(outer: &Bridge, inner: &Bridge) -> Result<Bridge, BridgeError> {
        if outer.drift != 0.0 || inner.drift != 0.0 {
            return Err(BridgeError::DriftComposition);
        }
        let mut locations = Vec::new();
        let mut levels: Vec<f64> = Vec::new();
        let mut prev = 0.0;
        for (&v, &l) in inner.locations.iter().zip(&inner.levels) {
            let level = outer.level_at(l);
            if level > prev {
                locations.push(v);
                levels.push(level);
                prev = level;
            }
        }
        Self::from_levels(locations, levels, 0.0)
    }
}

/// `sum_{i=a}^{inf} 1/i^2` for `a >= 1`, by Euler-Maclaurin beyond a few
/// explicit terms.
fn inverse_square_tail(a: u64) -> f64 {
    let mut s = 0.0;
    let mut i = a;
    while i < 16 {
        s += 1.0 / (i * i) as f64;
        i += 1;
    }
    let x = i as f64;
    s + 1.0 / x + 0.5 / (x * x) + 1.0 / (6.0 * x.powi(3)) - 1.0 / (30.0 * x.powi(5))
        + 1.0 / (42.0 * x.powi(7))
}

/// Mean and variance of the time the pure-death chain with rates
/// `i(i-1)/2` takes to move from `k` down to `j`.
fn descent_moments(j: u64, k: u64) -> (f64, f64) {
    let (jf, kf) = (j as f64, k as f64);
    let mean = 2.0 / jf - 2.0 / kf;
    // (2/(i(i-1)))^2 = 4 (1/(i-1) - 1/i)^2, summed over i = j+1..=k.
    let sq = (inverse_square_tail(j) - inverse_square_tail(k))
        + (inverse_square_tail(j + 1) - inverse_square_tail(k + 1));
    let var = 4.0 * (sq - 2.0 * (1.0 / jf - 1.0 / kf));
    (mean, var.max(0.0))
}

/// Block count at time `t` of the pure-death chain with rates `k(k-1)/2`
/// started from `k0`.
///
/// Long stretches far from the crossing of `t` are traversed in one step
/// with a Gaussian draw matching the mean and variance of the summed holding
/// times; a stretch is only aggregated when it ends at least eight standard
/// deviations before `t`, and the crossing itself is simulated with exact
/// exponential holding times.
pub fn death_count_from<R: Rng + ?Sized>(k0: u64, t: f64, rng: &mut R) -> u64 {
    let mut k = k0.max(1);
    let mut remaining = t;
    let mut aggregate = true;
    while k > 1 {
        if aggregate && k >= AGG_MIN + AGG_SPAN {
            let fits = |j: u64| {
                let (m, v) = descent_moments(j, k);
                m + AGG_SIGMAS * v.sqrt() <= remaining
            };
            let hi = k - AGG_SPAN;
            if fits(hi) {
                // Smallest admissible target level; `fits` is monotone in j.
                let (mut lo, mut hi) = (AGG_MIN, hi);
                if fits(lo) {
                    hi = lo;
                }
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if fits(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let (m, v) = descent_moments(hi, k);
                let z: f64 = StandardNormal.sample(rng);
                remaining -= (m + v.sqrt() * z).max(0.0);
                k = hi;
                continue;
            }
            aggregate = false;
        }
        let e: f64 = Exp1.sample(rng);
        let hold = e / ((k * (k - 1)) as f64 / 2.0);
        if hold > remaining {
            return k;
        }
        remaining -= hold;
        k -= 1;
    }
    1
}

/// Starting level `ceil(4 / (eps t))` used for the entrance from infinity.
pub fn entrance_level(t: f64, eps: f64) -> u64 {
    (4.0 / (eps * t)).ceil().max(1.0) as u64
}

/// `N_t` for Kingman's coalescent come down from infinity.
///
/// The chain is started at `K0 = ceil(4 / (eps t))`; the ignored entrance
/// time from infinity to `K0` has mean `2 / K0 <= eps t / 2`.
pub fn sample_death_count_from_infinity<R: Rng + ?Sized>(
    t: f64,
    eps: f64,
    rng: &mut R,
) -> Result<u64, BridgeError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(BridgeError::InvalidTime(t));
    }
    Ok(death_count_from(entrance_level(t, eps), t, rng))
}

fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// The bridge `B_{0,t}` of the standard flow.
pub fn sample_standard_bridge<R: Rng + ?Sized>(t: f64, rng: &mut R) -> Result<Bridge, BridgeError> {
    let n = sample_death_count_from_infinity(t, DEFAULT_EPS, rng)?;
    let weights: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            e
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut atoms: Vec<(f64, f64)> = weights
        .iter()
        .map(|w| (open_uniform(rng), w / total))
        .collect();
    atoms.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    atoms.dedup_by(|a, b| {
        // Coinciding uniforms: fold the mass into one atom.
        if a.0 == b.0 {
            b.1 += a.1;
            true
        } else {
            false
        }
    });
    // Fix the last level at exactly 1 against rounding in the normalization.
    let mut bridge = Bridge::new(atoms, 0.0)?;
    if let Some(last) = bridge.levels.last_mut() {
        *last = 1.0;
    }
    Ok(bridge)
}

/// One evaluation of a standard-flow bridge inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomHit {
    /// Rank of the atom by location, starting at 1.
    pub rank: u64,
    pub location: f64,
}

/// Evaluates `B^{-1}` for a fresh standard-flow bridge over a window of
/// length `t` at the sorted points `queries` in `[0, 1)`, without building
/// the bridge.
///
/// With `N` atoms sorted by location, the levels of the bridge are the order
/// statistics of `N - 1` uniforms and the locations those of `N` further
/// uniforms. `B^{-1}(x)` is the location of atom `1 + #{levels <= x}`, so
/// only the counts between consecutive queries (binomials) and the locations
/// at the hit ranks (conditional beta order statistics) are drawn.
pub fn standard_bridge_inverse_at<R: Rng + ?Sized>(
    t: f64,
    eps: f64,
    queries: &[f64],
    rng: &mut R,
) -> Result<Vec<AtomHit>, BridgeError> {
    for w in queries.windows(2) {
        if w[0].partial_cmp(&w[1]) != Some(Ordering::Less) {
            return Err(BridgeError::DuplicateLocation);
        }
    }
    for &x in queries {
        if !(0.0..1.0).contains(&x) {
            return Err(BridgeError::OutOfDomain(x));
        }
    }
    let n = sample_death_count_from_infinity(t, eps, rng)?;
    let mut ranks = Vec::with_capacity(queries.len());
    let mut left = n - 1;
    let mut below = 0;
    let mut prev = 0.0;
    for &x in queries {
        let p = ((x - prev) / (1.0 - prev)).clamp(0.0, 1.0);
        let c = if left == 0 || p == 0.0 {
            0
        } else {
            Binomial::new(left, p).expect("valid binomial").sample(rng)
        };
        left -= c;
        below += c;
        prev = x;
        ranks.push(below + 1);
    }
    let mut hits = Vec::with_capacity(ranks.len());
    let (mut last_rank, mut last_loc) = (0u64, 0.0);
    for rank in ranks {
        if rank != last_rank {
            let a = (rank - last_rank) as f64;
            let b = (n - rank + 1) as f64;
            let y: f64 = Beta::new(a, b).expect("valid beta").sample(rng);
            last_loc += (1.0 - last_loc) * y;
            last_rank = rank;
        }
        hits.push(AtomHit {
            rank,
            location: last_loc,
        });
    }
    Ok(hits)
}

/// Exact stationary sample of the erosion coalescent through the flow of
/// bridges.
///
/// Label `i` was last eroded at time `-T_i` with `T_i` exponential(`d`) and
/// then picked the uniform point `U_i`; its ancestor at time 0 is
/// `B_{-T_i,0}^{-1}(U_i)`. The window `[-max T, 0]` is cut at the `T_i`, an
/// independent standard bridge is used on each piece, and the inverses are
/// applied from the oldest piece forward. Labels with the same final atom
/// share a block.
pub fn sample_stationary_erosion_via_flow<R: Rng + ?Sized>(
    params: &ErosionParams,
    rng: &mut R,
) -> Partition {
    let n = params.n;
    let exp = Exp::new(params.d).expect("d > 0");
    let mut arrivals: Vec<(f64, f64, usize)> = (0..n)
        .map(|i| {
            let t: f64 = exp.sample(rng);
            (t, rng.random::<f64>(), i)
        })
        .collect();
    arrivals.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)));
    // Current position of every label that has arrived, and its group id.
    let mut pos: Vec<f64> = Vec::with_capacity(n);
    let mut owner: Vec<usize> = Vec::with_capacity(n);
    let mut group = vec![0usize; n];
    let mut idx = 0;
    while idx < n {
        let t_start = arrivals[idx].0;
        while idx < n && arrivals[idx].0 == t_start {
            let (_, u, label) = arrivals[idx];
            pos.push(u);
            owner.push(label);
            idx += 1;
        }
        let t_end = arrivals.get(idx).map_or(0.0, |a| a.0);
        let window = t_start - t_end;
        if window <= 0.0 {
            continue;
        }
        let mut order: Vec<usize> = (0..pos.len()).collect();
        order.sort_unstable_by(|&a, &b| pos[a].total_cmp(&pos[b]));
        let mut queries: Vec<f64> = order.iter().map(|&i| pos[i]).collect();
        queries.dedup();
        let hits = standard_bridge_inverse_at(window, DEFAULT_EPS, &queries, rng)
            .expect("queries are sorted and in [0, 1)");
        let mut q = 0;
        for &i in &order {
            while queries[q] != pos[i] {
                q += 1;
            }
            pos[i] = hits[q].location;
            group[owner[i]] = hits[q].rank as usize;
        }
    }
    // Every label passes through the last window, so ranks there identify
    // the ancestors.
    Partition::from_assignment(&group)
}
