//! The n-Kingman coalescent with erosion.
//!
//! Started from a partition of `[n]`, every pair of blocks merges at rate 1
//! and every label sitting in a block of size at least two is moved to a new
//! singleton at rate `d`. Erosion of a singleton would be a self-loop and is
//! left out of the event rates.
//!
//! Three routes to the stationary law are provided:
//!
//! * [`simulate`] / [`occupancy`]: a Gillespie path whose long-run occupancy
//!   converges to the stationary law.
//! * [`sample_stationary`]: an exact sampler through the coupling with the
//!   coalescent with immigration. Each label's last erosion is an
//!   exponential(`d`) time in the past; reinserting the labels at those times
//!   as singletons and letting Kingman's coalescent act between insertions
//!   gives a stationary sample at time zero.
//! * [`stationary_pmf_small_n`]: the stationary vector of the explicit
//!   generator over all Bell(n) partitions, for small `n`.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partitions::{all_partitions, Label, Partition, PartitionError};

/// Largest `n` accepted by the dense generator oracle (Bell(8) = 4140).
pub const ORACLE_MAX_N: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ErosionError {
    #[error("invalid parameters: n = {n}, d = {d}")]
    InvalidParams { n: usize, d: f64 },
    #[error("state {0} is absorbing")]
    Absorbing(Partition),
    #[error("initial state is not a partition of [{0}]")]
    InitialMismatch(usize),
    #[error("oracle limited to n <= {ORACLE_MAX_N}, got {0}")]
    OracleTooLarge(usize),
    #[error("generator system is singular")]
    Singular,
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

/// Label count and per-label erosion rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErosionParams {
    pub n: usize,
    pub d: f64,
}

impl ErosionParams {
    pub fn new(n: usize, d: f64) -> Result<Self, ErosionError> {
        if n == 0 || !(d > 0.0 && d.is_finite()) {
            return Err(ErosionError::InvalidParams { n, d });
        }
        Ok(ErosionParams { n, d })
    }
}

/// A simulated path: `states[i]` holds on `[times[i], times[i + 1])`, the last
/// state holds until `t_end`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErosionPathSample {
    pub times: Vec<f64>,
    pub states: Vec<Partition>,
    pub t_end: f64,
}

impl ErosionPathSample {
    /// State at `t_end`.
    pub fn final_state(&self) -> &Partition {
        self.states.last().expect("paths are never empty")
    }

    /// Fraction of `[0, t_end]` spent in each visited state.
    pub fn occupancy(&self) -> BTreeMap<Partition, f64> {
        let mut occ = BTreeMap::new();
        for (i, s) in self.states.iter().enumerate() {
            let end = self.times.get(i + 1).copied().unwrap_or(self.t_end);
            *occ.entry(s.clone()).or_insert(0.0) += (end - self.times[i]) / self.t_end;
        }
        occ
    }
}

/// Total rate of non-null transitions: `m(m-1)/2` pair merges plus `d` per
/// label in a non-singleton block.
pub fn total_event_rate(p: &Partition, d: f64) -> f64 {
    let m = p.block_count() as f64;
    m * (m - 1.0) / 2.0 + d * p.non_singleton_elements() as f64
}

/// One Gillespie step: the holding time in `p` and the next state.
pub fn step<R: Rng + ?Sized>(
    p: &Partition,
    d: f64,
    rng: &mut R,
) -> Result<(f64, Partition), ErosionError> {
    let m = p.block_count();
    let merge_rate = (m * m.saturating_sub(1)) as f64 / 2.0;
    let total = total_event_rate(p, d);
    if total <= 0.0 {
        return Err(ErosionError::Absorbing(p.clone()));
    }
    let e: f64 = Exp1.sample(rng);
    let hold = e / total;
    let u = rng.random::<f64>() * total;
    let next = if u < merge_rate {
        let i = rng.random_range(0..m);
        let mut j = rng.random_range(0..m - 1);
        if j >= i {
            j += 1;
        }
        p.merge(i, j)?
    } else {
        let erodible = p.non_singleton_elements();
        let mut k = rng.random_range(0..erodible);
        let mut target = None;
        for b in p.blocks().iter().filter(|b| b.len() > 1) {
            if k < b.len() {
                target = Some(b[k]);
                break;
            }
            k -= b.len();
        }
        p.erode(target.expect("index within erodible labels"))?
    };
    Ok((hold, next))
}

fn check_initial(params: &ErosionParams, initial: &Partition) -> Result<(), ErosionError> {
    if initial.ground() != (1..=params.n).collect::<Vec<Label>>() {
        return Err(ErosionError::InitialMismatch(params.n));
    }
    Ok(())
}

fn run_path<R, F>(
    params: &ErosionParams,
    initial: &Partition,
    t_end: f64,
    rng: &mut R,
    mut visit: F,
) -> Result<(), ErosionError>
where
    R: Rng + ?Sized,
    F: FnMut(&Partition, f64, f64),
{
    check_initial(params, initial)?;
    let mut state = initial.clone();
    let mut t = 0.0;
    loop {
        let (hold, next) = match step(&state, params.d, rng) {
            Ok(x) => x,
            Err(ErosionError::Absorbing(_)) => (f64::INFINITY, state.clone()),
            Err(e) => return Err(e),
        };
        if t + hold >= t_end {
            visit(&state, t, t_end - t);
            return Ok(());
        }
        visit(&state, t, hold);
        t += hold;
        state = next;
    }
}

/// Simulates the process on `[0, t_end]`, recording every jump. For `n = 1`
/// the path is constant.
pub fn simulate<R: Rng + ?Sized>(
    params: &ErosionParams,
    initial: &Partition,
    t_end: f64,
    rng: &mut R,
) -> Result<ErosionPathSample, ErosionError> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    run_path(params, initial, t_end, rng, |s, start, _| {
        times.push(start);
        states.push(s.clone());
    })?;
    Ok(ErosionPathSample {
        times,
        states,
        t_end,
    })
}

/// Time fractions spent in each state over `[0, t_end]`, without storing the
/// path.
pub fn occupancy<R: Rng + ?Sized>(
    params: &ErosionParams,
    initial: &Partition,
    t_end: f64,
    rng: &mut R,
) -> Result<BTreeMap<Partition, f64>, ErosionError> {
    let mut occ: HashMap<Partition, f64> = HashMap::new();
    run_path(params, initial, t_end, rng, |s, _, dt| {
        *occ.entry(s.clone()).or_insert(0.0) += dt / t_end;
    })?;
    Ok(occ.into_iter().collect())
}

/// Exact draw from the stationary law, with no burn-in.
///
/// Label `i` was last eroded `e_i ~ Exp(d)` ago. Labels are inserted as
/// singletons at times `-e_i` in increasing order and, between insertions,
/// each pair of current blocks merges at rate 1. The partition at time zero
/// is stationary.
pub fn sample_stationary<R: Rng + ?Sized>(params: &ErosionParams, rng: &mut R) -> Partition {
    let exp = Exp::new(params.d).expect("d > 0");
    let mut arrivals: Vec<(f64, Label)> = (1..=params.n).map(|i| (exp.sample(rng), i)).collect();
    // Oldest insertion first; equal clocks fall back to label order.
    arrivals.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut blocks: Vec<Vec<Label>> = Vec::new();
    for (idx, &(age, label)) in arrivals.iter().enumerate() {
        blocks.push(vec![label]);
        let next_age = arrivals.get(idx + 1).map_or(0.0, |a| a.0);
        // Remaining window length until the next insertion.
        let mut window = age - next_age;
        while blocks.len() >= 2 {
            let m = blocks.len();
            let rate = (m * (m - 1)) as f64 / 2.0;
            let e: f64 = Exp1.sample(rng);
            let wait = e / rate;
            if wait >= window {
                break;
            }
            window -= wait;
            merge_random_pair(&mut blocks, rng);
        }
    }
    Partition::canonical(blocks)
}

/// Merges a uniformly chosen pair of blocks, folding the smaller into the
/// larger.
pub(crate) fn merge_random_pair<R: Rng + ?Sized>(blocks: &mut Vec<Vec<Label>>, rng: &mut R) {
    let m = blocks.len();
    let i = rng.random_range(0..m);
    let mut j = rng.random_range(0..m - 1);
    if j >= i {
        j += 1;
    }
    let (keep, drop) = if blocks[i].len() >= blocks[j].len() {
        (i, j)
    } else {
        (j, i)
    };
    let moved = std::mem::take(&mut blocks[drop]);
    blocks[keep].extend(moved);
    blocks.swap_remove(drop);
}

/// Outgoing transitions of the generator from `p`.
fn transitions(p: &Partition, d: f64) -> Vec<(Partition, f64)> {
    let m = p.block_count();
    let mut out = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            out.push((p.merge(i, j).expect("valid indices"), 1.0));
        }
    }
    for b in p.blocks().iter().filter(|b| b.len() > 1) {
        for &x in b {
            out.push((p.erode(x).expect("label in ground"), d));
        }
    }
    out
}

/// Stationary distribution of the generator over all partitions of `[n]`,
/// from a dense LU solve of `pi Q = 0` with one equation replaced by the
/// normalization.
pub fn stationary_pmf_small_n(
    params: &ErosionParams,
) -> Result<BTreeMap<Partition, f64>, ErosionError> {
    if params.n > ORACLE_MAX_N {
        return Err(ErosionError::OracleTooLarge(params.n));
    }
    let states = all_partitions(params.n);
    let s = states.len();
    if s == 1 {
        return Ok([(states[0].clone(), 1.0)].into());
    }
    let index: HashMap<&Partition, usize> =
        states.iter().enumerate().map(|(i, p)| (p, i)).collect();
    // Row j of the system is column j of Q, i.e. sum_i pi_i Q_ij = 0.
    let mut a = DMatrix::<f64>::zeros(s, s);
    for (i, p) in states.iter().enumerate() {
        for (q, rate) in transitions(p, params.d) {
            let j = index[&q];
            a[(j, i)] += rate;
            a[(i, i)] -= rate;
        }
    }
    let generator_t = a.clone();
    for i in 0..s {
        a[(s - 1, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(s);
    rhs[s - 1] = 1.0;
    let pi = a.lu().solve(&rhs).ok_or(ErosionError::Singular)?;
    let residual = &generator_t * &pi;
    debug_assert!(residual.iter().all(|r| r.abs() < 1e-10), "pi Q != 0");
    Ok(states.into_iter().zip(pi.iter().copied()).collect())
}

/// Residual `max_j |(pi Q)_j|` of a candidate stationary vector.
pub fn generator_residual(params: &ErosionParams, pi: &BTreeMap<Partition, f64>) -> f64 {
    let mut flow: BTreeMap<&Partition, f64> = pi.keys().map(|p| (p, 0.0)).collect();
    for (p, &mass) in pi {
        for (q, rate) in transitions(p, params.d) {
            *flow.get_mut(&q).expect("closed state space") += mass * rate;
            *flow.get_mut(p).unwrap() -= mass * rate;
        }
    }
    flow.values().fold(0.0, |acc, v| acc.max(v.abs()))
}
