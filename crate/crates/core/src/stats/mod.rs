//! Empirical distributions, goodness-of-fit tests, distances and the
//! random-stream plumbing shared by all experiments.

mod hypothesis;
mod rng;

pub use hypothesis::{
    chi_square_gof, chi_square_two_sample, kolmogorov_q, ks_one_sample, ks_two_sample, TestResult,
};
pub use rng::{experiment_rng, replicates, split_rng, SimRng};

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

/// Default minimum expected count per chi-square cell.
pub const DEFAULT_MIN_CELL: u64 = 5;

const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least two cells after merging, got {0}")]
    TooFewCells(usize),
    #[error("sample is empty")]
    EmptySample,
    #[error("distribution is not normalized (total mass {0})")]
    NotNormalized(f64),
    #[error("samples have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Counts of observed outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmpiricalPmf<K: Ord> {
    counts: BTreeMap<K, u64>,
    total: u64,
}

impl<K: Ord> Default for EmpiricalPmf<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K: Ord> EmpiricalPmf<K> {
    pub fn new() -> Self {
        EmpiricalPmf {
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn add(&mut self, outcome: K) {
        self.add_count(outcome, 1);
    }

    pub fn add_count(&mut self, outcome: K, count: u64) {
        if count == 0 {
            return;
        }
        *self.counts.entry(outcome).or_insert(0) += count;
        self.total += count;
    }

    pub fn count(&self, outcome: &K) -> u64 {
        self.counts.get(outcome).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<K, u64> {
        &self.counts
    }

    pub fn merge(&mut self, other: EmpiricalPmf<K>) {
        for (k, c) in other.counts {
            self.add_count(k, c);
        }
    }
}

impl<K: Ord + Clone> EmpiricalPmf<K> {
    /// Relative frequencies.
    pub fn pmf(&self) -> BTreeMap<K, f64> {
        let t = self.total as f64;
        self.counts
            .iter()
            .map(|(k, &c)| (k.clone(), c as f64 / t))
            .collect()
    }
}

impl<K: Ord> FromIterator<K> for EmpiricalPmf<K> {
    fn from_iter<I: IntoIterator<Item = K>>(iter: I) -> Self {
        let mut e = EmpiricalPmf::new();
        for k in iter {
            e.add(k);
        }
        e
    }
}

/// Total variation distance `(1/2) sum |a_k - b_k|` between two normalized
/// pmfs over the union of their supports.
pub fn tv_distance<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> Result<f64, StatsError> {
    for m in [a, b] {
        let total: f64 = m.values().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE || m.values().any(|&p| p < 0.0) {
            return Err(StatsError::NotNormalized(total));
        }
    }
    let mut sum = 0.0;
    for (k, &pa) in a {
        sum += (pa - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &pb) in b {
        if !a.contains_key(k) {
            sum += pb;
        }
    }
    Ok((0.5 * sum).min(1.0))
}

/// Wasserstein-1 distance between the empirical laws of two real samples,
/// i.e. the integral of `|F_x - F_y|`.
pub fn wasserstein1(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let xs = sorted(x);
    let ys = sorted(y);
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = xs[0].min(ys[0]);
    let mut dist = 0.0;
    while i < xs.len() || j < ys.len() {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        let fx = i as f64 / nx;
        let fy = j as f64 / ny;
        dist += (fx - fy).abs() * (next - prev);
        while i < xs.len() && xs[i] == next {
            i += 1;
        }
        while j < ys.len() && ys[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(dist)
}

/// Sample mean and its standard error.
pub fn mean_stderr(xs: &[f64]) -> Result<(f64, f64), StatsError> {
    if xs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Pearson correlation of paired samples. Returns 0 when either sample is
/// constant.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Median of a sample (mean of the two middle values for even lengths).
pub fn median(xs: &[f64]) -> Result<f64, StatsError> {
    if xs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let s = sorted(xs);
    let m = s.len() / 2;
    Ok(if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    })
}

pub(crate) fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}
