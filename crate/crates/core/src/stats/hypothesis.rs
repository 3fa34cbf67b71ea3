//! Pearson chi-square and Kolmogorov-Smirnov tests.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{sorted, EmpiricalPmf, StatsError};

/// Outcome of a hypothesis test. `dof` is zero for tests without one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn chi_square_sf(statistic: f64, dof: usize) -> f64 {
    if statistic.is_infinite() {
        return 0.0;
    }
    if statistic <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("dof >= 1");
    dist.sf(statistic)
}

/// Pearson goodness-of-fit of observed counts against a pmf.
///
/// Cells whose expected count is below `min_cell` are pooled into a tail
/// cell together with any observed outcome outside the support of
/// `expected` and any probability mass `expected` leaves unassigned. A tail
/// that is still below `min_cell` is folded into the smallest kept cell.
pub fn chi_square_gof<K: Ord>(
    observed: &EmpiricalPmf<K>,
    expected: &BTreeMap<K, f64>,
    min_cell: u64,
) -> Result<TestResult, StatsError> {
    let n = observed.total() as f64;
    if observed.total() == 0 {
        return Err(StatsError::EmptySample);
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut tail_obs, mut tail_exp) = (0.0, 0.0);
    let mut assigned = 0.0;
    for (k, &p) in expected {
        let e = p * n;
        let o = observed.count(k) as f64;
        assigned += p;
        if e >= min_cell as f64 {
            cells.push((o, e));
        } else {
            tail_obs += o;
            tail_exp += e;
        }
    }
    for (k, &c) in observed.counts() {
        if !expected.contains_key(k) {
            tail_obs += c as f64;
        }
    }
    tail_exp += ((1.0 - assigned) * n).max(0.0);
    if tail_obs > 0.0 || tail_exp > 0.0 {
        if tail_exp < min_cell as f64 && tail_exp > 0.0 && !cells.is_empty() {
            let smallest = cells
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                .map(|(i, _)| i)
                .unwrap();
            cells[smallest].0 += tail_obs;
            cells[smallest].1 += tail_exp;
        } else {
            cells.push((tail_obs, tail_exp));
        }
    }
    if cells.len() < 2 {
        return Err(StatsError::TooFewCells(cells.len()));
    }
    let statistic: f64 = cells
        .iter()
        .map(|&(o, e)| {
            if e > 0.0 {
                (o - e).powi(2) / e
            } else if o > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum();
    let dof = cells.len() - 1;
    Ok(TestResult {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
    })
}

/// Two-sample chi-square test of homogeneity (a 2 x K contingency table).
///
/// Outcomes with a combined count below `min_cell` are pooled.
pub fn chi_square_two_sample<K: Ord>(
    a: &EmpiricalPmf<K>,
    b: &EmpiricalPmf<K>,
    min_cell: u64,
) -> Result<TestResult, StatsError> {
    if a.total() == 0 || b.total() == 0 {
        return Err(StatsError::EmptySample);
    }
    let mut keys: Vec<&K> = a.counts().keys().chain(b.counts().keys()).collect();
    keys.sort();
    keys.dedup();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut ta, mut tb) = (0.0, 0.0);
    for k in keys {
        let (ca, cb) = (a.count(k) as f64, b.count(k) as f64);
        if ca + cb >= min_cell as f64 {
            cells.push((ca, cb));
        } else {
            ta += ca;
            tb += cb;
        }
    }
    if ta + tb > 0.0 {
        if ta + tb < min_cell as f64 && !cells.is_empty() {
            let smallest = cells
                .iter()
                .enumerate()
                .min_by(|x, y| (x.1 .0 + x.1 .1).total_cmp(&(y.1 .0 + y.1 .1)))
                .map(|(i, _)| i)
                .unwrap();
            cells[smallest].0 += ta;
            cells[smallest].1 += tb;
        } else {
            cells.push((ta, tb));
        }
    }
    if cells.len() < 2 {
        return Err(StatsError::TooFewCells(cells.len()));
    }
    let (na, nb) = (a.total() as f64, b.total() as f64);
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let statistic: f64 = cells
        .iter()
        .map(|&(x, y)| (ka * x - kb * y).powi(2) / (x + y))
        .sum();
    let dof = cells.len() - 1;
    Ok(TestResult {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
    })
}

/// Survival function of the Kolmogorov distribution,
/// `Q(x) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 x^2)`.
pub fn kolmogorov_q(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // Jacobi-transformed series, fast for small x.
        let y = -std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let s: f64 = (1..=8)
            .map(|j| ((2 * j - 1) as f64).powi(2) * y)
            .map(f64::exp)
            .sum();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / x * s;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for j in 1..=100 {
            let term = (-2.0 * (j * j) as f64 * x * x).exp();
            sum += if j % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let en = effective_n.sqrt();
    kolmogorov_q((en + 0.12 + 0.11 / en) * d)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let xs = sorted(x);
    let ys = sorted(y);
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] == v {
            i += 1;
        }
        while j < ys.len() && ys[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / nx - j as f64 / ny).abs());
    }
    Ok(TestResult {
        statistic: d,
        dof: 0,
        p_value: ks_p_value(d, nx * ny / (nx + ny)),
    })
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(x: &[f64], cdf: F) -> Result<TestResult, StatsError> {
    if x.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let xs = sorted(x);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in xs.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(TestResult {
        statistic: d,
        dof: 0,
        p_value: ks_p_value(d, n),
    })
}
