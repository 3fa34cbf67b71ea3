//! Conditioned Wright-Fisher diffusions and the hierarchical construction of
//! the stationary asymptotic block frequencies.
//!
//! `Y` solves `dY = (1 - Y) dt + sqrt(Y (1 - Y)) dW`, the neutral
//! Wright-Fisher diffusion conditioned to fix at 1. The hierarchy is
//!
//! ```text
//! Z_1 = Y_1,
//! R_i = 1 - Z_1 - ... - Z_i,
//! tau_i(t) = int_0^t ds / R_i(s),
//! Z_{i+1}(t) = R_i(t) Y_{i+1}(tau_i(t)),
//! ```
//!
//! with independent `Y_i` started at 0, and the frequencies are
//! `z_i = int_0^inf d e^{-d t} Z_i(t) dt`, sorted in decreasing order.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::partitions::{MassPartition, PartitionError};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_K: usize = 30;
/// Values this close to 1 are treated as fixed.
pub const FIXATION_TOLERANCE: f64 = 1e-12;
/// Residuals below this make the time change infinite.
pub const RESIDUAL_FLOOR: f64 = 1e-10;
/// Largest kernel mass allowed beyond the horizon.
pub const KERNEL_TAIL_TOLERANCE: f64 = 1e-6;

/// Default horizon `max(20, 14 / d)`.
pub fn default_horizon(d: f64) -> f64 {
    (14.0 / d).max(20.0)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("invalid step {dt} or horizon {horizon}")]
    InvalidGrid { dt: f64, horizon: f64 },
    #[error("initial value {0} outside [0, 1]")]
    InvalidStart(f64),
    #[error("hierarchy depth must be at least 1")]
    EmptyHierarchy,
    #[error("rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("kernel mass {tail:e} beyond the horizon is not negligible")]
    HorizonTooShort { tail: f64 },
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

/// Values on the uniform grid `0, dt, 2 dt, …`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionPath {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl DiffusionPath {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("paths are never empty")
    }
}

fn grid_steps(dt: f64, horizon: f64) -> Result<usize, DiffusionError> {
    if !(dt > 0.0 && dt.is_finite() && horizon >= dt && horizon.is_finite()) {
        return Err(DiffusionError::InvalidGrid { dt, horizon });
    }
    Ok((horizon / dt - 1e-9).ceil() as usize)
}

/// Advances `y` by one Euler-Maruyama step of length `h`, clamped to
/// `[0, 1]` and snapped to 1 once within [`FIXATION_TOLERANCE`].
fn wf_step<R: Rng + ?Sized>(y: f64, h: f64, rng: &mut R) -> f64 {
    if y >= 1.0 {
        return 1.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    let next = y + (1.0 - y) * h + (y * (1.0 - y)).max(0.0).sqrt() * h.sqrt() * z;
    let next = next.clamp(0.0, 1.0);
    if next >= 1.0 - FIXATION_TOLERANCE {
        1.0
    } else {
        next
    }
}

/// Advances `y` through elapsed time `span` in steps no longer than `dt`.
fn wf_advance<R: Rng + ?Sized>(mut y: f64, span: f64, dt: f64, rng: &mut R) -> f64 {
    if span <= 0.0 || y >= 1.0 {
        return y;
    }
    let steps = (span / dt).ceil().max(1.0);
    let h = span / steps;
    let mut i = 0.0;
    while i < steps && y < 1.0 {
        y = wf_step(y, h, rng);
        i += 1.0;
    }
    y
}

/// Euler-Maruyama path of the conditioned Wright-Fisher diffusion from
/// `y0` on `[0, horizon]`.
pub fn simulate_conditioned_wf<R: Rng + ?Sized>(
    y0: f64,
    dt: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<DiffusionPath, DiffusionError> {
    if !(0.0..=1.0).contains(&y0) {
        return Err(DiffusionError::InvalidStart(y0));
    }
    let steps = grid_steps(dt, horizon)?;
    let mut values = Vec::with_capacity(steps + 1);
    let mut y = if y0 >= 1.0 - FIXATION_TOLERANCE {
        1.0
    } else {
        y0
    };
    values.push(y);
    for _ in 0..steps {
        y = wf_step(y, dt, rng);
        values.push(y);
    }
    Ok(DiffusionPath { dt, values })
}

/// The first `K` levels of the hierarchy on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyState {
    pub z_paths: Vec<DiffusionPath>,
    /// `1 - Z_1 - … - Z_K`.
    pub residual: DiffusionPath,
    /// `tau_i` on the grid; `f64::INFINITY` once the time change has
    /// exploded.
    pub tau: Vec<Vec<f64>>,
}

impl HierarchyState {
    pub fn depth(&self) -> usize {
        self.z_paths.len()
    }

    pub fn dt(&self) -> f64 {
        self.residual.dt
    }

    pub fn horizon(&self) -> f64 {
        self.residual.horizon()
    }

    /// Largest `|sum_i Z_i + residual - 1|` over the grid.
    pub fn mass_defect(&self) -> f64 {
        (0..self.residual.len())
            .map(|m| {
                let s: f64 = self.z_paths.iter().map(|z| z.values[m]).sum();
                (s + self.residual.values[m] - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Trapezoid accumulation of `int ds / r(s)`, infinite from the first grid
/// point where `r` drops below [`RESIDUAL_FLOOR`].
fn time_change(residual: &[f64], dt: f64) -> Vec<f64> {
    let mut tau = Vec::with_capacity(residual.len());
    let mut acc: f64 = 0.0;
    let mut prev_inv = 1.0 / residual[0];
    tau.push(0.0);
    for &r in &residual[1..] {
        if acc.is_infinite() || r < RESIDUAL_FLOOR {
            acc = f64::INFINITY;
        } else {
            let inv = 1.0 / r;
            acc += 0.5 * dt * (prev_inv + inv);
            prev_inv = inv;
        }
        tau.push(acc);
    }
    tau
}

/// Simulates `Z_1, …, Z_K` on the grid `0, dt, …` up to `horizon`.
///
/// Each `Y_{i+1}` is advanced along the image times `tau_i(grid)` with
/// sub-steps of at most `dt`, so its increments always have the variance of
/// the elapsed diffusion time. Where `tau_i` is infinite `Y_{i+1}` is set to
/// its limit 1.
pub fn build_hierarchy<R: Rng + ?Sized>(
    k: usize,
    dt: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<HierarchyState, DiffusionError> {
    if k == 0 {
        return Err(DiffusionError::EmptyHierarchy);
    }
    let z1 = simulate_conditioned_wf(0.0, dt, horizon, rng)?;
    let mut residual: Vec<f64> = z1.values.iter().map(|z| 1.0 - z).collect();
    let mut z_paths = vec![z1];
    let mut tau = Vec::with_capacity(k);
    for level in 0..k {
        let t = time_change(&residual, dt);
        if level + 1 < k {
            let mut y = 0.0;
            let mut values = Vec::with_capacity(residual.len());
            for m in 0..residual.len() {
                if t[m].is_infinite() {
                    y = 1.0;
                } else if m > 0 {
                    y = wf_advance(y, t[m] - t[m - 1], dt, rng);
                }
                let z = residual[m] * y;
                residual[m] -= z;
                values.push(z);
            }
            z_paths.push(DiffusionPath { dt, values });
        }
        tau.push(t);
    }
    for (m, &r) in residual.iter().enumerate() {
        debug_assert!(r >= 0.0 && z_paths.iter().all(|z| z.values[m] >= 0.0));
    }
    Ok(HierarchyState {
        z_paths,
        residual: DiffusionPath {
            dt,
            values: residual,
        },
        tau,
    })
}

/// Weights `w_m` with `sum_m w_m f(t_m) = int_0^H d e^{-d t} f_lin(t) dt`
/// for the piecewise-linear interpolant `f_lin` of grid values.
///
/// The kernel is integrated exactly on each cell, so the weights are
/// positive and sum to `1 - e^{-d H}`.
pub fn kernel_weights(d: f64, dt: f64, points: usize) -> Vec<f64> {
    let a = d * dt;
    let one_minus = -(-a).exp_m1();
    // int_0^1 a e^{-a s} s ds and int_0^1 a e^{-a s} (1 - s) ds.
    let right = (one_minus - a * (-a).exp()) / a;
    let left = one_minus - right;
    let mut w = vec![0.0; points];
    for m in 0..points.saturating_sub(1) {
        let decay = (-d * m as f64 * dt).exp();
        w[m] += decay * left;
        w[m + 1] += decay * right;
    }
    w
}

/// The unsorted kernel transforms `z_i = int d e^{-d t} Z_i(t) dt`.
pub fn kernel_transform(h: &HierarchyState, d: f64) -> Result<Vec<f64>, DiffusionError> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(DiffusionError::InvalidRate(d));
    }
    let tail = (-d * h.horizon()).exp();
    if tail.is_nan() || tail >= KERNEL_TAIL_TOLERANCE {
        return Err(DiffusionError::HorizonTooShort { tail });
    }
    let w = kernel_weights(d, h.dt(), h.residual.len());
    Ok(h.z_paths
        .iter()
        .map(|z| z.values.iter().zip(&w).map(|(v, w)| v * w).sum())
        .collect())
}

/// The frequencies `z_i` in decreasing order.
pub fn frequencies_from_hierarchy(
    h: &HierarchyState,
    d: f64,
) -> Result<MassPartition, DiffusionError> {
    Ok(MassPartition::from_unsorted(kernel_transform(h, d)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean_stderr, median, split_rng};

    #[test]
    fn fixed_start_stays_fixed() {
        let mut rng = split_rng(1, 0);
        let p = simulate_conditioned_wf(1.0, 1e-2, 5.0, &mut rng).unwrap();
        assert!(p.values.iter().all(|&v| v == 1.0));
        assert_eq!(p.len(), 501);
        assert!((p.horizon() - 5.0).abs() < 1e-12);
        assert!(simulate_conditioned_wf(1.5, 1e-2, 5.0, &mut rng).is_err());
        assert!(simulate_conditioned_wf(0.5, 0.0, 5.0, &mut rng).is_err());
    }

    #[test]
    fn mean_follows_ode() {
        let mut rng = split_rng(2, 0);
        let ys: Vec<f64> = (0..100_000)
            .map(|_| {
                simulate_conditioned_wf(0.0, 1e-3, 1.0, &mut rng)
                    .unwrap()
                    .last()
            })
            .collect();
        let (m, _) = mean_stderr(&ys).unwrap();
        assert!((m - (1.0 - (-1.0f64).exp())).abs() < 0.01, "mean {m}");
    }

    #[test]
    fn paths_reach_one() {
        let mut rng = split_rng(3, 0);
        let runs = 2000;
        let hit = (0..runs)
            .filter(|_| {
                simulate_conditioned_wf(0.0, 1e-3, 20.0, &mut rng)
                    .unwrap()
                    .last()
                    > 0.99
            })
            .count();
        assert!(hit as f64 >= 0.99 * runs as f64, "{hit}");
    }

    #[test]
    fn kernel_weights_integrate_exactly() {
        let (d, dt) = (1.3, 0.01);
        let w = kernel_weights(d, dt, 2001);
        let h = 20.0;
        assert!((w.iter().sum::<f64>() - (1.0 - (-d * h).exp())).abs() < 1e-12);
        // Linear functions are integrated exactly:
        // int_0^H d e^{-dt} t dt = (1 - e^{-dH}(1 + dH)) / d.
        let lin: f64 = w.iter().enumerate().map(|(m, w)| w * m as f64 * dt).sum();
        let exact = (1.0 - (-d * h).exp() * (1.0 + d * h)) / d;
        assert!((lin - exact).abs() < 1e-10, "{lin} vs {exact}");
    }

    #[test]
    fn depth_one_is_a_plain_path() {
        let a = build_hierarchy(1, 1e-2, 3.0, &mut split_rng(4, 0)).unwrap();
        let b = simulate_conditioned_wf(0.0, 1e-2, 3.0, &mut split_rng(4, 0)).unwrap();
        assert_eq!(a.z_paths[0], b);
        assert_eq!(a.tau.len(), 1);
    }

    #[test]
    fn hierarchy_conserves_mass() {
        let mut rng = split_rng(5, 0);
        for _ in 0..20 {
            let h = build_hierarchy(10, 1e-2, 10.0, &mut rng).unwrap();
            assert_eq!(h.depth(), 10);
            assert!(h.mass_defect() < 1e-9);
            for z in &h.z_paths {
                assert!(z.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
            for t in &h.tau {
                assert!(t.windows(2).all(|w| w[1] >= w[0]));
            }
            let z = kernel_transform(&h, 2.0).unwrap();
            assert!(z.iter().all(|&x| (0.0..=1.0).contains(&x)));
            assert!(z.iter().sum::<f64>() <= 1.0);
        }
    }

    #[test]
    fn residual_shrinks_with_horizon() {
        let med = |horizon: f64, seed| {
            let mut rng = split_rng(seed, 0);
            let r: Vec<f64> = (0..200)
                .map(|_| {
                    build_hierarchy(10, 1e-2, horizon, &mut rng)
                        .unwrap()
                        .residual
                        .last()
                })
                .collect();
            median(&r).unwrap()
        };
        // Some level fixes in finite time, after which the residual is
        // exactly zero; the strict comparison uses horizons before that.
        let (a, b) = (med(0.05, 6), med(0.1, 7));
        assert!(b < a, "{b} vs {a}");
        assert!(med(50.0, 7) <= med(10.0, 6));
    }

    #[test]
    fn short_horizon_is_rejected() {
        let h = build_hierarchy(2, 1e-2, 5.0, &mut split_rng(8, 0)).unwrap();
        assert!(matches!(
            kernel_transform(&h, 1.0),
            Err(DiffusionError::HorizonTooShort { .. })
        ));
        assert!(kernel_transform(&h, 3.0).is_ok());
    }

    #[test]
    fn first_frequency_mean() {
        let mut rng = split_rng(9, 0);
        let z1: Vec<f64> = (0..20_000)
            .map(|_| {
                let h = build_hierarchy(1, 1e-3, 20.0, &mut rng).unwrap();
                kernel_transform(&h, 1.0).unwrap()[0]
            })
            .collect();
        let (m, se) = mean_stderr(&z1).unwrap();
        assert!((m - 0.5).abs() < 0.01, "{m} ± {se}");
    }
}
