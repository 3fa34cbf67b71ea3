//! Structural invariants shared by the property tests and the acceptance
//! suite.

#![allow(dead_code)]

use kingman_core::bridges::{sample_standard_bridge, Bridge};
use kingman_core::diffusions::build_hierarchy;
use kingman_core::stats::{experiment_rng, replicates, split_rng};
use kingman_core::Partition;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::Rng;

pub const CASES: u32 = 1000;

#[derive(Debug, Clone)]
pub struct PartitionCase {
    pub colors: Vec<u8>,
    pub picks: (usize, usize, usize),
    pub cut: (usize, usize),
    pub shuffle: u64,
}

pub fn partition_case() -> impl Strategy<Value = PartitionCase> {
    (
        prop::collection::vec(0u8..6, 1..14),
        any::<(usize, usize, usize)>(),
        any::<(usize, usize)>(),
        any::<u64>(),
    )
        .prop_map(|(colors, picks, cut, shuffle)| PartitionCase {
            colors,
            picks,
            cut,
            shuffle,
        })
}

pub fn partition_laws(c: &PartitionCase) -> Result<(), TestCaseError> {
    let p = Partition::from_assignment(&c.colors);
    let n = c.colors.len();
    prop_assert_eq!(p.ground(), (1..=n).collect::<Vec<_>>());
    prop_assert_eq!(p.block_sizes().iter().sum::<usize>(), n);

    let x = 1 + c.picks.0 % n;
    let e = p.erode(x).unwrap();
    prop_assert_eq!(&e.erode(x).unwrap(), &e);
    prop_assert_eq!(e.blocks()[e.block_of(x).unwrap()].len(), 1);
    prop_assert_eq!(e.ground(), p.ground());

    let m = p.block_count();
    if m >= 2 {
        let i = c.picks.1 % m;
        let j = (i + 1 + c.picks.2 % (m - 1)) % m;
        let merged = p.merge(i, j).unwrap();
        prop_assert_eq!(merged.block_count(), m - 1);
        prop_assert_eq!(merged.ground(), p.ground());
        let (a, b) = (p.blocks()[i][0], p.blocks()[j][0]);
        prop_assert!(merged.same_block(a, b));
    }

    let m1 = 1 + c.cut.0 % n;
    let m2 = 1 + c.cut.1 % m1;
    let r1 = p.restrict(m1).unwrap();
    prop_assert_eq!(r1.restrict(m2).unwrap(), p.restrict(m2).unwrap());
    for a in 1..=m1 {
        for b in 1..=m1 {
            prop_assert_eq!(r1.same_block(a, b), p.same_block(a, b));
        }
    }

    let mut rng = split_rng(c.shuffle, 0);
    let mut sigma: Vec<usize> = (1..=n).collect();
    for k in (1..n).rev() {
        sigma.swap(k, rng.random_range(0..=k));
    }
    let mut inverse = vec![0; n];
    for (i, &s) in sigma.iter().enumerate() {
        inverse[s - 1] = i + 1;
    }
    let q = p.relabel(&sigma);
    prop_assert_eq!(q.block_sizes().len(), p.block_count());
    prop_assert_eq!(&q.relabel(&inverse), &p);

    let json = serde_json::to_string(&p).unwrap();
    prop_assert_eq!(serde_json::from_str::<Partition>(&json).unwrap(), p);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BridgeCase {
    pub atoms: Vec<(f64, f64)>,
    pub drift_weight: f64,
    pub seed: u64,
    pub t: f64,
}

pub fn bridge_case() -> impl Strategy<Value = BridgeCase> {
    (
        prop::collection::vec((0.001f64..0.999, 0.01f64..1.0), 1..20),
        prop_oneof![Just(0.0), 0.0f64..2.0],
        any::<u64>(),
        0.05f64..3.0,
    )
        .prop_map(|(atoms, drift_weight, seed, t)| BridgeCase {
            atoms,
            drift_weight,
            seed,
            t,
        })
}

fn normalized(c: &BridgeCase) -> Bridge {
    let mut atoms = c.atoms.clone();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    atoms.dedup_by(|a, b| a.0 == b.0);
    let total: f64 = atoms.iter().map(|a| a.1).sum::<f64>() + c.drift_weight;
    let scaled: Vec<(f64, f64)> = atoms.iter().map(|&(v, m)| (v, m / total)).collect();
    let drift = 1.0 - scaled.iter().map(|a| a.1).sum::<f64>();
    Bridge::new(scaled, drift.max(0.0)).unwrap()
}

pub fn bridge_laws(c: &BridgeCase) -> Result<(), TestCaseError> {
    let b = normalized(c);
    let mut rng = split_rng(c.seed, 0);
    let s = sample_standard_bridge(c.t, &mut rng).unwrap();
    for bridge in [&b, &s] {
        let mass: f64 = bridge.atoms().iter().map(|a| a.1).sum::<f64>() + bridge.drift();
        prop_assert!((mass - 1.0).abs() < 1e-12);
        prop_assert!((bridge.eval(1.0).unwrap() - 1.0).abs() < 1e-12);
        let (mut prev_b, mut prev_inv) = (0.0, 0.0);
        for i in 0..=256 {
            let u = i as f64 / 256.0;
            let y = bridge.eval(u).unwrap();
            let x = bridge.inverse(u).unwrap();
            prop_assert!(y >= prev_b && (0.0..=1.0 + 1e-12).contains(&y));
            prop_assert!(x >= prev_inv && (0.0..=1.0).contains(&x));
            prop_assert!(bridge.eval(x).unwrap() >= u - 1e-12);
            prev_b = y;
            prev_inv = x;
        }
    }
    let s2 = sample_standard_bridge(c.t, &mut rng).unwrap();
    let comp = Bridge::compose(&s, &s2).unwrap();
    for i in 0..=256 {
        let u = i as f64 / 256.0;
        prop_assert_eq!(comp.eval(u).unwrap(), s.eval(s2.eval(u).unwrap()).unwrap());
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct HierarchyCase {
    pub k: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
}

pub fn hierarchy_case() -> impl Strategy<Value = HierarchyCase> {
    (1usize..8, 5e-3f64..2e-2, 0.5f64..3.0, any::<u64>()).prop_map(|(k, dt, horizon, seed)| {
        HierarchyCase {
            k,
            dt,
            horizon,
            seed,
        }
    })
}

pub fn hierarchy_laws(c: &HierarchyCase) -> Result<(), TestCaseError> {
    let h = build_hierarchy(c.k, c.dt, c.horizon, &mut split_rng(c.seed, 0)).unwrap();
    prop_assert_eq!(h.depth(), c.k);
    prop_assert!(h.mass_defect() < 1e-9, "defect {}", h.mass_defect());
    for m in 0..h.residual.len() {
        let s: f64 = h.z_paths.iter().map(|z| z.values[m]).sum();
        prop_assert!(s <= 1.0 + 1e-12);
        prop_assert!(h.residual.values[m] >= 0.0);
    }
    for z in &h.z_paths {
        prop_assert!(z.values.iter().all(|&v| v >= 0.0));
    }
    for t in &h.tau {
        prop_assert!(t.windows(2).all(|w| w[1] >= w[0]));
    }
    Ok(())
}

pub fn rng_laws(seed: u64, stream: u64) -> Result<(), TestCaseError> {
    let mut a = split_rng(seed, stream);
    let mut b = split_rng(seed, stream);
    for _ in 0..64 {
        prop_assert_eq!(a.random::<u64>(), b.random::<u64>());
    }
    let first: u64 = split_rng(seed, stream).random();
    let other: u64 = split_rng(seed, stream.wrapping_add(1)).random();
    prop_assert_ne!(first, other);
    let x: u64 = experiment_rng(seed, "exp", stream).random();
    let y: u64 = experiment_rng(seed, "exp", stream).random();
    prop_assert_eq!(x, y);
    let short = replicates(seed, "exp", 3, |_, r| r.random::<u32>());
    let long = replicates(seed, "exp", 5, |_, r| r.random::<u32>());
    prop_assert_eq!(&short[..], &long[..3]);
    Ok(())
}
