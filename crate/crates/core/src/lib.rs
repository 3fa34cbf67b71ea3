//! Simulation and verification toolkit for Kingman's coalescent with erosion
//! and with immigration.
//!
//! * [`partitions`]: set partitions, mass partitions, paintbox sampling.
//! * [`erosion`]: the n-Kingman coalescent with erosion, an exact stationary
//!   sampler and a brute-force generator oracle.
//! * [`immigration`]: block counts and the backward ancestral process of the
//!   coalescent with immigration.
//! * [`bridges`]: exchangeable bridges, the standard flow of bridges and a
//!   second exact stationary sampler built on it.
//! * [`branching`]: total progeny of the critical binary branching process.
//! * [`diffusions`]: the hierarchy of conditioned Wright-Fisher diffusions
//!   whose kernel transform gives the asymptotic block frequencies.
//! * [`stats`]: tests, distances and reproducible random streams.

pub mod branching;
pub mod bridges;
pub mod diffusions;
pub mod erosion;
pub mod immigration;
pub mod partitions;
pub mod stats;

pub use partitions::{empirical_frequencies, paintbox, Label, MassPartition, Partition};
pub use stats::{split_rng, SimRng};
