//! Finite set partitions, mass partitions and the paintbox sampler.
//!
//! A [`Partition`] is stored in canonical form: every block is sorted
//! ascending and blocks are ordered by their least element. Two partitions
//! are equal iff their canonical forms are structurally equal, which lets
//! them be used directly as keys of empirical distributions.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer label of an element of the ground set.
pub type Label = usize;

/// Absolute tolerance used when validating mass partitions.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("block {0} is empty")]
    EmptyBlock(usize),
    #[error("label {0} appears in more than one block")]
    DuplicateLabel(Label),
    #[error("block index {index} out of range for a partition with {blocks} blocks")]
    BlockIndexOutOfRange { index: usize, blocks: usize },
    #[error("cannot merge block {0} with itself")]
    SameBlock(usize),
    #[error("label {0} is not in the ground set")]
    UnknownLabel(Label),
    #[error("restriction to [{m}] is invalid for a partition of [{n}]")]
    InvalidRestriction { m: usize, n: usize },
    #[error("ground set is not a contiguous range [1, n]")]
    NotContiguous,
    #[error("invalid mass partition: {0}")]
    InvalidMass(String),
}

/// A partition of a finite set of integer labels, kept in canonical order.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Label>>", into = "Vec<Vec<Label>>")]
pub struct Partition {
    blocks: Vec<Vec<Label>>,
}

impl Partition {
    /// Builds a partition from arbitrary blocks, validating disjointness and
    /// non-emptiness, then canonicalizing.
    pub fn from_blocks(blocks: Vec<Vec<Label>>) -> Result<Self, PartitionError> {
        let mut seen = std::collections::HashSet::new();
        for (i, b) in blocks.iter().enumerate() {
            if b.is_empty() {
                return Err(PartitionError::EmptyBlock(i));
            }
            for &x in b {
                if !seen.insert(x) {
                    return Err(PartitionError::DuplicateLabel(x));
                }
            }
        }
        Ok(Self::canonical(blocks))
    }

    /// Canonicalizes blocks known to be disjoint and non-empty.
    pub(crate) fn canonical(mut blocks: Vec<Vec<Label>>) -> Self {
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Partition { blocks }
    }

    /// The partition of `[n]` into singletons.
    pub fn singletons(n: usize) -> Self {
        Partition {
            blocks: (1..=n).map(|i| vec![i]).collect(),
        }
    }

    /// The partition of `[n]` with a single block.
    pub fn trivial(n: usize) -> Self {
        if n == 0 {
            return Partition { blocks: Vec::new() };
        }
        Partition {
            blocks: vec![(1..=n).collect()],
        }
    }

    /// Builds the partition of `[n]` from a block assignment, where
    /// `colors[i]` is the class of label `i + 1`. Any hashable key works.
    pub fn from_assignment<K: std::hash::Hash + Eq>(colors: &[K]) -> Self {
        let mut index: HashMap<&K, usize> = HashMap::with_capacity(colors.len());
        let mut blocks: Vec<Vec<Label>> = Vec::new();
        for (i, c) in colors.iter().enumerate() {
            let slot = *index.entry(c).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            blocks[slot].push(i + 1);
        }
        // Blocks are created in order of their least element and filled in
        // increasing label order, so they are already canonical.
        Partition { blocks }
    }

    pub fn blocks(&self) -> &[Vec<Label>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Number of labels in the ground set.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Sorted ground set.
    pub fn ground(&self) -> Vec<Label> {
        let mut g: Vec<Label> = self.blocks.iter().flatten().copied().collect();
        g.sort_unstable();
        g
    }

    /// Block sizes in canonical block order.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// Index of the block containing `x`.
    pub fn block_of(&self, x: Label) -> Option<usize> {
        self.blocks.iter().position(|b| b.binary_search(&x).is_ok())
    }

    /// Whether `x` and `y` share a block.
    pub fn same_block(&self, x: Label, y: Label) -> bool {
        match (self.block_of(x), self.block_of(y)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }

    /// Number of labels that sit in blocks of size at least two.
    pub fn non_singleton_elements(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.len() > 1)
            .map(Vec::len)
            .sum()
    }

    /// `n` such that the ground set is exactly `[1, n]`.
    fn contiguous_n(&self) -> Result<usize, PartitionError> {
        let n = self.len();
        let max = self.blocks.iter().flatten().copied().max().unwrap_or(0);
        let min = self.blocks.iter().flatten().copied().min().unwrap_or(1);
        // Labels are distinct, so n labels within [1, n] cover it.
        if max == n && min == 1 {
            Ok(n)
        } else {
            Err(PartitionError::NotContiguous)
        }
    }

    /// Replaces blocks `i` and `j` by their union.
    pub fn merge(&self, i: usize, j: usize) -> Result<Partition, PartitionError> {
        let m = self.blocks.len();
        for index in [i, j] {
            if index >= m {
                return Err(PartitionError::BlockIndexOutOfRange { index, blocks: m });
            }
        }
        if i == j {
            return Err(PartitionError::SameBlock(i));
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let mut blocks = self.blocks.clone();
        let taken = blocks.remove(hi);
        blocks[lo].extend(taken);
        blocks[lo].sort_unstable();
        // The merged block keeps the least element of blocks[lo], so block
        // order is unchanged.
        Ok(Partition { blocks })
    }

    /// Moves `x` into a new singleton block. Eroding a label that is already
    /// a singleton leaves the partition unchanged.
    pub fn erode(&self, x: Label) -> Result<Partition, PartitionError> {
        let bi = self.block_of(x).ok_or(PartitionError::UnknownLabel(x))?;
        if self.blocks[bi].len() == 1 {
            return Ok(self.clone());
        }
        let mut blocks = self.blocks.clone();
        blocks[bi].retain(|&y| y != x);
        blocks.push(vec![x]);
        Ok(Self::canonical(blocks))
    }

    /// Restriction of a partition of `[n]` to `[m]`.
    pub fn restrict(&self, m: usize) -> Result<Partition, PartitionError> {
        let n = self.contiguous_n()?;
        if m < 1 || m > n {
            return Err(PartitionError::InvalidRestriction { m, n });
        }
        let blocks = self
            .blocks
            .iter()
            .filter_map(|b| {
                let kept: Vec<Label> = b.iter().copied().take_while(|&x| x <= m).collect();
                (!kept.is_empty()).then_some(kept)
            })
            .collect();
        // Least elements are preserved for surviving blocks.
        Ok(Partition { blocks })
    }

    /// Applies a relabeling `x -> sigma(x)` given as `sigma[x - 1]`.
    pub fn relabel(&self, sigma: &[Label]) -> Partition {
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.iter().map(|&x| sigma[x - 1]).collect())
            .collect();
        Self::canonical(blocks)
    }
}

impl PartialOrd for Partition {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Partition {
    fn cmp(&self, other: &Self) -> Ordering {
        self.blocks.cmp(&other.blocks)
    }
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (j, x) in b.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{x}")?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

impl TryFrom<Vec<Vec<Label>>> for Partition {
    type Error = PartitionError;

    fn try_from(blocks: Vec<Vec<Label>>) -> Result<Self, Self::Error> {
        Partition::from_blocks(blocks)
    }
}

impl From<Partition> for Vec<Vec<Label>> {
    fn from(p: Partition) -> Self {
        p.blocks
    }
}

/// All set partitions of `[n]` in canonical form, enumerated through
/// restricted growth strings. There are Bell(n) of them.
pub fn all_partitions(n: usize) -> Vec<Partition> {
    if n == 0 {
        return vec![Partition { blocks: Vec::new() }];
    }
    let mut out = Vec::new();
    let mut rgs = vec![0usize; n];
    // max_prefix[i] = max(rgs[0..i]).
    let mut max_prefix = vec![0usize; n + 1];
    loop {
        out.push(Partition::from_assignment(&rgs));
        // Find the rightmost position that can be incremented.
        let mut i = n - 1;
        loop {
            if i == 0 {
                return out;
            }
            if rgs[i] <= max_prefix[i] {
                break;
            }
            i -= 1;
        }
        rgs[i] += 1;
        max_prefix[i + 1] = max_prefix[i].max(rgs[i]);
        for j in i + 1..n {
            rgs[j] = 0;
            max_prefix[j + 1] = max_prefix[j];
        }
    }
}

/// Non-increasing non-negative weights with total at most one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassPartition {
    weights: Vec<f64>,
}

impl MassPartition {
    pub fn new(weights: Vec<f64>) -> Result<Self, PartitionError> {
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(PartitionError::InvalidMass(format!(
                "weight {w} is not in [0, 1]"
            )));
        }
        if weights.windows(2).any(|w| w[0] < w[1]) {
            return Err(PartitionError::InvalidMass(
                "weights are not non-increasing".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total > 1.0 + MASS_TOLERANCE {
            return Err(PartitionError::InvalidMass(format!(
                "total mass {total} exceeds 1"
            )));
        }
        Ok(MassPartition { weights })
    }

    /// Sorts arbitrary non-negative weights into a mass partition.
    pub fn from_unsorted(mut weights: Vec<f64>) -> Result<Self, PartitionError> {
        weights.sort_unstable_by(|a, b| b.total_cmp(a));
        Self::new(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Mass assigned to dust.
    pub fn dust(&self) -> f64 {
        (1.0 - self.total()).max(0.0)
    }

    /// Largest weight, zero for the empty mass partition.
    pub fn largest(&self) -> f64 {
        self.weights.first().copied().unwrap_or(0.0)
    }
}

/// Paintbox sampling of a partition of `[n]`: each label independently picks
/// color `k` with probability `weights[k]`, or a private dust color.
pub fn paintbox<R: Rng + ?Sized>(mp: &MassPartition, n: usize, rng: &mut R) -> Partition {
    let cumulative: Vec<f64> = mp
        .weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let colors: Vec<i64> = (1..=n)
        .map(|i| {
            let u: f64 = rng.random();
            let k = cumulative.partition_point(|&c| c <= u);
            if k < cumulative.len() {
                k as i64
            } else {
                -(i as i64)
            }
        })
        .collect();
    Partition::from_assignment(&colors)
}

/// Sorted block sizes over the ground-set size. The sizes are summed as
/// integers before dividing, so the result sums to one up to the rounding
/// of the individual quotients.
pub fn empirical_frequencies(p: &Partition) -> MassPartition {
    let n = p.len();
    if n == 0 {
        return MassPartition {
            weights: Vec::new(),
        };
    }
    let mut sizes = p.block_sizes();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let weights = sizes.iter().map(|&s| s as f64 / n as f64).collect();
    MassPartition { weights }
}
