//! Dyadic measure-preserving maps of `(0,1]`.
//!
//! A map is stored as a permutation of the `2^level` dyadic cells
//! `((k-1)/2^level, k/2^level]`, indexed from 0. Each cell is shifted rigidly
//! onto its image cell, so the map preserves Lebesgue measure. Values are kept
//! in canonical form: the stored level is the smallest level at which the
//! point map can be written as such a cell shift, which makes structural
//! equality coincide with equality of point maps.

use serde::{Deserialize, Serialize};

use crate::error::{ChaosError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawMap", into = "RawMap")]
pub struct DyadicMap {
    level: u32,
    perm: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawMap {
    level: u32,
    perm: Vec<usize>,
}

impl TryFrom<RawMap> for DyadicMap {
    type Error = ChaosError;

    fn try_from(raw: RawMap) -> Result<Self> {
        DyadicMap::from_permutation(raw.level, raw.perm)
    }
}

impl From<DyadicMap> for RawMap {
    fn from(map: DyadicMap) -> Self {
        RawMap {
            level: map.level,
            perm: map.perm,
        }
    }
}

pub(crate) fn cell_count(level: u32) -> usize {
    1usize << level
}

fn check_bijection(level: u32, images: &[usize]) -> Result<()> {
    let size = cell_count(level);
    if images.len() != size {
        return Err(ChaosError::BadPermutationLength {
            level,
            len: images.len(),
        });
    }
    let mut seen = vec![false; size];
    for &value in images {
        if value >= size || seen[value] {
            return Err(ChaosError::NotABijection { size, value });
        }
        seen[value] = true;
    }
    Ok(())
}

/// Drops levels while every sibling pair `(2i, 2i+1)` is moved as one block
/// onto an aligned sibling pair in order.
fn coarsen(mut level: u32, mut perm: Vec<usize>) -> (u32, Vec<usize>) {
    while level > 0 {
        let mut coarse = Vec::with_capacity(perm.len() / 2);
        for pair in perm.chunks_exact(2) {
            if pair[0] % 2 != 0 || pair[1] != pair[0] + 1 {
                return (level, perm);
            }
            coarse.push(pair[0] / 2);
        }
        perm = coarse;
        level -= 1;
    }
    (level, perm)
}

impl DyadicMap {
    /// Builds the map shifting cell `k` onto cell `images[k]` at level `level`.
    pub fn from_permutation(level: u32, images: Vec<usize>) -> Result<Self> {
        check_bijection(level, &images)?;
        let (level, perm) = coarsen(level, images);
        Ok(DyadicMap { level, perm })
    }

    pub fn identity() -> Self {
        DyadicMap {
            level: 0,
            perm: vec![0],
        }
    }

    /// The dyadic periodic shift `t -> t + 2^-d (mod 1)`.
    pub fn periodic_shift(d: u32) -> Result<Self> {
        if d == 0 {
            return Err(ChaosError::InvalidArgument(
                "periodic shift needs level >= 1".into(),
            ));
        }
        let size = cell_count(d);
        Self::from_permutation(d, (0..size).map(|k| (k + 1) % size).collect())
    }

    /// Exchanges cells `a` and `b` of level `level`, fixing everything else.
    pub fn transposition(level: u32, a: usize, b: usize) -> Result<Self> {
        let size = cell_count(level);
        if a >= size || b >= size {
            return Err(ChaosError::IndexOutOfRange(format!(
                "cells {a}, {b} at level {level}"
            )));
        }
        let mut perm: Vec<usize> = (0..size).collect();
        perm.swap(a, b);
        Self::from_permutation(level, perm)
    }

    /// Canonical level, which equals `deg(g)`.
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn degree(&self) -> u32 {
        self.level
    }

    /// Cell images at the canonical level.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn is_identity(&self) -> bool {
        self.level == 0
    }

    pub fn apply_point(&self, t: f64) -> f64 {
        let size = self.perm.len();
        let scale = size as f64;
        let k = ((t * scale).ceil() as usize).clamp(1, size) - 1;
        (self.perm[k] + 1) as f64 / scale - ((k + 1) as f64 / scale - t)
    }

    /// Cell images at a finer level; each coarse block keeps its internal order.
    pub fn refine(&self, d_target: u32) -> Result<Vec<usize>> {
        if d_target < self.level {
            return Err(ChaosError::LevelTooCoarse {
                requested: d_target,
                required: self.level,
            });
        }
        let shift = d_target - self.level;
        let mask = (1usize << shift) - 1;
        Ok((0..cell_count(d_target))
            .map(|k| (self.perm[k >> shift] << shift) | (k & mask))
            .collect())
    }

    /// `compose(g, h)` is the point map `t -> g(h(t))`.
    pub fn compose(&self, other: &DyadicMap) -> DyadicMap {
        let level = self.level.max(other.level);
        let outer = self.refine(level).expect("level is at least the degree");
        let inner = other.refine(level).expect("level is at least the degree");
        let images = inner.iter().map(|&k| outer[k]).collect();
        let (level, perm) = coarsen(level, images);
        DyadicMap { level, perm }
    }

    pub fn inverse(&self) -> DyadicMap {
        let mut inv = vec![0; self.perm.len()];
        for (k, &image) in self.perm.iter().enumerate() {
            inv[image] = k;
        }
        DyadicMap {
            level: self.level,
            perm: inv,
        }
    }

    pub fn pow(&self, exponent: usize) -> DyadicMap {
        let mut out = DyadicMap::identity();
        for _ in 0..exponent {
            out = self.compose(&out);
        }
        out
    }

    /// Whether the map fixes every level-`d` cell outside `cells` (given at level `d`).
    pub fn fixes_outside(&self, cells: &[bool], d: u32) -> Result<bool> {
        let images = self.refine(d)?;
        Ok(images
            .iter()
            .enumerate()
            .all(|(k, &image)| cells[k] || image == k))
    }
}
