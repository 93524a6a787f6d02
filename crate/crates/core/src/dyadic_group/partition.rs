use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::map::cell_count;
use crate::error::{ChaosError, Result};

/// A finite union of dyadic cells of a common level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSet {
    pub level: u32,
    pub cells: BTreeSet<usize>,
}

impl CellSet {
    pub fn new(level: u32, cells: impl IntoIterator<Item = usize>) -> Result<Self> {
        let cells: BTreeSet<usize> = cells.into_iter().collect();
        if let Some(&c) = cells.iter().find(|&&c| c >= cell_count(level)) {
            return Err(ChaosError::IndexOutOfRange(format!(
                "cell {c} at level {level}"
            )));
        }
        Ok(CellSet { level, cells })
    }

    /// The whole unit interval.
    pub fn unit() -> Self {
        CellSet {
            level: 0,
            cells: BTreeSet::from([0]),
        }
    }

    /// Cells `start..end` of level `level`.
    pub fn interval(level: u32, start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(ChaosError::EmptyInterval { start, end });
        }
        Self::new(level, start..end)
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Lebesgue measure of the set.
    pub fn measure(&self) -> f64 {
        self.cells.len() as f64 / cell_count(self.level) as f64
    }

    /// Smallest level at which the set is a union of cells.
    pub fn min_level(&self) -> u32 {
        let mut set = self.clone();
        while set.level > 0 {
            let parents: BTreeSet<usize> = set.cells.iter().map(|c| c / 2).collect();
            if parents.len() * 2 != set.cells.len() {
                break;
            }
            set = CellSet {
                level: set.level - 1,
                cells: parents,
            };
        }
        set.level
    }

    /// Sorted level-`d` cells making up the set.
    pub fn fine_cells(&self, d: u32) -> Result<Vec<usize>> {
        if d >= self.level {
            let shift = d - self.level;
            return Ok(self
                .cells
                .iter()
                .flat_map(|&c| (c << shift)..((c + 1) << shift))
                .collect());
        }
        let required = self.min_level();
        if d < required {
            return Err(ChaosError::LevelTooCoarse {
                requested: d,
                required,
            });
        }
        let shift = self.level - d;
        let coarse: BTreeSet<usize> = self.cells.iter().map(|c| c >> shift).collect();
        Ok(coarse.into_iter().collect())
    }

    pub fn mask(&self, d: u32) -> Result<Vec<bool>> {
        let mut mask = vec![false; cell_count(d)];
        for c in self.fine_cells(d)? {
            mask[c] = true;
        }
        Ok(mask)
    }
}

/// Parses `"level:c1,c2,..."`, or `"level:a..b"` for a run of cells.
impl FromStr for CellSet {
    type Err = ChaosError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || ChaosError::InvalidArgument(format!("cannot parse cell set {s:?}"));
        let (level, body) = s.split_once(':').ok_or_else(bad)?;
        let level: u32 = level.trim().parse().map_err(|_| bad())?;
        if let Some((a, b)) = body.split_once("..") {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            return CellSet::interval(level, a, b);
        }
        let cells = body
            .split(',')
            .map(|c| c.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        CellSet::new(level, cells)
    }
}

/// Pairwise disjoint cell sets `E_1, ..., E_L`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CellSet>", into = "Vec<CellSet>")]
pub struct CellPartition {
    blocks: Vec<CellSet>,
}

impl TryFrom<Vec<CellSet>> for CellPartition {
    type Error = ChaosError;

    fn try_from(blocks: Vec<CellSet>) -> Result<Self> {
        CellPartition::new(blocks)
    }
}

impl From<CellPartition> for Vec<CellSet> {
    fn from(p: CellPartition) -> Self {
        p.blocks
    }
}

impl CellPartition {
    pub fn new(blocks: Vec<CellSet>) -> Result<Self> {
        if blocks.iter().any(CellSet::is_empty) {
            return Err(ChaosError::EmptySet);
        }
        let level = blocks.iter().map(|b| b.level).max().unwrap_or(0);
        let mut seen = vec![false; cell_count(level)];
        for block in &blocks {
            for c in block.fine_cells(level)? {
                if seen[c] {
                    return Err(ChaosError::InvalidArgument(format!(
                        "blocks overlap in cell {c} at level {level}"
                    )));
                }
                seen[c] = true;
            }
        }
        Ok(CellPartition { blocks })
    }

    pub fn blocks(&self) -> &[CellSet] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn max_level(&self) -> u32 {
        self.blocks.iter().map(|b| b.level).max().unwrap_or(0)
    }

    /// Block index of every level-`d` cell, `None` outside the union.
    pub fn labels(&self, d: u32) -> Result<Vec<Option<usize>>> {
        let mut labels = vec![None; cell_count(d)];
        for (l, block) in self.blocks.iter().enumerate() {
            for c in block.fine_cells(d)? {
                labels[c] = Some(l);
            }
        }
        Ok(labels)
    }

    /// Blocks intersected with the cells `0..t_cell` of level `d`; empty pieces dropped.
    pub fn restrict_before(&self, t_cell: usize, d: u32) -> Result<CellPartition> {
        let mut blocks = Vec::new();
        for block in &self.blocks {
            let cells: Vec<usize> = block
                .fine_cells(d)?
                .into_iter()
                .filter(|&c| c < t_cell)
                .collect();
            if !cells.is_empty() {
                blocks.push(CellSet::new(d, cells)?);
            }
        }
        Ok(CellPartition { blocks })
    }
}
