use smallvec::SmallVec;

use super::map::{cell_count, DyadicMap};
use crate::error::{ChaosError, Result};

/// An ordered n-tuple of `(time cell, state index)` pairs with distinct cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellTuple {
    entries: SmallVec<[(u32, u32); 4]>,
}

impl CellTuple {
    pub fn new(entries: &[(u32, u32)]) -> Result<Self> {
        let tuple = CellTuple {
            entries: entries.iter().copied().collect(),
        };
        if !tuple.is_off_diagonal() {
            return Err(ChaosError::InvalidKernel(format!(
                "repeated time cell in {entries:?}"
            )));
        }
        Ok(tuple)
    }

    pub fn from_parts(cells: &[u32], atoms: &[u32]) -> Result<Self> {
        if cells.len() != atoms.len() {
            return Err(ChaosError::InvalidKernel(format!(
                "{} cells but {} atoms",
                cells.len(),
                atoms.len()
            )));
        }
        let entries: Vec<(u32, u32)> = cells.iter().copied().zip(atoms.iter().copied()).collect();
        Self::new(&entries)
    }

    /// Builds a tuple without the distinctness check; used for intermediate products.
    pub(crate) fn raw(entries: impl IntoIterator<Item = (u32, u32)>) -> Self {
        CellTuple {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn cells(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn atoms(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.1)
    }

    pub fn is_off_diagonal(&self) -> bool {
        let e = &self.entries;
        (0..e.len()).all(|i| (i + 1..e.len()).all(|j| e[i].0 != e[j].0))
    }

    pub fn max_cell(&self) -> Option<u32> {
        self.cells().max()
    }

    /// Slot `i` of the result is slot `order[i]` of `self`.
    pub fn reorder(&self, order: &[usize]) -> CellTuple {
        CellTuple {
            entries: order.iter().map(|&i| self.entries[i]).collect(),
        }
    }

    pub fn concat(&self, other: &CellTuple) -> CellTuple {
        CellTuple {
            entries: self.entries.iter().chain(other.entries.iter()).copied().collect(),
        }
    }

    /// Slot permutation sorting by time cell, so `self.reorder(&p)` is increasing.
    pub fn sorting_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by_key(|&i| self.entries[i].0);
        order
    }

    /// Maps every time cell through level-`d` images, atoms unchanged.
    pub fn map_cells(&self, images: &[usize]) -> CellTuple {
        CellTuple {
            entries: self
                .entries
                .iter()
                .map(|&(c, a)| (images[c as usize] as u32, a))
                .collect(),
        }
    }
}

/// The diagonal action `g[n]` on a tuple of level-`d` cells.
pub fn diagonal_apply(g: &DyadicMap, x: &CellTuple, d: u32) -> Result<CellTuple> {
    let size = cell_count(d);
    if let Some(c) = x.max_cell() {
        if c as usize >= size {
            return Err(ChaosError::LevelMismatch {
                expected: d,
                found: u32::BITS - c.leading_zeros(),
            });
        }
    }
    if g.degree() > d {
        return Err(ChaosError::LevelMismatch {
            expected: g.degree(),
            found: d,
        });
    }
    Ok(x.map_cells(&g.refine(d)?))
}

/// Mixed-radix index space of all n-tuples over `2^level` cells and `atoms` states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TupleSpace {
    pub n: usize,
    pub level: u32,
    pub atoms: usize,
}

impl TupleSpace {
    pub fn new(n: usize, level: u32, atoms: usize) -> Self {
        TupleSpace { n, level, atoms }
    }

    pub fn cells(&self) -> usize {
        cell_count(self.level)
    }

    fn base(&self) -> usize {
        self.cells() * self.atoms
    }

    pub fn len(&self) -> usize {
        self.base().pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn encode(&self, x: &CellTuple) -> usize {
        x.entries()
            .iter()
            .fold(0, |acc, &(c, a)| acc * self.base() + c as usize * self.atoms + a as usize)
    }

    pub fn decode(&self, mut index: usize) -> CellTuple {
        let base = self.base();
        let mut entries: SmallVec<[(u32, u32); 4]> = SmallVec::from_elem((0, 0), self.n);
        for slot in (0..self.n).rev() {
            let digit = index % base;
            index /= base;
            entries[slot] = ((digit / self.atoms) as u32, (digit % self.atoms) as u32);
        }
        CellTuple { entries }
    }

    pub fn contains(&self, x: &CellTuple) -> bool {
        x.n() == self.n
            && x
                .entries()
                .iter()
                .all(|&(c, a)| (c as usize) < self.cells() && (a as usize) < self.atoms)
    }

    /// All off-diagonal tuples, in increasing index order.
    pub fn off_diagonal(&self) -> impl Iterator<Item = CellTuple> + '_ {
        (0..self.len())
            .map(|i| self.decode(i))
            .filter(CellTuple::is_off_diagonal)
    }
}
