use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::map::{cell_count, DyadicMap};
use super::partition::{CellPartition, CellSet};
use super::tuple::{CellTuple, TupleSpace};
use super::union_find::DisjointSets;
use crate::error::{ChaosError, Result};

pub const DEFAULT_CLOSURE_CAP: usize = 10_080;

fn default_cap() -> usize {
    DEFAULT_CLOSURE_CAP
}

/// A finitely generated group of dyadic maps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGroup")]
pub struct GroupSpec {
    pub generators: Vec<DyadicMap>,
    pub closure_cap: usize,
}

#[derive(Deserialize)]
struct RawGroup {
    generators: Vec<DyadicMap>,
    #[serde(default = "default_cap")]
    closure_cap: usize,
}

impl TryFrom<RawGroup> for GroupSpec {
    type Error = ChaosError;

    fn try_from(raw: RawGroup) -> Result<Self> {
        Ok(GroupSpec::new(raw.generators)?.with_cap(raw.closure_cap))
    }
}

impl GroupSpec {
    pub fn new(generators: Vec<DyadicMap>) -> Result<Self> {
        if generators.is_empty() {
            return Err(ChaosError::NoGenerators);
        }
        Ok(GroupSpec {
            generators,
            closure_cap: DEFAULT_CLOSURE_CAP,
        })
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.closure_cap = cap.max(1);
        self
    }

    pub fn trivial() -> Self {
        GroupSpec {
            generators: vec![DyadicMap::identity()],
            closure_cap: DEFAULT_CLOSURE_CAP,
        }
    }

    /// All permutations of the level-`d` cells of `E`, as adjacent transpositions.
    pub fn restricted(e: &CellSet, d: u32) -> Result<Self> {
        Self::new(restricted_group_generators(e, d)?)
    }

    /// Every permutation of the `2^d` cells.
    pub fn full(d: u32) -> Result<Self> {
        Self::restricted(&CellSet::unit(), d)
    }

    /// The group generated by one restricted group per partition block.
    pub fn block_group(partition: &CellPartition, d: u32) -> Result<Self> {
        let mut generators = Vec::new();
        for block in partition.blocks() {
            generators.extend(restricted_group_generators(block, d)?);
        }
        Self::new(generators)
    }

    /// The cyclic shifts `s_1, ..., s_d`.
    pub fn periodic_shifts(d: u32) -> Result<Self> {
        Self::new(
            (1..=d)
                .map(DyadicMap::periodic_shift)
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn join(groups: &[GroupSpec]) -> Result<Self> {
        let generators = groups.iter().flat_map(|g| g.generators.clone()).collect();
        let cap = groups.iter().map(|g| g.closure_cap).max().unwrap_or(DEFAULT_CLOSURE_CAP);
        Ok(Self::new(generators)?.with_cap(cap))
    }

    /// Largest generator degree; the group acts faithfully on cells of any level at least this.
    pub fn degree(&self) -> u32 {
        self.generators.iter().map(DyadicMap::degree).max().unwrap_or(0)
    }

    pub fn generator_images(&self, d: u32) -> Result<Vec<Vec<usize>>> {
        self.generators.iter().map(|g| g.refine(d)).collect()
    }

    /// Breadth-first closure of the generators.
    pub fn enumerate(&self) -> Result<Vec<DyadicMap>> {
        let identity = DyadicMap::identity();
        let mut seen: HashSet<DyadicMap> = HashSet::from([identity.clone()]);
        let mut elements = vec![identity.clone()];
        let mut queue = VecDeque::from([identity]);
        while let Some(x) = queue.pop_front() {
            for g in &self.generators {
                let y = g.compose(&x);
                if seen.insert(y.clone()) {
                    if seen.len() > self.closure_cap {
                        return Err(ChaosError::ClosureCapExceeded {
                            cap: self.closure_cap,
                        });
                    }
                    elements.push(y.clone());
                    queue.push_back(y);
                }
            }
        }
        Ok(elements)
    }

    /// Orbits of the diagonal action on off-diagonal n-tuples of level-`d` cells.
    pub fn orbits(&self, n: usize, d: u32, atoms: usize) -> Result<OrbitPartition> {
        let images = self.generator_images(d)?;
        let space = TupleSpace::new(n, d, atoms);
        let mut sets = DisjointSets::new(space.len());
        for index in 0..space.len() {
            let x = space.decode(index);
            if !x.is_off_diagonal() {
                continue;
            }
            for img in &images {
                sets.union(index, space.encode(&x.map_cells(img)));
            }
        }
        let mut ids = vec![u32::MAX; space.len()];
        let mut root_label = vec![u32::MAX; space.len()];
        let mut count = 0u32;
        for (index, id) in ids.iter_mut().enumerate() {
            if !space.decode(index).is_off_diagonal() {
                continue;
            }
            let root = sets.find(index);
            if root_label[root] == u32::MAX {
                root_label[root] = count;
                count += 1;
            }
            *id = root_label[root];
        }
        Ok(OrbitPartition {
            space,
            ids,
            count: count as usize,
        })
    }

    /// Orbit label of every level-`d` cell.
    pub fn cell_orbits(&self, d: u32) -> Result<Vec<u32>> {
        let mut sets = DisjointSets::new(cell_count(d));
        for img in self.generator_images(d)? {
            for (k, &image) in img.iter().enumerate() {
                sets.union(k, image);
            }
        }
        Ok(sets.labels().0)
    }

    /// Whether the group moves the level-`d` cells of `set` transitively.
    pub fn is_transitive_on(&self, set: &CellSet, d: u32) -> Result<bool> {
        let mask = set.mask(d)?;
        for img in self.generator_images(d)? {
            if let Some(cell) = (0..img.len()).find(|&k| !mask[k] && img[k] != k) {
                return Err(ChaosError::GeneratorMovesComplement { cell });
            }
        }
        let labels = self.cell_orbits(d)?;
        let mut inside = set.fine_cells(d)?.into_iter().map(|c| labels[c]);
        let first = inside.next();
        Ok(inside.all(|l| Some(l) == first))
    }
}

/// Adjacent transpositions of the sorted level-`d` cells of `e`; identity for a single cell.
pub fn restricted_group_generators(e: &CellSet, d: u32) -> Result<Vec<DyadicMap>> {
    if e.is_empty() {
        return Err(ChaosError::EmptySet);
    }
    let cells = e.fine_cells(d)?;
    if cells.len() == 1 {
        return Ok(vec![DyadicMap::identity()]);
    }
    cells
        .windows(2)
        .map(|w| DyadicMap::transposition(d, w[0], w[1]))
        .collect()
}

/// Orbit label of every off-diagonal tuple in a [`TupleSpace`].
#[derive(Debug, Clone)]
pub struct OrbitPartition {
    pub space: TupleSpace,
    ids: Vec<u32>,
    count: usize,
}

impl OrbitPartition {
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn orbit_of(&self, x: &CellTuple) -> Option<usize> {
        if !self.space.contains(x) {
            return None;
        }
        let id = self.ids[self.space.encode(x)];
        (id != u32::MAX).then_some(id as usize)
    }

    /// Members of each orbit, in index order.
    pub fn blocks(&self) -> Vec<Vec<CellTuple>> {
        let mut blocks = vec![Vec::new(); self.count];
        for (index, &id) in self.ids.iter().enumerate() {
            if id != u32::MAX {
                blocks[id as usize].push(self.space.decode(index));
            }
        }
        blocks
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restricted_generators_examples() {
        let left = CellSet::new(1, [0]).unwrap();
        let gens = restricted_group_generators(&left, 2).unwrap();
        assert_eq!(gens, vec![DyadicMap::transposition(2, 0, 1).unwrap()]);

        let full = GroupSpec::full(2).unwrap();
        assert_eq!(full.generators.len(), 3);
        assert_eq!(full.enumerate().unwrap().len(), 24);

        let right = CellSet::new(1, [1]).unwrap();
        assert_eq!(
            restricted_group_generators(&right, 1).unwrap(),
            vec![DyadicMap::identity()]
        );
        let empty = CellSet::new(1, []).unwrap();
        assert_eq!(
            restricted_group_generators(&empty, 1),
            Err(ChaosError::EmptySet)
        );
    }

    #[test]
    fn orbit_examples() {
        let trivial = GroupSpec::trivial().orbits(2, 1, 2).unwrap();
        assert_eq!(trivial.count(), 2 * 4);

        let full = GroupSpec::full(2).unwrap().orbits(1, 2, 1).unwrap();
        assert_eq!(full.count(), 1);

        let left = GroupSpec::restricted(&CellSet::new(1, [0]).unwrap(), 2).unwrap();
        let orbits = left.orbits(1, 2, 1).unwrap();
        let ids: Vec<usize> = (0..4)
            .map(|c| orbits.orbit_of(&CellTuple::new(&[(c, 0)]).unwrap()).unwrap())
            .collect();
        assert_eq!(ids, vec![0, 0, 1, 2]);
    }

    #[test]
    fn transitivity_examples() {
        let four = CellSet::new(2, 0..4).unwrap();
        assert!(GroupSpec::full(2).unwrap().is_transitive_on(&four, 2).unwrap());
        assert!(!GroupSpec::trivial().is_transitive_on(&four, 2).unwrap());
        let split = GroupSpec::new(vec![
            DyadicMap::transposition(2, 0, 1).unwrap(),
            DyadicMap::transposition(2, 2, 3).unwrap(),
        ])
        .unwrap();
        assert!(!split.is_transitive_on(&four, 2).unwrap());
        let left = CellSet::new(1, [0]).unwrap();
        assert_eq!(
            split.is_transitive_on(&left, 2),
            Err(ChaosError::GeneratorMovesComplement { cell: 2 })
        );
    }

    #[test]
    fn enumeration_respects_cap() {
        let full = GroupSpec::full(3).unwrap().with_cap(100);
        assert_eq!(
            full.enumerate(),
            Err(ChaosError::ClosureCapExceeded { cap: 100 })
        );
        let shifts = GroupSpec::periodic_shifts(3).unwrap();
        assert_eq!(shifts.enumerate().unwrap().len(), 8);
    }

    #[test]
    fn group_json_defaults_cap() {
        let g: GroupSpec =
            serde_json::from_str(r#"{"generators":[{"level":1,"perm":[1,0]}]}"#).unwrap();
        assert_eq!(g.closure_cap, DEFAULT_CLOSURE_CAP);
        assert!(serde_json::from_str::<GroupSpec>(r#"{"generators":[]}"#).is_err());
    }
}
