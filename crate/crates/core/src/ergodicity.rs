//! Finite-resolution locally-ergodic checks, orbit decompositions and the
//! reduction of invariant kernels to cuboid-constant form.
//!
//! A set `E` of level `N_E` passes at resolution `d_max` when, for every level
//! `N` in `N_E..=d_max` and every two distinct level-`N` cells `l, m` inside
//! `E`, some subgroup fixing the complement of `A = l ∪ m` moves the level-`d_max`
//! subcells of `A` transitively. Candidate subgroup elements are the
//! generators together with all their conjugates by generators, so a pass is
//! always backed by explicit group elements while a failure only means that
//! no such subgroup was found among the candidates.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::dyadic_group::{cell_count, CellPartition, CellSet, CellTuple, DisjointSets, DyadicMap, GroupSpec};
use crate::error::{ChaosError, Result};
use crate::kernel::{cuboid_average, is_invariant, orbit_project, GridKernel};
use crate::levy::LevyModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub level: u32,
    pub cells: [usize; 2],
    /// Number of candidate elements fixing the complement of the pair.
    pub subgroup_generators: usize,
    pub transitive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityCertificate {
    pub set: CellSet,
    pub set_level: u32,
    pub checked_levels: [u32; 2],
    pub candidates: usize,
    pub pairs: Vec<PairReport>,
    pub passed: bool,
}

/// Generators closed under conjugation by generators and their inverses.
fn conjugation_closure(group: &GroupSpec) -> Result<Vec<DyadicMap>> {
    let conjugators: Vec<(DyadicMap, DyadicMap)> = group
        .generators
        .iter()
        .map(|g| (g.clone(), g.inverse()))
        .collect();
    let mut seen: HashSet<DyadicMap> = HashSet::new();
    let mut out = Vec::new();
    let mut queue: VecDeque<DyadicMap> = VecDeque::new();
    for g in &group.generators {
        if !g.is_identity() && seen.insert(g.clone()) {
            out.push(g.clone());
            queue.push_back(g.clone());
        }
    }
    while let Some(x) = queue.pop_front() {
        for (g, g_inv) in &conjugators {
            for y in [g.compose(&x).compose(g_inv), g_inv.compose(&x).compose(g)] {
                if seen.insert(y.clone()) {
                    if seen.len() > group.closure_cap {
                        return Err(ChaosError::ClosureCapExceeded {
                            cap: group.closure_cap,
                        });
                    }
                    out.push(y.clone());
                    queue.push_back(y);
                }
            }
        }
    }
    Ok(out)
}

pub fn check_locally_ergodic(
    set: &CellSet,
    group: &GroupSpec,
    d_max: u32,
) -> Result<ErgodicityCertificate> {
    if set.is_empty() {
        return Err(ChaosError::EmptySet);
    }
    let set_level = set.min_level();
    let required = set_level.max(group.degree());
    if d_max < required {
        return Err(ChaosError::LevelTooCoarse {
            requested: d_max,
            required,
        });
    }
    let candidates = conjugation_closure(group)?;
    let images: Vec<Vec<usize>> = candidates
        .iter()
        .map(|g| g.refine(d_max))
        .collect::<Result<_>>()?;

    let mut pairs = Vec::new();
    for level in set_level..=d_max {
        let cells = set.fine_cells(level)?;
        let width = cell_count(d_max - level);
        for (i, &l) in cells.iter().enumerate() {
            for &m in &cells[i + 1..] {
                let inside = |k: usize| k / width == l || k / width == m;
                let subgroup: Vec<&Vec<usize>> = images
                    .iter()
                    .filter(|img| img.iter().enumerate().all(|(k, &im)| inside(k) || im == k))
                    .collect();
                let mut sets = DisjointSets::new(cell_count(d_max));
                for img in &subgroup {
                    for k in (l * width..(l + 1) * width).chain(m * width..(m + 1) * width) {
                        sets.union(k, img[k]);
                    }
                }
                let root = sets.find(l * width);
                let transitive = (m * width..(m + 1) * width)
                    .chain(l * width..(l + 1) * width)
                    .all(|k| sets.find(k) == root);
                pairs.push(PairReport {
                    level,
                    cells: [l, m],
                    subgroup_generators: subgroup.len(),
                    transitive,
                });
            }
        }
    }
    let passed = pairs.iter().all(|p| p.transitive);
    Ok(ErgodicityCertificate {
        set: set.clone(),
        set_level,
        checked_levels: [set_level, d_max],
        candidates: candidates.len(),
        pairs,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiAtom {
    pub members: Vec<CellTuple>,
    /// `𝕞^{⊗n}` mass of the orbit.
    pub mass: f64,
}

/// Orbits of the diagonal action on degree-`n` tuples, with their masses.
pub fn quasi_atoms(
    group: &GroupSpec,
    n: usize,
    d: u32,
    model: &LevyModel,
) -> Result<Vec<QuasiAtom>> {
    let measures = model.cell_measures(d);
    let orbits = group.orbits(n, d, model.state_count())?;
    Ok(orbits
        .blocks()
        .into_iter()
        .map(|members| {
            let mass = members
                .iter()
                .map(|x| GridKernel::tuple_weight(x, &measures))
                .sum();
            QuasiAtom { members, mass }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub kernel: GridKernel,
    /// L2 distance between the input and the reduced kernel.
    pub residual: f64,
}

/// Orbit projection followed by averaging over each cuboid of the partition.
pub fn reduce_kernel(
    f: &GridKernel,
    partition: &CellPartition,
    group: &GroupSpec,
    model: &LevyModel,
) -> Result<Reduction> {
    let projected = orbit_project(f, group)?;
    let kernel = cuboid_average(&projected, partition)?;
    let residual = f.add_scaled(&kernel, -1.0)?.l2_norm_sq(model)?.sqrt();
    Ok(Reduction { kernel, residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftCounterexample {
    pub kernel: GridKernel,
    pub shift_invariant: bool,
    pub full_invariant: bool,
    /// L2 distance moved by the full-group orbit projection.
    pub projection_residual: f64,
}

/// The kernel `g2(|s - t|) h2(x, y)` on level `d`, with `g2` sampled at the
/// distances `0..=2^d` (in cells) and `h2` indexed by state positions.
pub fn shift_counterexample(
    d: u32,
    g2: &[f64],
    h2: &[Vec<f64>],
    model: &LevyModel,
) -> Result<ShiftCounterexample> {
    let size = cell_count(d);
    if g2.len() != size + 1 {
        return Err(ChaosError::BadSymmetry(format!(
            "distance profile has {} values, level {d} needs {}",
            g2.len(),
            size + 1
        )));
    }
    if let Some(k) = (0..=size).find(|&k| g2[k] != g2[size - k]) {
        return Err(ChaosError::BadSymmetry(format!(
            "profile differs at distances {k} and {}",
            size - k
        )));
    }
    let states = model.state_count();
    if h2.len() != states || h2.iter().any(|row| row.len() != states) {
        return Err(ChaosError::BadSymmetry(format!(
            "state matrix must be {states} x {states}"
        )));
    }
    if (0..states).any(|a| (0..a).any(|b| h2[a][b] != h2[b][a])) {
        return Err(ChaosError::BadSymmetry("state matrix is not symmetric".into()));
    }
    let kernel = GridKernel::from_fn(2, d, states, |x| {
        let [(s, a), (t, b)] = [x.entries()[0], x.entries()[1]];
        g2[s.abs_diff(t) as usize] * h2[a as usize][b as usize]
    })?;
    let shifts = GroupSpec::periodic_shifts(d)?;
    let full = GroupSpec::full(d)?;
    let projected = orbit_project(&kernel, &full)?;
    Ok(ShiftCounterexample {
        shift_invariant: is_invariant(&kernel, &shifts, 1e-12)?,
        full_invariant: is_invariant(&kernel, &full, 1e-12)?,
        projection_residual: kernel.add_scaled(&projected, -1.0)?.l2_norm_sq(model)?.sqrt(),
        kernel,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::dyadic_group::strategies::dyadic_map;
    use crate::kernel::{is_cuboid_constant, strategies::kernel};
    use crate::levy::Atom;

    fn model() -> LevyModel {
        LevyModel::new(1.0, vec![Atom { x: 0.5, lambda: 4.0 }]).unwrap()
    }

    fn halves() -> CellPartition {
        CellPartition::new(vec![
            CellSet::new(1, [0]).unwrap(),
            CellSet::new(1, [1]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn full_group_certifies_unit_interval() {
        let cert = check_locally_ergodic(&CellSet::unit(), &GroupSpec::full(4).unwrap(), 4).unwrap();
        assert!(cert.passed);
        assert_eq!(cert.checked_levels, [0, 4]);
        // pairs at levels 1..=4 of the 2, 4, 8, 16 cells
        assert_eq!(cert.pairs.len(), 1 + 6 + 28 + 120);
    }

    #[test]
    fn periodic_shifts_fail() {
        let cert =
            check_locally_ergodic(&CellSet::unit(), &GroupSpec::periodic_shifts(4).unwrap(), 4)
                .unwrap();
        assert!(!cert.passed);
        assert!(cert
            .pairs
            .iter()
            .filter(|p| p.level >= 2)
            .all(|p| p.subgroup_generators == 0 && !p.transitive));
    }

    #[test]
    fn single_cell_with_its_own_group_passes() {
        let cell = CellSet::new(3, [5]).unwrap();
        let group = GroupSpec::restricted(&cell, 5).unwrap();
        let cert = check_locally_ergodic(&cell, &group, 5).unwrap();
        assert!(cert.passed);
        assert_eq!(cert.set_level, 3);
        assert_eq!(cert.pairs.len(), 1 + 6);
    }

    #[test]
    fn split_group_fails_across_blocks() {
        let group = GroupSpec::block_group(&halves(), 3).unwrap();
        let cert = check_locally_ergodic(&CellSet::unit(), &group, 3).unwrap();
        assert!(!cert.passed);
        let left = check_locally_ergodic(&CellSet::new(1, [0]).unwrap(), &group, 3).unwrap();
        assert!(left.passed);
        assert!(matches!(
            check_locally_ergodic(&CellSet::new(1, []).unwrap(), &group, 3),
            Err(ChaosError::EmptySet)
        ));
        let tight = GroupSpec::full(5).unwrap().with_cap(50);
        assert!(matches!(
            check_locally_ergodic(&CellSet::unit(), &tight, 5),
            Err(ChaosError::ClosureCapExceeded { .. })
        ));
    }

    #[test]
    fn passing_certificate_means_constant_invariant_kernels() {
        // on a certified set every invariant n = 1 kernel is constant per state
        let group = GroupSpec::block_group(&halves(), 3).unwrap();
        let left = CellSet::new(1, [0]).unwrap();
        assert!(check_locally_ergodic(&left, &group, 3).unwrap().passed);
        let atoms = quasi_atoms(&group, 1, 3, &model()).unwrap();
        for atom in atoms {
            let cells: HashSet<u32> = atom.members.iter().flat_map(|x| x.cells()).collect();
            if cells.iter().any(|&c| c < 4) {
                assert_eq!(cells, (0..4).collect());
            }
        }
    }

    #[test]
    fn quasi_atom_regions_for_two_halves() {
        let group = GroupSpec::block_group(&halves(), 2).unwrap();
        let m = LevyModel::new(1.0, vec![]).unwrap();
        let atoms = quasi_atoms(&group, 2, 2, &m).unwrap();
        // same-half blocks (two) and cross blocks (two orderings)
        assert_eq!(atoms.len(), 4);
        for atom in &atoms {
            let pattern: HashSet<(bool, bool)> = atom
                .members
                .iter()
                .map(|x| {
                    let e = x.entries();
                    (e[0].0 < 2, e[1].0 < 2)
                })
                .collect();
            assert_eq!(pattern.len(), 1);
        }
        let total: f64 = atoms.iter().map(|a| a.mass).sum();
        // off-diagonal part of the unit square
        assert!((total - (1.0 - 4.0 / 16.0)).abs() < 1e-15);
        let trivial = quasi_atoms(&GroupSpec::trivial(), 1, 2, &m).unwrap();
        assert_eq!(trivial.len(), 4);
    }

    #[test]
    fn shift_counterexample_separates_groups() {
        let m = model();
        let h2 = vec![vec![1.0, 0.5], vec![0.5, -2.0]];
        let flat = shift_counterexample(3, &[1.0; 9], &h2, &m).unwrap();
        assert!(flat.shift_invariant && flat.full_invariant);
        assert!(flat.projection_residual < 1e-12);

        let profile: Vec<f64> = (0..=8).map(|k: i32| ((k - 4) as f64).powi(2)).collect();
        let bent = shift_counterexample(3, &profile, &h2, &m).unwrap();
        assert!(bent.shift_invariant);
        assert!(!bent.full_invariant);
        assert!(bent.projection_residual > 0.0);
        for k in 1..=3 {
            let s = DyadicMap::periodic_shift(k).unwrap();
            assert_eq!(bent.kernel.pullback(&s).unwrap(), bent.kernel);
        }

        let lopsided: Vec<f64> = (0..=8).map(f64::from).collect();
        assert!(matches!(
            shift_counterexample(3, &lopsided, &h2, &m),
            Err(ChaosError::BadSymmetry(_))
        ));
        let skew = vec![vec![1.0, 0.5], vec![0.0, 1.0]];
        assert!(shift_counterexample(3, &[1.0; 9], &skew, &m).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn reduction_obeys_pythagoras(f in kernel(2, 3, 2)) {
            let m = model();
            let group = GroupSpec::block_group(&halves(), 3).unwrap();
            let r = reduce_kernel(&f, &halves(), &group, &m).unwrap();
            prop_assert!(is_cuboid_constant(&r.kernel, &halves(), 1e-12).unwrap());
            let lhs = f.l2_norm_sq(&m).unwrap();
            let rhs = r.kernel.l2_norm_sq(&m).unwrap() + r.residual.powi(2);
            prop_assert!((lhs - rhs).abs() < 1e-12);
            let again = reduce_kernel(&r.kernel, &halves(), &group, &m).unwrap();
            prop_assert!(again.residual <= 1e-12);
        }

        #[test]
        fn invariant_kernels_are_constant_on_quasi_atoms(
            f in kernel(2, 2, 2),
            gens in proptest::collection::vec(dyadic_map(2), 1..3),
        ) {
            let group = GroupSpec::new(gens).unwrap();
            let invariant = orbit_project(&f, &group).unwrap();
            for atom in quasi_atoms(&group, 2, 2, &model()).unwrap() {
                let first = invariant.get(&atom.members[0]);
                prop_assert!(atom.members.iter().all(|x| invariant.get(x) == first));
            }
        }
    }
}
