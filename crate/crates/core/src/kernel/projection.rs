use std::collections::BTreeMap;

use super::GridKernel;
use crate::dyadic_group::{CellPartition, CellTuple, GroupSpec};
use crate::error::Result;

/// Group average of `f`, computed as the mean over each diagonal orbit.
pub fn orbit_project(f: &GridKernel, group: &GroupSpec) -> Result<GridKernel> {
    let orbits = group.orbits(f.n(), f.level(), f.atom_count())?;
    let mut sums = vec![0.0; orbits.count()];
    for (x, v) in f.entries() {
        let id = orbits.orbit_of(x).expect("stored tuples are off-diagonal");
        sums[id] += v;
    }
    let mut out = GridKernel::zero(f.n(), f.level(), f.atom_count())?;
    for (block, sum) in orbits.blocks().into_iter().zip(sums) {
        if sum == 0.0 {
            continue;
        }
        let mean = sum / block.len() as f64;
        for x in block {
            out.values.insert(x, mean);
        }
    }
    Ok(out.prune())
}

/// Whether every generator leaves `f` unchanged up to `tol`.
pub fn is_invariant(f: &GridKernel, group: &GroupSpec, tol: f64) -> Result<bool> {
    for g in &group.generators {
        if f.pullback(g)?.max_abs_diff(f) > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Tuples grouped by (block of each coordinate, state of each coordinate).
fn cuboids(f: &GridKernel, partition: &CellPartition) -> Result<BTreeMap<Vec<u32>, Vec<CellTuple>>> {
    let labels = partition.labels(f.level())?;
    let mut groups: BTreeMap<Vec<u32>, Vec<CellTuple>> = BTreeMap::new();
    'tuples: for x in f.space().off_diagonal() {
        let mut key = Vec::with_capacity(2 * x.n());
        for c in x.cells() {
            match labels[c as usize] {
                Some(l) => key.push(l as u32),
                None => continue 'tuples,
            }
        }
        key.extend(x.atoms());
        groups.entry(key).or_default().push(x);
    }
    Ok(groups)
}

/// Largest spread of values inside one cuboid `E_{l_1} × ... × E_{l_n}` for a fixed state tuple.
pub fn cuboid_deviation(f: &GridKernel, partition: &CellPartition) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for members in cuboids(f, partition)?.values() {
        let (lo, hi) = members
            .iter()
            .map(|x| f.get(x))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        worst = worst.max(hi - lo);
    }
    Ok(worst)
}

pub fn is_cuboid_constant(f: &GridKernel, partition: &CellPartition, tol: f64) -> Result<bool> {
    Ok(cuboid_deviation(f, partition)? <= tol)
}

/// Replaces the values inside each cuboid by their mean; cells outside the blocks are untouched.
pub fn cuboid_average(f: &GridKernel, partition: &CellPartition) -> Result<GridKernel> {
    let mut out = f.clone();
    for members in cuboids(f, partition)?.into_values() {
        let mean = members.iter().map(|x| f.get(x)).sum::<f64>() / members.len() as f64;
        for x in members {
            out.set(x, mean)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::dyadic_group::strategies::dyadic_map;
    use crate::dyadic_group::{CellSet, DyadicMap};
    use crate::kernel::strategies::kernel;
    use crate::levy::{Atom, LevyModel};

    fn model() -> LevyModel {
        LevyModel::new(1.0, vec![Atom { x: 2.0, lambda: 0.5 }]).unwrap()
    }

    /// Brute-force group average over every enumerated element.
    fn enumerated_average(f: &GridKernel, group: &GroupSpec) -> GridKernel {
        let elements = group.enumerate().unwrap();
        let mut acc = GridKernel::zero(f.n(), f.level(), f.atom_count()).unwrap();
        for g in &elements {
            acc = acc.add_scaled(&f.pullback(g).unwrap(), 1.0).unwrap();
        }
        acc.scale(1.0 / elements.len() as f64)
    }

    fn halves(d: u32) -> GroupSpec {
        let p = CellPartition::new(vec![
            CellSet::new(1, [0]).unwrap(),
            CellSet::new(1, [1]).unwrap(),
        ])
        .unwrap();
        GroupSpec::block_group(&p, d).unwrap()
    }

    #[test]
    fn projection_examples() {
        let f = GridKernel::from_fn(1, 1, 1, |x| if x.entries()[0].0 == 0 { 3.0 } else { 1.0 })
            .unwrap();
        assert_eq!(orbit_project(&f, &GroupSpec::trivial()).unwrap(), f);
        let averaged = orbit_project(&f, &GroupSpec::full(1).unwrap()).unwrap();
        assert!(averaged.entries().all(|(_, v)| v == 2.0));
        assert_eq!(averaged.len(), 2);
        assert_eq!(orbit_project(&averaged, &GroupSpec::full(1).unwrap()).unwrap(), averaged);
    }

    #[test]
    fn invariance_examples() {
        let group = halves(2);
        let mut spike = GridKernel::zero(1, 2, 1).unwrap();
        spike.set(CellTuple::new(&[(1, 0)]).unwrap(), 1.0).unwrap();
        assert!(!is_invariant(&spike, &group, 1e-12).unwrap());
        let projected = orbit_project(&spike, &group).unwrap();
        assert!(is_invariant(&projected, &group, 1e-12).unwrap());
    }

    #[test]
    fn cuboid_examples() {
        let p = CellPartition::new(vec![CellSet::new(1, [0]).unwrap()]).unwrap();
        let flat = GridKernel::from_fn(2, 2, 2, |x| 1.0 + x.atoms().sum::<u32>() as f64).unwrap();
        assert!(is_cuboid_constant(&flat, &p, 0.0).unwrap());
        let mut bumpy = GridKernel::zero(1, 2, 1).unwrap();
        bumpy.set(CellTuple::new(&[(0, 0)]).unwrap(), 1.0).unwrap();
        assert!(!is_cuboid_constant(&bumpy, &p, 1e-12).unwrap());
        // cells outside the blocks are unconstrained
        let mut outside = GridKernel::zero(1, 2, 1).unwrap();
        outside.set(CellTuple::new(&[(3, 0)]).unwrap(), 1.0).unwrap();
        assert!(is_cuboid_constant(&outside, &p, 0.0).unwrap());
        let avg = cuboid_average(&bumpy, &p).unwrap();
        assert_eq!(avg.get(&CellTuple::new(&[(1, 0)]).unwrap()), 0.5);
    }

    proptest! {
        #[test]
        fn projection_matches_enumerated_average(
            f in kernel(2, 2, 2),
            gens in proptest::collection::vec(dyadic_map(2), 1..3),
        ) {
            let group = GroupSpec::new(gens).unwrap();
            let fast = orbit_project(&f, &group).unwrap();
            prop_assert!(fast.max_abs_diff(&enumerated_average(&f, &group)) < 1e-12);
        }

        #[test]
        fn projection_is_an_idempotent_contraction(
            f in kernel(2, 3, 2),
            gens in proptest::collection::vec(dyadic_map(3), 1..3),
        ) {
            let m = model();
            let group = GroupSpec::new(gens).unwrap();
            let p = orbit_project(&f, &group).unwrap();
            prop_assert!(is_invariant(&p, &group, 1e-12).unwrap());
            prop_assert!(orbit_project(&p, &group).unwrap().max_abs_diff(&p) < 1e-12);
            prop_assert!(p.l2_norm_sq(&m).unwrap() <= f.l2_norm_sq(&m).unwrap() + 1e-12);
        }

        #[test]
        fn projection_commutes_with_symmetrize(
            f in kernel(2, 2, 2),
            gens in proptest::collection::vec(dyadic_map(2), 1..3),
        ) {
            let group = GroupSpec::new(gens).unwrap();
            let a = orbit_project(&f.symmetrize(), &group).unwrap();
            let b = orbit_project(&f, &group).unwrap().symmetrize();
            prop_assert!(a.max_abs_diff(&b) < 1e-12);
        }

        #[test]
        fn block_group_projection_is_cuboid_constant(f in kernel(2, 3, 2)) {
            let p = CellPartition::new(vec![
                CellSet::new(3, [0, 1, 2]).unwrap(),
                CellSet::new(3, [4, 5, 6, 7]).unwrap(),
            ]).unwrap();
            let group = GroupSpec::block_group(&p, 3).unwrap();
            let projected = orbit_project(&f, &group).unwrap();
            prop_assert!(is_cuboid_constant(&projected, &p, 1e-12).unwrap());
        }

        #[test]
        fn contraction_keeps_invariance(
            f in kernel(2, 2, 2),
            h in kernel(2, 2, 2),
            k in 0usize..=2,
            r in 0usize..=1,
        ) {
            prop_assume!(k + r <= 2);
            let m = model();
            let group = GroupSpec::new(vec![
                DyadicMap::transposition(2, 0, 2).unwrap(),
                DyadicMap::transposition(2, 1, 3).unwrap(),
            ]).unwrap();
            let f = orbit_project(&f, &group).unwrap();
            let h = orbit_project(&h, &group).unwrap();
            if let crate::kernel::Contracted::Kernel(c) = f.contraction(&h, k, r, &m).unwrap().value {
                prop_assert!(is_invariant(&c, &group, 1e-12).unwrap());
            }
        }
    }
}
