//! Pathwise multiple integrals and Monte Carlo checks on top of them.

use serde::{Deserialize, Serialize};

use crate::dyadic_group::{cell_count, CellTuple, DyadicMap, TupleSpace};
use crate::error::{ChaosError, Result};
use crate::kernel::{factorial, ChaosVector, GridKernel};
use crate::levy::{path_rng, sample_path, LevyModel, PathSample};
use crate::stats::{CompensatedSum, RunningStats};

/// Largest degree and level accepted by [`chaos_coefficients`].
pub const EXTRACT_MAX_DEGREE: usize = 3;
pub const EXTRACT_MAX_LEVEL: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
    pub seed: u64,
}

impl MCReport {
    fn from_stats(stats: &RunningStats, seed: u64) -> Self {
        MCReport {
            estimate: stats.mean(),
            std_error: stats.std_error(),
            samples: stats.count(),
            seed,
        }
    }

    /// Whether `target` lies within `sigmas` standard errors of the estimate.
    pub fn agrees_with(&self, target: f64, sigmas: f64) -> bool {
        let gap = (self.estimate - target).abs();
        gap <= sigmas * self.std_error || gap <= 1e-12 * target.abs().max(1.0)
    }
}

fn check_level(path: &PathSample, level: u32) -> Result<()> {
    if path.level != level {
        return Err(ChaosError::LevelMismatch {
            expected: level,
            found: path.level,
        });
    }
    Ok(())
}

/// `I_n(f)` from a precomputed `M` table laid out as `cell * states + state`.
pub(crate) fn integral_from_table(f: &GridKernel, table: &[f64], states: usize) -> f64 {
    let mut sum = CompensatedSum::new();
    for (x, v) in f.entries() {
        let product: f64 = x
            .entries()
            .iter()
            .map(|&(c, a)| table[c as usize * states + a as usize])
            .product();
        sum.add(v * product);
    }
    sum.value()
}

/// `I_n(f) = Σ_x f(x) Π_i M(cell_i × state_i)` over the stored off-diagonal tuples.
pub fn multiple_integral(path: &PathSample, f: &GridKernel, model: &LevyModel) -> Result<f64> {
    check_level(path, f.level())?;
    f.check_model(model)?;
    let table = path.measure_table(model);
    Ok(integral_from_table(f, &table, model.state_count()))
}

pub(crate) fn chaos_from_table(cv: &ChaosVector, table: &[f64], states: usize) -> f64 {
    let mut sum = CompensatedSum::new();
    sum.add(cv.constant());
    for f in cv.kernels() {
        sum.add(integral_from_table(f, table, states));
    }
    sum.value()
}

pub fn evaluate_chaos(path: &PathSample, cv: &ChaosVector, model: &LevyModel) -> Result<f64> {
    check_level(path, cv.level())?;
    cv.check_model(model)?;
    let table = path.measure_table(model);
    Ok(chaos_from_table(cv, &table, model.state_count()))
}

/// `|I_n(S_{g^{-1}} f)(ω) − I_n(f)(T_g ω)|` for one path.
pub fn verify_diagram(
    f: &GridKernel,
    g: &DyadicMap,
    path: &PathSample,
    model: &LevyModel,
) -> Result<f64> {
    let lhs = multiple_integral(path, &f.pullback(&g.inverse())?, model)?;
    let rhs = multiple_integral(&path.permute(g)?, f, model)?;
    Ok((lhs - rhs).abs())
}

/// Monte Carlo estimate of `E[I_n(f̃)²]`; compare with [`isometry_target`].
pub fn isometry_check(
    f: &GridKernel,
    model: &LevyModel,
    samples: u64,
    seed: u64,
) -> Result<MCReport> {
    f.check_model(model)?;
    let sym = f.symmetrize();
    let mut stats = RunningStats::new();
    if sym.is_empty() {
        return Ok(MCReport {
            estimate: 0.0,
            std_error: 0.0,
            samples: samples.max(1),
            seed,
        });
    }
    for i in 0..samples {
        let path = sample_path(model, f.level(), &mut path_rng(seed, i));
        let table = path.measure_table(model);
        let value = integral_from_table(&sym, &table, model.state_count());
        stats.push(value * value);
    }
    Ok(MCReport::from_stats(&stats, seed))
}

/// `n! ‖f̃‖²`.
pub fn isometry_target(f: &GridKernel, model: &LevyModel) -> Result<f64> {
    Ok(factorial(f.n()) * f.symmetrize().l2_norm_sq(model)?)
}

/// One estimated kernel entry, indexed by a tuple with increasing cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEstimate {
    pub n: usize,
    pub cells: Vec<u32>,
    pub atoms: Vec<u32>,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    /// Symmetric kernels estimated from the samples.
    pub chaos: ChaosVector,
    pub constant: MCReport,
    pub entries: Vec<CoefficientEstimate>,
}

/// Tuples with strictly increasing cells: one representative per symmetric basis element.
pub(crate) fn increasing_tuples(n: usize, level: u32, states: usize) -> Vec<CellTuple> {
    TupleSpace::new(n, level, states)
        .off_diagonal()
        .filter(|x| x.entries().windows(2).all(|w| w[0].0 < w[1].0))
        .collect()
}

/// Estimates the symmetric chaos kernels of `functional` up to degree `n_max`.
///
/// The entry at an increasing tuple `α` is `E[F Π M_α] / (n! 𝕞^{⊗n}(α))`, using
/// that the products `Π M_α` over distinct increasing tuples are orthogonal.
pub fn chaos_coefficients(
    model: &LevyModel,
    functional: &dyn Fn(&PathSample) -> f64,
    n_max: usize,
    level: u32,
    samples: u64,
    seed: u64,
) -> Result<Extraction> {
    if n_max > EXTRACT_MAX_DEGREE || level > EXTRACT_MAX_LEVEL {
        return Err(ChaosError::InvalidArgument(format!(
            "extraction supports degree <= {EXTRACT_MAX_DEGREE} and level <= {EXTRACT_MAX_LEVEL}"
        )));
    }
    if samples < 2 {
        return Err(ChaosError::InvalidArgument("need at least two samples".into()));
    }
    let states = model.state_count();
    let measures = model.cell_measures(level);
    let bases: Vec<Vec<CellTuple>> = (1..=n_max)
        .map(|n| increasing_tuples(n, level, states))
        .collect();
    let mut constant = RunningStats::new();
    let mut moments: Vec<Vec<RunningStats>> = bases
        .iter()
        .map(|b| vec![RunningStats::new(); b.len()])
        .collect();

    for i in 0..samples {
        let path = sample_path(model, level, &mut path_rng(seed, i));
        let value = functional(&path);
        constant.push(value);
        let table = path.measure_table(model);
        for (basis, stats) in bases.iter().zip(moments.iter_mut()) {
            for (x, s) in basis.iter().zip(stats.iter_mut()) {
                let product: f64 = x
                    .entries()
                    .iter()
                    .map(|&(c, a)| table[c as usize * states + a as usize])
                    .product();
                s.push(value * product);
            }
        }
    }

    let mut kernels = Vec::with_capacity(n_max);
    let mut entries = Vec::new();
    for (n, (basis, stats)) in (1..=n_max).zip(bases.iter().zip(&moments)) {
        let mut kernel = GridKernel::zero(n, level, states)?;
        let orders: Vec<Vec<usize>> = itertools::Itertools::permutations(0..n, n).collect();
        for (x, s) in basis.iter().zip(stats) {
            let scale = factorial(n) * GridKernel::tuple_weight(x, &measures);
            let estimate = s.mean() / scale;
            for order in &orders {
                kernel.set(x.reorder(order), estimate)?;
            }
            entries.push(CoefficientEstimate {
                n,
                cells: x.cells().collect(),
                atoms: x.atoms().collect(),
                estimate,
                std_error: s.std_error() / scale,
            });
        }
        kernels.push(kernel);
    }
    Ok(Extraction {
        chaos: ChaosVector::new(constant.mean(), level, states, kernels)?,
        constant: MCReport::from_stats(&constant, seed),
        entries,
    })
}

/// `Π_{cells in [a_cell, t_cell)} (1 + X_cell)`, the grid stochastic exponential.
pub fn grid_exponential(
    path: &PathSample,
    model: &LevyModel,
    a_cell: usize,
    t_cell: usize,
) -> Result<f64> {
    elementary_symmetric(path, model, a_cell, t_cell, usize::MAX)
}

/// `Σ_{n ≤ n_max} e_n(X_a, ..., X_{t-1})`, the product expansion truncated at degree `n_max`.
pub fn elementary_symmetric(
    path: &PathSample,
    model: &LevyModel,
    a_cell: usize,
    t_cell: usize,
    n_max: usize,
) -> Result<f64> {
    if a_cell >= t_cell {
        return Err(ChaosError::EmptyInterval {
            start: a_cell,
            end: t_cell,
        });
    }
    if t_cell > cell_count(path.level) {
        return Err(ChaosError::IndexOutOfRange(format!(
            "cell {t_cell} at level {}",
            path.level
        )));
    }
    let top = n_max.min(t_cell - a_cell);
    let mut e = vec![0.0; top + 1];
    e[0] = 1.0;
    for cell in a_cell..t_cell {
        let x = path.increment(model, cell..cell + 1)?;
        for k in (1..=top).rev() {
            e[k] += x * e[k - 1];
        }
    }
    Ok(e.iter().sum())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::dyadic_group::strategies::dyadic_map;
    use crate::kernel::strategies::kernel;
    use crate::levy::Atom;

    fn model() -> LevyModel {
        LevyModel::new(0.9, vec![Atom { x: 1.0, lambda: 2.0 }, Atom { x: -0.5, lambda: 1.0 }])
            .unwrap()
    }

    fn t(entries: &[(u32, u32)]) -> CellTuple {
        CellTuple::new(entries).unwrap()
    }

    #[test]
    fn integral_examples() {
        let m = model();
        let path = sample_path(&m, 2, &mut path_rng(1, 0));
        let mut one = GridKernel::zero(1, 2, 3).unwrap();
        one.set(t(&[(2, 1)]), 1.0).unwrap();
        assert_eq!(
            multiple_integral(&path, &one, &m).unwrap(),
            path.measure(&m, 2, 1).unwrap()
        );
        let zero = GridKernel::zero(2, 2, 3).unwrap();
        assert_eq!(multiple_integral(&path, &zero, &m).unwrap(), 0.0);
        let mut pair = GridKernel::zero(2, 2, 3).unwrap();
        pair.set(t(&[(0, 2), (3, 0)]), 1.0).unwrap();
        let pair = pair.symmetrize();
        let product = path.measure(&m, 0, 2).unwrap() * path.measure(&m, 3, 0).unwrap();
        assert!((multiple_integral(&path, &pair, &m).unwrap() - product).abs() < 1e-15);
        let coarse = sample_path(&m, 1, &mut path_rng(1, 0));
        assert!(matches!(
            multiple_integral(&coarse, &pair, &m),
            Err(ChaosError::LevelMismatch { .. })
        ));
    }

    #[test]
    fn evaluate_examples() {
        let m = model();
        let path = sample_path(&m, 2, &mut path_rng(2, 0));
        let c = ChaosVector::constant_only(1.5, 2, 3);
        assert_eq!(evaluate_chaos(&path, &c, &m).unwrap(), 1.5);
    }

    #[test]
    fn truncated_exponential_matches_dolean_chaos() {
        // brute-force product expansion against the chaos with kernels 1/n!
        let m = LevyModel::new(0.0, vec![Atom { x: 1.0, lambda: 0.3 }]).unwrap();
        for n_max in 1..=3 {
            let kernels = (1..=n_max)
                .map(|n| GridKernel::dolean(0, 8, n, 3, &m).unwrap())
                .collect();
            let cv = ChaosVector::new(1.0, 3, 1, kernels).unwrap();
            for i in 0..20 {
                let path = sample_path(&m, 3, &mut path_rng(3, i));
                let expansion = elementary_symmetric(&path, &m, 0, 8, n_max).unwrap();
                assert!((evaluate_chaos(&path, &cv, &m).unwrap() - expansion).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diagram_examples() {
        let m = model();
        let path = sample_path(&m, 1, &mut path_rng(4, 0));
        let f = GridKernel::from_fn(1, 1, 3, |x| if x.entries()[0] == (0, 1) { 1.0 } else { 0.0 })
            .unwrap();
        assert_eq!(verify_diagram(&f, &DyadicMap::identity(), &path, &m).unwrap(), 0.0);
        let half = DyadicMap::periodic_shift(1).unwrap();
        assert_eq!(verify_diagram(&f, &half, &path, &m).unwrap(), 0.0);
    }

    #[test]
    fn isometry_examples() {
        let m = model();
        let zero = GridKernel::zero(2, 2, 3).unwrap();
        let r = isometry_check(&zero, &m, 10, 0).unwrap();
        assert_eq!((r.estimate, r.std_error), (0.0, 0.0));

        let mut single = GridKernel::zero(1, 2, 3).unwrap();
        single.set(t(&[(1, 1)]), 1.0).unwrap();
        let r = isometry_check(&single, &m, 100_000, 5).unwrap();
        assert!(r.agrees_with(m.cell_measures(2)[1], 3.0), "{r:?}");

        let mut pair = GridKernel::zero(2, 2, 3).unwrap();
        pair.set(t(&[(0, 0), (2, 2)]), 1.0).unwrap();
        let target = isometry_target(&pair, &m).unwrap();
        let w = m.cell_measures(2);
        assert!((target - w[0] * w[2]).abs() < 1e-15);
        let r = isometry_check(&pair, &m, 100_000, 6).unwrap();
        assert!(r.agrees_with(target, 3.0), "{r:?} vs {target}");
    }

    #[test]
    fn distinct_degrees_are_uncorrelated() {
        let m = model();
        let f1 = GridKernel::from_fn(1, 2, 3, |x| 1.0 + x.entries()[0].1 as f64).unwrap();
        let f2 = GridKernel::from_fn(2, 2, 3, |x| (x.entries()[0].0 + 1) as f64).unwrap();
        let mut cross = RunningStats::new();
        for i in 0..50_000 {
            let path = sample_path(&m, 2, &mut path_rng(7, i));
            cross.push(
                multiple_integral(&path, &f1, &m).unwrap()
                    * multiple_integral(&path, &f2, &m).unwrap(),
            );
        }
        assert!(cross.mean().abs() < 3.0 * cross.std_error(), "{}", cross.mean());
    }

    #[test]
    fn permuted_paths_have_matching_moments() {
        let m = model();
        let g = DyadicMap::from_permutation(2, vec![2, 0, 3, 1]).unwrap();
        let functional = |p: &PathSample| {
            let a = p.increment(&m, 0..1).unwrap();
            let b = p.increment(&m, 1..3).unwrap();
            a * b + a.powi(2)
        };
        let (mut plain, mut moved) = (RunningStats::new(), RunningStats::new());
        for i in 0..50_000 {
            let p = sample_path(&m, 2, &mut path_rng(8, i));
            plain.push(functional(&p));
            // independent stream for the permuted sample
            let q = sample_path(&m, 2, &mut path_rng(9, i));
            moved.push(functional(&q.permute(&g).unwrap()));
        }
        let se = (plain.std_error().powi(2) + moved.std_error().powi(2)).sqrt();
        assert!((plain.mean() - moved.mean()).abs() < 3.0 * se);
        let var_ratio = plain.variance() / moved.variance();
        assert!((var_ratio - 1.0).abs() < 0.1, "{var_ratio}");
    }

    #[test]
    fn extraction_recovers_known_chaos() {
        let m = LevyModel::new(1.0, vec![Atom { x: 1.0, lambda: 1.0 }]).unwrap();
        let f1 = GridKernel::from_fn(1, 1, 2, |x| 0.5 + x.entries()[0].0 as f64).unwrap();
        let f2 = GridKernel::from_fn(2, 1, 2, |x| {
            if x.atoms().all(|a| a == 0) { 0.7 } else { -0.2 }
        })
        .unwrap();
        let truth = ChaosVector::new(0.25, 1, 2, vec![f1, f2]).unwrap();
        let functional = |p: &PathSample| evaluate_chaos(p, &truth, &m).unwrap();
        let out = chaos_coefficients(&m, &functional, 2, 1, 100_000, 11).unwrap();
        assert!(out.constant.agrees_with(0.25, 4.0));
        for e in &out.entries {
            let x = CellTuple::from_parts(&e.cells, &e.atoms).unwrap();
            let target = truth.kernel(e.n).unwrap().get(&x);
            assert!((e.estimate - target).abs() <= 4.0 * e.std_error, "{e:?} vs {target}");
        }

        let constant = chaos_coefficients(&m, &|_| 3.0, 1, 1, 100, 0).unwrap();
        assert_eq!(constant.constant.estimate, 3.0);
        assert!(constant.entries.iter().all(|e| e.estimate.abs() < 1.0));
        assert!(chaos_coefficients(&m, &|_| 0.0, 4, 1, 10, 0).is_err());
        assert!(chaos_coefficients(&m, &|_| 0.0, 1, 5, 10, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn diagram_commutes_pathwise(f in kernel(3, 2, 3), g in dyadic_map(2), seed in 0u64..1000) {
            let m = model();
            let path = sample_path(&m, 2, &mut path_rng(seed, 0));
            prop_assert!(verify_diagram(&f, &g, &path, &m).unwrap() <= 1e-12);
        }

        #[test]
        fn integral_ignores_symmetrization(f in kernel(2, 2, 3), seed in 0u64..1000) {
            let m = model();
            let path = sample_path(&m, 2, &mut path_rng(seed, 1));
            let a = multiple_integral(&path, &f, &m).unwrap();
            let b = multiple_integral(&path, &f.symmetrize(), &m).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn evaluation_is_linear(f in kernel(1, 2, 3), h in kernel(1, 2, 3), seed in 0u64..100) {
            let m = model();
            let path = sample_path(&m, 2, &mut path_rng(seed, 2));
            let a = ChaosVector::new(0.5, 2, 3, vec![f]).unwrap();
            let b = ChaosVector::new(-1.0, 2, 3, vec![h]).unwrap();
            let sum = evaluate_chaos(&path, &a.add_scaled(&b, 1.0).unwrap(), &m).unwrap();
            let parts = evaluate_chaos(&path, &a, &m).unwrap() + evaluate_chaos(&path, &b, &m).unwrap();
            prop_assert!((sum - parts).abs() < 1e-12);
        }
    }
}
