//! Orthogonal polynomials of the state measure `μ` and the change of basis
//! from chaos kernels to kernels of iterated integrals against the
//! orthogonalized power-jump martingales.
//!
//! With finitely many jump sizes the exponential-moment condition of the
//! power-jump expansion holds automatically.

use std::collections::{BTreeMap, HashMap};

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::dyadic_group::{cell_count, DyadicMap};
use crate::error::{ChaosError, Result};
use crate::kernel::{factorial, GridKernel};
use crate::levy::LevyModel;

/// Orthogonal polynomials `p_1, ..., p_K` in `L2(μ)`, from the monomials `1, x, x², ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoBasis {
    /// `coefficients[i][k]` is the coefficient of `x^k` in `p_{i+1}`.
    pub coefficients: Vec<Vec<f64>>,
    /// `values[i][s] = p_{i+1}(x_s)` at each state position.
    pub values: Vec<Vec<f64>>,
    /// `q_i = ‖p_i‖²` in `L2(μ)`.
    pub norms_sq: Vec<f64>,
    weights: Vec<f64>,
}

impl OrthoBasis {
    pub fn len(&self) -> usize {
        self.norms_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms_sq.is_empty()
    }

    pub fn inner(&self, i: usize, j: usize) -> f64 {
        self.values[i]
            .iter()
            .zip(&self.values[j])
            .zip(&self.weights)
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    pub fn eval(&self, i: usize, x: f64) -> f64 {
        self.coefficients[i]
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x + c)
    }
}

/// Modified Gram–Schmidt with one re-orthogonalization pass.
pub fn build_basis(model: &LevyModel) -> OrthoBasis {
    let states = model.states();
    let xs: Vec<f64> = states.iter().map(|s| s.x).collect();
    let weights: Vec<f64> = states.iter().map(|s| s.weight).collect();
    let dim = states.len();
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).zip(&weights).map(|((u, v), w)| u * v * w).sum()
    };

    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut coefficients: Vec<Vec<f64>> = Vec::new();
    let mut norms_sq = Vec::new();
    for k in 0..dim {
        let mut v: Vec<f64> = xs.iter().map(|x| x.powi(k as i32)).collect();
        let mut c = vec![0.0; dim];
        c[k] = 1.0;
        let start = dot(&v, &v);
        for _pass in 0..2 {
            for (p, (pc, q)) in values.iter().zip(coefficients.iter().zip(&norms_sq)) {
                let r = dot(&v, p) / q;
                v.iter_mut().zip(p).for_each(|(a, b)| *a -= r * b);
                c.iter_mut().zip(pc).for_each(|(a, b)| *a -= r * b);
            }
        }
        let q = dot(&v, &v);
        if q > 1e-12 * start.max(f64::MIN_POSITIVE) {
            values.push(v);
            coefficients.push(c);
            norms_sq.push(q);
        }
    }
    OrthoBasis {
        coefficients,
        values,
        norms_sq,
        weights,
    }
}

/// Transformed kernels `g_{i_1..i_n}` on increasing cell tuples; the API indexes from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RawTransform", try_from = "RawTransform")]
pub struct NsTransform {
    pub n: usize,
    pub level: u32,
    pub basis_size: usize,
    components: BTreeMap<Vec<usize>, BTreeMap<Vec<u32>, f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawValue {
    cells: Vec<u32>,
    value: f64,
}

/// JSON form: components keyed by the 1-based index tuple, e.g. `"1,3"`.
#[derive(Serialize, Deserialize)]
struct RawTransform {
    n: usize,
    level: u32,
    basis_size: usize,
    components: BTreeMap<String, Vec<RawValue>>,
}

fn index_key(indices: &[usize]) -> String {
    indices.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")
}

fn parse_key(key: &str) -> Option<Vec<usize>> {
    key.split(',')
        .map(|p| p.trim().parse::<usize>().ok().and_then(|i| i.checked_sub(1)))
        .collect()
}

impl From<NsTransform> for RawTransform {
    fn from(t: NsTransform) -> Self {
        RawTransform {
            n: t.n,
            level: t.level,
            basis_size: t.basis_size,
            components: t
                .components
                .into_iter()
                .map(|(indices, values)| {
                    let values = values
                        .into_iter()
                        .map(|(cells, value)| RawValue { cells, value })
                        .collect();
                    (index_key(&indices), values)
                })
                .collect(),
        }
    }
}

impl TryFrom<RawTransform> for NsTransform {
    type Error = ChaosError;

    fn try_from(raw: RawTransform) -> Result<Self> {
        let mut components = BTreeMap::new();
        for (key, values) in raw.components {
            let indices = parse_key(&key)
                .filter(|ix| ix.len() == raw.n && ix.iter().all(|&i| i < raw.basis_size))
                .ok_or_else(|| ChaosError::InvalidArgument(format!("bad index tuple {key:?}")))?;
            let values = values.into_iter().map(|v| (v.cells, v.value)).collect();
            components.insert(indices, values);
        }
        Ok(NsTransform {
            n: raw.n,
            level: raw.level,
            basis_size: raw.basis_size,
            components,
        })
    }
}

impl NsTransform {
    pub fn get(&self, indices: &[usize], cells: &[u32]) -> f64 {
        self.components
            .get(indices)
            .and_then(|c| c.get(cells))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn components(&self) -> impl Iterator<Item = (&Vec<usize>, &BTreeMap<Vec<u32>, f64>)> {
        self.components.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.components.is_empty()
    }
}

/// Dense transform: for every increasing cell tuple, `g` over all index tuples in mixed radix.
fn dense_transform(
    f: &GridKernel,
    basis: &OrthoBasis,
    model: &LevyModel,
) -> Result<HashMap<Vec<u32>, Vec<f64>>> {
    f.check_model(model)?;
    if !f.is_symmetric(1e-12) {
        return Err(ChaosError::InvalidKernel("transform needs a symmetric kernel".into()));
    }
    if let Some(i) = basis.norms_sq.iter().position(|&q| q <= 0.0) {
        return Err(ChaosError::DegenerateBasis(i));
    }
    let n = f.n();
    let states = f.atom_count();
    let k = basis.len();
    let weights: Vec<f64> = model.states().iter().map(|s| s.weight).collect();
    // T[i][s] = p_i(x_s) w_s / q_i
    let transform: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..states)
                .map(|s| basis.values[i][s] * weights[s] / basis.norms_sq[i])
                .collect()
        })
        .collect();
    let scale = factorial(n);

    let mut out = HashMap::new();
    for cells in (0..cell_count(f.level()) as u32).combinations(n) {
        // state tensor of f at these cells, mixed radix with the last slot fastest
        let mut tensor: Vec<f64> = (0..states.pow(n as u32))
            .map(|idx| {
                let mut rest = idx;
                let mut atoms = vec![0u32; n];
                for slot in (0..n).rev() {
                    atoms[slot] = (rest % states) as u32;
                    rest /= states;
                }
                let x = crate::dyadic_group::CellTuple::from_parts(&cells, &atoms)
                    .expect("combinations are distinct");
                f.get(&x)
            })
            .collect();
        let mut radix = vec![states; n];
        for axis in 0..n {
            let inner: usize = radix[axis + 1..].iter().product();
            let outer: usize = radix[..axis].iter().product();
            let mut next = vec![0.0; outer * k * inner];
            for o in 0..outer {
                for i in 0..k {
                    for s in 0..states {
                        let t = transform[i][s];
                        if t == 0.0 {
                            continue;
                        }
                        for r in 0..inner {
                            next[(o * k + i) * inner + r] +=
                                t * tensor[(o * states + s) * inner + r];
                        }
                    }
                }
            }
            tensor = next;
            radix[axis] = k;
        }
        tensor.iter_mut().for_each(|v| *v *= scale);
        out.insert(cells, tensor);
    }
    Ok(out)
}

fn index_tuple(mut idx: usize, n: usize, k: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for slot in (0..n).rev() {
        out[slot] = idx % k;
        idx /= k;
    }
    out
}

fn index_of(indices: &[usize], k: usize) -> usize {
    indices.iter().fold(0, |acc, &i| acc * k + i)
}

/// `g_i(t) = n! Σ_x f((t_1,x_1),...,(t_n,x_n)) Π_j p_{i_j}(x_j) μ(x_j) / q_{i_j}` on increasing cells.
pub fn ns_transform(f: &GridKernel, basis: &OrthoBasis, model: &LevyModel) -> Result<NsTransform> {
    let dense = dense_transform(f, basis, model)?;
    let k = basis.len();
    let mut components: BTreeMap<Vec<usize>, BTreeMap<Vec<u32>, f64>> = BTreeMap::new();
    for (cells, values) in dense {
        for (idx, &v) in values.iter().enumerate() {
            if v != 0.0 {
                components
                    .entry(index_tuple(idx, f.n(), k))
                    .or_default()
                    .insert(cells.clone(), v);
            }
        }
    }
    Ok(NsTransform {
        n: f.n(),
        level: f.level(),
        basis_size: k,
        components,
    })
}

/// `|n! ‖f‖² − Σ_i Σ_t g_i(t)² 2^{-dn} Π q_i|`.
pub fn ns_parseval_check(f: &GridKernel, basis: &OrthoBasis, model: &LevyModel) -> Result<f64> {
    let dense = dense_transform(f, basis, model)?;
    let n = f.n();
    let k = basis.len();
    let volume = (1.0 / cell_count(f.level()) as f64).powi(n as i32);
    let q_products: Vec<f64> = (0..k.pow(n as u32))
        .map(|idx| index_tuple(idx, n, k).iter().map(|&i| basis.norms_sq[i]).product())
        .collect();
    let rhs: f64 = dense
        .values()
        .flat_map(|values| values.iter().zip(&q_products).map(|(g, q)| g * g * q * volume))
        .sum();
    let lhs = factorial(n) * f.l2_norm_sq(model)?;
    Ok((lhs - rhs).abs())
}

/// Largest deviation in `g^f_i(sorted g(t)) = g^{S_g f}_{i∘σ⁻¹}(t)`, where `σ` sorts the
/// mapped cells. For `g`-invariant `f` the right side is `g^f_{i∘σ⁻¹}(t)`.
pub fn ns_covariance_check(
    f: &GridKernel,
    basis: &OrthoBasis,
    g: &DyadicMap,
    model: &LevyModel,
) -> Result<f64> {
    let images = g.refine(f.level())?;
    let pulled = f.pullback(g)?;
    let plain = dense_transform(f, basis, model)?;
    let moved = dense_transform(&pulled, basis, model)?;
    let n = f.n();
    let k = basis.len();
    let mut worst: f64 = 0.0;
    for (cells, values) in &moved {
        let mapped: Vec<u32> = cells.iter().map(|&c| images[c as usize] as u32).collect();
        let mut sigma: Vec<usize> = (0..n).collect();
        sigma.sort_by_key(|&j| mapped[j]);
        let sorted: Vec<u32> = sigma.iter().map(|&j| mapped[j]).collect();
        let lhs_values = &plain[&sorted];
        for (idx, &lhs) in lhs_values.iter().enumerate() {
            let i = index_tuple(idx, n, k);
            // (i∘σ⁻¹)_{σ(j)} = i_j
            let mut permuted = vec![0; n];
            for (j, &s) in sigma.iter().enumerate() {
                permuted[s] = i[j];
            }
            let diff = (lhs - values[index_of(&permuted, k)]).abs();
            worst = worst.max(diff);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::dyadic_group::strategies::dyadic_map;
    use crate::dyadic_group::{CellTuple, GroupSpec};
    use crate::kernel::{orbit_project, strategies::kernel};
    use crate::levy::Atom;

    fn gaussian_plus_two() -> LevyModel {
        LevyModel::new(
            0.7,
            vec![Atom { x: 1.0, lambda: 1.5 }, Atom { x: -0.6, lambda: 2.0 }],
        )
        .unwrap()
    }

    #[test]
    fn basis_examples() {
        let single = LevyModel::new(0.0, vec![Atom { x: 2.0, lambda: 1.0 }]).unwrap();
        assert_eq!(build_basis(&single).len(), 1);

        // σ = 1 and one atom at x = 1 with λ = 1: μ = δ_0 + δ_1.
        // p_1 = 1, p_2 = x - 1/2 by hand; q_1 = 2, q_2 = 1/2.
        let m = LevyModel::new(1.0, vec![Atom { x: 1.0, lambda: 1.0 }]).unwrap();
        let b = build_basis(&m);
        assert_eq!(b.len(), 2);
        assert!(b.inner(0, 1).abs() < 1e-15);
        assert!((b.norms_sq[0] - 2.0).abs() < 1e-15);
        assert!((b.norms_sq[1] - 0.5).abs() < 1e-15);
        assert!((b.eval(1, 3.0) - 2.5).abs() < 1e-15);

        let b = build_basis(&gaussian_plus_two());
        assert_eq!(b.len(), 3);
        assert!(b.norms_sq.iter().all(|&q| q > 0.0));
        for i in 0..3 {
            for j in 0..i {
                assert!(b.inner(i, j).abs() < 1e-12);
            }
            for (s, st) in gaussian_plus_two().states().iter().enumerate() {
                assert!((b.eval(i, st.x) - b.values[i][s]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transform_of_constant_is_projection_of_one() {
        // two atoms, μ = w_a δ_a + w_b δ_b; the constant 1 projects onto p_1 = 1 only
        let m = LevyModel::new(0.0, vec![Atom { x: 1.0, lambda: 1.0 }, Atom { x: 2.0, lambda: 0.25 }])
            .unwrap();
        let b = build_basis(&m);
        let f = GridKernel::from_fn(1, 2, 2, |_| 1.0).unwrap();
        let t = ns_transform(&f, &b, &m).unwrap();
        for c in 0..4u32 {
            assert!((t.get(&[0], &[c]) - 1.0).abs() < 1e-14);
            assert!(t.get(&[1], &[c]).abs() < 1e-14);
        }
    }

    #[test]
    fn transform_picks_out_a_single_index() {
        let m = gaussian_plus_two();
        let b = build_basis(&m);
        let f = GridKernel::from_fn(1, 2, 3, |x| {
            let (c, a) = x.entries()[0];
            (1.0 + c as f64) * b.values[2][a as usize] / b.norms_sq[2]
        })
        .unwrap();
        let t = ns_transform(&f, &b, &m).unwrap();
        for c in 0..4u32 {
            assert!(t.get(&[0], &[c]).abs() < 1e-12);
            assert!(t.get(&[1], &[c]).abs() < 1e-12);
            assert!((t.get(&[2], &[c]) - (1.0 + c as f64) / b.norms_sq[2]).abs() < 1e-12);
        }
        let text = serde_json::to_string(&t).unwrap();
        assert!(text.contains("\"3\""));
        assert_eq!(serde_json::from_str::<NsTransform>(&text).unwrap(), t);
        let zero = GridKernel::zero(2, 2, 3).unwrap();
        assert!(ns_transform(&zero, &b, &m).unwrap().is_zero());
        assert_eq!(ns_parseval_check(&zero, &b, &m).unwrap(), 0.0);
    }

    #[test]
    fn rejects_asymmetric_kernels() {
        let m = gaussian_plus_two();
        let mut f = GridKernel::zero(2, 1, 3).unwrap();
        f.set(CellTuple::new(&[(0, 0), (1, 1)]).unwrap(), 1.0).unwrap();
        assert!(ns_transform(&f, &build_basis(&m), &m).is_err());
    }

    #[test]
    fn single_state_is_a_rescale() {
        let m = LevyModel::new(1.5, vec![]).unwrap();
        let b = build_basis(&m);
        let f = GridKernel::from_fn(2, 2, 1, |x| x.cells().sum::<u32>() as f64).unwrap();
        let t = ns_transform(&f, &b, &m).unwrap();
        assert!((t.get(&[0, 0], &[1, 3]) - 2.0 * 4.0).abs() < 1e-12);
        assert!(ns_parseval_check(&f, &b, &m).unwrap() < 1e-12);
    }

    #[test]
    fn covariance_with_invariant_kernel_uses_swapped_indices() {
        let m = gaussian_plus_two();
        let b = build_basis(&m);
        let half = DyadicMap::periodic_shift(1).unwrap();
        let group = GroupSpec::new(vec![half.clone()]).unwrap();
        let raw = GridKernel::from_fn(2, 1, 3, |x| {
            let e = x.entries();
            1.0 + e[0].1 as f64 * 0.5 - e[1].1 as f64 + e[0].0 as f64
        })
        .unwrap();
        let f = orbit_project(&raw.symmetrize(), &group).unwrap();
        let t = ns_transform(&f, &b, &m).unwrap();
        // g swaps the two cells, so σ swaps the two slots
        for i in 0..3 {
            for j in 0..3 {
                assert!((t.get(&[i, j], &[0, 1]) - t.get(&[j, i], &[0, 1])).abs() < 1e-12);
            }
        }
        assert!(ns_covariance_check(&f, &b, &half, &m).unwrap() < 1e-12);
        assert_eq!(
            ns_covariance_check(&f, &b, &DyadicMap::identity(), &m).unwrap(),
            0.0
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn parseval_and_covariance_hold(f in kernel(2, 2, 3), g in dyadic_map(2)) {
            let m = gaussian_plus_two();
            let b = build_basis(&m);
            let f = f.symmetrize();
            prop_assert!(ns_parseval_check(&f, &b, &m).unwrap() < 1e-10);
            prop_assert!(ns_covariance_check(&f, &b, &g, &m).unwrap() < 1e-12);
        }

        #[test]
        fn transform_is_linear(f in kernel(1, 2, 3), h in kernel(1, 2, 3), c in -2.0f64..2.0) {
            let m = gaussian_plus_two();
            let b = build_basis(&m);
            let combo = ns_transform(&f.add_scaled(&h, c).unwrap(), &b, &m).unwrap();
            let tf = ns_transform(&f, &b, &m).unwrap();
            let th = ns_transform(&h, &b, &m).unwrap();
            for i in 0..3 {
                for cell in 0..4u32 {
                    let expected = tf.get(&[i], &[cell]) + c * th.get(&[i], &[cell]);
                    prop_assert!((combo.get(&[i], &[cell]) - expected).abs() < 1e-12);
                }
            }
        }
    }
}
