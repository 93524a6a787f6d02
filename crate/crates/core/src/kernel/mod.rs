//! Chaos kernels stored as sparse tensors over off-diagonal grid tuples.

mod chaos;
mod projection;

use std::collections::{BTreeMap, HashMap};

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dyadic_group::{cell_count, CellTuple, DyadicMap, TupleSpace};
use crate::error::{ChaosError, Result};
use crate::levy::LevyModel;

pub use chaos::ChaosVector;
pub use projection::{
    cuboid_average, cuboid_deviation, is_cuboid_constant, is_invariant, orbit_project,
};

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// A degree-`n` kernel on level-`level` time cells and `atom_count` states.
/// Absent tuples have value zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel", into = "RawKernel")]
pub struct GridKernel {
    n: usize,
    level: u32,
    atom_count: usize,
    values: BTreeMap<CellTuple, f64>,
}

#[derive(Serialize, Deserialize)]
struct RawEntry {
    cells: Vec<u32>,
    atoms: Vec<u32>,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct RawKernel {
    n: usize,
    level: u32,
    atom_count: usize,
    entries: Vec<RawEntry>,
}

impl TryFrom<RawKernel> for GridKernel {
    type Error = ChaosError;

    fn try_from(raw: RawKernel) -> Result<Self> {
        let mut k = GridKernel::zero(raw.n, raw.level, raw.atom_count)?;
        for e in raw.entries {
            let x = CellTuple::from_parts(&e.cells, &e.atoms)?;
            if k.values.contains_key(&x) {
                return Err(ChaosError::InvalidKernel(format!("duplicate entry {x:?}")));
            }
            k.set(x, e.value)?;
        }
        Ok(k)
    }
}

impl From<GridKernel> for RawKernel {
    fn from(k: GridKernel) -> Self {
        RawKernel {
            n: k.n,
            level: k.level,
            atom_count: k.atom_count,
            entries: k
                .values
                .into_iter()
                .map(|(x, value)| RawEntry {
                    cells: x.cells().collect(),
                    atoms: x.atoms().collect(),
                    value,
                })
                .collect(),
        }
    }
}

/// Result of a contraction: a scalar when every coordinate is integrated out.
#[derive(Debug, Clone, PartialEq)]
pub enum Contracted {
    Scalar(f64),
    Kernel(GridKernel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contraction {
    pub value: Contracted,
    /// Squared norm of the part that landed on repeated time cells and was dropped.
    pub dropped_norm_sq: f64,
}

impl GridKernel {
    pub fn zero(n: usize, level: u32, atom_count: usize) -> Result<Self> {
        if n == 0 {
            return Err(ChaosError::InvalidKernel("degree must be at least 1".into()));
        }
        if atom_count == 0 {
            return Err(ChaosError::InvalidKernel("no states".into()));
        }
        Ok(GridKernel {
            n,
            level,
            atom_count,
            values: BTreeMap::new(),
        })
    }

    /// Fills every off-diagonal tuple from `f`, skipping zeros.
    pub fn from_fn(
        n: usize,
        level: u32,
        atom_count: usize,
        mut f: impl FnMut(&CellTuple) -> f64,
    ) -> Result<Self> {
        let mut k = Self::zero(n, level, atom_count)?;
        for x in k.space().off_diagonal() {
            let v = f(&x);
            if v != 0.0 {
                k.values.insert(x, v);
            }
        }
        Ok(k)
    }

    /// The kernel `1_{[a_cell, t_cell)}^{⊗n} / n!`, equal for every state combination.
    pub fn dolean(
        a_cell: usize,
        t_cell: usize,
        n: usize,
        level: u32,
        model: &LevyModel,
    ) -> Result<Self> {
        if a_cell >= t_cell {
            return Err(ChaosError::EmptyInterval {
                start: a_cell,
                end: t_cell,
            });
        }
        if t_cell > cell_count(level) {
            return Err(ChaosError::IndexOutOfRange(format!(
                "cell {t_cell} at level {level}"
            )));
        }
        let value = 1.0 / factorial(n);
        Self::from_fn(n, level, model.state_count(), |x| {
            if x.cells().all(|c| (a_cell..t_cell).contains(&(c as usize))) {
                value
            } else {
                0.0
            }
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn atom_count(&self) -> usize {
        self.atom_count
    }

    pub fn space(&self) -> TupleSpace {
        TupleSpace::new(self.n, self.level, self.atom_count)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&CellTuple, f64)> {
        self.values.iter().map(|(x, &v)| (x, v))
    }

    pub fn get(&self, x: &CellTuple) -> f64 {
        self.values.get(x).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, x: CellTuple, value: f64) -> Result<()> {
        if !self.space().contains(&x) || !x.is_off_diagonal() {
            return Err(ChaosError::IndexOutOfRange(format!(
                "{x:?} in a degree-{} kernel at level {} with {} states",
                self.n, self.level, self.atom_count
            )));
        }
        if value == 0.0 {
            self.values.remove(&x);
        } else {
            self.values.insert(x, value);
        }
        Ok(())
    }

    fn add_at(&mut self, x: CellTuple, value: f64) {
        *self.values.entry(x).or_insert(0.0) += value;
    }

    fn prune(mut self) -> Self {
        self.values.retain(|_, v| *v != 0.0);
        self
    }

    pub fn check_model(&self, model: &LevyModel) -> Result<()> {
        if self.atom_count != model.state_count() {
            return Err(ChaosError::ModelMismatch {
                kernel: self.atom_count,
                model: model.state_count(),
            });
        }
        Ok(())
    }

    fn check_compatible(&self, other: &GridKernel) -> Result<()> {
        if self.level != other.level {
            return Err(ChaosError::LevelMismatch {
                expected: self.level,
                found: other.level,
            });
        }
        if self.atom_count != other.atom_count {
            return Err(ChaosError::ModelMismatch {
                kernel: other.atom_count,
                model: self.atom_count,
            });
        }
        Ok(())
    }

    /// `𝕞^{⊗n}` mass of a single tuple.
    pub(crate) fn tuple_weight(x: &CellTuple, measures: &[f64]) -> f64 {
        x.atoms().map(|a| measures[a as usize]).product()
    }

    pub fn l2_norm_sq(&self, model: &LevyModel) -> Result<f64> {
        // an empty float sum is -0.0
        Ok(self.inner(self, model)? + 0.0)
    }

    pub fn inner(&self, other: &GridKernel, model: &LevyModel) -> Result<f64> {
        self.check_model(model)?;
        self.check_compatible(other)?;
        if self.n != other.n {
            return Ok(0.0);
        }
        let measures = model.cell_measures(self.level);
        Ok(self
            .values
            .iter()
            .map(|(x, v)| v * other.get(x) * Self::tuple_weight(x, &measures))
            .sum())
    }

    /// Average over all permutations of the coordinate slots.
    pub fn symmetrize(&self) -> GridKernel {
        let scale = 1.0 / factorial(self.n);
        let mut out = GridKernel {
            values: BTreeMap::new(),
            ..*self
        };
        let orders: Vec<Vec<usize>> = (0..self.n).permutations(self.n).collect();
        for (x, v) in &self.values {
            for order in &orders {
                out.add_at(x.reorder(order), v * scale);
            }
        }
        out.prune()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.symmetrize()) <= tol
    }

    /// `(S_g f)(x) = f(g[n] x)`.
    pub fn pullback(&self, g: &DyadicMap) -> Result<GridKernel> {
        let inverse = g.inverse().refine(self.level)?;
        Ok(self.pullback_by_inverse_images(&inverse))
    }

    pub(crate) fn pullback_by_inverse_images(&self, inverse: &[usize]) -> GridKernel {
        GridKernel {
            values: self
                .values
                .iter()
                .map(|(y, &v)| (y.map_cells(inverse), v))
                .collect(),
            ..*self
        }
    }

    /// Product on concatenated tuples, diagonal entries dropped.
    pub fn tensor(&self, other: &GridKernel) -> Result<GridKernel> {
        self.check_compatible(other)?;
        let mut out = GridKernel::zero(self.n + other.n, self.level, self.atom_count)?;
        for (x, v) in &self.values {
            for (y, w) in &other.values {
                let xy = x.concat(y);
                if xy.is_off_diagonal() {
                    out.values.insert(xy, v * w);
                }
            }
        }
        Ok(out)
    }

    /// `(f ⊗_k^r h)(α, β, γ) = Π_x(γ) Σ_ρ f(α, γ, ρ) h(ρ, γ, β) 𝕞^{⊗k}(ρ)`.
    pub fn contraction(
        &self,
        other: &GridKernel,
        k: usize,
        r: usize,
        model: &LevyModel,
    ) -> Result<Contraction> {
        self.check_model(model)?;
        self.check_compatible(other)?;
        let (n, m) = (self.n, other.n);
        if k > n.min(m) || r > n.min(m) - k {
            return Err(ChaosError::IndexOutOfRange(format!(
                "contraction k={k}, r={r} of degrees {n} and {m}"
            )));
        }
        let measures = model.cell_measures(self.level);
        let xs: Vec<f64> = model.states().iter().map(|s| s.x).collect();

        // index `other` by its leading (ρ, γ) block
        type Slots<'a> = &'a [(u32, u32)];
        let mut by_prefix: HashMap<Slots, Vec<(Slots, f64)>> = HashMap::new();
        for (y, &w) in &other.values {
            let (prefix, beta) = y.entries().split_at(k + r);
            by_prefix.entry(prefix).or_default().push((beta, w));
        }

        let out_degree = n + m - 2 * k - r;
        let mut kept: BTreeMap<CellTuple, f64> = BTreeMap::new();
        let mut dropped: BTreeMap<CellTuple, f64> = BTreeMap::new();
        let mut scalar = 0.0;
        let mut prefix: Vec<(u32, u32)> = Vec::with_capacity(k + r);
        for (x, &v) in &self.values {
            let e = x.entries();
            let (alpha, rest) = e.split_at(n - k - r);
            let (gamma, rho) = rest.split_at(r);
            prefix.clear();
            prefix.extend_from_slice(rho);
            prefix.extend_from_slice(gamma);
            let Some(matches) = by_prefix.get(prefix.as_slice()) else {
                continue;
            };
            let rho_weight: f64 = rho.iter().map(|&(_, a)| measures[a as usize]).product();
            let gamma_x: f64 = gamma.iter().map(|&(_, a)| xs[a as usize]).product();
            let factor = v * rho_weight * gamma_x;
            for &(beta, w) in matches {
                let value = factor * w;
                if out_degree == 0 {
                    scalar += value;
                    continue;
                }
                let key = CellTuple::raw(
                    alpha
                        .iter()
                        .chain(beta.iter())
                        .chain(gamma.iter())
                        .copied(),
                );
                let target = if key.is_off_diagonal() {
                    &mut kept
                } else {
                    &mut dropped
                };
                *target.entry(key).or_insert(0.0) += value;
            }
        }

        let dropped_norm_sq: f64 = dropped
            .iter()
            .map(|(x, v)| v * v * Self::tuple_weight(x, &measures))
            .sum();
        if dropped_norm_sq > 0.0 {
            log::info!(
                "contraction k={k} r={r}: dropped diagonal mass {dropped_norm_sq:.3e} ({} entries)",
                dropped.len()
            );
        }
        let value = if out_degree == 0 {
            Contracted::Scalar(scalar)
        } else {
            Contracted::Kernel(
                GridKernel {
                    n: out_degree,
                    level: self.level,
                    atom_count: self.atom_count,
                    values: kept,
                }
                .prune(),
            )
        };
        Ok(Contraction {
            value,
            dropped_norm_sq,
        })
    }

    /// Keeps only tuples whose cells all lie before `t_cell`.
    pub fn restrict_time(&self, t_cell: usize) -> GridKernel {
        GridKernel {
            values: self
                .values
                .iter()
                .filter(|(x, _)| x.cells().all(|c| (c as usize) < t_cell))
                .map(|(x, &v)| (x.clone(), v))
                .collect(),
            ..*self
        }
    }

    pub fn scale(&self, c: f64) -> GridKernel {
        GridKernel {
            values: self.values.iter().map(|(x, &v)| (x.clone(), c * v)).collect(),
            ..*self
        }
        .prune()
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, other: &GridKernel, c: f64) -> Result<GridKernel> {
        self.check_compatible(other)?;
        if self.n != other.n {
            return Err(ChaosError::InvalidKernel(format!(
                "adding degree {} to degree {}",
                other.n, self.n
            )));
        }
        let mut out = self.clone();
        for (x, &v) in &other.values {
            out.add_at(x.clone(), c * v);
        }
        Ok(out.prune())
    }

    /// Largest entrywise difference, absent entries counted as zero.
    pub fn max_abs_diff(&self, other: &GridKernel) -> f64 {
        let left = self
            .values
            .iter()
            .map(|(x, v)| (v - other.get(x)).abs());
        let right = other
            .values
            .iter()
            .filter(|(x, _)| !self.values.contains_key(x))
            .map(|(_, v)| v.abs());
        left.chain(right).fold(0.0, f64::max)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("kernels always serialize");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
