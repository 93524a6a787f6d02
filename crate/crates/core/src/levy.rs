//! Lévy model with finitely many jump sizes, grid path simulation and the
//! random measure `M` on cell × state sets.
//!
//! The control measure on states is `μ = σ²δ₀ + Σ λ_j x_j² δ_{x_j}`. Kernels
//! index states by position in [`LevyModel::states`]: the Brownian state comes
//! first when `σ > 0`, followed by the jump atoms in order.

use std::io::Write;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dyadic_group::{cell_count, DyadicMap};
use crate::error::{ChaosError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct LevyModel {
    sigma: f64,
    atoms: Vec<Atom>,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    sigma: f64,
    #[serde(default)]
    atoms: Vec<Atom>,
}

impl TryFrom<RawModel> for LevyModel {
    type Error = ChaosError;

    fn try_from(raw: RawModel) -> Result<Self> {
        LevyModel::new(raw.sigma, raw.atoms)
    }
}

impl From<LevyModel> for RawModel {
    fn from(m: LevyModel) -> Self {
        RawModel {
            sigma: m.sigma,
            atoms: m.atoms,
        }
    }
}

/// One point of the support of `μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    /// 0 for the Brownian state, `j` for the `j`-th jump atom (1-based).
    pub id: usize,
    pub x: f64,
    pub weight: f64,
}

impl LevyModel {
    pub fn new(sigma: f64, atoms: Vec<Atom>) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(ChaosError::InvalidModel(format!("sigma = {sigma}")));
        }
        for (j, a) in atoms.iter().enumerate() {
            if !(a.x.is_finite() && a.x != 0.0) {
                return Err(ChaosError::InvalidModel(format!("atom {j} has x = {}", a.x)));
            }
            if !(a.lambda.is_finite() && a.lambda > 0.0) {
                return Err(ChaosError::InvalidModel(format!(
                    "atom {j} has lambda = {}",
                    a.lambda
                )));
            }
            if atoms[..j].iter().any(|b| b.x == a.x) {
                return Err(ChaosError::InvalidModel(format!("repeated jump size {}", a.x)));
            }
        }
        if sigma == 0.0 && atoms.is_empty() {
            return Err(ChaosError::InvalidModel(
                "sigma is zero and there are no jump atoms".into(),
            ));
        }
        Ok(LevyModel { sigma, atoms })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn has_brownian(&self) -> bool {
        self.sigma > 0.0
    }

    pub fn states(&self) -> Vec<State> {
        let brownian = self.has_brownian().then_some(State {
            id: 0,
            x: 0.0,
            weight: self.sigma * self.sigma,
        });
        brownian
            .into_iter()
            .chain(self.atoms.iter().enumerate().map(|(j, a)| State {
                id: j + 1,
                x: a.x,
                weight: a.lambda * a.x * a.x,
            }))
            .collect()
    }

    pub fn state_count(&self) -> usize {
        self.atoms.len() + usize::from(self.has_brownian())
    }

    /// `(state id, μ-weight)` for every state.
    pub fn mu_weights(&self) -> Vec<(usize, f64)> {
        self.states().iter().map(|s| (s.id, s.weight)).collect()
    }

    /// `𝕞(cell × state)` for each state position at level `d`.
    pub fn cell_measures(&self, d: u32) -> Vec<f64> {
        let dt = 1.0 / cell_count(d) as f64;
        self.states().iter().map(|s| s.weight * dt).collect()
    }
}

/// Brownian increments and jump counts per time cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub level: u32,
    pub gauss: Vec<f64>,
    /// `counts[cell][j]` is the number of jumps of size `x_j` in the cell.
    pub counts: Vec<Vec<u32>>,
}

/// Independent RNG stream for path `index` of a run seeded with `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn sample_path<R: Rng + ?Sized>(model: &LevyModel, level: u32, rng: &mut R) -> PathSample {
    let cells = cell_count(level);
    let dt = 1.0 / cells as f64;
    let scale = dt.sqrt();
    let poissons: Vec<Poisson<f64>> = model
        .atoms
        .iter()
        .map(|a| Poisson::new(a.lambda * dt).expect("rate is positive and finite"))
        .collect();
    let mut gauss = vec![0.0; cells];
    let mut counts = Vec::with_capacity(cells);
    for g in gauss.iter_mut() {
        if model.has_brownian() {
            let z: f64 = StandardNormal.sample(rng);
            *g = scale * z;
        }
        counts.push(poissons.iter().map(|p| p.sample(rng) as u32).collect());
    }
    PathSample {
        level,
        gauss,
        counts,
    }
}

impl PathSample {
    pub fn cells(&self) -> usize {
        self.gauss.len()
    }

    /// `M(cell × state)` for a state position of `model`.
    pub fn measure(&self, model: &LevyModel, cell: usize, state: usize) -> Result<f64> {
        if cell >= self.cells() {
            return Err(ChaosError::IndexOutOfRange(format!(
                "cell {cell} at level {}",
                self.level
            )));
        }
        let offset = usize::from(model.has_brownian());
        if state >= model.state_count() {
            return Err(ChaosError::UnknownAtom(state));
        }
        if state < offset {
            return Ok(model.sigma * self.gauss[cell]);
        }
        let j = state - offset;
        let atom = model.atoms[j];
        let dt = 1.0 / self.cells() as f64;
        Ok(atom.x * (f64::from(self.counts[cell][j]) - atom.lambda * dt))
    }

    /// All `M` values, laid out as `cell * state_count + state`.
    pub fn measure_table(&self, model: &LevyModel) -> Vec<f64> {
        let states = model.state_count();
        let mut table = Vec::with_capacity(self.cells() * states);
        for cell in 0..self.cells() {
            for s in 0..states {
                table.push(self.measure(model, cell, s).expect("indices in range"));
            }
        }
        table
    }

    /// The increment `X` over a run of cells.
    pub fn increment(&self, model: &LevyModel, cells: Range<usize>) -> Result<f64> {
        if cells.is_empty() {
            return Err(ChaosError::EmptyInterval {
                start: cells.start,
                end: cells.end,
            });
        }
        if cells.end > self.cells() {
            return Err(ChaosError::IndexOutOfRange(format!(
                "cells {cells:?} at level {}",
                self.level
            )));
        }
        let mut total = 0.0;
        for cell in cells {
            for s in 0..model.state_count() {
                total += self.measure(model, cell, s)?;
            }
        }
        Ok(total)
    }

    /// The path whose data in cell `k` is this path's data in cell `g(k)`.
    pub fn permute(&self, g: &DyadicMap) -> Result<PathSample> {
        let images = g.refine(self.level)?;
        Ok(PathSample {
            level: self.level,
            gauss: images.iter().map(|&k| self.gauss[k]).collect(),
            counts: images.iter().map(|&k| self.counts[k].clone()).collect(),
        })
    }

    /// CSV rows `cell,gauss,count_1,...,count_J` with a header line.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let jumps = self.counts.first().map_or(0, Vec::len);
        write!(out, "cell,gauss")?;
        for j in 1..=jumps {
            write!(out, ",count_{j}")?;
        }
        writeln!(out)?;
        for (cell, (g, row)) in self.gauss.iter().zip(&self.counts).enumerate() {
            write!(out, "{cell},{g:e}")?;
            for c in row {
                write!(out, ",{c}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}
