//! Picard operators for affine backward equations on the truncated chaos.
//!
//! Grid times are `t = 0..=2^d` (time `t 2^{-d}`); time cell `s` is the interval
//! `(s 2^{-d}, (s+1) 2^{-d}]`. The generator in cell `s` is evaluated at the left
//! endpoint, so it only depends on path data from cells before `s`.
//! Everything is exact at grid resolution, so invariance holds exactly rather
//! than up to a modification on null sets.

use serde::{Deserialize, Serialize};

use crate::dyadic_group::{cell_count, CellPartition, CellTuple};
use crate::error::{ChaosError, Result};
use crate::kernel::{cuboid_deviation, ChaosVector, GridKernel};
use crate::levy::{LevyModel, PathSample};
use crate::mc::evaluate_chaos;

/// Largest number of driver functions `h_k` a generator may use.
pub const MAX_DRIVERS: usize = 2;

/// `f(s, y, z) = a(s) y + Σ_k b_k(s) z_k + c(s)` with `z_k = ∫ Z_{s,x} h_k(x) dμ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineGenerator {
    pub a: Vec<f64>,
    #[serde(default)]
    pub b: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    /// `h_k` over state positions.
    #[serde(default)]
    pub drivers: Vec<Vec<f64>>,
}

impl AffineGenerator {
    pub fn zero(level: u32) -> Self {
        let cells = cell_count(level);
        AffineGenerator {
            a: vec![0.0; cells],
            b: Vec::new(),
            c: vec![0.0; cells],
            drivers: Vec::new(),
        }
    }

    pub fn linear(level: u32, a: f64) -> Self {
        AffineGenerator {
            a: vec![a; cell_count(level)],
            ..Self::zero(level)
        }
    }

    pub fn validate(&self, level: u32, model: &LevyModel) -> Result<()> {
        let cells = cell_count(level);
        let bad = |what: &str| Err(ChaosError::InvalidArgument(format!("generator: {what}")));
        if self.a.len() != cells || self.c.len() != cells {
            return bad("a and c need one value per time cell");
        }
        if self.b.len() != self.drivers.len() {
            return bad("b and drivers must have the same length");
        }
        if self.drivers.len() > MAX_DRIVERS {
            return bad("at most two drivers");
        }
        if self.b.iter().any(|b| b.len() != cells) {
            return bad("each b_k needs one value per time cell");
        }
        if self.drivers.iter().any(|h| h.len() != model.state_count()) {
            return bad("each driver needs one value per state");
        }
        let finite = |v: &Vec<f64>| v.iter().all(|x| x.is_finite());
        if !finite(&self.a) || !finite(&self.c) || !self.b.iter().all(finite) || !self.drivers.iter().all(finite) {
            return bad("non-finite coefficient");
        }
        Ok(())
    }

    /// Largest spread of `a`, `b_k`, `c` inside a block of the partition.
    pub fn block_deviation(&self, partition: &CellPartition, level: u32) -> Result<f64> {
        let labels = partition.labels(level)?;
        let mut worst: f64 = 0.0;
        for array in std::iter::once(&self.a).chain(&self.b).chain(std::iter::once(&self.c)) {
            for l in 0..partition.len() {
                let values = labels
                    .iter()
                    .zip(array)
                    .filter(|(label, _)| **label == Some(l))
                    .map(|(_, &v)| v);
                let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
                if lo <= hi {
                    worst = worst.max(hi - lo);
                }
            }
        }
        Ok(worst)
    }
}

/// Chaos expansion of `Z_{s,x}` for every time cell `s` and state position `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZField {
    pub level: u32,
    pub atom_count: usize,
    /// Indexed by `cell * atom_count + state`.
    pub values: Vec<ChaosVector>,
}

impl ZField {
    pub fn zero(level: u32, atom_count: usize) -> Self {
        ZField {
            level,
            atom_count,
            values: vec![ChaosVector::constant_only(0.0, level, atom_count); cell_count(level) * atom_count],
        }
    }

    pub fn get(&self, cell: usize, state: usize) -> &ChaosVector {
        &self.values[cell * self.atom_count + state]
    }

    /// `Σ_{s,x} Z_{s,x}(ω) M(s,x)(ω)`.
    pub fn stochastic_integral(&self, path: &PathSample, model: &LevyModel) -> Result<f64> {
        let table = path.measure_table(model);
        let mut total = 0.0;
        for (i, z) in self.values.iter().enumerate() {
            if table[i] != 0.0 {
                total += evaluate_chaos(path, z, model)? * table[i];
            }
        }
        Ok(total)
    }

    /// Every kernel of `Z_{s,x}` only uses cells before `s`.
    pub fn is_predictable(&self) -> bool {
        self.values.iter().enumerate().all(|(i, z)| {
            let s = i / self.atom_count;
            z.kernels()
                .iter()
                .all(|k| k.entries().all(|(x, _)| x.cells().all(|c| (c as usize) < s)))
        })
    }

    pub fn max_abs_diff(&self, other: &ZField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn norm_sq(&self, model: &LevyModel) -> Result<f64> {
        let measures = model.cell_measures(self.level);
        let mut total = 0.0;
        for (z, w) in self.values.iter().zip(&measures) {
            total += z.norm_sq(model)? * w;
        }
        Ok(total)
    }
}

/// `Z_{s,x} = Σ_n n f̃_n(·, (s,x))` restricted to cells before `s`.
pub fn martingale_repr(f: &ChaosVector) -> Result<ZField> {
    let (level, states) = (f.level(), f.atom_count());
    let degree = f.max_degree();
    let cells = cell_count(level);
    let mut kernels: Vec<Vec<GridKernel>> = (0..cells * states)
        .map(|_| {
            (1..degree)
                .map(|m| GridKernel::zero(m, level, states))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let mut constants = vec![0.0; cells * states];
    for kernel in f.kernels() {
        let n = kernel.n();
        let sym = kernel.symmetrize();
        for (x, v) in sym.entries() {
            let entries = x.entries();
            let (last_cell, last_state) = entries[n - 1];
            if x.max_cell() != Some(last_cell) {
                continue;
            }
            let slot = last_cell as usize * states + last_state as usize;
            let value = n as f64 * v;
            if n == 1 {
                constants[slot] += value;
            } else {
                let rest = CellTuple::new(&entries[..n - 1])?;
                kernels[slot][n - 2].set(rest, value)?;
            }
        }
    }
    let values = constants
        .into_iter()
        .zip(kernels)
        .map(|(c, k)| ChaosVector::new(c, level, states, k))
        .collect::<Result<_>>()?;
    Ok(ZField {
        level,
        atom_count: states,
        values,
    })
}

/// `Y` at every grid time `0..=2^d`, and `Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardState {
    pub y: Vec<ChaosVector>,
    pub z: ZField,
}

impl PicardState {
    pub fn zero(level: u32, atom_count: usize) -> Self {
        PicardState {
            y: vec![ChaosVector::constant_only(0.0, level, atom_count); cell_count(level) + 1],
            z: ZField::zero(level, atom_count),
        }
    }

    pub fn max_abs_diff(&self, other: &PicardState) -> f64 {
        let y = self
            .y
            .iter()
            .zip(&other.y)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max);
        y.max(self.z.max_abs_diff(&other.z))
    }

    /// `Σ_t 2^{-d} E|Y_t − Y'_t|² + ‖Z − Z'‖²` over the grid.
    pub fn distance(&self, other: &PicardState, model: &LevyModel) -> Result<f64> {
        let dt = 1.0 / cell_count(self.z.level) as f64;
        let mut total = 0.0;
        for (a, b) in self.y.iter().zip(&other.y).skip(1) {
            total += a.add_scaled(b, -1.0)?.norm_sq(model)? * dt;
        }
        let mut dz = self.z.clone();
        for (a, b) in dz.values.iter_mut().zip(&other.z.values) {
            *a = a.add_scaled(b, -1.0)?;
        }
        total += dz.norm_sq(model)?;
        Ok(total.sqrt())
    }
}

fn check_inputs(
    terminal: &ChaosVector,
    generator: &AffineGenerator,
    state: &PicardState,
    model: &LevyModel,
) -> Result<()> {
    terminal.check_model(model)?;
    let level = terminal.level();
    generator.validate(level, model)?;
    if state.y.len() != cell_count(level) + 1 || state.z.level != level {
        return Err(ChaosError::LevelMismatch {
            expected: level,
            found: state.z.level,
        });
    }
    Ok(())
}

/// One application of the Picard operators `(Y, Z) ↦ (Ȳ, Z̄)`.
pub fn picard_step(
    terminal: &ChaosVector,
    generator: &AffineGenerator,
    state: &PicardState,
    model: &LevyModel,
) -> Result<PicardState> {
    check_inputs(terminal, generator, state, model)?;
    let level = terminal.level();
    let states = model.state_count();
    let cells = cell_count(level);
    let dt = 1.0 / cells as f64;
    let weights: Vec<f64> = model.states().iter().map(|s| s.weight).collect();

    // generator integrand per cell, evaluated on the left endpoint
    let mut integrands = Vec::with_capacity(cells);
    for s in 0..cells {
        let mut g = state.y[s].scale(generator.a[s]);
        g = g.add_scaled(&ChaosVector::constant_only(1.0, level, states), generator.c[s])?;
        for (b, h) in generator.b.iter().zip(&generator.drivers) {
            if b[s] == 0.0 {
                continue;
            }
            for x in 0..states {
                let coef = b[s] * h[x] * weights[x];
                if coef != 0.0 {
                    g = g.add_scaled(state.z.get(s, x), coef)?;
                }
            }
        }
        integrands.push(g);
    }

    let mut y = vec![ChaosVector::constant_only(0.0, level, states); cells + 1];
    let mut tail = terminal.clone();
    y[cells] = tail.clone();
    for t in (0..cells).rev() {
        tail = tail.add_scaled(&integrands[t], dt)?;
        y[t] = tail.restrict_time(t);
    }
    // `tail` now holds the full integrand F + Σ_s f_s Δ
    let z = martingale_repr(&tail)?;
    Ok(PicardState { y, z })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardRun {
    pub state: PicardState,
    /// Distance between successive iterates.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// Iterates from `(0, 0)` until the distance drops to `tol` or `iterations` steps are done.
pub fn picard_solve(
    terminal: &ChaosVector,
    generator: &AffineGenerator,
    iterations: usize,
    tol: f64,
    model: &LevyModel,
) -> Result<PicardRun> {
    let mut state = PicardState::zero(terminal.level(), terminal.atom_count());
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..iterations {
        let next = picard_step(terminal, generator, &state, model)?;
        let d = next.distance(&state, model)?;
        history.push(d);
        state = next;
        if d <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("Picard iteration stopped after {iterations} steps without reaching {tol}");
    }
    Ok(PicardRun {
        state,
        history,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateReport {
    pub iteration: usize,
    pub y_deviation: f64,
    pub z_deviation: f64,
    pub z_predictable: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationReport {
    pub terminal_deviation: f64,
    pub generator_deviation: f64,
    pub iterates: Vec<IterateReport>,
    pub passed: bool,
}

/// Runs the Picard scheme and checks, for every iterate, that `Y_t` is cuboid-constant on
/// the partition cut to cells before `t` and `Z_{s,·}` on the partition cut before `s`.
pub fn invariance_propagation_check(
    terminal: &ChaosVector,
    generator: &AffineGenerator,
    partition: &CellPartition,
    iterations: usize,
    model: &LevyModel,
    tol: f64,
) -> Result<PropagationReport> {
    let level = terminal.level();
    let cells = cell_count(level);
    let chaos_deviation = |v: &ChaosVector, p: &CellPartition| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for k in v.kernels() {
            worst = worst.max(cuboid_deviation(k, p)?);
        }
        Ok(worst)
    };
    let full = partition.restrict_before(cells, level)?;
    let terminal_deviation = chaos_deviation(terminal, &full)?;
    let generator_deviation = generator.block_deviation(partition, level)?;
    let cut: Vec<CellPartition> = (0..=cells)
        .map(|t| partition.restrict_before(t, level))
        .collect::<Result<_>>()?;

    let mut state = PicardState::zero(level, terminal.atom_count());
    let mut reports = Vec::with_capacity(iterations);
    for iteration in 1..=iterations {
        state = picard_step(terminal, generator, &state, model)?;
        let mut y_deviation: f64 = 0.0;
        for (t, y) in state.y.iter().enumerate() {
            y_deviation = y_deviation.max(chaos_deviation(y, &cut[t])?);
        }
        let mut z_deviation: f64 = 0.0;
        for (i, z) in state.z.values.iter().enumerate() {
            z_deviation = z_deviation.max(chaos_deviation(z, &cut[i / model.state_count()])?);
        }
        let z_predictable = state.z.is_predictable();
        reports.push(IterateReport {
            iteration,
            y_deviation,
            z_deviation,
            z_predictable,
            passed: y_deviation <= tol && z_deviation <= tol && z_predictable,
        });
    }
    let passed = reports.iter().all(|r| r.passed);
    Ok(PropagationReport {
        terminal_deviation,
        generator_deviation,
        iterates: reports,
        passed,
    })
}

/// `Σ_l β_l [X]_{E_l}` at time 1: `μ(ℝ)|E_l|` plus `I_1(x 1_{E_l}(s))` on the jump states.
pub fn quadratic_variation_terminal(
    partition: &CellPartition,
    betas: &[f64],
    level: u32,
    model: &LevyModel,
) -> Result<ChaosVector> {
    if betas.len() != partition.len() {
        return Err(ChaosError::InvalidArgument("one weight per block".into()));
    }
    let labels = partition.labels(level)?;
    let states = model.states();
    let total_mass: f64 = states.iter().map(|s| s.weight).sum();
    let constant: f64 = partition
        .blocks()
        .iter()
        .zip(betas)
        .map(|(b, beta)| beta * b.measure() * total_mass)
        .sum();
    let f1 = GridKernel::from_fn(1, level, states.len(), |x| {
        let (cell, state) = x.entries()[0];
        match labels[cell as usize] {
            Some(l) if states[state as usize].id != 0 => betas[l] * states[state as usize].x,
            _ => 0.0,
        }
    })?;
    ChaosVector::new(constant, level, states.len(), vec![f1])
}

/// `e^{a(1−t)}` at every grid time, the continuum multiplier of the linear equation `f = a y`.
pub fn linear_multiplier(a: f64, level: u32) -> Vec<f64> {
    let cells = cell_count(level);
    (0..=cells)
        .map(|t| (a * (1.0 - t as f64 / cells as f64)).exp())
        .collect()
}
