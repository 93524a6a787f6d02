//! Chaos kernels of Lévy functionals on finite dyadic grids.
//!
//! The state space is a Brownian part plus finitely many jump atoms, time is
//! cut into `2^d` dyadic cells, and every chaos kernel is a finite tensor over
//! off-diagonal tuples of `(time cell, state)` pairs. On top of that sit the
//! dyadic permutation groups acting on paths and kernels, orbit projections,
//! locally-ergodic checks, an orthogonal-polynomial kernel transform and a
//! Picard solver for affine backward equations.

pub mod bsde;
pub mod dyadic_group;
pub mod ergodicity;
pub mod error;
pub mod kernel;
pub mod levy;
pub mod mc;
pub mod stats;
pub mod suite;
pub mod teugels;

pub use dyadic_group::{CellPartition, CellSet, CellTuple, DyadicMap, GroupSpec};
pub use error::{ChaosError, Result};
pub use kernel::{ChaosVector, GridKernel};
pub use levy::{Atom, LevyModel, PathSample};
