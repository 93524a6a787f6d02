//! Dyadic permutation maps, the groups they generate, and their diagonal
//! action on tuples of `(time cell, state)` pairs.

mod group;
mod map;
mod partition;
mod tuple;
mod union_find;

pub use group::{restricted_group_generators, GroupSpec, OrbitPartition, DEFAULT_CLOSURE_CAP};
pub use map::DyadicMap;
pub use partition::{CellPartition, CellSet};
pub use tuple::{diagonal_apply, CellTuple, TupleSpace};
pub use union_find::DisjointSets;

pub(crate) use map::cell_count;
