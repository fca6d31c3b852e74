//! Cycle-level model of a convolution accelerator that executes dense and
//! vector-sparse CNN layers with a broadcast-vector dataflow.
//!
//! The model covers the full path from tensors to performance numbers:
//!
//! - [`tensor`]: dense tensors and the reference convolution every other
//!   component is checked against.
//! - [`sparse`]: the vector-sparse encoding (nonzero vectors plus a
//!   coordinate index) for activations and weights, and vector pruning.
//! - [`mapping`]: layer-to-PE-array mapping and dense/sparse cycle
//!   schedule generation.
//! - [`sim`]: the PE-array executor — per-cycle vector multiply, diagonal
//!   partial-sum reduction, index-addressed accumulation, post-processing.
//! - [`metrics`]: speedups, ideal baselines, exploitation ratios, and the
//!   CSV report.
//!
//! Blocks of the PE array own disjoint output channels, so block
//! simulation is data-parallel. With the default `parallel` feature the
//! hot loops fan out over a rayon pool; without it everything runs on the
//! calling thread. `simulate_sequential` is always available for
//! comparison (see `benches/sim_bench.rs`).

pub mod error;
pub mod mapping;
pub mod metrics;
pub mod sim;
pub mod sparse;
pub mod tensor;

pub use error::{Error, Result};

#[cfg(feature = "parallel")]
pub(crate) fn try_map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn try_map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sequential version of [`try_map_indexed`], kept unconditionally so the
/// single-thread path can be exercised next to the parallel one.
pub(crate) fn try_map_indexed_seq<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).map(f).collect()
}
