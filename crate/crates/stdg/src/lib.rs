//! Staggered semi-implicit space-time discontinuous Galerkin solver for the
//! two-dimensional incompressible Navier-Stokes equations on unstructured
//! triangular meshes.
//!
//! Pressure unknowns live on the primal triangular grid, velocity unknowns on
//! an edge-based quadrilateral dual grid; both are extended in time with a
//! nodal Lagrange basis so that a single time slab carries a full space-time
//! polynomial. Each step runs a Picard loop of momentum predictor, pressure
//! correction (a matrix-free four-point block system solved with GMRES) and an
//! explicit velocity update.

pub mod assembly;
pub mod basis;
pub mod cases;
pub mod config;
pub mod error;
pub mod linsolve;
pub mod operators;
pub mod ops_io;
pub mod timeloop;
pub mod mesh;
pub mod vtk;

pub use error::Error;

/// Iterate in parallel when the `parallel` feature is enabled, serially
/// otherwise (wasm builds). The closure maps an index to a value; results are
/// returned in index order either way, so runs are deterministic.
pub fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Apply `f(index, chunk)` over equal-sized mutable chunks of `data`,
/// in parallel when enabled. Chunks map one-to-one onto element blocks.
pub fn for_each_chunk_mut(
    data: &mut [f64],
    chunk: usize,
    f: impl Fn(usize, &mut [f64]) + Sync + Send,
) {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}
