//! Data-parallel helpers with a sequential fallback.
//!
//! All heavy loops in this crate (grid scans, bootstrap draws, lattice
//! enumeration, GA fitness evaluation) funnel through [`map_indexed`], which
//! uses rayon when the `parallel` feature is enabled and plain iteration
//! otherwise. Results are collected by index, so the output is identical
//! either way. [`map_indexed_seq`] is always available; benchmarks use it to
//! compare the two paths in one build.

/// Applies `f` to `0..n` sequentially.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    (0..n).map(f).collect()
}

/// Applies `f` to `0..n` on the rayon pool.
#[cfg(feature = "parallel")]
pub fn map_indexed_par<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Feature-selected default: parallel when built with `parallel`, else
/// sequential.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    #[cfg(feature = "parallel")]
    {
        map_indexed_par(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Maximum of `f(i)` over `0..n`, reduced exactly (max is order-independent).
/// Returns `f64::NEG_INFINITY` for `n = 0`.
pub fn max_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_indexed(n, f).into_iter().fold(f64::NEG_INFINITY, f64::max)
}
