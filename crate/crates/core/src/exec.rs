//! Data-parallel helpers with a sequential fallback.
//!
//! Results are always collected in index order and reduced sequentially, so
//! sequential and parallel execution produce bit-identical values.

/// Maps `f` over `0..n`, in parallel when `parallel` is set and the crate
/// was built with the `parallel` feature.
pub fn map_indexed<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel && n > 1 {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// Maps `f` over owned items, keeping their order.
pub fn map_vec<T, U, F>(items: Vec<T>, parallel: bool, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(usize, T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel && items.len() > 1 {
        use rayon::prelude::*;
        return items.into_par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = parallel;
    items.into_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Ordered sum of `f(i)` for `i` in `0..n`.
pub fn sum_indexed<F>(n: usize, parallel: bool, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_indexed(n, parallel, f).into_iter().sum()
}

/// Runs `f` inside a pool of `threads` workers when parallel execution is
/// available, otherwise calls it directly.
pub fn with_pool<T, F>(threads: usize, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    #[cfg(feature = "parallel")]
    if threads > 1 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            return pool.install(f);
        }
    }
    let _ = threads;
    f()
}

pub const fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}
