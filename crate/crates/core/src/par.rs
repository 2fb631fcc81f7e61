//! Execution mode for the crate's embarrassingly parallel loops.
//!
//! Results never depend on the mode: every parallel task derives its randomness from an
//! explicit seed and index, and outputs are collected in index order.

/// How to run a batch of independent tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Rayon's global pool (or the pool installed by [`with_jobs`]). Falls back to
    /// sequential when the `parallel` feature is off.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// `(0..n).map(f)` in index order.
pub fn map_range<T, F>(n: usize, exec: Exec, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// `items.iter().map(f)` in order.
pub fn map_slice<I, T, F>(items: &[I], exec: Exec, f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    map_range(items.len(), exec, |i| f(&items[i]))
}

/// Runs `op` with at most `jobs` worker threads. `jobs <= 1` forces sequential execution
/// of everything inside `op` that consults [`Exec`].
pub fn with_jobs<R: Send>(jobs: usize, op: impl FnOnce(Exec) -> R + Send) -> R {
    if jobs <= 1 {
        return op(Exec::Sequential);
    }
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(|| op(Exec::Parallel)),
            Err(_) => op(Exec::Parallel),
        }
    }
    #[cfg(not(feature = "parallel"))]
    op(Exec::Sequential)
}
