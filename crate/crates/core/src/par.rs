//! Data-parallel helpers with a sequential fallback.
//!
//! Every hot loop in the solver (edge fluxes, nodal densities, rates) is an
//! indexed map whose results are collected in index order, so the output is
//! identical whether the map runs on the rayon pool or on the calling thread.
//! Reductions over the collected values are always done sequentially in a
//! fixed order, which keeps assembled residuals bit-reproducible.
//!
//! The `parallel` cargo feature (on by default) pulls in rayon. Without it,
//! [`Execution::Parallel`] silently degrades to sequential execution.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How indexed maps are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// True if this mode actually uses worker threads in the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluate `f(0..n)` and collect the results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec == Execution::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Fallible variant of [`map_indexed`]; the first error in index order wins.
pub fn try_map_indexed<T, E, F>(exec: Execution, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(exec, n, f).into_iter().collect()
}

/// Run two closures, concurrently when the mode allows it.
pub fn join<A, B, RA, RB>(exec: Execution, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec == Execution::Parallel {
            return rayon::join(a, b);
        }
    }
    let _ = exec;
    (a(), b())
}
