//! Sequential / data-parallel execution of indexed maps.
//!
//! Assembly loops are embarrassingly parallel over faces and cells. Each
//! output element is produced by exactly one task with a fixed inner
//! summation order, so the parallel path is bitwise identical to the
//! sequential one.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How indexed loops are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for ExecMode {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        ExecMode::Parallel
    }
    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        ExecMode::Sequential
    }
}

/// Evaluates `f(0..n)` into a vector, sequentially or in parallel.
pub fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}
