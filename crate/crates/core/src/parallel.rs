//! Execution policy for the data-parallel loops (per-row encoding, grid
//! search). With the `parallel` feature disabled every policy runs on the
//! calling thread. Results never depend on the policy: each task is a pure
//! function of its index and outputs are collected in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `workers == 0` means one worker per available core.
    Parallel { workers: usize },
}

impl Default for Execution {
    fn default() -> Self {
        Execution::Parallel { workers: 0 }
    }
}

impl Execution {
    /// `1` maps to [`Execution::Sequential`], anything else to a pool of
    /// that many threads (0 = all cores).
    pub fn with_workers(workers: usize) -> Self {
        if workers == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { workers }
        }
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && matches!(self, Execution::Parallel { .. })
    }
}

/// `(0..n).map(f).collect()` under the given policy.
pub(crate) fn map_indexed<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel { workers } => in_pool(workers, || (0..n).into_par_iter().map(&f).collect()),
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel { .. } => (0..n).map(f).collect(),
    }
}

#[cfg(feature = "parallel")]
fn in_pool<R: Send>(workers: usize, op: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return op();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(op),
        // Pool creation only fails on resource exhaustion; the global pool
        // produces the same results.
        Err(_) => op(),
    }
}
