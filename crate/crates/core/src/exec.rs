//! Indexed data-parallel map with a sequential fallback.
//!
//! Results always come back in index order, so any reduction performed over
//! them afterwards is independent of the worker count. With the `parallel`
//! feature disabled every mode runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    /// Rayon's global pool.
    #[default]
    Auto,
    Sequential,
    /// A dedicated pool with this many workers.
    Threads(usize),
}

impl Execution {
    pub fn from_threads(threads: Option<usize>) -> Self {
        match threads {
            None => Execution::Auto,
            Some(0) | Some(1) => Execution::Sequential,
            Some(n) => Execution::Threads(n),
        }
    }
}

pub fn map_indexed<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Auto => par_map(n, &f),
        #[cfg(feature = "parallel")]
        Execution::Threads(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| par_map(n, &f)),
            Err(_) => (0..n).map(f).collect(),
        },
        #[cfg(not(feature = "parallel"))]
        _ => (0..n).map(f).collect(),
    }
}

#[cfg(feature = "parallel")]
fn par_map<R, F>(n: usize, f: &F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Runs `f` over indices and returns the first error in index order.
pub fn try_map_indexed<R, E, F>(exec: Execution, n: usize, f: F) -> Result<Vec<R>, E>
where
    R: Send,
    E: Send,
    F: Fn(usize) -> Result<R, E> + Sync + Send,
{
    map_indexed(exec, n, f).into_iter().collect()
}
