//! Execution policy for data-parallel loops.
//!
//! Work items are always returned in index order, so any reduction done by
//! the caller is independent of worker count and scheduling.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exec {
    Sequential,
    /// `workers: None` uses the global rayon pool. Without the `parallel`
    /// feature this runs sequentially.
    Parallel { workers: Option<usize> },
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel { workers: None }
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub fn with_workers(workers: usize) -> Self {
        if workers <= 1 {
            Exec::Sequential
        } else {
            Exec::Parallel { workers: Some(workers) }
        }
    }

    /// Evaluates `f` on every index and returns the results in index order,
    /// stopping at the lowest-index error.
    pub fn try_map<T, F>(&self, range: Range<usize>, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        match *self {
            Exec::Sequential => range.map(f).collect(),
            Exec::Parallel { workers } => parallel_map(range, workers, f),
        }
    }

    pub fn map<T, F>(&self, range: Range<usize>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.try_map(range, |i| Ok(f(i))).expect("infallible")
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(range: Range<usize>, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    let run = || range.into_par_iter().map(&f).collect::<Vec<_>>();
    let out = match workers {
        None => run(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| crate::Error::param(format!("thread pool: {e}")))?
            .install(run),
    };
    out.into_iter().collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(range: Range<usize>, _workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    range.map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn order_is_preserved() {
        for exec in [Exec::Sequential, Exec::with_workers(4), Exec::default()] {
            let v = exec.map(0..100, |i| i * i);
            assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn errors_propagate() {
        let r: Result<Vec<usize>> = Exec::with_workers(3).try_map(0..10, |i| {
            if i == 7 {
                Err(Error::param("boom"))
            } else {
                Ok(i)
            }
        });
        assert!(r.is_err());
    }
}
