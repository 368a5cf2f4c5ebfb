//! Thread-pool executor.

use anderson_core::Executor;
use rayon::prelude::*;

use crate::error::{LabError, Result};

pub const WORKERS_ENV: &str = "LAB_WORKERS";

/// Runs sample indices on a rayon pool. Results come back in index order, so
/// any fold over them is independent of the worker count.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(LabError::spec("workers", "need at least one worker"));
        }
        Ok(Pool { pool: rayon::ThreadPoolBuilder::new().num_threads(workers).build()? })
    }

    /// `LAB_WORKERS` if set, else the number of available cores.
    pub fn from_env() -> Result<Self> {
        Self::new(default_workers()?)
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

pub fn default_workers() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(s) => {
            s.trim().parse().map_err(|_| LabError::spec(WORKERS_ENV, format!("expected a positive integer, got `{s}`")))
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

impl Executor for Pool {
    fn map_indexed<T, F>(&self, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let p = Pool::new(3).unwrap();
        let v = p.map_indexed(1000, |i| i * i);
        assert!(v.iter().enumerate().all(|(i, &x)| x == (i * i) as u64));
    }

    #[test]
    fn zero_workers_rejected() {
        assert!(matches!(Pool::new(0), Err(LabError::Spec { .. })));
    }
}
