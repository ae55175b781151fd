//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work items are spread over a rayon
//! pool; without it, or with [`Execution::Sequential`], they run in order on
//! the calling thread. Output order always follows input order.

use std::env;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "PARKSIM_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `workers == 0` means "use the rayon default".
    Parallel { workers: usize },
}

impl Execution {
    /// Parallel with the worker count from `PARKSIM_WORKERS`, if set.
    pub fn from_env() -> Self {
        let workers = env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(0);
        Execution::with_workers(workers)
    }

    pub fn with_workers(workers: usize) -> Self {
        if workers == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { workers }
        }
    }

    pub fn map<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.into_iter().map(f).collect(),
            Execution::Parallel { workers } => par_map(workers, items, f),
        }
    }
}

impl Default for Execution {
    fn default() -> Self {
        Execution::from_env()
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(workers: usize, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if workers == 0 {
        return items.into_par_iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.into_par_iter().map(f).collect()),
        Err(_) => items.into_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R, F>(_workers: usize, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    items.into_iter().map(f).collect()
}
