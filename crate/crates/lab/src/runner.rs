use perpetual_core::sde::PathRunner;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::LabError;

/// Default worker count when `--threads` is absent.
pub const THREADS_ENV: &str = "PERPETUAL_THREADS";

/// A dedicated rayon pool. Results come back in path order, and every path owns
/// its random stream, so the worker count never changes the numbers.
pub struct PoolRunner {
    pool: ThreadPool,
}

impl PoolRunner {
    pub fn new(threads: usize) -> Result<Self, LabError> {
        let pool = ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| LabError::Io(format!("thread pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Runs `f` inside the pool, for work that is not a path map.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        self.pool.install(f)
    }
}

impl PathRunner for PoolRunner {
    fn map_paths<T, F>(&self, count: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        self.pool.install(|| (0..count).into_par_iter().map(f).collect())
    }
}

/// `--threads`, else the environment variable, else the machine's parallelism.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize, LabError> {
    if let Some(n) = flag {
        return if n == 0 { Err(LabError::Usage("--threads must be at least 1".into())) } else { Ok(n) };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(LabError::Usage(format!("{THREADS_ENV}={v} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}
