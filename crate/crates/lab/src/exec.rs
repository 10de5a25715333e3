//! Thread-pool executor with ordered results.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;

use riesz_lab_core::exec::Executor;

/// Environment variable consulted when `--workers` is absent.
pub const WORKERS_ENV: &str = "RIESZ_LAB_WORKERS";

/// Indices handed to a worker at a time. Path lengths vary a lot, so small
/// blocks keep the workers balanced.
const BLOCK: usize = 32;

#[derive(Debug, Clone, Copy)]
pub struct Threaded {
    workers: usize,
}

impl Threaded {
    pub fn new(workers: usize) -> Self {
        Self { workers: workers.max(1) }
    }
}

impl Executor for Threaded {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        if self.workers == 1 || n <= BLOCK {
            return (0..n).map(f).collect();
        }
        let next = AtomicUsize::new(0);
        let mut blocks: Vec<(usize, Vec<T>)> = thread::scope(|s| {
            let handles: Vec<_> = (0..self.workers)
                .map(|_| {
                    s.spawn(|| {
                        let mut mine = Vec::new();
                        loop {
                            let lo = next.fetch_add(BLOCK, Ordering::Relaxed);
                            if lo >= n {
                                break;
                            }
                            let hi = (lo + BLOCK).min(n);
                            mine.push((lo, (lo..hi).map(&f).collect::<Vec<T>>()));
                        }
                        mine
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
        });
        blocks.sort_unstable_by_key(|b| b.0);
        blocks.into_iter().flat_map(|b| b.1).collect()
    }

    fn workers(&self) -> usize {
        self.workers
    }
}

/// Worker count from the flag, then [`WORKERS_ENV`], then the machine.
pub fn resolve_workers(flag: Option<usize>) -> Result<usize, String> {
    if let Some(w) = flag {
        return if w == 0 { Err("--workers must be at least 1".into()) } else { Ok(w) };
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(w) if w >= 1 => Ok(w),
            _ => Err(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")),
        },
        Err(_) => Ok(thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}
