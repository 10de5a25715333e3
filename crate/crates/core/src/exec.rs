//! Deterministic ensemble execution: per-index seeding and ordered reduction.
//!
//! An [`Executor`] maps path indices to results and returns them in index
//! order, so any reduction over the output is independent of how the work was
//! scheduled.

use alloc::vec::Vec;
use core::ops::Add;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub trait Executor {
    /// `[f(0), f(1), …, f(n − 1)]`, in index order.
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;

    fn workers(&self) -> usize;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..n).map(f).collect()
    }

    fn workers(&self) -> usize {
        1
    }
}

/// Generator for path `index` of an ensemble with master seed `master`:
/// ChaCha8 keyed by the master seed, one stream per path.
pub fn path_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Sum by recursive halving; the association order depends only on the length.
pub fn pairwise_sum<T: Copy + Add<Output = T> + Default>(values: &[T]) -> T {
    match values.len() {
        0 => T::default(),
        1 => values[0],
        n if n <= 8 => values[1..].iter().fold(values[0], |a, &b| a + b),
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Mean and standard error of the mean for real samples.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, libm::sqrt(var / n as f64))
}
