//! Spectral and Monte Carlo machinery for martingale-transform Riesz operators
//! on three model geometries: the flat torus, the z-periodized Heisenberg group
//! and SU(2).
//!
//! The crate is `no_std` (with `alloc`). Parallel execution, file formats and
//! the command-line front end live in the `riesz-lab` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bundle;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod grid;
pub mod hermitian;
pub mod norms;
pub mod projection;
pub mod quad;
pub mod special;
pub mod spectral;
pub mod stochastic;
pub mod transforms;

pub use error::{Error, Result};
pub use num_complex::Complex64;

#[cfg(test)]
pub(crate) mod test_support {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub struct TestRng(ChaCha8Rng);

    impl TestRng {
        pub fn new(seed: u64) -> Self {
            TestRng(ChaCha8Rng::seed_from_u64(seed))
        }

        pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
            self.0.gen_range(lo..hi)
        }
    }
}
