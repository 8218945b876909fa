// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded inputs shared by the benchmarks.

use case_core::simlab::{gen_beta_changepoint, gen_changepoint_series, RwDesign, SignalPattern};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A change-point series of length `p` at `(vartheta, tau_p)` and its jumps.
pub fn changepoint_instance(p: usize, vartheta: f64, tau_p: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let design = RwDesign { p, vartheta, tau_p, a: 1.0, pattern: SignalPattern::IidTwoSided };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = gen_beta_changepoint(&design, &mut rng);
    let y = gen_changepoint_series(&beta, &mut rng);
    (y, beta)
}
