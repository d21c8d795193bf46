//! Shared fixtures for the benchmarks.

use polyloc_core::{ChargeLaw, Environment};

/// The first `n` charges of a fixed binary environment.
pub fn binary_charges(n: usize) -> Vec<f64> {
    Environment::random(ChargeLaw::BinarySymmetric, 1, 0).generate(1, n).expect("valid range")
}
