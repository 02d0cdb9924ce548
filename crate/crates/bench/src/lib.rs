//! Shared fixtures for the polycap benchmarks.

use polycap::{measures::random_atoms, measures::Support, Measure, TreeSpec, Weight};

/// A uniform tree with a random boundary measure of `k` atoms.
pub fn fixture(d: usize, n: u32, k: usize) -> (TreeSpec, Weight, Measure) {
    let tree = TreeSpec::uniform(d, n).expect("fixture tree fits the budget");
    let weight = Weight::polynomial(vec![0.5; d]).expect("valid exponents");
    let mu = random_atoms(&tree, k, 7, Support::Boundary).expect("valid atoms");
    (tree, weight, mu)
}
