//! Fixtures shared by the benchmarks.

use survscore::{mix64, scenarios, simulate_dataset, time_transform, TransformedDataset};

/// Uncensored Bernoulli dataset with `β(t) = 3(1 − t)²`.
pub fn decaying(n: usize, seed: u64) -> TransformedDataset {
    let s = scenarios::decaying_effect(n, mix64(seed, 0));
    time_transform(&simulate_dataset(&s).expect("valid scenario")).expect("informative failures")
}

/// Bivariate correlated-normal dataset with a changepoint in the first effect.
pub fn bivariate(n: usize, seed: u64) -> TransformedDataset {
    let s = scenarios::bivariate_changepoint(n, mix64(seed, 0));
    time_transform(&simulate_dataset(&s).expect("valid scenario")).expect("informative failures")
}
