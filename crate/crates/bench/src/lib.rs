//! Shared fixtures for the benchmarks.

use cgmix::simulation::{generate, Scenario, ScenarioConfig};
use cgmix::Dataset;

/// A scenario (b) sample of size `n` with a fixed seed.
pub fn contaminated_sample(n: usize) -> Dataset {
    generate(&ScenarioConfig::new(Scenario::B, n, 20240601).expect("valid size"))
        .expect("generation succeeds")
        .0
}
