//! Shared fixtures for the benchmarks.

use imbfc_core::baselines::{build_windows, FeatureWindow};
use imbfc_core::simgen::{generate, SynthSpec};
use imbfc_core::{Dataset, PriceMode};

/// Seeded synthetic dataset of `quarters` quarters on the default scheme.
pub fn dataset(quarters: usize) -> Dataset {
    generate(&SynthSpec {
        quarters,
        seed: 11,
        jitter: true,
        ..SynthSpec::default()
    })
    .expect("default spec is valid")
}

/// The first `n` training windows of `ds` for lead times `1..=horizon`.
pub fn windows(ds: &Dataset, horizon: usize, n: usize) -> Vec<FeatureWindow> {
    let mut w = build_windows(&ds.series, horizon, PriceMode::Positive).expect("long enough");
    w.truncate(n);
    w
}
