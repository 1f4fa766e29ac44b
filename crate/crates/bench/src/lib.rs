//! Fixtures shared by the benchmarks.

use rental_core::{Distribution, HorizonPriors, RewardFn};

pub fn uniform01() -> Distribution {
    Distribution::uniform(0.0, 1.0).expect("valid support")
}

/// A lumpy grid prior on [0, 4] whose virtual value needs ironing.
pub fn bimodal() -> Distribution {
    Distribution::grid(&[[0.0, 0.0], [1.0, 0.45], [3.0, 0.55], [4.0, 1.0]]).expect("valid cdf")
}

pub fn consumer_surplus_priors(n: usize) -> (HorizonPriors, RewardFn) {
    (
        HorizonPriors::iid(uniform01(), n),
        RewardFn::consumer_surplus(),
    )
}

/// Evenly spaced valuations strictly inside `[lo, hi]`.
pub fn probes(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / k as f64)
        .collect()
}
