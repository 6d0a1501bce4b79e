//! Built-in study parameterizations used by the `figures` command and the
//! acceptance suite.
//!
//! All presets use the lognormal lifetime with natural-scale mean 9.3 hours
//! and standard deviation 2.54 hours (measured for stimulated murine B
//! cells), over a four-day horizon.

use bhgen_core::distributions::{
    LifetimeDistribution, OffspringDistribution, PairOffspringDistribution,
};
use bhgen_core::engine::{InitialGroup, ProcessSpec};

pub const CELL_LIFETIME: LifetimeDistribution = LifetimeDistribution::LogNormal {
    mean: 9.3,
    sd: 2.54,
};

/// Single-type study: no offspring with probability 1/5, two with 4/5.
pub fn single_type_study(p_label_loss: f64) -> ProcessSpec {
    ProcessSpec::single_type(
        CELL_LIFETIME,
        OffspringDistribution::new(vec![0, 2], vec![0.2, 0.8]).expect("valid pmf"),
    )
    .with_label_loss(p_label_loss)
}

fn type1_splits_in_two() -> PairOffspringDistribution {
    // every type-1 division yields two children, each independently staying
    // type-1 with probability 5/6
    PairOffspringDistribution::from_total_and_type2_prob(
        &OffspringDistribution::constant(2),
        1.0 / 6.0,
    )
    .expect("valid expansion")
}

fn labeled_type1_cells(count: u64) -> Vec<InitialGroup> {
    vec![InitialGroup {
        cell_type: 1,
        count,
        labeled: true,
    }]
}

/// Two-type study with the faster second type (alpha1 < alpha2): type-2
/// cells always divide in two.
pub fn two_type_fast_second(p_label_loss: f64, initial_type1: u64) -> ProcessSpec {
    ProcessSpec::two_type(
        CELL_LIFETIME,
        CELL_LIFETIME,
        type1_splits_in_two(),
        OffspringDistribution::constant(2),
    )
    .with_label_loss(p_label_loss)
    .with_initial(labeled_type1_cells(initial_type1))
}

/// Two-type study with the slower second type (alpha2 < alpha1): type-2
/// cells die with probability 2/5 and divide in two otherwise.
pub fn two_type_slow_second(p_label_loss: f64, initial_type1: u64) -> ProcessSpec {
    ProcessSpec::two_type(
        CELL_LIFETIME,
        CELL_LIFETIME,
        type1_splits_in_two(),
        OffspringDistribution::new(vec![0, 2], vec![0.4, 0.6]).expect("valid pmf"),
    )
    .with_label_loss(p_label_loss)
    .with_initial(labeled_type1_cells(initial_type1))
}
