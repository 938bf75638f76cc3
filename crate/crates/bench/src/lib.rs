//! Fixtures shared by the benchmarks.

use fdperm::measure::{draw_z, MuSpec};
use fdperm::montecarlo::{simulate_group, GroupParams};
use fdperm::rng::stream;
use fdperm::{FunctionalSample, ZDraws};

/// `groups` equally sized AR(1) groups on a grid of `j` points.
pub fn sample(groups: usize, per_group: usize, j: usize, seed: u64) -> FunctionalSample {
    let params = GroupParams::constant(j, 1.0, 1.0, 0.5).expect("valid parameters");
    let mut rng = stream(seed, 0, 0);
    let data: Vec<_> = (0..groups)
        .map(|_| simulate_group(&params, per_group, &mut rng))
        .collect();
    FunctionalSample::from_groups(&data).expect("nonempty groups")
}

pub fn draws(sample: &FunctionalSample, k: usize, l: usize, seed: u64) -> ZDraws {
    let spec = MuSpec::new(k, 2.0, seed).expect("valid measure");
    draw_z(&spec, sample.grid(), l).expect("valid grid")
}
