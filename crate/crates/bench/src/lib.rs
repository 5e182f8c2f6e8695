//! Fixtures shared by the criterion benches.

use cascade_gate::{generate_scene, CostModel, Scene, SynthConfig};

/// `n` default synthetic scenes with consecutive seeds.
pub fn scenes(n: u64) -> Vec<Scene> {
    (0..n)
        .map(|s| generate_scene(&SynthConfig::new(s)).expect("default config is valid"))
        .collect()
}

pub fn reference_cost() -> CostModel {
    CostModel::calibrate(810.84, 5, 900, 6.0).expect("valid calibration")
}
