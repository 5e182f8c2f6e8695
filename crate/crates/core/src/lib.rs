//! Two-stage gating for tiled ship detection.
//!
//! A cheap first stage decides, per sub-image tile, whether the expensive
//! detector has to run at all:
//!
//! - [`cascade`] holds the gates: a thresholded per-tile classifier score, a
//!   neighbor-correlation predictor seeded by a sampling [`grid::Pattern`], and
//!   their combination.
//! - [`eval`] turns gate decisions into precision, recall, AP, simulated time,
//!   relative time and the F-beta trade-off between AP and time saving.
//! - [`sweep`] traces trade-off curves over thresholds against a
//!   random-deletion reference.
//! - [`synth`] generates seeded scenes with clustered ships so everything
//!   runs without real imagery; [`world`] loads and stores scenes as CSV.
//!
//! Classifier scores and detections are inputs; no model inference happens
//! here.

pub mod cascade;
pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod sweep;
pub mod synth;
pub mod world;

pub use cascade::{
    baseline_gate, classifier_gate, classifier_gate_scene, combined_gate, correlation_gate, correlation_score,
    ClassifierGateConfig, CorrelationGateConfig, Gate, GateDecision, KnownIndicators, PatternSpec, Stage, StagesUsed,
};
pub use error::{Error, Result};
pub use eval::{
    average_precision, evaluate, f_beta_score, iou, match_detections, relative_time, simulate_time, CostModel,
    EvalReport, LabeledDetection,
};
pub use grid::{neighbors_at_distance, DistanceMetric, Pattern, PatternKind, TileCoord, TileGrid};
pub use sweep::{random_baseline, sweep_classifier, sweep_combined, sweep_correlation, SweepContext, SweepPoint};
pub use synth::{generate_scene, perfect_oracle_scene, SynthConfig};
pub use world::{load_scene, BBox, Detection, IndicatorSource, Scene, TileRecord};
