//! First-stage gates deciding, per tile, whether the expensive detector runs.
//!
//! - The classifier gate thresholds a cached per-tile score; `score <= t_clf`
//!   means "ship", so the tile is passed on to the detector.
//! - The correlation gate runs the detector on a fixed [`Pattern`] first, then
//!   scores every other tile by the weighted ship indicators of pattern tiles
//!   in the rings `1..=K` around it, passing tiles with `s_cor >= t_cor`.
//! - The combined gate requires both.
//!
//! Decisions are always returned in row-major order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{neighbors_at_distance, DistanceMetric, Pattern, PatternKind, TileCoord, TileGrid};
use crate::world::{IndicatorSource, Scene, TileRecord, DEFAULT_CONF_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierGateConfig {
    t_clf: f64,
}

impl ClassifierGateConfig {
    pub fn new(t_clf: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&t_clf) {
            return Err(Error::invalid(format!("t_clf {t_clf} outside [-1, 1]")));
        }
        Ok(Self { t_clf })
    }

    pub fn t_clf(&self) -> f64 {
        self.t_clf
    }

    pub fn passes(&self, clf_score: f64) -> bool {
        clf_score <= self.t_clf
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationGateConfig {
    /// Ring weights `w_1..w_K`; `K` is the length.
    pub weights: Vec<f64>,
    pub t_cor: f64,
    /// Divide by the total weight of the available neighbors, giving a
    /// weighted average in `[0, 1]` instead of a raw weighted count.
    pub normalize: bool,
    pub metric: DistanceMetric,
    pub indicator: IndicatorSource,
    pub conf_floor: f64,
}

impl CorrelationGateConfig {
    /// Normalized, Chebyshev rings, detector indicators at the default floor.
    pub fn new(weights: Vec<f64>, t_cor: f64) -> Result<Self> {
        let cfg = Self {
            weights,
            t_cor,
            normalize: true,
            metric: DistanceMetric::Chebyshev,
            indicator: IndicatorSource::Detector,
            conf_floor: DEFAULT_CONF_FLOOR,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_indicator(mut self, source: IndicatorSource) -> Self {
        self.indicator = source;
        self
    }

    pub fn with_t_cor(mut self, t_cor: f64) -> Result<Self> {
        self.t_cor = t_cor;
        self.validate()?;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::invalid("correlation gate needs at least one ring weight"));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid(format!(
                "ring weights must be positive and finite, got {:?}",
                self.weights
            )));
        }
        if self.weights.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid(format!(
                "ring weights must be non-increasing with distance, got {:?}",
                self.weights
            )));
        }
        if !(self.t_cor.is_finite() && self.t_cor >= 0.0) {
            return Err(Error::invalid(format!("t_cor {} must be >= 0", self.t_cor)));
        }
        if !(0.0..=1.0).contains(&self.conf_floor) {
            return Err(Error::invalid(format!("conf_floor {} outside [0, 1]", self.conf_floor)));
        }
        Ok(())
    }
}

/// Which gate produced a tile's final outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PatternDetected,
    ClassifierPassed,
    ClassifierRejected,
    CorrelationPassed,
    CorrelationRejected,
    Baseline,
    /// Dropped by the random-deletion reference; kept tiles are `Baseline`.
    RandomDropped,
}

impl Stage {
    pub fn runs_detection(self) -> bool {
        matches!(
            self,
            Stage::PatternDetected | Stage::ClassifierPassed | Stage::CorrelationPassed | Stage::Baseline
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::PatternDetected => "pattern_detected",
            Stage::ClassifierPassed => "classifier_passed",
            Stage::ClassifierRejected => "classifier_rejected",
            Stage::CorrelationPassed => "correlation_passed",
            Stage::CorrelationRejected => "correlation_rejected",
            Stage::Baseline => "baseline",
            Stage::RandomDropped => "random_dropped",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        const ALL: [Stage; 7] = [
            Stage::PatternDetected,
            Stage::ClassifierPassed,
            Stage::ClassifierRejected,
            Stage::CorrelationPassed,
            Stage::CorrelationRejected,
            Stage::Baseline,
            Stage::RandomDropped,
        ];
        ALL.into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub coord: TileCoord,
    pub stage: Stage,
    pub run_detection: bool,
    pub s_clf: Option<f64>,
    pub s_cor: Option<f64>,
}

impl GateDecision {
    fn new(coord: TileCoord, stage: Stage) -> Self {
        Self {
            coord,
            stage,
            run_detection: stage.runs_detection(),
            s_clf: None,
            s_cor: None,
        }
    }
}

/// Which first-stage models a configuration pays for.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagesUsed {
    pub classifier: bool,
    pub correlation: bool,
}

/// Ship indicators of the tiles already visited by the detector; `None`
/// for tiles not (yet) known.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownIndicators {
    grid: TileGrid,
    values: Vec<Option<bool>>,
}

impl KnownIndicators {
    pub fn empty(grid: TileGrid) -> Self {
        Self {
            grid,
            values: vec![None; grid.len()],
        }
    }

    /// Indicators of all pattern tiles, read from the scene records.
    pub fn from_pattern(scene: &Scene, pattern: &Pattern, source: IndicatorSource, conf_floor: f64) -> Result<Self> {
        check_pattern(scene, pattern)?;
        let mut known = Self::empty(*scene.grid());
        for c in pattern.selected() {
            let rec = scene.tile(*c).expect("pattern checked against grid");
            known.set(*c, rec.ship_indicator(source, conf_floor))?;
        }
        Ok(known)
    }

    pub fn set(&mut self, coord: TileCoord, ship: bool) -> Result<()> {
        let idx = self.grid.check(coord)?;
        self.values[idx] = Some(ship);
        Ok(())
    }

    pub fn get(&self, coord: TileCoord) -> Option<bool> {
        self.grid.index_of(coord).and_then(|i| self.values[i])
    }

    pub fn grid(&self) -> &TileGrid {
        &self.grid
    }
}

fn check_pattern(scene: &Scene, pattern: &Pattern) -> Result<()> {
    let (g, p) = (scene.grid(), pattern.grid());
    if g.rows() != p.rows() || g.cols() != p.cols() {
        return Err(Error::invalid(format!(
            "pattern built for {}x{} grid, scene is {}x{}",
            p.rows(),
            p.cols(),
            g.rows(),
            g.cols()
        )));
    }
    Ok(())
}

pub fn classifier_gate(record: &TileRecord, config: &ClassifierGateConfig) -> GateDecision {
    let stage = if config.passes(record.clf_score) {
        Stage::ClassifierPassed
    } else {
        Stage::ClassifierRejected
    };
    GateDecision {
        s_clf: Some(record.clf_score),
        ..GateDecision::new(record.coord, stage)
    }
}

/// Classifier gate over every tile of a scene.
pub fn classifier_gate_scene(scene: &Scene, config: &ClassifierGateConfig) -> Vec<GateDecision> {
    scene.tiles().iter().map(|t| classifier_gate(t, config)).collect()
}

/// Weighted neighbor score of `tile` over the known tiles in rings `1..=K`.
///
/// Returns `Ok(None)` when no known tile lies within `K` rings.
pub fn correlation_score(
    known: &KnownIndicators,
    tile: TileCoord,
    config: &CorrelationGateConfig,
) -> Result<Option<f64>> {
    let grid = known.grid();
    grid.check(tile)?;
    if known.get(tile).is_some() {
        return Err(Error::invalid(format!("tile {tile} already has a known indicator")));
    }
    let mut score = 0.0;
    let mut weight_total = 0.0;
    let mut available = 0usize;
    for (j, w) in (1..).zip(&config.weights) {
        for n in neighbors_at_distance(grid, tile, j, config.metric)? {
            if let Some(ship) = known.get(n) {
                available += 1;
                weight_total += w;
                if ship {
                    score += w;
                }
            }
        }
    }
    if available == 0 {
        return Ok(None);
    }
    Ok(Some(if config.normalize { score / weight_total } else { score }))
}

pub fn correlation_gate(scene: &Scene, pattern: &Pattern, config: &CorrelationGateConfig) -> Result<Vec<GateDecision>> {
    config.validate()?;
    let known = KnownIndicators::from_pattern(scene, pattern, config.indicator, config.conf_floor)?;
    scene
        .tiles()
        .iter()
        .map(|t| {
            if pattern.contains(t.coord) {
                return Ok(GateDecision::new(t.coord, Stage::PatternDetected));
            }
            let s_cor = correlation_score(&known, t.coord, config)?;
            let stage = match s_cor {
                // no evidence: run the detector rather than risk a miss
                None => Stage::CorrelationPassed,
                Some(s) if s >= config.t_cor => Stage::CorrelationPassed,
                Some(_) => Stage::CorrelationRejected,
            };
            Ok(GateDecision {
                s_cor,
                ..GateDecision::new(t.coord, stage)
            })
        })
        .collect()
}

/// Detection runs only where both the correlation stage (pattern membership
/// or `s_cor >= t_cor`) and the classifier pass. The classifier screens
/// pattern tiles too; a vetoed pattern tile is never detected, so its
/// indicator is taken as "no ship".
pub fn combined_gate(
    scene: &Scene,
    pattern: &Pattern,
    cor_config: &CorrelationGateConfig,
    clf_config: &ClassifierGateConfig,
) -> Result<Vec<GateDecision>> {
    cor_config.validate()?;
    check_pattern(scene, pattern)?;
    let mut known = KnownIndicators::empty(*scene.grid());
    for c in pattern.selected() {
        let rec = scene.tile(*c).expect("pattern checked against grid");
        let ship = clf_config.passes(rec.clf_score) && rec.ship_indicator(cor_config.indicator, cor_config.conf_floor);
        known.set(*c, ship)?;
    }
    scene
        .tiles()
        .iter()
        .map(|t| {
            let clf_pass = clf_config.passes(t.clf_score);
            let (cor_pass, s_cor, admitted_by) = if pattern.contains(t.coord) {
                (true, None, Stage::PatternDetected)
            } else {
                let s = correlation_score(&known, t.coord, cor_config)?;
                let pass = s.is_none_or(|s| s >= cor_config.t_cor);
                (pass, s, Stage::CorrelationPassed)
            };
            let stage = match (cor_pass, clf_pass) {
                (false, _) => Stage::CorrelationRejected,
                (true, false) => Stage::ClassifierRejected,
                (true, true) => admitted_by,
            };
            Ok(GateDecision {
                s_clf: Some(t.clf_score),
                s_cor,
                ..GateDecision::new(t.coord, stage)
            })
        })
        .collect()
}

/// Runs the detector everywhere.
pub fn baseline_gate(scene: &Scene) -> Vec<GateDecision> {
    scene
        .tiles()
        .iter()
        .map(|t| GateDecision::new(t.coord, Stage::Baseline))
        .collect()
}

/// Keeps exactly the tiles flagged in `keep` (row-major), dropping the rest.
pub fn keep_mask_gate(scene: &Scene, keep: &[bool]) -> Result<Vec<GateDecision>> {
    if keep.len() != scene.grid().len() {
        return Err(Error::Internal(format!(
            "keep mask has {} entries for {} tiles",
            keep.len(),
            scene.grid().len()
        )));
    }
    Ok(scene
        .tiles()
        .iter()
        .zip(keep)
        .map(|(t, &k)| GateDecision::new(t.coord, if k { Stage::Baseline } else { Stage::RandomDropped }))
        .collect())
}

/// Pattern choice that can be instantiated for any scene grid.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternSpec {
    Checkers,
    Alpha,
    Custom(Pattern),
}

impl PatternSpec {
    pub fn kind(&self) -> PatternKind {
        match self {
            PatternSpec::Checkers => PatternKind::Checkers,
            PatternSpec::Alpha => PatternKind::Alpha,
            PatternSpec::Custom(_) => PatternKind::Custom,
        }
    }

    pub fn for_grid(&self, grid: &TileGrid) -> Pattern {
        match self {
            PatternSpec::Checkers => Pattern::generate(grid, PatternKind::Checkers),
            PatternSpec::Alpha => Pattern::generate(grid, PatternKind::Alpha),
            PatternSpec::Custom(p) => p.clone(),
        }
    }
}

/// A complete gate configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Baseline,
    Classifier(ClassifierGateConfig),
    Correlation {
        pattern: PatternSpec,
        config: CorrelationGateConfig,
    },
    Combined {
        pattern: PatternSpec,
        cor: CorrelationGateConfig,
        clf: ClassifierGateConfig,
    },
}

impl Gate {
    pub fn apply(&self, scene: &Scene) -> Result<Vec<GateDecision>> {
        match self {
            Gate::Baseline => Ok(baseline_gate(scene)),
            Gate::Classifier(cfg) => Ok(classifier_gate_scene(scene, cfg)),
            Gate::Correlation { pattern, config } => correlation_gate(scene, &pattern.for_grid(scene.grid()), config),
            Gate::Combined { pattern, cor, clf } => combined_gate(scene, &pattern.for_grid(scene.grid()), cor, clf),
        }
    }

    pub fn stages(&self) -> StagesUsed {
        match self {
            Gate::Baseline => StagesUsed::default(),
            Gate::Classifier(_) => StagesUsed {
                classifier: true,
                correlation: false,
            },
            Gate::Correlation { .. } => StagesUsed {
                classifier: false,
                correlation: true,
            },
            Gate::Combined { .. } => StagesUsed {
                classifier: true,
                correlation: true,
            },
        }
    }
}

const DECISION_HEADER: [&str; 6] = ["r", "c", "stage", "run_detection", "s_clf", "s_cor"];

fn opt_to_string(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Decision log as CSV: `r,c,stage,run_detection,s_clf,s_cor`, absent scores
/// left empty.
pub fn decisions_to_csv(decisions: &[GateDecision]) -> String {
    let mut out = DECISION_HEADER.join(",");
    out.push('\n');
    for d in decisions {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            d.coord.row,
            d.coord.col,
            d.stage,
            d.run_detection,
            opt_to_string(d.s_clf),
            opt_to_string(d.s_cor)
        ));
    }
    out
}

pub fn parse_decisions(text: &str) -> Result<Vec<GateDecision>> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim_end_matches('\r')).unwrap_or("");
    if header != DECISION_HEADER.join(",") {
        return Err(Error::invalid(format!("bad decision log header `{header}`")));
    }
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|e| Error::invalid(format!("bad score `{s}`: {e}")))
        }
    };
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::invalid(format!("line {}: malformed decision `{line}`", i + 1));
        if f.len() != 6 {
            return Err(bad());
        }
        let stage: Stage = f[2].parse()?;
        let run_detection: bool = f[3].parse().map_err(|_| bad())?;
        if run_detection != stage.runs_detection() {
            return Err(bad());
        }
        out.push(GateDecision {
            coord: TileCoord::new(f[0].parse().map_err(|_| bad())?, f[1].parse().map_err(|_| bad())?),
            stage,
            run_detection,
            s_clf: opt(f[4])?,
            s_cor: opt(f[5])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{BBox, Detection};
    use proptest::prelude::*;

    fn scene_from(rows: usize, cols: usize, ships: &[TileCoord], scores: impl Fn(TileCoord) -> f64) -> Scene {
        let grid = TileGrid::new(rows, cols, 800).unwrap();
        let records: Vec<_> = grid
            .coords()
            .map(|c| {
                let mut rec = TileRecord::new(c, scores(c)).unwrap();
                if ships.contains(&c) {
                    let b = BBox::new(10., 10., 20., 20.).unwrap();
                    rec.ground_truth.push(b);
                    rec.detections.push(Detection::new(b, 0.9).unwrap());
                }
                rec
            })
            .collect();
        Scene::new(grid, records).unwrap()
    }

    fn run_set(d: &[GateDecision]) -> Vec<bool> {
        d.iter().map(|d| d.run_detection).collect()
    }

    #[test]
    fn classifier_gate_examples() {
        let gate = |s, t| {
            classifier_gate(
                &TileRecord::new(TileCoord::new(0, 0), s).unwrap(),
                &ClassifierGateConfig::new(t).unwrap(),
            )
        };
        assert!(gate(-0.5, 0.0).run_detection);
        assert!(gate(0.0, 0.0).run_detection);
        let d = gate(0.3, 0.2);
        assert!(!d.run_detection);
        assert_eq!(d.stage, Stage::ClassifierRejected);
        assert_eq!(d.s_clf, Some(0.3));
        assert!(ClassifierGateConfig::new(1.5).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(CorrelationGateConfig::new(vec![], 0.5).is_err());
        assert!(CorrelationGateConfig::new(vec![1.0, 0.0], 0.5).is_err());
        assert!(CorrelationGateConfig::new(vec![0.5, 1.0], 0.5).is_err());
        assert!(CorrelationGateConfig::new(vec![1.0, 0.1], -0.1).is_err());
        assert!(CorrelationGateConfig::new(vec![1.0, 1.0, 0.1], 0.0).is_ok());
    }

    #[test]
    fn correlation_score_examples() {
        let grid = TileGrid::new(3, 3, 800).unwrap();
        let cfg = CorrelationGateConfig::new(vec![1.0], 0.5).unwrap();
        let mut known = KnownIndicators::empty(grid);
        let center = TileCoord::new(1, 1);
        assert_eq!(correlation_score(&known, center, &cfg).unwrap(), None);
        known.set(TileCoord::new(0, 0), true).unwrap();
        known.set(TileCoord::new(0, 2), true).unwrap();
        known.set(TileCoord::new(2, 0), false).unwrap();
        known.set(TileCoord::new(2, 2), false).unwrap();
        // two of four known neighbors carry a ship
        assert_eq!(correlation_score(&known, center, &cfg).unwrap(), Some(0.5));
        let raw = CorrelationGateConfig {
            normalize: false,
            ..cfg.clone()
        };
        assert_eq!(correlation_score(&known, center, &raw).unwrap(), Some(2.0));
        assert!(correlation_score(&known, TileCoord::new(0, 0), &cfg).is_err());

        let mut all = KnownIndicators::empty(grid);
        all.set(TileCoord::new(0, 1), true).unwrap();
        all.set(TileCoord::new(2, 2), true).unwrap();
        let cfg2 = CorrelationGateConfig::new(vec![1.0, 0.3], 0.5).unwrap();
        assert_eq!(correlation_score(&all, TileCoord::new(0, 0), &cfg2).unwrap(), Some(1.0));
    }

    #[test]
    fn correlation_gate_all_ships_runs_everywhere() {
        let grid = TileGrid::new(6, 6, 800).unwrap();
        let alpha = Pattern::generate(&grid, PatternKind::Alpha);
        let ships: Vec<_> = alpha.selected().iter().copied().collect();
        let scene = scene_from(6, 6, &ships, |_| 0.0);
        let cfg = CorrelationGateConfig::new(vec![1.0, 0.1], 0.4375).unwrap();
        let d = correlation_gate(&scene, &alpha, &cfg).unwrap();
        assert!(d.iter().all(|d| d.run_detection));
        assert!(d
            .iter()
            .filter(|d| d.stage == Stage::CorrelationPassed)
            .all(|d| d.s_cor == Some(1.0)));
    }

    #[test]
    fn correlation_gate_empty_scene_runs_pattern_only() {
        let scene = scene_from(6, 6, &[], |_| 0.0);
        let checkers = Pattern::generate(scene.grid(), PatternKind::Checkers);
        let cfg = CorrelationGateConfig::new(vec![1.0], 0.1).unwrap();
        let d = correlation_gate(&scene, &checkers, &cfg).unwrap();
        for d in &d {
            assert_eq!(d.run_detection, checkers.contains(d.coord));
        }
    }

    #[test]
    fn correlation_gate_fails_open_without_neighbors() {
        let scene = scene_from(1, 5, &[], |_| 0.0);
        let pattern = Pattern::custom(scene.grid(), [TileCoord::new(0, 0)]).unwrap();
        let cfg = CorrelationGateConfig::new(vec![1.0], 0.5).unwrap();
        let d = correlation_gate(&scene, &pattern, &cfg).unwrap();
        assert!(!d[1].run_detection);
        assert_eq!(d[1].s_cor, Some(0.0));
        assert!(d[2].run_detection);
        assert_eq!(d[2].s_cor, None);
        assert_eq!(d[2].stage, Stage::CorrelationPassed);
    }

    #[test]
    fn pattern_grid_mismatch_is_rejected() {
        let scene = scene_from(4, 4, &[], |_| 0.0);
        let other = Pattern::generate(&TileGrid::new(5, 4, 800).unwrap(), PatternKind::Alpha);
        let cfg = CorrelationGateConfig::new(vec![1.0], 0.5).unwrap();
        assert!(correlation_gate(&scene, &other, &cfg).is_err());
    }

    #[test]
    fn combined_gate_requires_both() {
        let ships = [TileCoord::new(0, 0), TileCoord::new(0, 2)];
        // (0,1): correlated with the ships, classifier says no ship.
        // (2,1): no correlated neighbors, classifier says ship.
        let scene = scene_from(3, 3, &ships, |c| if c == TileCoord::new(0, 1) { 0.9 } else { -0.9 });
        let pattern = Pattern::generate(scene.grid(), PatternKind::Checkers);
        let cor = CorrelationGateConfig::new(vec![1.0], 0.5).unwrap();
        let clf = ClassifierGateConfig::new(0.0).unwrap();
        let d = combined_gate(&scene, &pattern, &cor, &clf).unwrap();
        let at = |r: usize, c: usize| d[r * 3 + c];
        assert_eq!(at(0, 1).stage, Stage::ClassifierRejected);
        assert!(!at(0, 1).run_detection);
        assert_eq!(at(2, 1).stage, Stage::CorrelationRejected);
        assert!(!at(2, 1).run_detection);
        assert_eq!(at(1, 1).stage, Stage::PatternDetected);
    }

    #[test]
    fn combined_with_permissive_classifier_matches_correlation() {
        let ships = [TileCoord::new(1, 1), TileCoord::new(2, 2), TileCoord::new(3, 0)];
        let scene = scene_from(5, 5, &ships, |c| (c.row as f64 - 2.0) / 2.0);
        let pattern = Pattern::generate(scene.grid(), PatternKind::Checkers);
        let cor = CorrelationGateConfig::new(vec![1.0, 0.5], 0.25).unwrap();
        let clf = ClassifierGateConfig::new(1.0).unwrap();
        let alone = correlation_gate(&scene, &pattern, &cor).unwrap();
        let both = combined_gate(&scene, &pattern, &cor, &clf).unwrap();
        for (a, b) in alone.iter().zip(&both) {
            assert_eq!(
                (a.coord, a.stage, a.run_detection, a.s_cor),
                (b.coord, b.stage, b.run_detection, b.s_cor)
            );
        }
    }

    #[test]
    fn baseline_runs_everything() {
        let scene = scene_from(30, 30, &[], |_| 1.0);
        let d = baseline_gate(&scene);
        assert_eq!(d.len(), 900);
        assert!(d.iter().all(|d| d.run_detection && d.stage == Stage::Baseline));
        let all_pass = classifier_gate_scene(&scene, &ClassifierGateConfig::new(1.0).unwrap());
        assert_eq!(run_set(&all_pass), run_set(&d));
    }

    #[test]
    fn decision_log_round_trip() {
        let scene = scene_from(4, 4, &[TileCoord::new(0, 0)], |c| c.col as f64 / 4.0 - 0.4);
        let pattern = Pattern::generate(scene.grid(), PatternKind::Alpha);
        let cor = CorrelationGateConfig::new(vec![1.0, 0.1], 0.3).unwrap();
        let d = combined_gate(&scene, &pattern, &cor, &ClassifierGateConfig::new(0.0).unwrap()).unwrap();
        let text = decisions_to_csv(&d);
        assert!(text.starts_with("r,c,stage,run_detection,s_clf,s_cor\n"));
        assert_eq!(parse_decisions(&text).unwrap(), d);
    }

    fn arb_case() -> impl Strategy<Value = (Scene, Vec<f64>, f64)> {
        (2usize..7, 2usize..7).prop_flat_map(|(rows, cols)| {
            (
                prop::collection::vec((any::<bool>(), -1.0..=1.0f64), rows * cols),
                prop::collection::vec(0.05..1.0f64, 1..4),
                0.0..1.2f64,
            )
                .prop_map(move |(tiles, mut weights, t)| {
                    weights.sort_by(|a, b| b.total_cmp(a));
                    let grid = TileGrid::new(rows, cols, 800).unwrap();
                    let ships: Vec<_> = grid.coords().zip(&tiles).filter(|(_, t)| t.0).map(|(c, _)| c).collect();
                    let scene = scene_from(rows, cols, &ships, |c| tiles[c.row * cols + c.col].1);
                    (scene, weights, t)
                })
        })
    }

    proptest! {
        #[test]
        fn normalized_score_in_unit_interval_and_monotone((scene, weights, _t) in arb_case()) {
            let pattern = Pattern::generate(scene.grid(), PatternKind::Alpha);
            let cfg = CorrelationGateConfig::new(weights, 0.0).unwrap().with_indicator(IndicatorSource::Truth);
            let known = KnownIndicators::from_pattern(&scene, &pattern, cfg.indicator, cfg.conf_floor).unwrap();
            let raw_cfg = CorrelationGateConfig { normalize: false, ..cfg.clone() };
            for c in scene.grid().coords().filter(|c| !pattern.contains(*c)) {
                let s = correlation_score(&known, c, &cfg).unwrap();
                if let Some(s) = s {
                    prop_assert!((0.0..=1.0).contains(&s));
                }
                // flip each known 0 to 1 and check nothing decreases
                for p in pattern.selected() {
                    if known.get(*p) == Some(false) {
                        let mut flipped = known.clone();
                        flipped.set(*p, true).unwrap();
                        for cf in [&cfg, &raw_cfg] {
                            let before = correlation_score(&known, c, cf).unwrap();
                            let after = correlation_score(&flipped, c, cf).unwrap();
                            prop_assert!(after >= before);
                        }
                    }
                }
            }
        }

        #[test]
        fn run_sets_nested_across_thresholds((scene, weights, t) in arb_case(), dt in 0.0..0.5f64, tc in -1.0..=1.0f64) {
            let pattern = Pattern::generate(scene.grid(), PatternKind::Checkers);
            let loose = CorrelationGateConfig::new(weights, t).unwrap();
            let strict = loose.clone().with_t_cor(t + dt).unwrap();
            let a = run_set(&correlation_gate(&scene, &pattern, &loose).unwrap());
            let b = run_set(&correlation_gate(&scene, &pattern, &strict).unwrap());
            prop_assert!(a.iter().zip(&b).all(|(a, b)| *a || !*b));

            let lo = ClassifierGateConfig::new((tc - dt).max(-1.0)).unwrap();
            let hi = ClassifierGateConfig::new(tc).unwrap();
            let a = run_set(&classifier_gate_scene(&scene, &hi));
            let b = run_set(&classifier_gate_scene(&scene, &lo));
            prop_assert!(a.iter().zip(&b).all(|(a, b)| *a || !*b));
        }

        #[test]
        fn combined_is_subset_of_each_gate((scene, weights, t) in arb_case(), tc in -1.0..=1.0f64) {
            let pattern = Pattern::generate(scene.grid(), PatternKind::Alpha);
            let cor = CorrelationGateConfig::new(weights, t).unwrap();
            let clf = ClassifierGateConfig::new(tc).unwrap();
            let both = run_set(&combined_gate(&scene, &pattern, &cor, &clf).unwrap());
            let c = run_set(&correlation_gate(&scene, &pattern, &cor).unwrap());
            let k = run_set(&classifier_gate_scene(&scene, &clf));
            for i in 0..both.len() {
                prop_assert!(!both[i] || (c[i] && k[i]));
            }
            prop_assert_eq!(combined_gate(&scene, &pattern, &cor, &clf).unwrap(), combined_gate(&scene, &pattern, &cor, &clf).unwrap());
        }
    }
}
