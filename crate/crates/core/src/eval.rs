//! Detection quality and cost metrics.
//!
//! Matching is greedy and one-to-one within a tile at a single IoU
//! threshold. AP is the all-point interpolated area under the
//! precision/recall curve of the pooled detections of every evaluated tile;
//! truths on skipped tiles count as misses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cascade::{baseline_gate, GateDecision, StagesUsed};
use crate::error::{Error, Result};
use crate::world::{BBox, Detection, Scene};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_BETAS: [f64; 3] = [1.0, 0.5, 0.25];

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.area() + b.area() - inter)
}

/// A detection reduced to what AP needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledDetection {
    pub confidence: f64,
    pub true_positive: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    /// In descending confidence order.
    pub labeled: Vec<LabeledDetection>,
    pub false_negatives: usize,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.labeled.iter().filter(|d| d.true_positive).count()
    }

    pub fn false_positives(&self) -> usize {
        self.labeled.len() - self.true_positives()
    }
}

/// Greedy one-to-one matching of one tile's detections against its truths.
///
/// Detections are visited by descending confidence (stable for ties); each
/// takes the unmatched truth with the highest IoU at or above the threshold,
/// lowest truth index on IoU ties.
pub fn match_detections(detections: &[Detection], truths: &[BBox], iou_threshold: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].confidence.total_cmp(&detections[a].confidence));
    let mut taken = vec![false; truths.len()];
    let labeled = order
        .into_iter()
        .map(|i| {
            let det = &detections[i];
            let mut best: Option<(usize, f64)> = None;
            for (t, truth) in truths.iter().enumerate() {
                if taken[t] {
                    continue;
                }
                let v = iou(&det.bbox, truth);
                if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((t, v));
                }
            }
            if let Some((t, _)) = best {
                taken[t] = true;
            }
            LabeledDetection {
                confidence: det.confidence,
                true_positive: best.is_some(),
            }
        })
        .collect();
    MatchResult {
        labeled,
        false_negatives: taken.iter().filter(|t| !**t).count(),
    }
}

/// All-point interpolated average precision.
///
/// Detections sharing a confidence enter the curve together, so the result
/// depends only on the confidence ranking. Zero truths give 0.
pub fn average_precision(labeled: &[LabeledDetection], total_truths: usize) -> f64 {
    if total_truths == 0 {
        return 0.0;
    }
    let mut sorted = labeled.to_vec();
    sorted.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

    // one (recall, precision) point per distinct confidence
    let mut points: Vec<(f64, f64)> = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let conf = sorted[i].confidence;
        while i < sorted.len() && sorted[i].confidence == conf {
            tp += usize::from(sorted[i].true_positive);
            seen += 1;
            i += 1;
        }
        points.push((tp as f64 / total_truths as f64, tp as f64 / seen as f64));
    }

    // precision envelope from the right, then area over recall steps
    let mut envelope = 0.0f64;
    for p in points.iter_mut().rev() {
        envelope = envelope.max(p.1);
        p.1 = envelope;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (recall, precision) in points {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Per-stage time constants for one scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub t_detect_per_tile: f64,
    pub t_classify_per_scene: f64,
    pub t_load_per_scene: f64,
    /// Correlation scoring is negligible next to detection; kept at 0.
    #[serde(default)]
    pub t_correlation: f64,
}

/// Classification of all sub-images of one scene.
pub const CLASSIFY_SECONDS_PER_SCENE: f64 = 6.0;

impl CostModel {
    pub fn new(t_detect_per_tile: f64, t_classify_per_scene: f64, t_load_per_scene: f64) -> Result<Self> {
        let m = Self {
            t_detect_per_tile,
            t_classify_per_scene,
            t_load_per_scene,
            t_correlation: 0.0,
        };
        m.validate()?;
        Ok(m)
    }

    /// Derives the per-tile detection cost from a measured baseline total
    /// over `scenes` scenes of `tiles_per_scene` tiles.
    pub fn calibrate(
        baseline_total: f64,
        scenes: usize,
        tiles_per_scene: usize,
        classify_per_scene: f64,
    ) -> Result<Self> {
        if scenes == 0 || tiles_per_scene == 0 {
            return Err(Error::invalid("scene and tile counts must be positive"));
        }
        if !(baseline_total.is_finite() && baseline_total > 0.0) {
            return Err(Error::invalid(format!(
                "baseline total {baseline_total} must be positive"
            )));
        }
        Self::new(
            baseline_total / (scenes * tiles_per_scene) as f64,
            classify_per_scene,
            0.0,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.t_detect_per_tile,
            self.t_classify_per_scene,
            self.t_load_per_scene,
            self.t_correlation,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!(
                "cost model values must be finite and >= 0: {self:?}"
            )));
        }
        if self.t_detect_per_tile <= 0.0 {
            return Err(Error::invalid("t_detect_per_tile must be positive"));
        }
        Ok(())
    }
}

/// Simulated wall time of one scene under `decisions`.
pub fn simulate_time(decisions: &[GateDecision], cost: &CostModel, stages: StagesUsed) -> f64 {
    let detected = decisions.iter().filter(|d| d.run_detection).count();
    let mut total = cost.t_load_per_scene + cost.t_detect_per_tile * detected as f64;
    if stages.classifier {
        total += cost.t_classify_per_scene;
    }
    if stages.correlation {
        total += cost.t_correlation;
    }
    total
}

pub fn relative_time(optimized_total: f64, baseline_total: f64) -> Result<f64> {
    if baseline_total.is_nan() || baseline_total <= 0.0 {
        return Err(Error::invalid(format!(
            "baseline time {baseline_total} must be positive"
        )));
    }
    Ok(optimized_total / baseline_total)
}

/// Trade-off between AP and time saving `1 - rt`; smaller `beta` weighs AP
/// more. No time saving scores 0.
pub fn f_beta_score(ap: f64, rt: f64, beta: f64) -> Result<f64> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::invalid(format!("beta {beta} must be positive")));
    }
    if rt >= 1.0 {
        return Ok(0.0);
    }
    let gain = 1.0 - rt;
    let b2 = beta * beta;
    let denom = b2 * ap + gain;
    if ap == 0.0 || denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 + b2) * ap * gain / denom)
}

/// Key used for a beta in reports: shortest decimal form ("1", "0.5").
pub fn beta_key(beta: f64) -> String {
    beta.to_string()
}

/// Column name of a beta in CSV outputs: "f1", "f05", "f025".
pub fn beta_column(beta: f64) -> String {
    format!("f{}", beta_key(beta).replace('.', ""))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub ap: f64,
    pub total_time_s: f64,
    pub rt: f64,
    pub f_beta: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Header plus one data row.
    pub fn to_csv(&self, betas: &[f64]) -> String {
        let mut header = vec![
            "precision".to_string(),
            "recall".into(),
            "ap".into(),
            "total_time_s".into(),
            "rt".into(),
        ];
        let mut row = vec![
            self.precision.to_string(),
            self.recall.to_string(),
            self.ap.to_string(),
            self.total_time_s.to_string(),
            self.rt.to_string(),
        ];
        for b in betas {
            header.push(beta_column(*b));
            row.push(
                self.f_beta
                    .get(&beta_key(*b))
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            );
        }
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

/// Matching over every tile of every scene; skipped tiles add their truths
/// as misses.
pub fn pooled_matches(
    scenes: &[Scene],
    decisions: &[Vec<GateDecision>],
    iou_threshold: f64,
) -> Result<(Vec<LabeledDetection>, usize, usize)> {
    if scenes.len() != decisions.len() {
        return Err(Error::Internal(format!(
            "{} scenes but {} decision lists",
            scenes.len(),
            decisions.len()
        )));
    }
    let mut labeled = Vec::new();
    let mut total_truths = 0;
    let mut missed = 0;
    for (scene, decs) in scenes.iter().zip(decisions) {
        if decs.len() != scene.tiles().len() {
            return Err(Error::Internal(format!(
                "{} decisions for a scene of {} tiles",
                decs.len(),
                scene.tiles().len()
            )));
        }
        for (tile, d) in scene.tiles().iter().zip(decs) {
            if d.coord != tile.coord {
                return Err(Error::Internal(format!(
                    "decision for {} paired with tile {}",
                    d.coord, tile.coord
                )));
            }
            total_truths += tile.ground_truth.len();
            if d.run_detection {
                let m = match_detections(&tile.detections, &tile.ground_truth, iou_threshold);
                missed += m.false_negatives;
                labeled.extend(m.labeled);
            } else {
                missed += tile.ground_truth.len();
            }
        }
    }
    Ok((labeled, total_truths, missed))
}

pub fn evaluate(
    scenes: &[Scene],
    decisions: &[Vec<GateDecision>],
    stages: StagesUsed,
    cost: &CostModel,
    iou_threshold: f64,
    betas: &[f64],
) -> Result<EvalReport> {
    cost.validate()?;
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::invalid(format!("IoU threshold {iou_threshold} outside (0, 1)")));
    }
    let (labeled, total_truths, _) = pooled_matches(scenes, decisions, iou_threshold)?;
    let tp = labeled.iter().filter(|d| d.true_positive).count();
    let precision = if labeled.is_empty() {
        0.0
    } else {
        tp as f64 / labeled.len() as f64
    };
    let recall = if total_truths == 0 {
        0.0
    } else {
        tp as f64 / total_truths as f64
    };
    let ap = average_precision(&labeled, total_truths);

    let total_time_s: f64 = decisions.iter().map(|d| simulate_time(d, cost, stages)).sum();
    let baseline_time: f64 = scenes
        .iter()
        .map(|s| simulate_time(&baseline_gate(s), cost, StagesUsed::default()))
        .sum();
    let rt = relative_time(total_time_s, baseline_time)?;
    let f_beta = betas
        .iter()
        .map(|b| Ok((beta_key(*b), f_beta_score(ap, rt, *b)?)))
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        precision,
        recall,
        ap,
        total_time_s,
        rt,
        f_beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn det(b: BBox, c: f64) -> Detection {
        Detection::new(b, c).unwrap()
    }

    fn lab(confidence: f64, true_positive: bool) -> LabeledDetection {
        LabeledDetection {
            confidence,
            true_positive,
        }
    }

    #[test]
    fn iou_examples() {
        let a = bx(0., 0., 10., 10.);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(20., 20., 5., 5.)), 0.0);
        assert_eq!(iou(&a, &bx(10., 0., 5., 5.)), 0.0);
        // overlap 50, union 150
        assert!((iou(&a, &bx(5., 0., 10., 10.)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn matching_examples() {
        let truth = bx(0., 0., 10., 10.);
        let m = match_detections(&[det(bx(0., 0., 10., 6.), 0.8)], &[truth], 0.5);
        assert!((iou(&bx(0., 0., 10., 6.), &truth) - 0.6).abs() < 1e-12);
        assert_eq!((m.true_positives(), m.false_positives(), m.false_negatives), (1, 0, 0));

        let m = match_detections(&[det(truth, 0.6), det(bx(0., 0., 10., 9.), 0.9)], &[truth], 0.5);
        assert_eq!(m.labeled, vec![lab(0.9, true), lab(0.6, false)]);
        assert_eq!(m.false_negatives, 0);

        let m = match_detections(&[], &[truth, bx(50., 50., 5., 5.)], 0.5);
        assert_eq!(m.false_negatives, 2);
    }

    #[test]
    fn matching_prefers_best_iou_then_lowest_index() {
        let t0 = bx(0., 0., 10., 10.);
        let t1 = bx(2., 0., 10., 10.);
        let m = match_detections(&[det(bx(2., 0., 10., 10.), 0.9), det(t0, 0.8)], &[t0, t1], 0.5);
        assert_eq!(m.true_positives(), 2);
        let same = match_detections(&[det(t0, 0.9)], &[t0, t0], 0.5);
        assert_eq!(same.false_negatives, 1);
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[lab(0.9, true), lab(0.5, true)], 2), 1.0);
        assert_eq!(average_precision(&[lab(0.9, false), lab(0.8, true)], 1), 0.5);
        assert_eq!(average_precision(&[], 3), 0.0);
        assert_eq!(average_precision(&[lab(0.9, false)], 0), 0.0);
        // interpolation: points (1/2, 1), (1/2, 1/2), (1, 2/3)
        let ap = average_precision(&[lab(0.9, true), lab(0.8, false), lab(0.7, true)], 2);
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn time_model_examples() {
        let cost = CostModel::calibrate(810.84, 5, 600, 6.0).unwrap();
        assert!((cost.t_detect_per_tile - 0.27028).abs() < 1e-12);
        let grid = crate::grid::TileGrid::new(20, 30, 800).unwrap();
        let scene = Scene::new(
            grid,
            grid.coords().map(|c| crate::world::TileRecord::new(c, 0.0).unwrap()),
        )
        .unwrap();
        let base = baseline_gate(&scene);
        assert!((simulate_time(&base, &cost, StagesUsed::default()) - 162.168).abs() < 1e-9);
        let none: Vec<_> =
            crate::cascade::classifier_gate_scene(&scene, &crate::cascade::ClassifierGateConfig::new(-1.0).unwrap())
                .into_iter()
                .map(|mut d| {
                    d.run_detection = false;
                    d
                })
                .collect();
        let stages = StagesUsed {
            classifier: true,
            correlation: false,
        };
        assert_eq!(simulate_time(&none, &cost, stages), cost.t_load_per_scene + 6.0);
        assert!((CostModel::calibrate(810.84, 5, 900, 6.0).unwrap().t_detect_per_tile - 0.180_186_666).abs() < 1e-8);
        assert_eq!(CostModel::calibrate(100.0, 1, 100, 0.0).unwrap().t_detect_per_tile, 1.0);
        assert!(CostModel::calibrate(100.0, 0, 100, 0.0).is_err());
    }

    #[test]
    fn relative_time_examples() {
        assert!((relative_time(283.93, 810.84).unwrap() - 0.3502).abs() < 1e-4);
        assert_eq!(relative_time(810.84, 810.84).unwrap(), 1.0);
        assert_eq!(relative_time(202.71, 810.84).unwrap(), 0.25);
        assert!(relative_time(1.0, 0.0).is_err());
    }

    #[test]
    fn f_beta_examples() {
        // 2 * 0.616 * 0.5 / 1.116; the printed table value is 0.553
        assert!((f_beta_score(0.616, 0.50, 1.0).unwrap() - 0.616 / 1.116).abs() < 1e-15);
        assert!((f_beta_score(0.616, 0.50, 1.0).unwrap() - 0.553).abs() < 0.005);
        assert!((f_beta_score(0.706, 0.44, 0.25).unwrap() - 0.695).abs() < 0.001);
        assert!((f_beta_score(0.710, 0.70, 1.0).unwrap() - 0.421).abs() < 0.002);
        assert_eq!(f_beta_score(0.7, 1.0, 0.5).unwrap(), 0.0);
        assert_eq!(f_beta_score(0.7, 1.3, 0.5).unwrap(), 0.0);
        assert_eq!(f_beta_score(0.0, 0.5, 1.0).unwrap(), 0.0);
        assert!(f_beta_score(0.5, 0.5, 0.0).is_err());
        assert_eq!(beta_column(0.25), "f025");
        assert_eq!(beta_column(1.0), "f1");
    }

    proptest! {
        #[test]
        fn f_beta_bounds_and_monotonicity(ap in 0.01..1.0f64, rt in 0.0..0.99f64, beta in 0.1..4.0f64, d in 0.001..0.01f64) {
            let f = f_beta_score(ap, rt, beta).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
            let h = 2.0 * ap * (1.0 - rt) / (ap + 1.0 - rt);
            prop_assert!((f_beta_score(ap, rt, 1.0).unwrap() - h).abs() < 1e-12);
            if ap + d < 1.0 {
                prop_assert!(f_beta_score(ap + d, rt, beta).unwrap() > f);
            }
            if rt + d < 1.0 {
                prop_assert!(f_beta_score(ap, rt + d, beta).unwrap() < f);
            }
        }

        #[test]
        fn ap_depends_only_on_ranking(
            dets in prop::collection::vec((0.0..1.0f64, any::<bool>()), 0..20), extra in 0usize..5,
        ) {
            let labeled: Vec<_> = dets.iter().map(|(c, tp)| lab(*c, *tp)).collect();
            let truths = labeled.iter().filter(|d| d.true_positive).count() + extra;
            let squashed: Vec<_> = labeled.iter().map(|d| lab(d.confidence.powi(3) * 0.5 + 0.1, d.true_positive)).collect();
            prop_assert_eq!(average_precision(&labeled, truths), average_precision(&squashed, truths));
        }
    }
}
