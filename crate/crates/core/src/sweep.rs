//! Threshold sweeps, the random-deletion reference and trade-off curves.
//!
//! Each [`SweepPoint`] places one configuration on the (time saving,
//! relative AP) plane, where relative AP is measured against running the
//! detector on every tile of the same scenes.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{
    baseline_gate, keep_mask_gate, ClassifierGateConfig, CorrelationGateConfig, Gate, GateDecision, PatternSpec,
    StagesUsed,
};
use crate::error::{Error, Result};
use crate::eval::{beta_column, beta_key, evaluate, f_beta_score, CostModel, EvalReport, DEFAULT_BETAS};
use crate::world::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub config_id: String,
    pub thresholds: BTreeMap<String, f64>,
    /// AP divided by the all-tiles AP.
    pub relative_ap: f64,
    /// `1 - RT`.
    pub time_saving: f64,
    pub f_beta: BTreeMap<String, f64>,
}

/// Scenes, costs and the all-tiles reference shared by every point.
#[derive(Debug, Clone)]
pub struct SweepContext<'a> {
    scenes: &'a [Scene],
    cost: CostModel,
    iou_threshold: f64,
    betas: Vec<f64>,
    baseline: EvalReport,
}

impl<'a> SweepContext<'a> {
    pub fn new(scenes: &'a [Scene], cost: CostModel, iou_threshold: f64, betas: Vec<f64>) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::invalid("sweep needs at least one scene"));
        }
        let decisions: Vec<_> = scenes.iter().map(baseline_gate).collect();
        let baseline = evaluate(scenes, &decisions, StagesUsed::default(), &cost, iou_threshold, &betas)?;
        Ok(Self {
            scenes,
            cost,
            iou_threshold,
            betas,
            baseline,
        })
    }

    /// Context with IoU 0.5 and betas 1, 0.5, 0.25.
    pub fn with_defaults(scenes: &'a [Scene], cost: CostModel) -> Result<Self> {
        Self::new(scenes, cost, crate::eval::DEFAULT_IOU_THRESHOLD, DEFAULT_BETAS.to_vec())
    }

    pub fn baseline(&self) -> &EvalReport {
        &self.baseline
    }

    pub fn scenes(&self) -> &[Scene] {
        self.scenes
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    pub fn evaluate_decisions(&self, decisions: &[Vec<GateDecision>], stages: StagesUsed) -> Result<EvalReport> {
        evaluate(
            self.scenes,
            decisions,
            stages,
            &self.cost,
            self.iou_threshold,
            &self.betas,
        )
    }

    pub fn evaluate_gate(&self, gate: &Gate) -> Result<EvalReport> {
        let decisions = self.scenes.iter().map(|s| gate.apply(s)).collect::<Result<Vec<_>>>()?;
        self.evaluate_decisions(&decisions, gate.stages())
    }

    fn point(&self, config_id: String, thresholds: BTreeMap<String, f64>, report: &EvalReport) -> Result<SweepPoint> {
        let relative_ap = if self.baseline.ap > 0.0 {
            report.ap / self.baseline.ap
        } else {
            0.0
        };
        let f_beta = self
            .betas
            .iter()
            .map(|b| Ok((beta_key(*b), f_beta_score(report.ap, report.rt, *b)?)))
            .collect::<Result<_>>()?;
        Ok(SweepPoint {
            config_id,
            thresholds,
            relative_ap,
            time_saving: 1.0 - report.rt,
            f_beta,
        })
    }

    fn gate_point(&self, config_id: &str, thresholds: BTreeMap<String, f64>, gate: &Gate) -> Result<SweepPoint> {
        let report = self.evaluate_gate(gate)?;
        self.point(config_id.to_string(), thresholds, &report)
    }
}

fn thresholds(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn sort_by_time_saving(mut points: Vec<SweepPoint>) -> Vec<SweepPoint> {
    points.sort_by(|a, b| a.time_saving.total_cmp(&b.time_saving));
    points
}

fn weights_id(weights: &[f64]) -> String {
    weights.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(":")
}

pub fn correlation_id(prefix: &str, pattern: &PatternSpec, config: &CorrelationGateConfig) -> String {
    format!(
        "{prefix}-{}-k{}-w{}",
        pattern.kind(),
        config.k(),
        weights_id(&config.weights)
    )
}

/// One point per `t_clf`, sorted by time saving.
pub fn sweep_classifier(ctx: &SweepContext<'_>, t_clf_values: &[f64]) -> Result<Vec<SweepPoint>> {
    if t_clf_values.is_empty() {
        return Err(Error::invalid("empty t_clf list"));
    }
    let points = t_clf_values
        .par_iter()
        .map(|&t| {
            let gate = Gate::Classifier(ClassifierGateConfig::new(t)?);
            ctx.gate_point("clf", thresholds(&[("t_clf", t)]), &gate)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sort_by_time_saving(points))
}

/// One point per `t_cor`; the other correlation parameters come from `base`.
pub fn sweep_correlation(
    ctx: &SweepContext<'_>,
    pattern: &PatternSpec,
    base: &CorrelationGateConfig,
    t_cor_values: &[f64],
) -> Result<Vec<SweepPoint>> {
    if t_cor_values.is_empty() {
        return Err(Error::invalid("empty t_cor list"));
    }
    let id = correlation_id("cor", pattern, base);
    let points = t_cor_values
        .par_iter()
        .map(|&t| {
            let gate = Gate::Correlation {
                pattern: pattern.clone(),
                config: base.clone().with_t_cor(t)?,
            };
            ctx.gate_point(&id, thresholds(&[("t_cor", t)]), &gate)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sort_by_time_saving(points))
}

/// One point per `(t_cor, t_clf)` pair.
pub fn sweep_combined(
    ctx: &SweepContext<'_>,
    pattern: &PatternSpec,
    base: &CorrelationGateConfig,
    t_cor_values: &[f64],
    t_clf_values: &[f64],
) -> Result<Vec<SweepPoint>> {
    if t_cor_values.is_empty() || t_clf_values.is_empty() {
        return Err(Error::invalid("empty threshold list"));
    }
    let id = correlation_id("combined", pattern, base);
    let pairs: Vec<(f64, f64)> = t_cor_values
        .iter()
        .flat_map(|&c| t_clf_values.iter().map(move |&k| (c, k)))
        .collect();
    let points = pairs
        .par_iter()
        .map(|&(tc, tk)| {
            let gate = Gate::Combined {
                pattern: pattern.clone(),
                cor: base.clone().with_t_cor(tc)?,
                clf: ClassifierGateConfig::new(tk)?,
            };
            ctx.gate_point(&id, thresholds(&[("t_cor", tc), ("t_clf", tk)]), &gate)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sort_by_time_saving(points))
}

/// Per-scene keep masks: `floor(keep_fraction * tiles)` tiles drawn
/// uniformly without replacement, scenes in order, from one ChaCha8 stream.
pub fn random_keep_masks(scenes: &[Scene], keep_fraction: f64, seed: u64) -> Result<Vec<Vec<bool>>> {
    if !(0.0..=1.0).contains(&keep_fraction) {
        return Err(Error::invalid(format!("keep fraction {keep_fraction} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(scenes
        .iter()
        .map(|s| {
            let n = s.grid().len();
            let keep = (keep_fraction * n as f64).floor() as usize;
            let mut mask = vec![false; n];
            for i in rand::seq::index::sample(&mut rng, n, keep) {
                mask[i] = true;
            }
            mask
        })
        .collect())
}

/// Detector run on a random subset of tiles, no first-stage cost.
pub fn random_baseline(ctx: &SweepContext<'_>, keep_fraction: f64, seed: u64) -> Result<SweepPoint> {
    let masks = random_keep_masks(ctx.scenes, keep_fraction, seed)?;
    let decisions = ctx
        .scenes
        .iter()
        .zip(&masks)
        .map(|(s, m)| keep_mask_gate(s, m))
        .collect::<Result<Vec<_>>>()?;
    let report = ctx.evaluate_decisions(&decisions, StagesUsed::default())?;
    ctx.point(
        "random".into(),
        thresholds(&[("keep_fraction", keep_fraction)]),
        &report,
    )
}

const CURVE_BETAS: [f64; 3] = DEFAULT_BETAS;

fn curve_header() -> Vec<String> {
    let mut h: Vec<String> = ["config_id", "threshold_json", "time_saving", "relative_ap"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(CURVE_BETAS.iter().map(|b| beta_column(*b)));
    h
}

/// Curve CSV, rows ordered by `config_id` then `time_saving`.
pub fn curves_to_csv(points: &[SweepPoint]) -> Result<String> {
    if points.is_empty() {
        return Err(Error::invalid("no sweep points to emit"));
    }
    let mut sorted: Vec<&SweepPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.config_id
            .cmp(&b.config_id)
            .then(a.time_saving.total_cmp(&b.time_saving))
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    let e = |e: csv::Error| Error::Internal(format!("csv encoding failed: {e}"));
    w.write_record(curve_header()).map_err(e)?;
    for p in sorted {
        let mut row = vec![
            p.config_id.clone(),
            serde_json::to_string(&p.thresholds).map_err(|e| Error::Internal(e.to_string()))?,
            p.time_saving.to_string(),
            p.relative_ap.to_string(),
        ];
        row.extend(
            CURVE_BETAS
                .iter()
                .map(|b| p.f_beta.get(&beta_key(*b)).map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(row).map_err(e)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

pub fn emit_curves(points: &[SweepPoint], output: &Path) -> Result<()> {
    let text = curves_to_csv(points)?;
    crate::io::write_atomic(output, text.as_bytes())
}

pub fn parse_curves(text: &str, path: &Path) -> Result<Vec<SweepPoint>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.iter().ne(curve_header().iter().map(String::as_str)) {
        return Err(parse_err(1, "unexpected curve header".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| parse_err(line, format!("bad number `{s}`: {e}")))
        };
        let thresholds = serde_json::from_str(&rec[1]).map_err(|e| parse_err(line, e.to_string()))?;
        let mut f_beta = BTreeMap::new();
        for (i, b) in CURVE_BETAS.iter().enumerate() {
            let cell = &rec[4 + i];
            if !cell.is_empty() {
                f_beta.insert(beta_key(*b), num(cell)?);
            }
        }
        out.push(SweepPoint {
            config_id: rec[0].to_string(),
            thresholds,
            time_saving: num(&rec[2])?,
            relative_ap: num(&rec[3])?,
            f_beta,
        });
    }
    Ok(out)
}

pub fn load_curves(path: &Path) -> Result<Vec<SweepPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_curves(&text, path)
}
