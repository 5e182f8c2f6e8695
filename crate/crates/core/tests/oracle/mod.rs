//! Brute-force reference implementations used by the integration and
//! acceptance tests. Written with plain loops and no crate helpers so they
//! can disagree with the real code.
#![allow(dead_code)]

/// Area under the interpolated precision/recall curve, evaluated by cutting
/// at every distinct confidence.
pub fn pr_area(dets: &[(f64, bool)], total_truths: usize) -> f64 {
    if total_truths == 0 {
        return 0.0;
    }
    let mut cuts: Vec<f64> = dets.iter().map(|d| d.0).collect();
    cuts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    cuts.dedup();
    let mut points = Vec::new();
    for &t in &cuts {
        let kept: Vec<_> = dets.iter().filter(|d| d.0 >= t).collect();
        let tp = kept.iter().filter(|d| d.1).count();
        points.push((tp as f64 / total_truths as f64, tp as f64 / kept.len() as f64));
    }
    let mut recalls: Vec<f64> = points.iter().map(|p| p.0).collect();
    recalls.sort_by(|a, b| a.partial_cmp(b).unwrap());
    recalls.dedup();
    let mut area = 0.0;
    let mut prev = 0.0;
    for &r in &recalls {
        let best = points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
        area += (r - prev) * best;
        prev = r;
    }
    area
}

/// Pattern membership test on (row, col).
pub type PatternFn = fn(usize, usize) -> bool;

pub fn checkers(r: usize, c: usize) -> bool {
    (r + c).is_multiple_of(2)
}

pub fn alpha(r: usize, c: usize) -> bool {
    r.is_multiple_of(2) && c.is_multiple_of(2)
}

pub fn chebyshev(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

/// Correlation gate over a row-major ship map. Returns, per tile, whether
/// detection runs and the score (None for pattern tiles and tiles without
/// known neighbors). Sums are accumulated ring by ring in row-major order.
pub fn correlation_gate(
    rows: usize,
    cols: usize,
    ships: &[bool],
    pattern: impl Fn(usize, usize) -> bool,
    weights: &[f64],
    t_cor: f64,
    normalize: bool,
) -> Vec<(bool, Option<f64>)> {
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            if pattern(r, c) {
                out.push((true, None));
                continue;
            }
            let mut num = 0.0;
            let mut den = 0.0;
            let mut seen = 0;
            for (j, w) in weights.iter().enumerate() {
                for pr in 0..rows {
                    for pc in 0..cols {
                        if pattern(pr, pc) && chebyshev((r, c), (pr, pc)) == j + 1 {
                            seen += 1;
                            den += w;
                            if ships[pr * cols + pc] {
                                num += w;
                            }
                        }
                    }
                }
            }
            if seen == 0 {
                out.push((true, None));
            } else {
                let s = if normalize { num / den } else { num };
                out.push((s >= t_cor, Some(s)));
            }
        }
    }
    out
}

pub fn iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let w = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let h = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    inter / (a[2] * a[3] + b[2] * b[3] - inter)
}

/// One tile for the reference evaluator: detections as (box, confidence),
/// truths as boxes.
pub struct RefTile {
    pub run: bool,
    pub detections: Vec<([f64; 4], f64)>,
    pub truths: Vec<[f64; 4]>,
}

/// (precision, recall, ap) with greedy one-to-one matching per tile.
pub fn evaluate(tiles: &[RefTile], iou_threshold: f64) -> (f64, f64, f64) {
    let mut labeled = Vec::new();
    let mut total = 0;
    for t in tiles {
        total += t.truths.len();
        if !t.run {
            continue;
        }
        let mut order: Vec<usize> = (0..t.detections.len()).collect();
        // stable: equal confidences keep file order
        order.sort_by(|&a, &b| t.detections[b].1.partial_cmp(&t.detections[a].1).unwrap());
        let mut taken = vec![false; t.truths.len()];
        for i in order {
            let (bx, conf) = t.detections[i];
            let mut best: Option<(usize, f64)> = None;
            for (k, tb) in t.truths.iter().enumerate() {
                let v = iou(bx, *tb);
                if taken[k] || v < iou_threshold {
                    continue;
                }
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((k, v));
                }
            }
            if let Some((k, _)) = best {
                taken[k] = true;
            }
            labeled.push((conf, best.is_some()));
        }
    }
    let tp = labeled.iter().filter(|d| d.1).count();
    let precision = if labeled.is_empty() {
        0.0
    } else {
        tp as f64 / labeled.len() as f64
    };
    let recall = if total == 0 { 0.0 } else { tp as f64 / total as f64 };
    (precision, recall, pr_area(&labeled, total))
}
