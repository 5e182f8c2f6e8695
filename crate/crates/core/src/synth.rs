//! Seeded synthetic scenes with spatially clustered ships.
//!
//! Two ChaCha8 streams are derived from the seed. Stream 0 ("layout") draws,
//! in order: the cluster centers (one uniform tile index each), the positive
//! tiles (weighted sampling without replacement, one uniform draw per pick),
//! then for every positive tile in row-major order the vessel count
//! `1 + Poisson(mean - 1)` and per vessel `w, h, x, y` (uniform). Stream 1
//! ("observation") draws, per tile in row-major order: the classifier noise,
//! then per truth box a detection coin, and if detected `dx, dy` (normal) and
//! a confidence, then the false-positive count and per false positive
//! `w, h, x, y, confidence`.
//!
//! A perfect scene shares stream 0 with the regular scene of the same seed,
//! so both have identical ground truth.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{TileCoord, TileGrid, DEFAULT_TILE_SIZE_PX};
use crate::world::{BBox, Detection, Scene, TileRecord};

pub const CONFIG_FILE: &str = "synth_config.json";

const LAYOUT_STREAM: u64 = 0;
const OBSERVATION_STREAM: u64 = 1;

/// Classifier score model: `mean + std_dev * N(0, 1)`, clamped to `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClfNoise {
    pub positive_mean: f64,
    pub negative_mean: f64,
    pub std_dev: f64,
}

impl Default for ClfNoise {
    fn default() -> Self {
        Self {
            positive_mean: -0.4,
            negative_mean: 0.4,
            std_dev: 0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    pub tile_size_px: u32,
    /// Share of tiles holding at least one vessel.
    pub positive_tile_fraction: f64,
    pub vessels_per_positive_tile_mean: f64,
    pub clusters: usize,
    /// Standard deviation of the cluster kernel, in tiles. 0 puts every
    /// positive tile on a cluster center.
    pub cluster_spread_tiles: f64,
    pub clf_noise: ClfNoise,
    pub detector_recall: f64,
    /// Mean false positives per tile.
    pub detector_fp_rate: f64,
    /// Inclusive range of box side lengths, pixels.
    pub box_size_px: [f64; 2],
    pub seed: u64,
}

impl SynthConfig {
    /// Test-set statistics of the reference dataset: 24.5% positive tiles,
    /// 3.23 vessels per positive tile, on a 30x30 grid.
    pub fn new(seed: u64) -> Self {
        Self {
            rows: 30,
            cols: 30,
            tile_size_px: DEFAULT_TILE_SIZE_PX,
            positive_tile_fraction: 0.245,
            vessels_per_positive_tile_mean: 3.23,
            clusters: 6,
            cluster_spread_tiles: 2.0,
            clf_noise: ClfNoise::default(),
            detector_recall: 0.9,
            detector_fp_rate: 0.1,
            box_size_px: [8.0, 48.0],
            seed,
        }
    }

    pub fn grid(&self) -> Result<TileGrid> {
        TileGrid::new(self.rows, self.cols, self.tile_size_px)
    }

    fn target_positives(&self) -> usize {
        (self.positive_tile_fraction * (self.rows * self.cols) as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} {v} outside [0, 1]")))
            }
        };
        unit("positive_tile_fraction", self.positive_tile_fraction)?;
        unit("detector_recall", self.detector_recall)?;
        if !(self.vessels_per_positive_tile_mean >= 1.0 && self.vessels_per_positive_tile_mean.is_finite()) {
            return Err(Error::invalid("vessels_per_positive_tile_mean must be >= 1"));
        }
        if !(self.cluster_spread_tiles >= 0.0 && self.cluster_spread_tiles.is_finite()) {
            return Err(Error::invalid("cluster_spread_tiles must be >= 0"));
        }
        if !(self.detector_fp_rate >= 0.0 && self.detector_fp_rate.is_finite()) {
            return Err(Error::invalid("detector_fp_rate must be >= 0"));
        }
        let n = self.clf_noise;
        if !(n.std_dev >= 0.0 && n.std_dev.is_finite() && n.positive_mean.is_finite() && n.negative_mean.is_finite()) {
            return Err(Error::invalid("clf_noise parameters must be finite with std_dev >= 0"));
        }
        let [lo, hi] = self.box_size_px;
        if !(lo > 0.0 && lo <= hi && hi <= f64::from(self.tile_size_px)) {
            return Err(Error::invalid(format!(
                "box_size_px [{lo}, {hi}] must satisfy 0 < lo <= hi <= tile size"
            )));
        }
        let target = self.target_positives();
        if target > 0 && self.clusters == 0 {
            return Err(Error::invalid("positive tiles requested but clusters = 0"));
        }
        if self.cluster_spread_tiles == 0.0 && target > self.clusters {
            return Err(Error::invalid(format!(
                "{target} positive tiles cannot fit on {} cluster centers with zero spread",
                self.clusters
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Row-major positive-tile mask and per-tile truth boxes.
fn layout(config: &SynthConfig, grid: &TileGrid) -> Result<Vec<Vec<BBox>>> {
    let mut rng = rng(config.seed, LAYOUT_STREAM);
    let n = grid.len();
    let target = config.target_positives();
    let centers: Vec<TileCoord> = (0..config.clusters)
        .map(|_| grid.coord_of(rng.random_range(0..n)).expect("index in range"))
        .collect();

    let sigma = config.cluster_spread_tiles;
    let mut weights: Vec<f64> = grid
        .coords()
        .map(|c| {
            centers
                .iter()
                .map(|z| {
                    let dr = c.row as f64 - z.row as f64;
                    let dc = c.col as f64 - z.col as f64;
                    if sigma == 0.0 {
                        f64::from(u8::from(dr == 0.0 && dc == 0.0))
                    } else {
                        (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp()
                    }
                })
                .sum()
        })
        .collect();
    if weights.iter().filter(|w| **w > 0.0).count() < target {
        return Err(Error::invalid(format!(
            "cluster layout reaches fewer than {target} tiles; increase clusters or spread"
        )));
    }

    let mut positive = vec![false; n];
    for _ in 0..target {
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, w) in weights.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            pick = Some(i);
            if u < *w {
                break;
            }
            u -= w;
        }
        let i = pick.expect("positive weight remains");
        positive[i] = true;
        weights[i] = 0.0;
    }

    let extra = config.vessels_per_positive_tile_mean - 1.0;
    let count_dist = (extra > 0.0).then(|| Poisson::new(extra).expect("positive rate"));
    let tile = f64::from(config.tile_size_px);
    let [lo, hi] = config.box_size_px;
    Ok(positive
        .into_iter()
        .map(|pos| {
            if !pos {
                return Vec::new();
            }
            let count = 1 + count_dist.as_ref().map_or(0, |d| d.sample(&mut rng) as usize);
            (0..count)
                .map(|_| {
                    let w = rng.random_range(lo..=hi);
                    let h = rng.random_range(lo..=hi);
                    let x = rng.random_range(0.0..=tile - w);
                    let y = rng.random_range(0.0..=tile - h);
                    BBox { x, y, w, h }
                })
                .collect()
        })
        .collect())
}

/// Generates a scene with noisy classifier scores and an imperfect detector.
pub fn generate_scene(config: &SynthConfig) -> Result<Scene> {
    config.validate()?;
    let grid = config.grid()?;
    let truths = layout(config, &grid)?;
    let mut rng = rng(config.seed, OBSERVATION_STREAM);
    let noise = config.clf_noise;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let fp_dist =
        (config.detector_fp_rate > 0.0).then(|| Poisson::new(config.detector_fp_rate).expect("positive rate"));
    let tile = f64::from(config.tile_size_px);
    let [lo, hi] = config.box_size_px;

    let records = grid.coords().zip(truths).map(|(coord, truth)| {
        let mean = if truth.is_empty() {
            noise.negative_mean
        } else {
            noise.positive_mean
        };
        let z: f64 = std_normal.sample(&mut rng);
        let clf_score = (mean + noise.std_dev * z).clamp(-1.0, 1.0);

        let mut detections = Vec::new();
        for b in &truth {
            let hit = rng.random::<f64>() < config.detector_recall;
            if !hit {
                continue;
            }
            let dx: f64 = std_normal.sample(&mut rng) * 0.1 * b.w;
            let dy: f64 = std_normal.sample(&mut rng) * 0.1 * b.h;
            let confidence = rng.random_range(0.5..=1.0);
            let bbox = BBox {
                x: (b.x + dx).clamp(0.0, tile - b.w),
                y: (b.y + dy).clamp(0.0, tile - b.h),
                ..*b
            };
            detections.push(Detection { bbox, confidence });
        }
        let fps = fp_dist.as_ref().map_or(0, |d| d.sample(&mut rng) as usize);
        for _ in 0..fps {
            let w = rng.random_range(lo..=hi);
            let h = rng.random_range(lo..=hi);
            let x = rng.random_range(0.0..=tile - w);
            let y = rng.random_range(0.0..=tile - h);
            let confidence = rng.random_range(0.05..=0.6);
            detections.push(Detection {
                bbox: BBox { x, y, w, h },
                confidence,
            });
        }
        TileRecord {
            coord,
            clf_score,
            detections,
            ground_truth: truth,
        }
    });
    Scene::new(grid, records)
}

/// Same ground truth as [`generate_scene`], with scores of exactly -1/+1 and
/// one exact detection at confidence 1 per truth box.
pub fn perfect_oracle_scene(config: &SynthConfig) -> Result<Scene> {
    config.validate()?;
    let grid = config.grid()?;
    let truths = layout(config, &grid)?;
    let records = grid.coords().zip(truths).map(|(coord, truth)| TileRecord {
        coord,
        clf_score: if truth.is_empty() { 1.0 } else { -1.0 },
        detections: truth
            .iter()
            .map(|b| Detection {
                bbox: *b,
                confidence: 1.0,
            })
            .collect(),
        ground_truth: truth,
    });
    Scene::new(grid, records)
}

/// Writes the scene CSVs plus the generating config as JSON.
pub fn write_scene(scene: &Scene, config: &SynthConfig, dir: &Path) -> Result<()> {
    scene.write_dir(dir)?;
    crate::io::write_atomic(&dir.join(CONFIG_FILE), config.to_json().as_bytes())
}
