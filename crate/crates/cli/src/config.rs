//! Flag and config-file handling.
//!
//! Every option can come from a JSON config file (`--config` or
//! `$CASCADE_GATE_CONFIG`) or a flag; flags win. Relative paths in the file
//! are taken relative to the working directory.

use std::path::{Path, PathBuf};

use cascade_gate::cascade::PatternSpec;
use cascade_gate::{
    ClassifierGateConfig, CorrelationGateConfig, CostModel, DistanceMetric, Error, Gate, IndicatorSource, Pattern,
    PatternKind, Result, TileGrid,
};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "CASCADE_GATE_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Baseline,
    Clf,
    Cor,
    Combined,
}

/// Everything a config file may set. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub tile_size: Option<u32>,
    pub scenes: Option<Vec<PathBuf>>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,

    pub gate: Option<GateKind>,
    pub gates: Option<Vec<GateKind>>,
    pub pattern: Option<PatternKind>,
    pub pattern_file: Option<PathBuf>,
    pub k: Option<usize>,
    pub weights: Option<Vec<f64>>,
    pub t_cor: Option<f64>,
    pub t_clf: Option<f64>,
    pub raw: Option<bool>,
    pub metric: Option<DistanceMetric>,
    pub indicator: Option<IndicatorSource>,
    pub conf_floor: Option<f64>,

    pub cost: Option<PathBuf>,
    pub t_detect: Option<f64>,
    pub t_classify: Option<f64>,
    pub t_load: Option<f64>,
    pub iou: Option<f64>,
    pub betas: Option<Vec<f64>>,

    pub t_clf_values: Option<Vec<f64>>,
    pub t_cor_values: Option<Vec<f64>>,
    pub random_keep: Option<Vec<f64>>,
    pub no_random: Option<bool>,
    pub seed: Option<u64>,

    pub positive_fraction: Option<f64>,
    pub vessels_mean: Option<f64>,
    pub clusters: Option<usize>,
    pub spread: Option<f64>,
    pub clf_positive_mean: Option<f64>,
    pub clf_negative_mean: Option<f64>,
    pub clf_std: Option<f64>,
    pub recall: Option<f64>,
    pub fp_rate: Option<f64>,
    pub box_min: Option<f64>,
    pub box_max: Option<f64>,
    pub perfect: Option<bool>,
    pub num_scenes: Option<usize>,

    pub baseline_total: Option<f64>,
    /// `calibrate --scenes`; `scenes` is already the scene directory list.
    pub calib_scenes: Option<usize>,
    pub tiles_per_scene: Option<usize>,
    pub classify_per_scene: Option<f64>,
    pub load_per_scene: Option<f64>,
}

impl FileConfig {
    /// Reads `explicit`, else the file named by the environment variable,
    /// else returns an empty config.
    pub fn load(explicit: Option<&Path>) -> Result<Self> {
        let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let Some(path) = explicit.map(Path::to_path_buf).or(env_path) else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path,
            line: e.line() as u64,
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Tile rows per scene [default: 30]
    #[arg(long)]
    pub rows: Option<usize>,
    /// Tile columns per scene [default: 30]
    #[arg(long)]
    pub cols: Option<usize>,
    /// Tile edge length in pixels [default: 800]
    #[arg(long)]
    pub tile_size: Option<u32>,
}

impl GridArgs {
    pub fn resolve(&self, file: &FileConfig) -> Result<TileGrid> {
        TileGrid::new(
            self.rows.or(file.rows).unwrap_or(30),
            self.cols.or(file.cols).unwrap_or(30),
            self.tile_size
                .or(file.tile_size)
                .unwrap_or(cascade_gate::grid::DEFAULT_TILE_SIZE_PX),
        )
    }
}

#[derive(Debug, Clone, Args)]
pub struct GateArgs {
    /// Sampling pattern of the correlation gate [default: alpha]
    #[arg(long, value_enum)]
    pub pattern: Option<PatternArg>,
    /// Custom pattern file, one `r,c` per line (implies --pattern custom)
    #[arg(long)]
    pub pattern_file: Option<PathBuf>,
    /// Number of neighbor rings; must match the number of weights
    #[arg(long)]
    pub k: Option<usize>,
    /// Ring weights w_1..w_K, comma separated [default: 1,0.1]
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Correlation threshold: run detection when s_cor >= t_cor [default: 0.4375]
    #[arg(long)]
    pub t_cor: Option<f64>,
    /// Classifier threshold: run detection when s_clf <= t_clf [default: 0]
    #[arg(long, allow_negative_numbers = true)]
    pub t_clf: Option<f64>,
    /// Use the raw weighted sum instead of the weighted average
    #[arg(long)]
    pub raw: bool,
    /// Ring distance metric [default: chebyshev]
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    /// Source of neighbor ship indicators [default: detector]
    #[arg(long, value_enum)]
    pub indicator: Option<IndicatorArg>,
    /// Minimum detection confidence counting as a ship [default: 0.5]
    #[arg(long)]
    pub conf_floor: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PatternArg {
    Checkers,
    Alpha,
    Custom,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Chebyshev,
    Manhattan,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IndicatorArg {
    Truth,
    Detector,
}

impl GateArgs {
    pub fn pattern(&self, file: &FileConfig, grid: &TileGrid) -> Result<PatternSpec> {
        let pattern_file = self.pattern_file.clone().or(file.pattern_file.clone());
        let kind = match (self.pattern, file.pattern) {
            (Some(PatternArg::Checkers), _) => PatternKind::Checkers,
            (Some(PatternArg::Alpha), _) => PatternKind::Alpha,
            (Some(PatternArg::Custom), _) => PatternKind::Custom,
            (None, Some(k)) => k,
            (None, None) if pattern_file.is_some() => PatternKind::Custom,
            (None, None) => PatternKind::Alpha,
        };
        Ok(match kind {
            PatternKind::Checkers => PatternSpec::Checkers,
            PatternKind::Alpha => PatternSpec::Alpha,
            PatternKind::Custom => {
                let path =
                    pattern_file.ok_or_else(|| Error::InvalidArgument("custom pattern needs --pattern-file".into()))?;
                PatternSpec::Custom(Pattern::load(grid, &path)?)
            }
        })
    }

    pub fn correlation(&self, file: &FileConfig) -> Result<CorrelationGateConfig> {
        let weights = self
            .weights
            .clone()
            .or(file.weights.clone())
            .unwrap_or_else(|| vec![1.0, 0.1]);
        if let Some(k) = self.k.or(file.k) {
            if k != weights.len() {
                return Err(Error::InvalidArgument(format!(
                    "k = {k} but {} weights given",
                    weights.len()
                )));
            }
        }
        let cfg = CorrelationGateConfig {
            weights,
            t_cor: self.t_cor.or(file.t_cor).unwrap_or(0.4375),
            normalize: !(self.raw || file.raw.unwrap_or(false)),
            metric: match self.metric {
                Some(MetricArg::Chebyshev) => DistanceMetric::Chebyshev,
                Some(MetricArg::Manhattan) => DistanceMetric::Manhattan,
                None => file.metric.unwrap_or_default(),
            },
            indicator: match self.indicator {
                Some(IndicatorArg::Truth) => IndicatorSource::Truth,
                Some(IndicatorArg::Detector) => IndicatorSource::Detector,
                None => file.indicator.unwrap_or_default(),
            },
            conf_floor: self
                .conf_floor
                .or(file.conf_floor)
                .unwrap_or(cascade_gate::world::DEFAULT_CONF_FLOOR),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn classifier(&self, file: &FileConfig) -> Result<ClassifierGateConfig> {
        ClassifierGateConfig::new(self.t_clf.or(file.t_clf).unwrap_or(0.0))
    }

    pub fn gate(&self, kind: GateKind, file: &FileConfig, grid: &TileGrid) -> Result<Gate> {
        Ok(match kind {
            GateKind::Baseline => Gate::Baseline,
            GateKind::Clf => Gate::Classifier(self.classifier(file)?),
            GateKind::Cor => Gate::Correlation {
                pattern: self.pattern(file, grid)?,
                config: self.correlation(file)?,
            },
            GateKind::Combined => Gate::Combined {
                pattern: self.pattern(file, grid)?,
                cor: self.correlation(file)?,
                clf: self.classifier(file)?,
            },
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// CostModel JSON as written by `calibrate`
    #[arg(long)]
    pub cost: Option<PathBuf>,
    /// Detector seconds per tile (overrides the cost file)
    #[arg(long)]
    pub t_detect: Option<f64>,
    /// Classifier seconds per scene (overrides the cost file)
    #[arg(long)]
    pub t_classify: Option<f64>,
    /// Load seconds per scene (overrides the cost file)
    #[arg(long)]
    pub t_load: Option<f64>,
    /// IoU needed for a detection to match a truth box [default: 0.5]
    #[arg(long)]
    pub iou: Option<f64>,
    /// Trade-off weights for the F-beta scores [default: 1,0.5,0.25]
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
}

impl EvalArgs {
    /// Without any cost input, the reference baseline (810.84 s over five
    /// scenes, 6 s classification per scene) is spread over the grid's tiles.
    pub fn cost(&self, file: &FileConfig, grid: &TileGrid) -> Result<CostModel> {
        let base = match self.cost.clone().or(file.cost.clone()) {
            Some(path) => {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                serde_json::from_str(&text).map_err(|e| Error::Parse {
                    path,
                    line: e.line() as u64,
                    message: e.to_string(),
                })?
            }
            None => CostModel::calibrate(810.84, 5, grid.len(), cascade_gate::eval::CLASSIFY_SECONDS_PER_SCENE)?,
        };
        let cost = CostModel {
            t_detect_per_tile: self.t_detect.or(file.t_detect).unwrap_or(base.t_detect_per_tile),
            t_classify_per_scene: self.t_classify.or(file.t_classify).unwrap_or(base.t_classify_per_scene),
            t_load_per_scene: self.t_load.or(file.t_load).unwrap_or(base.t_load_per_scene),
            ..base
        };
        cost.validate()?;
        Ok(cost)
    }

    pub fn iou(&self, file: &FileConfig) -> Result<f64> {
        let v = self
            .iou
            .or(file.iou)
            .unwrap_or(cascade_gate::eval::DEFAULT_IOU_THRESHOLD);
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidArgument(format!("IoU threshold {v} outside (0, 1)")));
        }
        Ok(v)
    }

    pub fn betas(&self, file: &FileConfig) -> Result<Vec<f64>> {
        let betas = self
            .betas
            .clone()
            .or(file.betas.clone())
            .unwrap_or_else(|| cascade_gate::eval::DEFAULT_BETAS.to_vec());
        if betas.is_empty() || betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidArgument(format!("betas must be positive, got {betas:?}")));
        }
        Ok(betas)
    }
}
