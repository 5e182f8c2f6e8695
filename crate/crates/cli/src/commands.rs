use std::path::{Path, PathBuf};

use cascade_gate::cascade::decisions_to_csv;
use cascade_gate::io::write_atomic;
use cascade_gate::sweep::curves_to_csv;
use cascade_gate::synth::{self, ClfNoise};
use cascade_gate::{
    evaluate, generate_scene, perfect_oracle_scene, random_baseline, sweep_classifier, sweep_combined,
    sweep_correlation, CostModel, Error, Result, Scene, SweepContext, SynthConfig,
};
use clap::Args;
use serde::Serialize;

use crate::config::{EvalArgs, FileConfig, GateArgs, GateKind, GridArgs};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const CURVES_CSV: &str = "curves.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

/// Files are produced in memory first and only written once every step has
/// succeeded, so a failing invocation leaves no partial output behind.
struct Outputs(Vec<(PathBuf, Vec<u8>)>);

impl Outputs {
    fn new() -> Self {
        Self(Vec::new())
    }

    fn add(&mut self, path: PathBuf, bytes: impl Into<Vec<u8>>) {
        self.0.push((path, bytes.into()));
    }

    fn write(self) -> Result<()> {
        for (path, _) in &self.0 {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.to_path_buf(),
                    source: e,
                })?;
            }
        }
        for (path, bytes) in &self.0 {
            write_atomic(path, bytes)?;
        }
        Ok(())
    }
}

fn out_dir(flag: &Option<PathBuf>, file: &FileConfig) -> Result<PathBuf> {
    flag.clone()
        .or(file.out.clone())
        .ok_or_else(|| Error::InvalidArgument("--out is required".into()))
}

fn load_scenes(flag: &[PathBuf], file: &FileConfig, grid: &GridArgs) -> Result<(Vec<PathBuf>, Vec<Scene>)> {
    let dirs = if flag.is_empty() {
        file.scenes.clone().unwrap_or_default()
    } else {
        flag.to_vec()
    };
    if dirs.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one --scene directory is required".into(),
        ));
    }
    let grid = grid.resolve(file)?;
    let scenes = dirs
        .iter()
        .map(|d| Scene::load_dir(grid, d))
        .collect::<Result<Vec<_>>>()?;
    Ok((dirs, scenes))
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scene directory holding scores.csv, detections.csv and truth.csv (repeatable)
    #[arg(long = "scene")]
    pub scenes: Vec<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Gate to apply [default: combined]
    #[arg(long, value_enum)]
    pub gate: Option<GateKind>,
    #[command(flatten)]
    pub params: GateArgs,
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &RunArgs, file: &FileConfig) -> Result<()> {
    let (_, scenes) = load_scenes(&args.scenes, file, &args.grid)?;
    let grid = *scenes[0].grid();
    let kind = args.gate.or(file.gate).unwrap_or(GateKind::Combined);
    let gate = args.params.gate(kind, file, &grid)?;
    let cost = args.eval.cost(file, &grid)?;
    let iou = args.eval.iou(file)?;
    let betas = args.eval.betas(file)?;
    let out = out_dir(&args.out, file)?;

    let decisions = scenes.iter().map(|s| gate.apply(s)).collect::<Result<Vec<_>>>()?;
    let report = evaluate(&scenes, &decisions, gate.stages(), &cost, iou, &betas)?;

    let mut outputs = Outputs::new();
    outputs.add(out.join(REPORT_JSON), report.to_json());
    outputs.add(out.join(REPORT_CSV), report.to_csv(&betas));
    for (i, d) in decisions.iter().enumerate() {
        outputs.add(out.join(format!("decisions-{i:03}.csv")), decisions_to_csv(d));
    }
    outputs.write()?;
    print!("{}", report.to_json());
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Scene directory (repeatable)
    #[arg(long = "scene")]
    pub scenes: Vec<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Gates to sweep, comma separated [default: clf,cor]
    #[arg(long, value_enum, value_delimiter = ',')]
    pub gates: Option<Vec<GateKind>>,
    #[command(flatten)]
    pub params: GateArgs,
    /// Classifier thresholds [default: -1 to 1 in steps of 0.1]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub t_clf_values: Option<Vec<f64>>,
    /// Correlation thresholds [default: 0 to 1 in steps of 1/16]
    #[arg(long, value_delimiter = ',')]
    pub t_cor_values: Option<Vec<f64>>,
    /// Keep fractions for the random baseline [default: 0.1 to 0.9]
    #[arg(long, value_delimiter = ',')]
    pub random_keep: Option<Vec<f64>>,
    /// Skip the random baseline
    #[arg(long, conflicts_with = "random_keep")]
    pub no_random: bool,
    /// Seed of the random baseline [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    scenes: &'a [PathBuf],
    rows: usize,
    cols: usize,
    gates: &'a [GateKind],
    pattern: String,
    correlation: &'a cascade_gate::CorrelationGateConfig,
    t_clf_values: &'a [f64],
    t_cor_values: &'a [f64],
    random_keep: &'a [f64],
    seed: u64,
    cost: &'a CostModel,
    iou_threshold: f64,
    betas: &'a [f64],
    baseline: &'a cascade_gate::EvalReport,
}

/// `lo/denom, (lo+1)/denom, ..., hi/denom`, exact for power-of-two and decimal denominators.
fn steps(lo: i32, hi: i32, denom: f64) -> Vec<f64> {
    (lo..=hi).map(|i| i as f64 / denom).collect()
}

pub fn sweep(args: &SweepArgs, file: &FileConfig) -> Result<()> {
    let (dirs, scenes) = load_scenes(&args.scenes, file, &args.grid)?;
    let grid = *scenes[0].grid();
    let gates = args
        .gates
        .clone()
        .or(file.gates.clone())
        .unwrap_or_else(|| vec![GateKind::Clf, GateKind::Cor]);
    if gates.is_empty() {
        return Err(Error::InvalidArgument("no gates to sweep".into()));
    }
    let pattern = args.params.pattern(file, &grid)?;
    let cor = args.params.correlation(file)?;
    let t_clf_values = args
        .t_clf_values
        .clone()
        .or(file.t_clf_values.clone())
        .unwrap_or_else(|| steps(-10, 10, 10.0));
    let t_cor_values = args
        .t_cor_values
        .clone()
        .or(file.t_cor_values.clone())
        .unwrap_or_else(|| steps(0, 16, 16.0));
    let random_keep = args
        .random_keep
        .clone()
        .or(file.random_keep.clone())
        .unwrap_or_else(|| steps(1, 9, 10.0));
    let random_keep = if args.no_random || file.no_random.unwrap_or(false) {
        Vec::new()
    } else {
        random_keep
    };
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let cost = args.eval.cost(file, &grid)?;
    let iou = args.eval.iou(file)?;
    let betas = args.eval.betas(file)?;
    let out = out_dir(&args.out, file)?;

    let ctx = SweepContext::new(&scenes, cost, iou, betas.clone())?;
    let mut points = Vec::new();
    for kind in &gates {
        match kind {
            GateKind::Baseline => {
                let gate = cascade_gate::Gate::Baseline;
                let report = ctx.evaluate_gate(&gate)?;
                points.push(cascade_gate::SweepPoint {
                    config_id: "baseline".into(),
                    thresholds: Default::default(),
                    relative_ap: if ctx.baseline().ap > 0.0 {
                        report.ap / ctx.baseline().ap
                    } else {
                        0.0
                    },
                    time_saving: 1.0 - report.rt,
                    f_beta: report.f_beta,
                });
            }
            GateKind::Clf => points.extend(sweep_classifier(&ctx, &t_clf_values)?),
            GateKind::Cor => points.extend(sweep_correlation(&ctx, &pattern, &cor, &t_cor_values)?),
            GateKind::Combined => points.extend(sweep_combined(&ctx, &pattern, &cor, &t_cor_values, &t_clf_values)?),
        }
    }
    for &keep in &random_keep {
        points.push(random_baseline(&ctx, keep, seed)?);
    }
    let curves = curves_to_csv(&points)?;

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        scenes: &dirs,
        rows: grid.rows(),
        cols: grid.cols(),
        gates: &gates,
        pattern: pattern.kind().to_string(),
        correlation: &cor,
        t_clf_values: &t_clf_values,
        t_cor_values: &t_cor_values,
        random_keep: &random_keep,
        seed,
        cost: &cost,
        iou_threshold: iou,
        betas: &betas,
        baseline: ctx.baseline(),
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Internal(e.to_string()))?;
    manifest_json.push('\n');

    let mut outputs = Outputs::new();
    outputs.add(out.join(CURVES_CSV), curves);
    outputs.add(out.join(MANIFEST_JSON), manifest_json);
    outputs.write()?;
    eprintln!(
        "wrote {} curve points to {}",
        points.len(),
        out.join(CURVES_CSV).display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Fraction of tiles holding at least one vessel [default: 0.245]
    #[arg(long)]
    pub positive_fraction: Option<f64>,
    /// Mean vessels per positive tile, at least 1 [default: 3.23]
    #[arg(long)]
    pub vessels_mean: Option<f64>,
    /// Number of vessel clusters [default: 6]
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Cluster spread in tiles; 0 puts all vessels on the centers [default: 2]
    #[arg(long)]
    pub spread: Option<f64>,
    /// Mean classifier score of positive tiles [default: -0.4]
    #[arg(long, allow_negative_numbers = true)]
    pub clf_positive_mean: Option<f64>,
    /// Mean classifier score of negative tiles [default: 0.4]
    #[arg(long, allow_negative_numbers = true)]
    pub clf_negative_mean: Option<f64>,
    /// Standard deviation of classifier scores [default: 0.35]
    #[arg(long)]
    pub clf_std: Option<f64>,
    /// Probability that the detector finds a vessel [default: 0.9]
    #[arg(long)]
    pub recall: Option<f64>,
    /// Mean false detections per tile [default: 0.1]
    #[arg(long)]
    pub fp_rate: Option<f64>,
    /// Smallest vessel box edge in pixels [default: 8]
    #[arg(long)]
    pub box_min: Option<f64>,
    /// Largest vessel box edge in pixels [default: 48]
    #[arg(long)]
    pub box_max: Option<f64>,
    /// Seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Emit a perfect oracle scene: scores of exactly -1/+1 and exact detections
    #[arg(long)]
    pub perfect: bool,
    /// Number of scenes; more than one writes scene-000, scene-001, ... with seeds seed, seed+1, ...
    #[arg(long)]
    pub num_scenes: Option<usize>,
}

impl SynthArgs {
    fn config(&self, file: &FileConfig, seed: u64) -> Result<SynthConfig> {
        let grid = self.grid.resolve(file)?;
        let d = SynthConfig::new(seed);
        let cfg = SynthConfig {
            rows: grid.rows(),
            cols: grid.cols(),
            tile_size_px: grid.tile_size_px(),
            positive_tile_fraction: self
                .positive_fraction
                .or(file.positive_fraction)
                .unwrap_or(d.positive_tile_fraction),
            vessels_per_positive_tile_mean: self
                .vessels_mean
                .or(file.vessels_mean)
                .unwrap_or(d.vessels_per_positive_tile_mean),
            clusters: self.clusters.or(file.clusters).unwrap_or(d.clusters),
            cluster_spread_tiles: self.spread.or(file.spread).unwrap_or(d.cluster_spread_tiles),
            clf_noise: ClfNoise {
                positive_mean: self
                    .clf_positive_mean
                    .or(file.clf_positive_mean)
                    .unwrap_or(d.clf_noise.positive_mean),
                negative_mean: self
                    .clf_negative_mean
                    .or(file.clf_negative_mean)
                    .unwrap_or(d.clf_noise.negative_mean),
                std_dev: self.clf_std.or(file.clf_std).unwrap_or(d.clf_noise.std_dev),
            },
            detector_recall: self.recall.or(file.recall).unwrap_or(d.detector_recall),
            detector_fp_rate: self.fp_rate.or(file.fp_rate).unwrap_or(d.detector_fp_rate),
            box_size_px: [
                self.box_min.or(file.box_min).unwrap_or(d.box_size_px[0]),
                self.box_max.or(file.box_max).unwrap_or(d.box_size_px[1]),
            ],
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn synth(args: &SynthArgs, file: &FileConfig) -> Result<()> {
    let out = out_dir(&args.out, file)?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let n = args.num_scenes.or(file.num_scenes).unwrap_or(1);
    if n == 0 {
        return Err(Error::InvalidArgument("--num-scenes must be at least 1".into()));
    }
    let perfect = args.perfect || file.perfect.unwrap_or(false);

    let mut outputs = Outputs::new();
    for i in 0..n {
        let cfg = args.config(file, seed.wrapping_add(i as u64))?;
        let scene = if perfect {
            perfect_oracle_scene(&cfg)?
        } else {
            generate_scene(&cfg)?
        };
        let dir = if n == 1 {
            out.clone()
        } else {
            out.join(format!("scene-{i:03}"))
        };
        add_scene(&mut outputs, &scene, &cfg, &dir)?;
    }
    outputs.write()
}

fn add_scene(outputs: &mut Outputs, scene: &Scene, cfg: &SynthConfig, dir: &Path) -> Result<()> {
    let [scores, detections, truth] = cascade_gate::world::scene_paths(dir);
    let (s, d, t) = scene.to_csv()?;
    outputs.add(scores, s);
    outputs.add(detections, d);
    outputs.add(truth, t);
    outputs.add(dir.join(synth::CONFIG_FILE), cfg.to_json());
    Ok(())
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Measured detector-only wall time over all scenes, in seconds
    #[arg(long)]
    pub baseline_total: Option<f64>,
    /// Number of scenes the measurement covers
    #[arg(long)]
    pub scenes: Option<usize>,
    /// Tiles per scene
    #[arg(long)]
    pub tiles_per_scene: Option<usize>,
    /// Classifier seconds per scene [default: 6]
    #[arg(long)]
    pub classify_per_scene: Option<f64>,
    /// Load seconds per scene [default: 0]
    #[arg(long)]
    pub load_per_scene: Option<f64>,
    /// Write the cost model here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn calibrate(args: &CalibrateArgs, file: &FileConfig) -> Result<()> {
    let missing = |name: &str| Error::InvalidArgument(format!("--{name} is required"));
    let total = args
        .baseline_total
        .or(file.baseline_total)
        .ok_or_else(|| missing("baseline-total"))?;
    let scenes = args.scenes.or(file.calib_scenes).ok_or_else(|| missing("scenes"))?;
    let tiles = args
        .tiles_per_scene
        .or(file.tiles_per_scene)
        .ok_or_else(|| missing("tiles-per-scene"))?;
    let classify = args
        .classify_per_scene
        .or(file.classify_per_scene)
        .unwrap_or(cascade_gate::eval::CLASSIFY_SECONDS_PER_SCENE);
    let mut cost = CostModel::calibrate(total, scenes, tiles, classify)?;
    if let Some(load) = args.load_per_scene.or(file.load_per_scene) {
        cost.t_load_per_scene = load;
        cost.validate()?;
    }
    let mut json = serde_json::to_string_pretty(&cost).map_err(|e| Error::Internal(e.to_string()))?;
    json.push('\n');
    match args.out.clone().or(file.out.clone()) {
        Some(path) => {
            let mut outputs = Outputs::new();
            outputs.add(path, json);
            outputs.write()
        }
        None => {
            print!("{json}");
            Ok(())
        }
    }
}
