//! Per-tile data model: ground-truth boxes, cached classifier scores and
//! cached detector output.
//!
//! # File formats
//!
//! A scene is stored as three CSV files, all coordinates 0-based, `.` as the
//! decimal point, UTF-8, LF or CRLF line endings:
//!
//! | file             | header                     | rows                      |
//! |------------------|----------------------------|---------------------------|
//! | `scores.csv`     | `r,c,clf_score`            | exactly one per tile      |
//! | `detections.csv` | `r,c,x,y,w,h,confidence`   | zero or more per tile     |
//! | `truth.csv`      | `r,c,x,y,w,h`              | zero or more per tile     |
//!
//! **Score sign convention:** `clf_score` lies in `[-1, 1]` and a *lower*
//! score means "ship present". A tile passes the classifier gate when
//! `clf_score <= t_clf`.
//!
//! Box coordinates are pixels relative to the tile's top-left corner.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{TileCoord, TileGrid};

pub const SCORES_FILE: &str = "scores.csv";
pub const DETECTIONS_FILE: &str = "detections.csv";
pub const TRUTH_FILE: &str = "truth.csv";

const SCORE_HEADER: [&str; 3] = ["r", "c", "clf_score"];
const DETECTION_HEADER: [&str; 7] = ["r", "c", "x", "y", "w", "h", "confidence"];
const TRUTH_HEADER: [&str; 6] = ["r", "c", "x", "y", "w", "h"];

/// Axis-aligned box in tile pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate(None)?;
        Ok(b)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub(crate) fn validate(&self, tile_size_px: Option<u32>) -> Result<()> {
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("box coordinates must be finite"));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::invalid(format!(
                "box width and height must be positive, got {}x{}",
                self.w, self.h
            )));
        }
        if let Some(size) = tile_size_px {
            let size = f64::from(size);
            if self.x < 0.0 || self.y < 0.0 || self.x + self.w > size || self.y + self.h > size {
                return Err(Error::invalid(format!(
                    "box ({}, {}, {}, {}) exceeds {size}px tile",
                    self.x, self.y, self.w, self.h
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BBox, confidence: f64) -> Result<Self> {
        check_confidence(confidence)?;
        Ok(Self { bbox, confidence })
    }
}

fn check_confidence(confidence: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&confidence) {
        return Err(Error::invalid(format!("confidence {confidence} outside [0, 1]")));
    }
    Ok(())
}

fn check_clf_score(score: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&score) {
        return Err(Error::invalid(format!("classifier score {score} outside [-1, 1]")));
    }
    Ok(())
}

/// Where the ship indicator of a tile comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndicatorSource {
    /// Ground truth: a tile has a ship iff it has a truth box.
    Truth,
    /// Detector output: a tile has a ship iff some detection reaches the
    /// confidence floor.
    #[default]
    Detector,
}

pub const DEFAULT_CONF_FLOOR: f64 = 0.5;

/// Everything known about one tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub coord: TileCoord,
    /// Classifier score in `[-1, 1]`; lower means "ship".
    pub clf_score: f64,
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<BBox>,
}

impl TileRecord {
    pub fn new(coord: TileCoord, clf_score: f64) -> Result<Self> {
        check_clf_score(clf_score)?;
        Ok(Self {
            coord,
            clf_score,
            detections: Vec::new(),
            ground_truth: Vec::new(),
        })
    }

    pub fn ship_indicator(&self, source: IndicatorSource, conf_floor: f64) -> bool {
        match source {
            IndicatorSource::Truth => !self.ground_truth.is_empty(),
            IndicatorSource::Detector => self.detections.iter().any(|d| d.confidence >= conf_floor),
        }
    }

    fn validate(&self, grid: &TileGrid) -> Result<()> {
        grid.check(self.coord)?;
        check_clf_score(self.clf_score)?;
        for d in &self.detections {
            check_confidence(d.confidence)?;
            d.bbox.validate(Some(grid.tile_size_px()))?;
        }
        for b in &self.ground_truth {
            b.validate(Some(grid.tile_size_px()))?;
        }
        Ok(())
    }
}

/// One tiled scene: a record for every grid tile, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    grid: TileGrid,
    tiles: Vec<TileRecord>,
}

impl Scene {
    /// Assembles a scene from records in any order. Every grid tile must
    /// appear exactly once.
    pub fn new(grid: TileGrid, records: impl IntoIterator<Item = TileRecord>) -> Result<Self> {
        let mut slots: Vec<Option<TileRecord>> = vec![None; grid.len()];
        for rec in records {
            rec.validate(&grid)?;
            let idx = grid.check(rec.coord)?;
            if slots[idx].is_some() {
                return Err(Error::invalid(format!("duplicate record for tile {}", rec.coord)));
            }
            slots[idx] = Some(rec);
        }
        let tiles = slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| Error::invalid(format!("no record for tile {}", grid.coord_of(i).unwrap()))))
            .collect::<Result<_>>()?;
        Ok(Self { grid, tiles })
    }

    pub fn grid(&self) -> &TileGrid {
        &self.grid
    }

    /// Records in row-major order.
    pub fn tiles(&self) -> &[TileRecord] {
        &self.tiles
    }

    pub fn tile(&self, coord: TileCoord) -> Option<&TileRecord> {
        self.grid.index_of(coord).map(|i| &self.tiles[i])
    }

    pub fn total_truths(&self) -> usize {
        self.tiles.iter().map(|t| t.ground_truth.len()).sum()
    }

    pub fn positive_tiles(&self) -> usize {
        self.tiles.iter().filter(|t| !t.ground_truth.is_empty()).count()
    }

    /// Loads `scores.csv`, `detections.csv` and `truth.csv` from `dir`.
    pub fn load_dir(grid: TileGrid, dir: &Path) -> Result<Self> {
        load_scene(
            grid,
            &dir.join(SCORES_FILE),
            &dir.join(DETECTIONS_FILE),
            &dir.join(TRUTH_FILE),
        )
    }

    /// Writes the three scene CSVs into `dir`, creating it if needed.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (scores, detections, truth) = self.to_csv()?;
        crate::io::write_atomic(&dir.join(SCORES_FILE), scores.as_bytes())?;
        crate::io::write_atomic(&dir.join(DETECTIONS_FILE), detections.as_bytes())?;
        crate::io::write_atomic(&dir.join(TRUTH_FILE), truth.as_bytes())?;
        Ok(())
    }

    /// Renders the scene as `(scores, detections, truth)` CSV text.
    pub fn to_csv(&self) -> Result<(String, String, String)> {
        let mut scores = csv::Writer::from_writer(Vec::new());
        let mut dets = csv::Writer::from_writer(Vec::new());
        let mut truth = csv::Writer::from_writer(Vec::new());
        let e = |e: csv::Error| Error::Internal(format!("csv encoding failed: {e}"));
        scores.write_record(SCORE_HEADER).map_err(e)?;
        dets.write_record(DETECTION_HEADER).map_err(e)?;
        truth.write_record(TRUTH_HEADER).map_err(e)?;
        for t in &self.tiles {
            let (r, c) = (t.coord.row.to_string(), t.coord.col.to_string());
            scores.write_record([&r, &c, &t.clf_score.to_string()]).map_err(e)?;
            for d in &t.detections {
                let b = d.bbox;
                dets.write_record([
                    r.clone(),
                    c.clone(),
                    b.x.to_string(),
                    b.y.to_string(),
                    b.w.to_string(),
                    b.h.to_string(),
                    d.confidence.to_string(),
                ])
                .map_err(e)?;
            }
            for b in &t.ground_truth {
                truth
                    .write_record([
                        r.clone(),
                        c.clone(),
                        b.x.to_string(),
                        b.y.to_string(),
                        b.w.to_string(),
                        b.h.to_string(),
                    ])
                    .map_err(e)?;
            }
        }
        let finish = |w: csv::Writer<Vec<u8>>| -> Result<String> {
            let bytes = w
                .into_inner()
                .map_err(|e| Error::Internal(format!("csv flush failed: {e}")))?;
            String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
        };
        Ok((finish(scores)?, finish(dets)?, finish(truth)?))
    }
}

#[derive(Deserialize)]
struct ScoreRow {
    r: usize,
    c: usize,
    clf_score: f64,
}

#[derive(Deserialize)]
struct DetectionRow {
    r: usize,
    c: usize,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    confidence: f64,
}

#[derive(Deserialize)]
struct TruthRow {
    r: usize,
    c: usize,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

/// Reads `path` as CSV with the exact `header`, handing each row and its
/// line number to `visit`. Errors raised by `visit` are tagged with the line.
fn read_csv<T, F>(path: &Path, text: &str, header: &[&str], mut visit: F) -> Result<()>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(T) -> Result<()>,
{
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.iter().ne(header.iter().copied()) {
        return Err(parse_err(
            1,
            format!(
                "expected header `{}`, got `{}`",
                header.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: T = record
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        visit(row).map_err(|e| match e {
            Error::InvalidArgument(m) => parse_err(line, m),
            other => other,
        })?;
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a scene from its three CSV files. Every tile needs a score; tiles
/// without detection or truth rows get empty lists.
pub fn load_scene(grid: TileGrid, score_file: &Path, detection_file: &Path, truth_file: &Path) -> Result<Scene> {
    parse_scene(
        grid,
        (score_file, &read_text(score_file)?),
        (detection_file, &read_text(detection_file)?),
        (truth_file, &read_text(truth_file)?),
    )
}

/// Parses a scene from in-memory CSV text; paths are used in diagnostics only.
pub fn parse_scene(
    grid: TileGrid,
    scores: (&Path, &str),
    detections: (&Path, &str),
    truth: (&Path, &str),
) -> Result<Scene> {
    let mut records: BTreeMap<usize, TileRecord> = BTreeMap::new();
    read_csv(scores.0, scores.1, &SCORE_HEADER, |row: ScoreRow| {
        let coord = TileCoord::new(row.r, row.c);
        let idx = grid.check(coord)?;
        let rec = TileRecord::new(coord, row.clf_score)?;
        if records.insert(idx, rec).is_some() {
            return Err(Error::invalid(format!("duplicate score for tile {coord}")));
        }
        Ok(())
    })?;
    if let Some(missing) = grid.coords().enumerate().find(|(i, _)| !records.contains_key(i)) {
        return Err(Error::MissingTile {
            path: scores.0.to_path_buf(),
            what: "clf_score",
            coord: missing.1,
        });
    }

    let size = Some(grid.tile_size_px());
    read_csv(detections.0, detections.1, &DETECTION_HEADER, |row: DetectionRow| {
        let coord = TileCoord::new(row.r, row.c);
        let idx = grid.check(coord)?;
        let bbox = BBox {
            x: row.x,
            y: row.y,
            w: row.w,
            h: row.h,
        };
        bbox.validate(size)?;
        let det = Detection::new(bbox, row.confidence)?;
        records.get_mut(&idx).expect("all tiles present").detections.push(det);
        Ok(())
    })?;
    read_csv(truth.0, truth.1, &TRUTH_HEADER, |row: TruthRow| {
        let coord = TileCoord::new(row.r, row.c);
        let idx = grid.check(coord)?;
        let bbox = BBox {
            x: row.x,
            y: row.y,
            w: row.w,
            h: row.h,
        };
        bbox.validate(size)?;
        records
            .get_mut(&idx)
            .expect("all tiles present")
            .ground_truth
            .push(bbox);
        Ok(())
    })?;
    Scene::new(grid, records.into_values())
}

/// Paths of the three scene files under `dir`.
pub fn scene_paths(dir: &Path) -> [PathBuf; 3] {
    [dir.join(SCORES_FILE), dir.join(DETECTIONS_FILE), dir.join(TRUTH_FILE)]
}
