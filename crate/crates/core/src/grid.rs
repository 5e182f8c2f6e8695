//! Tile-grid geometry and the initial sampling patterns of the correlation
//! gate.
//!
//! A scene is cut into `rows × cols` square tiles. Tiles are addressed either
//! by a [`TileCoord`] or by a row-major index `i = row * cols + col`.
//! Patterns select the tiles the detector always visits before the
//! correlation gate predicts the rest.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TILE_SIZE_PX: u32 = 800;

/// 0-based tile coordinate. Ordering is row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileCoord {
    pub row: usize,
    pub col: usize,
}

impl TileCoord {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for TileCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Rectangular grid of sub-image tiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    rows: usize,
    cols: usize,
    tile_size_px: u32,
}

impl TileGrid {
    pub fn new(rows: usize, cols: usize, tile_size_px: u32) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "grid dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if tile_size_px == 0 {
            return Err(Error::invalid("tile size must be positive"));
        }
        rows.checked_mul(cols).ok_or_else(|| Error::invalid("grid too large"))?;
        Ok(Self {
            rows,
            cols,
            tile_size_px,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tile_size_px(&self) -> u32 {
        self.tile_size_px
    }

    /// Number of tiles.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, coord: TileCoord) -> bool {
        coord.row < self.rows && coord.col < self.cols
    }

    pub fn index_of(&self, coord: TileCoord) -> Option<usize> {
        self.contains(coord).then(|| coord.row * self.cols + coord.col)
    }

    pub fn coord_of(&self, index: usize) -> Option<TileCoord> {
        (index < self.len()).then(|| TileCoord::new(index / self.cols, index % self.cols))
    }

    /// All coordinates in row-major order.
    pub fn coords(&self) -> impl Iterator<Item = TileCoord> + '_ {
        let cols = self.cols;
        (0..self.len()).map(move |i| TileCoord::new(i / cols, i % cols))
    }

    pub(crate) fn check(&self, coord: TileCoord) -> Result<usize> {
        self.index_of(coord)
            .ok_or_else(|| Error::invalid(format!("tile {coord} outside {}x{} grid", self.rows, self.cols)))
    }
}

/// How "j tiles away" is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    /// `max(|dr|, |dc|)`: ring `j` is the square ring of side `2j + 1`.
    #[default]
    Chebyshev,
    /// `|dr| + |dc|`: ring `j` is a diamond.
    Manhattan,
}

impl DistanceMetric {
    pub fn distance(self, a: TileCoord, b: TileCoord) -> usize {
        let dr = a.row.abs_diff(b.row);
        let dc = a.col.abs_diff(b.col);
        match self {
            DistanceMetric::Chebyshev => dr.max(dc),
            DistanceMetric::Manhattan => dr + dc,
        }
    }
}

/// In-bounds tiles at exactly distance `j` from `tile`, in row-major order.
pub fn neighbors_at_distance(
    grid: &TileGrid,
    tile: TileCoord,
    j: usize,
    metric: DistanceMetric,
) -> Result<Vec<TileCoord>> {
    grid.check(tile)?;
    if j == 0 {
        return Err(Error::invalid("neighbor distance must be at least 1"));
    }
    let r0 = tile.row.saturating_sub(j);
    let r1 = (tile.row + j).min(grid.rows - 1);
    let c0 = tile.col.saturating_sub(j);
    let c1 = (tile.col + j).min(grid.cols - 1);
    let mut out = Vec::with_capacity(8 * j);
    for row in r0..=r1 {
        for col in c0..=c1 {
            let c = TileCoord::new(row, col);
            if metric.distance(tile, c) == j {
                out.push(c);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    /// Tiles with `row + col` even: half the grid.
    Checkers,
    /// Top-left tile of every 2×2 block: a quarter of the grid.
    Alpha,
    /// Arbitrary tile set, usually loaded from a file.
    Custom,
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternKind::Checkers => "checkers",
            PatternKind::Alpha => "alpha",
            PatternKind::Custom => "custom",
        })
    }
}

/// The set of tiles on which detection runs unconditionally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    kind: PatternKind,
    grid: TileGrid,
    selected: BTreeSet<TileCoord>,
}

impl Pattern {
    /// Builds a checkers or alpha pattern. `Custom` yields an empty selection;
    /// use [`Pattern::custom`] or [`Pattern::load`] for those.
    pub fn generate(grid: &TileGrid, kind: PatternKind) -> Self {
        let selected = grid
            .coords()
            .filter(|c| match kind {
                PatternKind::Checkers => (c.row + c.col) % 2 == 0,
                PatternKind::Alpha => c.row % 2 == 0 && c.col % 2 == 0,
                PatternKind::Custom => false,
            })
            .collect();
        Self {
            kind,
            grid: *grid,
            selected,
        }
    }

    pub fn custom(grid: &TileGrid, coords: impl IntoIterator<Item = TileCoord>) -> Result<Self> {
        let mut selected = BTreeSet::new();
        for c in coords {
            grid.check(c)?;
            selected.insert(c);
        }
        Ok(Self {
            kind: PatternKind::Custom,
            grid: *grid,
            selected,
        })
    }

    /// Reads a custom pattern: one `r,c` pair per line, 0-based. Blank lines
    /// are ignored.
    pub fn load(grid: &TileGrid, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(grid, &text, path)
    }

    pub(crate) fn parse(grid: &TileGrid, text: &str, path: &Path) -> Result<Self> {
        let mut coords = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i as u64 + 1;
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (r, c) = line
                .split_once(',')
                .ok_or_else(|| parse_err(format!("expected `r,c`, got `{line}`")))?;
            let row = r.trim().parse().map_err(|e| parse_err(format!("bad row `{r}`: {e}")))?;
            let col = c
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad column `{c}`: {e}")))?;
            let coord = TileCoord::new(row, col);
            if !grid.contains(coord) {
                return Err(parse_err(format!(
                    "tile {coord} outside {}x{} grid",
                    grid.rows(),
                    grid.cols()
                )));
            }
            coords.push(coord);
        }
        Self::custom(grid, coords)
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn grid(&self) -> &TileGrid {
        &self.grid
    }

    pub fn selected(&self) -> &BTreeSet<TileCoord> {
        &self.selected
    }

    pub fn contains(&self, coord: TileCoord) -> bool {
        self.selected.contains(&coord)
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// Fraction of grid tiles selected.
    pub fn coverage(&self) -> f64 {
        self.selected.len() as f64 / self.grid.len() as f64
    }

    /// Row-major membership mask.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.grid.len()];
        for c in &self.selected {
            mask[c.row * self.grid.cols() + c.col] = true;
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(r: usize, c: usize) -> TileGrid {
        TileGrid::new(r, c, DEFAULT_TILE_SIZE_PX).unwrap()
    }

    #[test]
    fn build_grid_examples() {
        assert_eq!(grid(30, 30).len(), 900);
        assert_eq!(grid(20, 30).len(), 600);
        let one = grid(1, 1);
        assert_eq!(one.len(), 1);
        assert_eq!(one.index_of(TileCoord::new(0, 0)), Some(0));
        assert_eq!(one.coord_of(0), Some(TileCoord::new(0, 0)));
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(TileGrid::new(0, 3, 800), Err(Error::InvalidArgument(_))));
        assert!(matches!(TileGrid::new(3, 0, 800), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn pattern_examples() {
        let g = grid(4, 4);
        let checkers = Pattern::generate(&g, PatternKind::Checkers);
        assert_eq!(checkers.len(), 8);
        assert_eq!(checkers.coverage(), 0.5);
        let alpha = Pattern::generate(&g, PatternKind::Alpha);
        assert_eq!(alpha.len(), 4);
        assert_eq!(alpha.coverage(), 0.25);
        assert!(alpha.contains(TileCoord::new(2, 2)));
        assert!(!alpha.contains(TileCoord::new(1, 0)));
        assert_eq!(Pattern::generate(&grid(1, 1), PatternKind::Checkers).len(), 1);
    }

    #[test]
    fn alpha_coverage_on_odd_grid() {
        let p = Pattern::generate(&grid(5, 3), PatternKind::Alpha);
        assert_eq!(p.len(), 3 * 2);
    }

    #[test]
    fn ring_examples() {
        let g = grid(5, 5);
        let m = DistanceMetric::Chebyshev;
        assert_eq!(neighbors_at_distance(&g, TileCoord::new(2, 2), 1, m).unwrap().len(), 8);
        assert_eq!(neighbors_at_distance(&g, TileCoord::new(0, 0), 1, m).unwrap().len(), 3);
        // (2j+1)^2 - (2j-1)^2 with j = 2
        assert_eq!(
            neighbors_at_distance(&g, TileCoord::new(2, 2), 2, m).unwrap().len(),
            25 - 9
        );
        assert_eq!(
            neighbors_at_distance(&g, TileCoord::new(2, 2), 1, DistanceMetric::Manhattan)
                .unwrap()
                .len(),
            4
        );
    }

    #[test]
    fn ring_rejects_bad_input() {
        let g = grid(5, 5);
        assert!(neighbors_at_distance(&g, TileCoord::new(5, 0), 1, DistanceMetric::Chebyshev).is_err());
        assert!(neighbors_at_distance(&g, TileCoord::new(0, 0), 0, DistanceMetric::Chebyshev).is_err());
    }

    #[test]
    fn custom_pattern_file_parsing() {
        let g = grid(3, 3);
        let p = Pattern::parse(&g, "0,0\n\n 2 , 1\r\n", Path::new("p.txt")).unwrap();
        assert_eq!(p.kind(), PatternKind::Custom);
        assert_eq!(p.len(), 2);
        assert!(p.contains(TileCoord::new(2, 1)));

        let err = Pattern::parse(&g, "0,0\n3,0\n", Path::new("p.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = Pattern::parse(&g, "0;0\n", Path::new("p.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    proptest! {
        #[test]
        fn index_mapping_is_bijective(rows in 1usize..40, cols in 1usize..40) {
            let g = grid(rows, cols);
            for i in 0..g.len() {
                let c = g.coord_of(i).unwrap();
                prop_assert_eq!(g.index_of(c), Some(i));
            }
            prop_assert_eq!(g.coord_of(g.len()), None);
        }

        #[test]
        fn rings_are_disjoint_and_full_rings_have_8j(
            rows in 1usize..15, cols in 1usize..15, r in 0usize..15, c in 0usize..15,
        ) {
            let g = grid(rows, cols);
            let t = TileCoord::new(r % rows, c % cols);
            let mut seen = BTreeSet::new();
            for j in 1..=4 {
                let ring = neighbors_at_distance(&g, t, j, DistanceMetric::Chebyshev).unwrap();
                for n in &ring {
                    prop_assert!(seen.insert(*n));
                }
                let inside = t.row >= j && t.col >= j && t.row + j < rows && t.col + j < cols;
                if inside {
                    prop_assert_eq!(ring.len(), 8 * j);
                }
            }
        }

        #[test]
        fn pattern_coverage(rows in 1usize..30, cols in 1usize..30) {
            let g = grid(rows, cols);
            let checkers = Pattern::generate(&g, PatternKind::Checkers);
            if (rows * cols) % 2 == 0 {
                prop_assert_eq!(checkers.len() * 2, rows * cols);
            }
            let alpha = Pattern::generate(&g, PatternKind::Alpha);
            prop_assert_eq!(alpha.len(), rows.div_ceil(2) * cols.div_ceil(2));
            prop_assert_eq!(Pattern::generate(&g, PatternKind::Alpha), alpha);
        }
    }
}
