//! Occupancy and TSDF grids on a shared cell lattice.
//!
//! Cell `(x, y)` is a point sample at continuous cell coordinates
//! `(x as f64, y as f64)`; world meters = `origin + coord * resolution`.
//! Walls live on lattice cells, so box edges with integer coordinates
//! rasterize onto exact cell rows/columns.

use serde::{Deserialize, Serialize};

use super::GridError;

/// Default map resolution in meters per cell.
pub const DEFAULT_RESOLUTION: f64 = 0.14;
/// Default TSDF truncation radius in cells.
pub const DEFAULT_GAMMA: f64 = 10.0;

/// State of a single occupancy cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Free,
    Occupied,
    Unknown,
}

/// Lattice shape plus the cell-to-world transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    /// Meters per cell.
    pub resolution: f64,
    /// World coordinates (meters) of cell (0, 0).
    pub origin: (f64, f64),
}

impl GridGeometry {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            resolution: DEFAULT_RESOLUTION,
            origin: (0.0, 0.0),
        }
    }

    pub fn square(size: usize) -> Self {
        Self::new(size, size)
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn contains_cell(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Nearest lattice cell to a world position, if inside the grid.
    pub fn world_to_cell(&self, wx: f64, wy: f64) -> Option<(usize, usize)> {
        let cx = ((wx - self.origin.0) / self.resolution).round();
        let cy = ((wy - self.origin.1) / self.resolution).round();
        if cx < 0.0 || cy < 0.0 {
            return None;
        }
        let (cx, cy) = (cx as i64, cy as i64);
        self.contains_cell(cx, cy)
            .then_some((cx as usize, cy as usize))
    }

    pub fn cell_to_world(&self, x: usize, y: usize) -> (f64, f64) {
        (
            self.origin.0 + x as f64 * self.resolution,
            self.origin.1 + y as f64 * self.resolution,
        )
    }

    pub fn approx_eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && (self.resolution - other.resolution).abs() < 1e-9
            && (self.origin.0 - other.origin.0).abs() < 1e-6
            && (self.origin.1 - other.origin.1).abs() < 1e-6
    }

    /// Cell offset such that `self` cell + offset = `world` cell, assuming
    /// `self` was cropped out of `world` (same resolution).
    pub fn offset_cells_into(&self, world: &GridGeometry) -> (i64, i64) {
        (
            ((self.origin.0 - world.origin.0) / self.resolution).round() as i64,
            ((self.origin.1 - world.origin.1) / self.resolution).round() as i64,
        )
    }
}

/// Robot position in world meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Pose at the lattice point of a cell.
    pub fn from_cell(cell: (usize, usize), geom: &GridGeometry) -> Self {
        let (x, y) = geom.cell_to_world(cell.0, cell.1);
        Self { x, y }
    }

    pub fn cell(&self, geom: &GridGeometry) -> Option<(usize, usize)> {
        geom.world_to_cell(self.x, self.y)
    }
}

/// 2-D lattice of {FREE, OCCUPIED, UNKNOWN} cells.
///
/// Grids are not mutated after construction by any library operation;
/// merging and cropping return new grids.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    geom: GridGeometry,
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn filled(geom: GridGeometry, state: CellState) -> Self {
        let n = geom.cell_count();
        Self {
            geom,
            cells: vec![state; n],
        }
    }

    pub fn from_cells(geom: GridGeometry, cells: Vec<CellState>) -> Self {
        assert_eq!(cells.len(), geom.cell_count());
        Self { geom, cells }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn width(&self) -> usize {
        self.geom.width
    }

    pub fn height(&self) -> usize {
        self.geom.height
    }

    pub fn resolution(&self) -> f64 {
        self.geom.resolution
    }

    #[inline]
    fn idx(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.geom.width && y < self.geom.height);
        y * self.geom.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> CellState {
        self.cells[self.idx(x, y)]
    }

    /// Out-of-bounds reads come back as None.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> Option<CellState> {
        self.geom
            .contains_cell(x, y)
            .then(|| self.get(x as usize, y as usize))
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, state: CellState) {
        let i = self.idx(x, y);
        self.cells[i] = state;
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == state).count()
    }

    /// Cellwise occupied-dominant merge: OCCUPIED beats FREE beats UNKNOWN.
    pub fn accumulate(&self, other: &OccupancyGrid) -> Result<OccupancyGrid, GridError> {
        if !self.geom.approx_eq(&other.geom) {
            return Err(GridError::GeometryMismatch {
                a: (self.geom.width, self.geom.height),
                b: (other.geom.width, other.geom.height),
            });
        }
        let cells = self
            .cells
            .iter()
            .zip(&other.cells)
            .map(|(&a, &b)| merge_cell(a, b))
            .collect();
        Ok(OccupancyGrid::from_cells(self.geom, cells))
    }

    /// `size`x`size` window centered on the cell under `center`; cells outside
    /// the world are UNKNOWN. The crop's origin records the world offset, so
    /// `crop.geometry().offset_cells_into(world.geometry())` inverts the crop.
    pub fn crop_local(&self, center: &Pose, size: usize) -> Result<OccupancyGrid, GridError> {
        let cell = center
            .cell(&self.geom)
            .ok_or(GridError::PoseOutOfBounds(center.x, center.y))?;
        Ok(self.crop_at_cell(cell, size))
    }

    pub fn crop_at_cell(&self, center: (usize, usize), size: usize) -> OccupancyGrid {
        let half = (size / 2) as i64;
        let off_x = center.0 as i64 - half;
        let off_y = center.1 as i64 - half;
        let geom = GridGeometry {
            width: size,
            height: size,
            resolution: self.geom.resolution,
            origin: (
                self.geom.origin.0 + off_x as f64 * self.geom.resolution,
                self.geom.origin.1 + off_y as f64 * self.geom.resolution,
            ),
        };
        let mut cells = Vec::with_capacity(size * size);
        for y in 0..size as i64 {
            for x in 0..size as i64 {
                cells.push(
                    self.get_signed(x + off_x, y + off_y)
                        .unwrap_or(CellState::Unknown),
                );
            }
        }
        OccupancyGrid::from_cells(geom, cells)
    }
}

#[inline]
fn merge_cell(a: CellState, b: CellState) -> CellState {
    use CellState::*;
    match (a, b) {
        (Occupied, _) | (_, Occupied) => Occupied,
        (Free, _) | (_, Free) => Free,
        _ => Unknown,
    }
}

/// Truncated signed distance field over the same lattice.
///
/// Positive in traversable space, zero on walls, negative inside wall mass;
/// values are clamped to `[-gamma, +gamma]` (cell units).
#[derive(Clone, Debug, PartialEq)]
pub struct TsdfGrid {
    geom: GridGeometry,
    gamma: f64,
    values: Vec<f64>,
}

impl TsdfGrid {
    pub fn from_values(geom: GridGeometry, gamma: f64, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), geom.cell_count());
        assert!(gamma > 0.0);
        Self {
            geom,
            gamma,
            values,
        }
    }

    /// Evaluate `f(x, y)` at every lattice cell, clamped to the truncation band.
    pub fn from_fn(geom: GridGeometry, gamma: f64, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(geom.cell_count());
        for y in 0..geom.height {
            for x in 0..geom.width {
                values.push(f(x as f64, y as f64).clamp(-gamma, gamma));
            }
        }
        Self::from_values(geom, gamma, values)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn width(&self) -> usize {
        self.geom.width
    }

    pub fn height(&self) -> usize {
        self.geom.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.geom.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Window crop; out-of-world cells padded with `+gamma` (far free space).
    pub fn crop_at_cell(&self, center: (usize, usize), size: usize) -> TsdfGrid {
        let half = (size / 2) as i64;
        let off_x = center.0 as i64 - half;
        let off_y = center.1 as i64 - half;
        let geom = GridGeometry {
            width: size,
            height: size,
            resolution: self.geom.resolution,
            origin: (
                self.geom.origin.0 + off_x as f64 * self.geom.resolution,
                self.geom.origin.1 + off_y as f64 * self.geom.resolution,
            ),
        };
        let mut values = Vec::with_capacity(size * size);
        for y in 0..size as i64 {
            for x in 0..size as i64 {
                let v = if self.geom.contains_cell(x + off_x, y + off_y) {
                    self.get((x + off_x) as usize, (y + off_y) as usize)
                } else {
                    self.gamma
                };
                values.push(v);
            }
        }
        TsdfGrid::from_values(geom, self.gamma, values)
    }
}
