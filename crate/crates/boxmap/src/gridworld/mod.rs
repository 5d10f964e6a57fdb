//! Occupancy-grid worlds: simulated scanning, chamfer TSDF ground truth,
//! local cropping, map merging and PGM I/O.

mod chamfer;
mod grid;
mod pgm;
mod scan;

pub use chamfer::chamfer_tsdf;
pub use grid::{
    CellState, GridGeometry, OccupancyGrid, Pose, TsdfGrid, DEFAULT_GAMMA, DEFAULT_RESOLUTION,
};
pub use pgm::{
    occupancy_pgm_bytes, read_occupancy_pgm, read_pgm, read_tsdf_pgm, write_occupancy_pgm,
    write_tsdf_pgm, PgmContent,
};
pub use scan::{simulate_scan, LaserConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("pose ({0:.3}, {1:.3}) lies outside the grid")]
    PoseOutOfBounds(f64, f64),
    #[error("pose ({0:.3}, {1:.3}) sits inside an obstacle")]
    PoseInObstacle(f64, f64),
    #[error("grid contains no occupied cells")]
    NoWalls,
    #[error("grid geometries differ: {a:?} vs {b:?}")]
    GeometryMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },
}

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("unknown PGM encoding: {0}")]
    UnknownEncoding(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
