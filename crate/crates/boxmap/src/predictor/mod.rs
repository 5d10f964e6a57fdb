//! The pluggable box-prediction contract, with an oracle backed by
//! ground-truth annotations and a loss-minimizing fitter.

mod fitter;
mod oracle;

pub use fitter::{fit_boxes, FitError, FitOutcome, FitterConfig, FitterPredictor, TraceEntry};
pub use oracle::{oracle_predict, visible_fraction, OracleConfig, OraclePredictor};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxcalc::BoxSet;
use crate::gridworld::{GridError, OccupancyGrid};

/// Local-window placement: world cell = local cell + (dx, dy).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub dx: i64,
    pub dy: i64,
}

impl Frame {
    /// Recover the placement of a crop inside its source grid.
    pub fn of_crop(crop: &OccupancyGrid, world: &crate::gridworld::GridGeometry) -> Frame {
        let (dx, dy) = crop.geometry().offset_cells_into(world);
        Frame { dx, dy }
    }
}

/// Robot-centered model input: last step's rasterized graph plus the fresh
/// scan, in a shared local window.
#[derive(Clone, Debug)]
pub struct PredictorInput {
    pub prev_topo_raster: OccupancyGrid,
    pub laser_local: OccupancyGrid,
    pub frame: Frame,
}

impl PredictorInput {
    /// Union of prior raster and laser evidence.
    pub fn observed(&self) -> Result<OccupancyGrid, GridError> {
        self.prev_topo_raster.accumulate(&self.laser_local)
    }
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("oracle has no box annotations to draw from")]
    MissingAnnotations,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Anything that can turn observations into a box set in world coordinates.
pub trait Predictor: Send + Sync {
    fn predict(&self, input: &PredictorInput) -> Result<BoxSet, PredictError>;
}
