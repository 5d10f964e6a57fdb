//! Box-parametric TSDF mapping and graph-based exploration on simulated
//! 2-D floorplans.
//!
//! The map is a set of axis-aligned room boxes with soft existence gates,
//! plus door boxes connecting them. An analytic piecewise-linear map turns
//! the boxes into a truncated signed distance field, a family of losses
//! compares that field against chamfer ground truth, and predicted box sets
//! drive topological/planning graphs for room-by-room exploration.

pub mod bench;
pub mod boxcalc;
pub mod explore;
pub mod floorgen;
pub mod gridworld;
pub mod losses;
pub mod predictor;
pub mod topograph;

pub use boxcalc::{BoxSet, DoorBox, RoomBox};
pub use gridworld::{CellState, GridGeometry, OccupancyGrid, Pose, TsdfGrid};
