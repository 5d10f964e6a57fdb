//! Metrics and the experiment matrix runner.

mod matrix;
mod metrics;

pub use matrix::{
    run_matrix, BenchConfig, PredictorChoice, RunRow, RunSummary, StrategyStats,
};
pub use metrics::{boxmap_memory_bytes, grid_memory_bytes, hamming, ssim, SSIM_WINDOW};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Gen(#[from] crate::floorgen::GenError),
    #[error(transparent)]
    Grid(#[from] crate::gridworld::GridError),
    #[error(transparent)]
    Explore(#[from] crate::explore::ExploreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
