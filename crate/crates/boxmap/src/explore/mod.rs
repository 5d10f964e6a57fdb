//! The closed exploration loop: grid pathfinding, goal-selection
//! strategies on the planning graph, the frontier baseline, and episode
//! orchestration.

mod astar;
mod episode;
mod frontier;
mod strategy;

pub use astar::{astar, bfs_distances, snap_to_free};
pub use episode::{
    run_episode, EpisodeConfig, EpisodeFrame, EpisodeResult, EpisodeStatus, Strategy,
};
pub use frontier::{
    frontier_baseline_step, frontier_candidates, DistanceMode, FrontierCandidate, FrontierConfig,
};
pub use strategy::{held_karp_open, step_greedy, step_rh, MAX_EXACT_TOUR};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("start cell ({0}, {1}) is not free")]
    BadStart(usize, usize),
    #[error("{0} unvisited rooms exceed the exact tour budget")]
    TooManyRooms(usize),
    #[error(transparent)]
    Grid(#[from] crate::gridworld::GridError),
    #[error(transparent)]
    Predict(#[from] crate::predictor::PredictError),
}
