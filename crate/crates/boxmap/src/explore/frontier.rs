//! Frontier-based exploration baseline: reward-ranked frontier segment
//! centroids over the accumulated occupancy map.

use serde::{Deserialize, Serialize};

use crate::gridworld::{CellState, OccupancyGrid};

use super::astar::bfs_distances;

/// How the travel-cost term of the frontier reward is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Shortest-path length over FREE cells (default: straight-line
    /// distances through walls would corrupt the reward).
    Path,
    Euclidean,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontierConfig {
    /// Information-gain weight in the reward `lambda * I - dist`.
    pub lambda: f64,
    /// Radius (cells) of the disc whose UNKNOWN count is the information.
    pub sensor_radius: f64,
    pub distance: DistanceMode,
}

impl Default for FrontierConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            sensor_radius: 9.0 / crate::gridworld::DEFAULT_RESOLUTION,
            distance: DistanceMode::Path,
        }
    }
}

/// One frontier segment: FREE cells bordering UNKNOWN, 8-connected.
#[derive(Clone, Debug)]
pub struct FrontierCandidate {
    /// Segment centroid snapped to the nearest member cell.
    pub cell: (usize, usize),
    pub size: usize,
}

fn is_frontier(grid: &OccupancyGrid, x: usize, y: usize) -> bool {
    if grid.get(x, y) != CellState::Free {
        return false;
    }
    [(0i64, -1i64), (-1, 0), (1, 0), (0, 1)].iter().any(|&(dx, dy)| {
        grid.get_signed(x as i64 + dx, y as i64 + dy) == Some(CellState::Unknown)
    })
}

/// Group frontier cells into 8-connected segments and snap each centroid to
/// its nearest member (ties by (y, x)).
pub fn frontier_candidates(grid: &OccupancyGrid) -> Vec<FrontierCandidate> {
    let (w, h) = (grid.width(), grid.height());
    let mut frontier = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            frontier[y * w + x] = is_frontier(grid, x, y);
        }
    }
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            if !frontier[sy * w + sx] || seen[sy * w + sx] {
                continue;
            }
            let mut cells = Vec::new();
            let mut queue = std::collections::VecDeque::from([(sx, sy)]);
            seen[sy * w + sx] = true;
            while let Some((x, y)) = queue.pop_front() {
                cells.push((x, y));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if frontier[ny * w + nx] && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            let n = cells.len() as f64;
            let cx = cells.iter().map(|c| c.0 as f64).sum::<f64>() / n;
            let cy = cells.iter().map(|c| c.1 as f64).sum::<f64>() / n;
            let snapped = cells
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let da = (a.0 as f64 - cx).powi(2) + (a.1 as f64 - cy).powi(2);
                    let db = (b.0 as f64 - cx).powi(2) + (b.1 as f64 - cy).powi(2);
                    da.total_cmp(&db).then((a.1, a.0).cmp(&(b.1, b.0)))
                })
                .unwrap();
            out.push(FrontierCandidate {
                cell: snapped,
                size: cells.len(),
            });
        }
    }
    out
}

/// Count of UNKNOWN cells within the sensor disc around a cell.
fn information(grid: &OccupancyGrid, cell: (usize, usize), radius: f64) -> usize {
    let r = radius.ceil() as i64;
    let r2 = radius * radius;
    let mut count = 0;
    for dy in -r..=r {
        for dx in -r..=r {
            if (dx * dx + dy * dy) as f64 > r2 {
                continue;
            }
            if grid.get_signed(cell.0 as i64 + dx, cell.1 as i64 + dy)
                == Some(CellState::Unknown)
            {
                count += 1;
            }
        }
    }
    count
}

/// Pick the frontier goal maximizing `lambda * I - dist`.
///
/// Candidates within one cell (Chebyshev) of a previous measurement pose
/// are skipped: a frontier that survives being scanned from point-blank is
/// an occluded pocket and re-selecting it would loop forever. Unreachable
/// candidates are skipped in path mode. None means exploration is done.
pub fn frontier_baseline_step(
    grid: &OccupancyGrid,
    robot: (usize, usize),
    cfg: &FrontierConfig,
    measured: &[(usize, usize)],
) -> Option<(usize, usize)> {
    let candidates = frontier_candidates(grid);
    let path_dist = match cfg.distance {
        DistanceMode::Path => Some(bfs_distances(grid, robot)),
        DistanceMode::Euclidean => None,
    };
    let mut best: Option<(f64, (usize, usize))> = None;
    for cand in &candidates {
        let (x, y) = cand.cell;
        if measured
            .iter()
            .any(|&(mx, my)| mx.abs_diff(x) <= 1 && my.abs_diff(y) <= 1)
        {
            continue;
        }
        let dist = match &path_dist {
            Some(d) => match d[y * grid.width() + x] {
                Some(steps) => steps as f64,
                None => continue, // unreachable frontier
            },
            None => {
                let dx = x as f64 - robot.0 as f64;
                let dy = y as f64 - robot.1 as f64;
                (dx * dx + dy * dy).sqrt()
            }
        };
        let info = information(grid, cand.cell, cfg.sensor_radius) as f64;
        let reward = cfg.lambda * info - dist;
        let better = match best {
            None => true,
            Some((r, c)) => reward > r || (reward == r && (y, x) < (c.1, c.0)),
        };
        if better {
            best = Some((reward, cand.cell));
        }
    }
    best.map(|(_, c)| c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::GridGeometry;

    /// Free plaza with unknown right half behind a gap, plus a small
    /// unknown alcove at the top.
    fn scene() -> OccupancyGrid {
        let mut g = OccupancyGrid::filled(GridGeometry::square(24), CellState::Free);
        for y in 0..24 {
            for x in 14..24 {
                g.set(x, y, CellState::Unknown);
            }
        }
        for x in 4..10 {
            g.set(x, 0, CellState::Unknown);
        }
        g
    }

    #[test]
    fn single_frontier_is_chosen_regardless_of_lambda() {
        let mut g = OccupancyGrid::filled(GridGeometry::square(16), CellState::Free);
        for y in 0..16 {
            g.set(15, y, CellState::Unknown);
        }
        for lambda in [0.0, 0.02, 5.0] {
            let cfg = FrontierConfig {
                lambda,
                ..FrontierConfig::default()
            };
            let goal = frontier_baseline_step(&g, (2, 2), &cfg, &[]).unwrap();
            assert_eq!(goal.0, 14);
        }
    }

    #[test]
    fn higher_information_wins_at_equal_distance() {
        let g = scene();
        // Robot equidistant-ish from both frontiers; within the shrunk
        // sensor disc the right unknown region dwarfs the alcove.
        let cfg = FrontierConfig {
            lambda: 10.0,
            sensor_radius: 6.0,
            ..FrontierConfig::default()
        };
        let goal = frontier_baseline_step(&g, (7, 12), &cfg, &[]).unwrap();
        assert_eq!(goal.0, 13, "expected the big right frontier, got {goal:?}");
    }

    #[test]
    fn lambda_zero_reduces_to_nearest_frontier() {
        let g = scene();
        let cfg = FrontierConfig {
            lambda: 0.0,
            ..FrontierConfig::default()
        };
        // Robot right next to the alcove.
        let goal = frontier_baseline_step(&g, (6, 2), &cfg, &[]).unwrap();
        assert_eq!(goal.1, 1, "nearest frontier is the alcove row, got {goal:?}");
    }

    #[test]
    fn no_frontier_means_done() {
        let g = OccupancyGrid::filled(GridGeometry::square(8), CellState::Free);
        assert!(frontier_baseline_step(&g, (2, 2), &FrontierConfig::default(), &[]).is_none());
    }

    #[test]
    fn measured_pockets_are_skipped() {
        let g = scene();
        let cfg = FrontierConfig {
            lambda: 0.0,
            ..FrontierConfig::default()
        };
        let first = frontier_baseline_step(&g, (6, 2), &cfg, &[]).unwrap();
        let next = frontier_baseline_step(&g, (6, 2), &cfg, &[first]).unwrap();
        assert_ne!(first, next);
    }

    #[test]
    fn segments_are_grouped_with_centroid_snapped_to_member() {
        let g = scene();
        let cands = frontier_candidates(&g);
        assert_eq!(cands.len(), 2);
        for c in &cands {
            assert!(is_frontier(&g, c.cell.0, c.cell.1));
        }
        let big = cands.iter().max_by_key(|c| c.size).unwrap();
        assert_eq!(big.cell.0, 13);
        assert_eq!(big.cell.1, 11); // mid-column of a 24-tall wall, snapped
    }
}
