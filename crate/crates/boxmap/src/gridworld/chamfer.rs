//! 3-4 chamfer distance transform and the signed TSDF built from it.

use super::grid::{CellState, OccupancyGrid, TsdfGrid};
use super::GridError;

const ORTHO: u32 = 3;
const DIAG: u32 = 4;
const INF: u32 = u32::MAX / 2;

/// Two-pass 3-4 chamfer transform of distance-to-nearest-seed, in thirds of
/// a cell (divide by 3 for cell units).
fn chamfer_pass(width: usize, height: usize, mut dist: Vec<u32>) -> Vec<u32> {
    let idx = |x: usize, y: usize| y * width + x;
    // Forward: left/up neighborhood.
    for y in 0..height {
        for x in 0..width {
            let mut d = dist[idx(x, y)];
            if x > 0 {
                d = d.min(dist[idx(x - 1, y)] + ORTHO);
            }
            if y > 0 {
                d = d.min(dist[idx(x, y - 1)] + ORTHO);
                if x > 0 {
                    d = d.min(dist[idx(x - 1, y - 1)] + DIAG);
                }
                if x + 1 < width {
                    d = d.min(dist[idx(x + 1, y - 1)] + DIAG);
                }
            }
            dist[idx(x, y)] = d;
        }
    }
    // Backward: right/down neighborhood.
    for y in (0..height).rev() {
        for x in (0..width).rev() {
            let mut d = dist[idx(x, y)];
            if x + 1 < width {
                d = d.min(dist[idx(x + 1, y)] + ORTHO);
            }
            if y + 1 < height {
                d = d.min(dist[idx(x, y + 1)] + ORTHO);
                if x + 1 < width {
                    d = d.min(dist[idx(x + 1, y + 1)] + DIAG);
                }
                if x > 0 {
                    d = d.min(dist[idx(x - 1, y + 1)] + DIAG);
                }
            }
            dist[idx(x, y)] = d;
        }
    }
    dist
}

/// Signed chamfer TSDF of a world: +distance to the nearest OCCUPIED cell on
/// FREE/UNKNOWN cells, 0 on wall-surface cells, −distance to the nearest
/// non-OCCUPIED cell (less one) inside thicker wall mass. Clamped to ±gamma.
///
/// UNKNOWN cells carry no wall evidence: distances are measured to OCCUPIED
/// cells only.
pub fn chamfer_tsdf(grid: &OccupancyGrid, gamma: f64) -> Result<TsdfGrid, GridError> {
    let (w, h) = (grid.width(), grid.height());
    let mut to_wall = vec![INF; w * h];
    let mut to_open = vec![INF; w * h];
    let mut any_wall = false;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if grid.get(x, y) == CellState::Occupied {
                to_wall[i] = 0;
                any_wall = true;
            } else {
                to_open[i] = 0;
            }
        }
    }
    if !any_wall {
        return Err(GridError::NoWalls);
    }
    let to_wall = chamfer_pass(w, h, to_wall);
    let to_open = chamfer_pass(w, h, to_open);

    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let v = if grid.get(x, y) == CellState::Occupied {
                // Surface wall cells (one step from open space) sit on the
                // zero level set; deeper cells go negative.
                -((to_open[i] as f64 / ORTHO as f64 - 1.0).max(0.0))
            } else {
                to_wall[i] as f64 / ORTHO as f64
            };
            values.push(v.clamp(-gamma, gamma));
        }
    }
    Ok(TsdfGrid::from_values(*grid.geometry(), gamma, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::grid::GridGeometry;

    fn grid_with_walls(size: usize, walls: &[(usize, usize)]) -> OccupancyGrid {
        let mut g = OccupancyGrid::filled(GridGeometry::square(size), CellState::Free);
        for &(x, y) in walls {
            g.set(x, y, CellState::Occupied);
        }
        g
    }

    /// Exact Euclidean distance-to-nearest-wall, brute force.
    fn euclid_oracle(grid: &OccupancyGrid, x: usize, y: usize) -> f64 {
        let mut best = f64::INFINITY;
        for wy in 0..grid.height() {
            for wx in 0..grid.width() {
                if grid.get(wx, wy) == CellState::Occupied {
                    let d = ((wx as f64 - x as f64).powi(2) + (wy as f64 - y as f64).powi(2))
                        .sqrt();
                    best = best.min(d);
                }
            }
        }
        best
    }

    #[test]
    fn adjacent_cell_distance_is_one() {
        let g = grid_with_walls(9, &[(4, 4)]);
        let t = chamfer_tsdf(&g, 10.0).unwrap();
        assert_eq!(t.get(5, 4), 1.0);
        assert_eq!(t.get(4, 5), 1.0);
        assert_eq!(euclid_oracle(&g, 5, 4), 1.0);
    }

    #[test]
    fn wall_cell_is_zero() {
        let g = grid_with_walls(9, &[(4, 4)]);
        let t = chamfer_tsdf(&g, 10.0).unwrap();
        assert_eq!(t.get(4, 4), 0.0);
    }

    #[test]
    fn far_cells_clamp_to_gamma() {
        let g = grid_with_walls(32, &[(0, 0)]);
        let t = chamfer_tsdf(&g, 5.0).unwrap();
        assert_eq!(t.get(31, 31), 5.0);
    }

    #[test]
    fn no_walls_is_an_error() {
        let g = OccupancyGrid::filled(GridGeometry::square(4), CellState::Free);
        assert!(matches!(chamfer_tsdf(&g, 3.0), Err(GridError::NoWalls)));
    }

    #[test]
    fn thick_wall_interior_goes_negative() {
        let mut g = OccupancyGrid::filled(GridGeometry::square(9), CellState::Free);
        for y in 2..7 {
            for x in 2..7 {
                g.set(x, y, CellState::Occupied);
            }
        }
        let t = chamfer_tsdf(&g, 10.0).unwrap();
        assert_eq!(t.get(2, 4), 0.0); // surface
        assert_eq!(t.get(3, 4), -1.0); // one cell deep
        assert_eq!(t.get(4, 4), -2.0); // block center
    }

    #[test]
    fn unknown_cells_count_as_open_space() {
        let mut g = grid_with_walls(9, &[(4, 4)]);
        g.set(5, 4, CellState::Unknown);
        let t = chamfer_tsdf(&g, 10.0).unwrap();
        assert_eq!(t.get(5, 4), 1.0); // positive like free space
    }

    #[test]
    fn chamfer_tracks_euclidean_within_known_bound() {
        // 3-4/3 chamfer stays within ~6% of Euclidean; the spec allows 8%.
        let mut g = OccupancyGrid::filled(GridGeometry::square(32), CellState::Free);
        for &(x, y) in &[(3, 3), (20, 7), (9, 25), (28, 28), (16, 16)] {
            g.set(x, y, CellState::Occupied);
        }
        let t = chamfer_tsdf(&g, 1e9).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                if g.get(x, y) == CellState::Occupied {
                    continue;
                }
                let exact = euclid_oracle(&g, x, y);
                let got = t.get(x, y);
                assert!(
                    (got - exact).abs() <= 0.08 * exact.max(1.0),
                    "({x},{y}): chamfer {got} vs euclid {exact}"
                );
            }
        }
    }
}
