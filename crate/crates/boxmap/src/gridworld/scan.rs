//! Simulated 2-D laser scanning over an occupancy-grid world.

use serde::{Deserialize, Serialize};

use super::grid::{CellState, OccupancyGrid, Pose};
use super::GridError;

/// Range scanner parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LaserConfig {
    /// Maximum range in meters.
    pub range_max: f64,
    /// Number of rays spread over the field of view.
    pub num_rays: usize,
    /// Field of view in degrees.
    pub fov_deg: f64,
}

impl Default for LaserConfig {
    fn default() -> Self {
        Self {
            range_max: 9.0,
            num_rays: 360,
            fov_deg: 360.0,
        }
    }
}

/// Cast `cfg.num_rays` rays from `pose` and return what they reveal.
///
/// Cells traversed by a ray up to its first OCCUPIED hit (or out to
/// `range_max`) come back FREE, the hit cell OCCUPIED, everything else
/// UNKNOWN. Rays stop silently at UNKNOWN world cells (nothing there to
/// reflect off) and at the grid edge. Traversal is supercover, so a
/// diagonal ray cannot slip between two corner-adjacent wall cells.
pub fn simulate_scan(
    world: &OccupancyGrid,
    pose: &Pose,
    cfg: &LaserConfig,
) -> Result<OccupancyGrid, GridError> {
    let (cx, cy) = pose
        .cell(world.geometry())
        .ok_or(GridError::PoseOutOfBounds(pose.x, pose.y))?;
    if world.get(cx, cy) == CellState::Occupied {
        return Err(GridError::PoseInObstacle(pose.x, pose.y));
    }
    let mut out = OccupancyGrid::filled(*world.geometry(), CellState::Unknown);
    if world.get(cx, cy) == CellState::Free {
        out.set(cx, cy, CellState::Free);
    }

    let range_cells = cfg.range_max / world.resolution();
    let fov = cfg.fov_deg.to_radians();
    for k in 0..cfg.num_rays {
        let theta = fov * k as f64 / cfg.num_rays as f64;
        cast_ray(world, &mut out, (cx, cy), theta.cos(), theta.sin(), range_cells);
    }
    Ok(out)
}

/// Outcome of the ray entering one cell.
enum Step {
    Continue,
    Stop,
}

fn visit(world: &OccupancyGrid, out: &mut OccupancyGrid, x: i64, y: i64) -> Step {
    match world.get_signed(x, y) {
        Some(CellState::Free) => {
            out.set(x as usize, y as usize, CellState::Free);
            Step::Continue
        }
        Some(CellState::Occupied) => {
            out.set(x as usize, y as usize, CellState::Occupied);
            Step::Stop
        }
        // Void in the ground truth: nothing to reflect, nothing learned.
        Some(CellState::Unknown) | None => Step::Stop,
    }
}

/// Supercover DDA from the lattice point of `start` along (dx, dy).
///
/// Cells are unit squares centered on lattice points, so boundaries sit at
/// half-integers. When the ray crosses exactly through a cell corner both
/// side cells are visited before the diagonal one; a wall touching the
/// corner therefore always blocks the ray.
fn cast_ray(
    world: &OccupancyGrid,
    out: &mut OccupancyGrid,
    start: (usize, usize),
    dx: f64,
    dy: f64,
    range_cells: f64,
) {
    const CORNER_EPS: f64 = 1e-9;
    let (mut ix, mut iy) = (start.0 as i64, start.1 as i64);
    let step_x: i64 = if dx > 0.0 {
        1
    } else if dx < 0.0 {
        -1
    } else {
        0
    };
    let step_y: i64 = if dy > 0.0 {
        1
    } else if dy < 0.0 {
        -1
    } else {
        0
    };
    let t_delta_x = if step_x != 0 { 1.0 / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if step_y != 0 { 1.0 / dy.abs() } else { f64::INFINITY };
    // First boundary is half a cell away from the lattice-point start.
    let mut t_max_x = if step_x != 0 { 0.5 * t_delta_x } else { f64::INFINITY };
    let mut t_max_y = if step_y != 0 { 0.5 * t_delta_y } else { f64::INFINITY };

    loop {
        let corner = t_max_x.is_finite()
            && t_max_y.is_finite()
            && (t_max_x - t_max_y).abs() < CORNER_EPS;
        if corner {
            if t_max_x > range_cells {
                return;
            }
            // The ray passes exactly through the shared corner of four
            // cells. The two side cells are grazed: free ones are observed
            // in passing, any wall among them stops the ray.
            let side_a = (ix + step_x, iy);
            let side_b = (ix, iy + step_y);
            let a = world.get_signed(side_a.0, side_a.1);
            let b = world.get_signed(side_b.0, side_b.1);
            if a == Some(CellState::Free) {
                out.set(side_a.0 as usize, side_a.1 as usize, CellState::Free);
            }
            if b == Some(CellState::Free) {
                out.set(side_b.0 as usize, side_b.1 as usize, CellState::Free);
            }
            let hit_a = a == Some(CellState::Occupied);
            let hit_b = b == Some(CellState::Occupied);
            if hit_a {
                out.set(side_a.0 as usize, side_a.1 as usize, CellState::Occupied);
            }
            if hit_b {
                out.set(side_b.0 as usize, side_b.1 as usize, CellState::Occupied);
            }
            if hit_a || hit_b {
                // A sealed corner still strikes the far cell's corner point
                // when that cell is wall too (e.g. the corner of a room).
                if hit_a
                    && hit_b
                    && world.get_signed(ix + step_x, iy + step_y) == Some(CellState::Occupied)
                {
                    out.set(
                        (ix + step_x) as usize,
                        (iy + step_y) as usize,
                        CellState::Occupied,
                    );
                }
                return;
            }
            ix += step_x;
            iy += step_y;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
            if let Step::Stop = visit(world, out, ix, iy) {
                return;
            }
        } else if t_max_x < t_max_y {
            if t_max_x > range_cells {
                return;
            }
            ix += step_x;
            t_max_x += t_delta_x;
            if let Step::Stop = visit(world, out, ix, iy) {
                return;
            }
        } else {
            if t_max_y > range_cells {
                return;
            }
            iy += step_y;
            t_max_y += t_delta_y;
            if let Step::Stop = visit(world, out, ix, iy) {
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::grid::GridGeometry;

    /// Square world with a 1-cell OCCUPIED border and FREE interior.
    fn walled_world(size: usize) -> OccupancyGrid {
        let mut g = OccupancyGrid::filled(GridGeometry::square(size), CellState::Free);
        for i in 0..size {
            g.set(i, 0, CellState::Occupied);
            g.set(i, size - 1, CellState::Occupied);
            g.set(0, i, CellState::Occupied);
            g.set(size - 1, i, CellState::Occupied);
        }
        g
    }

    fn long_range() -> LaserConfig {
        LaserConfig {
            range_max: 100.0 * DEFAULT_RES,
            num_rays: 360,
            fov_deg: 360.0,
        }
    }

    const DEFAULT_RES: f64 = super::super::grid::DEFAULT_RESOLUTION;

    fn pose_at(cell: (usize, usize), world: &OccupancyGrid) -> Pose {
        Pose::from_cell(cell, world.geometry())
    }

    #[test]
    fn empty_room_fully_visible() {
        let world = walled_world(21);
        let scan = simulate_scan(&world, &pose_at((10, 10), &world), &long_range()).unwrap();
        for y in 0..21 {
            for x in 0..21 {
                assert_eq!(scan.get(x, y), world.get(x, y), "cell ({x},{y})");
            }
        }
    }

    #[test]
    fn full_height_wall_occludes_far_side() {
        let mut world = walled_world(21);
        for y in 0..21 {
            world.set(12, y, CellState::Occupied);
        }
        let scan = simulate_scan(&world, &pose_at((5, 10), &world), &long_range()).unwrap();
        for y in 0..21 {
            for x in 13..21 {
                assert_eq!(scan.get(x, y), CellState::Unknown, "cell ({x},{y})");
            }
        }
    }

    #[test]
    fn single_obstacle_shadows_its_ray() {
        // Obstacle 10 cells east of the pose on the horizontal ray.
        let mut world = walled_world(41);
        world.set(30, 20, CellState::Occupied);
        let scan = simulate_scan(&world, &pose_at((20, 20), &world), &long_range()).unwrap();
        for x in 21..30 {
            assert_eq!(scan.get(x, 20), CellState::Free, "x={x}");
        }
        assert_eq!(scan.get(30, 20), CellState::Occupied);
        for x in 31..40 {
            assert_eq!(scan.get(x, 20), CellState::Unknown, "x={x}");
        }
    }

    #[test]
    fn scan_is_sound_against_world() {
        let mut world = walled_world(31);
        for (x, y) in [(8, 14), (15, 7), (22, 22), (15, 16), (16, 15)] {
            world.set(x, y, CellState::Occupied);
        }
        let scan = simulate_scan(&world, &pose_at((4, 4), &world), &long_range()).unwrap();
        for y in 0..31 {
            for x in 0..31 {
                match scan.get(x, y) {
                    CellState::Free => assert_eq!(world.get(x, y), CellState::Free),
                    CellState::Occupied => assert_eq!(world.get(x, y), CellState::Occupied),
                    CellState::Unknown => {}
                }
            }
        }
    }

    #[test]
    fn diagonal_corner_cannot_be_tunneled() {
        // Two walls touching corner-to-corner across the exact 45-degree ray.
        let mut world = walled_world(21);
        world.set(11, 10, CellState::Occupied);
        world.set(10, 11, CellState::Occupied);
        let scan = simulate_scan(&world, &pose_at((10, 10), &world), &long_range()).unwrap();
        // The diagonal cell past the pinch must not have been reached.
        assert_ne!(scan.get(11, 11), CellState::Free);
        assert_eq!(scan.get(12, 12), CellState::Unknown);
    }

    #[test]
    fn pose_errors() {
        let world = walled_world(9);
        let r = simulate_scan(&world, &pose_at((0, 0), &world), &long_range());
        assert!(matches!(r, Err(GridError::PoseInObstacle(..))));
        let outside = Pose::new(-5.0, -5.0);
        let r = simulate_scan(&world, &outside, &long_range());
        assert!(matches!(r, Err(GridError::PoseOutOfBounds(..))));
    }

    #[test]
    fn range_limits_visibility() {
        let world = walled_world(61);
        let cfg = LaserConfig {
            range_max: 5.0 * DEFAULT_RES,
            ..long_range()
        };
        let scan = simulate_scan(&world, &pose_at((30, 30), &world), &cfg).unwrap();
        assert_eq!(scan.get(30, 34), CellState::Free);
        assert_eq!(scan.get(30, 37), CellState::Unknown);
        assert_eq!(scan.get(1, 1), CellState::Unknown);
    }
}
