//! Box primitives and the analytic piecewise-linear map from box parameters
//! to truncated signed distance fields.
//!
//! A room is an axis-aligned box `(x0, y0, x1, y1)` with a soft existence
//! gate `q`; its TSDF along one axis is built from four ReLU terms, the two
//! axes combine by `min`, and multiple gated boxes merge by `max`. Doors are
//! L1-norm diamonds `ReLU(s/2 - |p - c|_1)`. Everything stays differentiable
//! in the box parameters (up to kinks), which is what the loss family runs on.

use serde::{Deserialize, Serialize};

use crate::gridworld::{CellState, GridGeometry, OccupancyGrid};

/// Gates at or above this are treated as "the box exists" wherever a hard
/// decision is needed (adjacency, rasterization, graph building).
pub const GATE_THRESHOLD: f64 = 0.5;

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Axis-aligned room box in continuous cell coordinates, walls on the edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    /// Existence gate in [0, 1].
    pub q: f64,
}

impl RoomBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64, q: f64) -> Self {
        Self { x0, y0, x1, y1, q }
    }

    /// Degenerate gated-off box used to pad a set up to its budget.
    pub fn inactive() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn is_active(&self) -> bool {
        self.q >= GATE_THRESHOLD
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// Inclusive-boundary containment.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        px >= self.x0 && px <= self.x1 && py >= self.y0 && py <= self.y1
    }

    /// Positive-area interior intersection (shared edges do not count).
    pub fn overlaps(&self, other: &RoomBox) -> bool {
        let iw = self.x1.min(other.x1) - self.x0.max(other.x0);
        let ih = self.y1.min(other.y1) - self.y0.max(other.y0);
        iw > 0.0 && ih > 0.0
    }
}

/// Door box: an L1 diamond of size `s` centered on a shared wall, linking
/// two rooms by index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoorBox {
    pub cx: f64,
    pub cy: f64,
    pub s: f64,
    pub q: f64,
    /// Indices into the owning BoxSet's rooms.
    pub rooms: (usize, usize),
}

impl DoorBox {
    pub fn new(cx: f64, cy: f64, s: f64, q: f64, rooms: (usize, usize)) -> Self {
        Self { cx, cy, s, q, rooms }
    }

    pub fn is_active(&self) -> bool {
        self.q >= GATE_THRESHOLD
    }
}

/// A fixed-budget set of room boxes plus door boxes.
///
/// The room list always has exactly `budget` entries; unused slots are
/// carried as degenerate boxes with `q ~ 0`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxSet {
    pub rooms: Vec<RoomBox>,
    pub doors: Vec<DoorBox>,
}

impl BoxSet {
    /// Empty set padded to `budget` inactive rooms.
    pub fn with_budget(budget: usize) -> Self {
        Self {
            rooms: vec![RoomBox::inactive(); budget],
            doors: Vec::new(),
        }
    }

    /// Wrap explicit rooms, padding with inactive boxes up to `budget`.
    pub fn from_rooms(mut rooms: Vec<RoomBox>, budget: usize) -> Self {
        while rooms.len() < budget {
            rooms.push(RoomBox::inactive());
        }
        Self {
            rooms,
            doors: Vec::new(),
        }
    }

    pub fn budget(&self) -> usize {
        self.rooms.len()
    }

    pub fn active_rooms(&self) -> impl Iterator<Item = (usize, &RoomBox)> {
        self.rooms.iter().enumerate().filter(|(_, r)| r.is_active())
    }

    pub fn active_doors(&self) -> impl Iterator<Item = (usize, &DoorBox)> {
        self.doors.iter().enumerate().filter(|(_, d)| d.is_active())
    }

    /// All gates, rooms first then doors (the set Q of the gate loss).
    pub fn gates(&self) -> Vec<f64> {
        self.rooms
            .iter()
            .map(|r| r.q)
            .chain(self.doors.iter().map(|d| d.q))
            .collect()
    }

    /// Translate every box by an offset (cell units).
    pub fn translated(&self, dx: f64, dy: f64) -> BoxSet {
        let rooms = self
            .rooms
            .iter()
            .map(|r| RoomBox::new(r.x0 + dx, r.y0 + dy, r.x1 + dx, r.y1 + dy, r.q))
            .collect();
        let doors = self
            .doors
            .iter()
            .map(|d| DoorBox::new(d.cx + dx, d.cy + dy, d.s, d.q, d.rooms))
            .collect();
        BoxSet { rooms, doors }
    }
}

/// Truncated signed distance to the nearer of the two walls at `x0`/`x1`
/// along one axis, as a sum of ReLU terms.
///
/// Positive between the walls, zero on them, clamped to ±gamma outside.
#[inline]
pub fn f1d(x: f64, x0: f64, x1: f64, gamma: f64) -> f64 {
    let t0 = relu(x - x0 + gamma) - relu(x - x0 - gamma) - gamma;
    let t1 = -relu(x - x1 + gamma) + relu(x - x1 - gamma) + gamma;
    t0.min(t1)
}

/// 2-D box TSDF: min of the per-axis distances.
#[inline]
pub fn box_tsdf(b: &RoomBox, px: f64, py: f64, gamma: f64) -> f64 {
    f1d(px, b.x0, b.x1, gamma).min(f1d(py, b.y0, b.y1, gamma))
}

/// Gated max-merge of all room boxes: `max_i(q_i * (f_i + gamma) - gamma)`.
///
/// A box with q = 0 contributes the constant -gamma; an empty set is -gamma
/// everywhere.
pub fn composite_tsdf(boxes: &BoxSet, px: f64, py: f64, gamma: f64) -> f64 {
    let mut best = -gamma;
    for b in &boxes.rooms {
        let g = b.q * (box_tsdf(b, px, py, gamma) + gamma) - gamma;
        if g > best {
            best = g;
        }
    }
    best
}

/// L1 cone of height s/2 at the door center.
#[inline]
pub fn door_diamond(d: &DoorBox, px: f64, py: f64) -> f64 {
    relu(d.s / 2.0 - ((px - d.cx).abs() + (py - d.cy).abs()))
}

/// Pairwise intersection-over-union of two boxes' areas.
pub fn iou(a: &RoomBox, b: &RoomBox) -> f64 {
    let iw = relu(a.x1.min(b.x1) - a.x0.max(b.x0));
    let ih = relu(a.y1.min(b.y1) - a.y0.max(b.y0));
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Symmetric, irreflexive room adjacency.
///
/// Entry (i, j) is true when some edge of room i faces the opposite edge of
/// room j with perpendicular gap <= `eps_gap` and shared overlap length
/// >= `min_overlap`, and both gates clear the activity threshold.
pub fn room_adjacency(boxes: &BoxSet, eps_gap: f64, min_overlap: f64) -> Vec<Vec<bool>> {
    let m = boxes.rooms.len();
    let mut adj = vec![vec![false; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let (a, b) = (&boxes.rooms[i], &boxes.rooms[j]);
            if !a.is_active() || !b.is_active() {
                continue;
            }
            if edges_face(a, b, eps_gap, min_overlap) {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        }
    }
    adj
}

fn edges_face(a: &RoomBox, b: &RoomBox, eps_gap: f64, min_overlap: f64) -> bool {
    let overlap_y = a.y1.min(b.y1) - a.y0.max(b.y0);
    let overlap_x = a.x1.min(b.x1) - a.x0.max(b.x0);
    // a.E vs b.W and a.W vs b.E
    if overlap_y >= min_overlap
        && ((a.x1 - b.x0).abs() <= eps_gap || (a.x0 - b.x1).abs() <= eps_gap)
    {
        return true;
    }
    // a.S vs b.N and a.N vs b.S
    if overlap_x >= min_overlap
        && ((a.y1 - b.y0).abs() <= eps_gap || (a.y0 - b.y1).abs() <= eps_gap)
    {
        return true;
    }
    false
}

/// Paint a box set into an occupancy grid.
///
/// Cells strictly inside any active room are FREE, cells on an active room
/// boundary are OCCUPIED unless an active door diamond carves them FREE,
/// everything else stays UNKNOWN. Box coordinates are rounded to the lattice.
pub fn rasterize(boxes: &BoxSet, geom: &GridGeometry) -> OccupancyGrid {
    let (w, h) = (geom.width as i64, geom.height as i64);
    let mut interior = vec![false; geom.cell_count()];
    let mut boundary = vec![false; geom.cell_count()];
    for (_, room) in boxes.active_rooms() {
        let x0 = room.x0.round() as i64;
        let y0 = room.y0.round() as i64;
        let x1 = room.x1.round() as i64;
        let y1 = room.y1.round() as i64;
        if x1 < x0 || y1 < y0 {
            continue;
        }
        for y in y0.max(0)..=y1.min(h - 1) {
            for x in x0.max(0)..=x1.min(w - 1) {
                let idx = (y * w + x) as usize;
                if x == x0 || x == x1 || y == y0 || y == y1 {
                    boundary[idx] = true;
                } else {
                    interior[idx] = true;
                }
            }
        }
    }
    let mut grid = OccupancyGrid::filled(*geom, CellState::Unknown);
    for y in 0..geom.height {
        for x in 0..geom.width {
            let idx = y * geom.width + x;
            if interior[idx] {
                // Walls of one box falling inside another box of the same
                // room union are open space, handled by this priority.
                grid.set(x, y, CellState::Free);
            } else if boundary[idx] {
                let carved = boxes
                    .active_doors()
                    .any(|(_, d)| door_diamond(d, x as f64, y as f64) > 0.0);
                grid.set(
                    x,
                    y,
                    if carved {
                        CellState::Free
                    } else {
                        CellState::Occupied
                    },
                );
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn f1d_matches_hand_evaluation() {
        assert_relative_eq!(f1d(4.0, 2.0, 8.0, 3.0), 2.0);
        assert_relative_eq!(f1d(2.0, 2.0, 8.0, 3.0), 0.0);
        assert_relative_eq!(f1d(-5.0, 2.0, 8.0, 3.0), -3.0);
        // Deep interior saturates at +gamma.
        assert_relative_eq!(f1d(50.0, 0.0, 100.0, 3.0), 3.0);
    }

    #[test]
    fn box_tsdf_examples() {
        let b = RoomBox::new(0.0, 0.0, 10.0, 10.0, 1.0);
        assert_relative_eq!(box_tsdf(&b, 5.0, 1.0, 3.0), 1.0);
        assert_relative_eq!(box_tsdf(&b, 0.0, 4.0, 3.0), 0.0); // on an edge
        assert_relative_eq!(box_tsdf(&b, 5.0, 5.0, 3.0), 3.0); // deep inside
    }

    #[test]
    fn box_tsdf_sign_is_correct() {
        let b = RoomBox::new(3.0, 4.0, 17.0, 12.0, 1.0);
        assert!(box_tsdf(&b, 10.0, 8.0, 5.0) > 0.0);
        assert!(box_tsdf(&b, 1.0, 8.0, 5.0) < 0.0);
        assert!(box_tsdf(&b, 20.0, 20.0, 5.0) < 0.0);
        assert_eq!(box_tsdf(&b, 3.0, 8.0, 5.0), 0.0);
        assert_eq!(box_tsdf(&b, 17.0, 12.0, 5.0), 0.0); // corner
    }

    #[test]
    fn composite_identity_under_unit_gate() {
        let b = RoomBox::new(2.0, 2.0, 12.0, 9.0, 1.0);
        let set = BoxSet::from_rooms(vec![b], 1);
        for (px, py) in [(5.0, 5.0), (0.0, 0.0), (2.0, 7.5), (14.0, 3.0)] {
            assert_relative_eq!(
                composite_tsdf(&set, px, py, 4.0),
                box_tsdf(&b, px, py, 4.0)
            );
        }
    }

    #[test]
    fn composite_all_gates_zero_is_minus_gamma() {
        let mut set = BoxSet::from_rooms(
            vec![
                RoomBox::new(0.0, 0.0, 10.0, 10.0, 0.0),
                RoomBox::new(5.0, 5.0, 25.0, 25.0, 0.0),
            ],
            6,
        );
        set.rooms.iter_mut().for_each(|r| r.q = 0.0);
        for (px, py) in [(5.0, 5.0), (100.0, -3.0)] {
            assert_relative_eq!(composite_tsdf(&set, px, py, 7.0), -7.0);
        }
    }

    #[test]
    fn composite_l_shape_probe_points() {
        // Two overlapping boxes forming an L; inside box A only, the value
        // equals box A's own TSDF.
        let a = RoomBox::new(0.0, 0.0, 10.0, 20.0, 1.0);
        let b = RoomBox::new(0.0, 12.0, 24.0, 20.0, 1.0);
        let set = BoxSet::from_rooms(vec![a, b], 2);
        let gamma = 3.0;
        // Inside A only.
        assert_relative_eq!(
            composite_tsdf(&set, 5.0, 5.0, gamma),
            box_tsdf(&a, 5.0, 5.0, gamma)
        );
        // Inside B only.
        assert_relative_eq!(
            composite_tsdf(&set, 20.0, 16.0, gamma),
            box_tsdf(&b, 20.0, 16.0, gamma)
        );
        // Inside the overlap the max wins.
        let (px, py) = (5.0, 16.0);
        assert_relative_eq!(
            composite_tsdf(&set, px, py, gamma),
            box_tsdf(&a, px, py, gamma).max(box_tsdf(&b, px, py, gamma))
        );
    }

    #[test]
    fn door_diamond_examples() {
        let d = DoorBox::new(5.0, 5.0, 4.0, 1.0, (0, 1));
        assert_relative_eq!(door_diamond(&d, 5.0, 5.0), 2.0); // apex
        assert_relative_eq!(door_diamond(&d, 7.0, 5.0), 0.0); // boundary
        assert_relative_eq!(door_diamond(&d, 6.0, 6.0), 0.0); // ReLU(2-2)
        assert_relative_eq!(door_diamond(&d, 5.5, 5.0), 1.5);
    }

    #[test]
    fn adjacency_shared_edge() {
        let set = BoxSet::from_rooms(
            vec![
                RoomBox::new(0.0, 0.0, 10.0, 10.0, 1.0),
                RoomBox::new(10.0, 0.0, 20.0, 10.0, 1.0),
            ],
            2,
        );
        let adj = room_adjacency(&set, 3.0, 4.0);
        assert!(adj[0][1] && adj[1][0]);
        assert!(!adj[0][0] && !adj[1][1]);
    }

    #[test]
    fn adjacency_far_apart_and_corner_touch() {
        let far = BoxSet::from_rooms(
            vec![
                RoomBox::new(0.0, 0.0, 10.0, 10.0, 1.0),
                RoomBox::new(30.0, 0.0, 40.0, 10.0, 1.0),
            ],
            2,
        );
        assert!(!room_adjacency(&far, 3.0, 4.0)[0][1]);
        // Corner-to-corner: zero overlap length.
        let corner = BoxSet::from_rooms(
            vec![
                RoomBox::new(0.0, 0.0, 10.0, 10.0, 1.0),
                RoomBox::new(10.0, 10.0, 20.0, 20.0, 1.0),
            ],
            2,
        );
        assert!(!room_adjacency(&corner, 3.0, 4.0)[0][1]);
    }

    #[test]
    fn adjacency_ignores_inactive_rooms() {
        let set = BoxSet::from_rooms(
            vec![
                RoomBox::new(0.0, 0.0, 10.0, 10.0, 1.0),
                RoomBox::new(10.0, 0.0, 20.0, 10.0, 0.3),
            ],
            2,
        );
        assert!(!room_adjacency(&set, 3.0, 4.0)[0][1]);
    }

    #[test]
    fn iou_examples() {
        let a = RoomBox::new(0.0, 0.0, 10.0, 10.0, 1.0);
        assert_relative_eq!(iou(&a, &a), 1.0);
        let disjoint = RoomBox::new(20.0, 20.0, 30.0, 30.0, 1.0);
        assert_relative_eq!(iou(&a, &disjoint), 0.0);
        // A is the left half of B.
        let half = RoomBox::new(0.0, 0.0, 5.0, 10.0, 1.0);
        assert_relative_eq!(iou(&half, &a), 0.5);
    }

    #[test]
    fn rasterize_single_box_is_hollow_rectangle() {
        let set = BoxSet::from_rooms(vec![RoomBox::new(2.0, 2.0, 12.0, 12.0, 1.0)], 1);
        let grid = rasterize(&set, &GridGeometry::square(16));
        assert_eq!(grid.get(2, 2), CellState::Occupied);
        assert_eq!(grid.get(7, 2), CellState::Occupied);
        assert_eq!(grid.get(12, 12), CellState::Occupied);
        assert_eq!(grid.get(3, 3), CellState::Free);
        assert_eq!(grid.get(7, 7), CellState::Free);
        assert_eq!(grid.get(0, 0), CellState::Unknown);
        assert_eq!(grid.get(14, 7), CellState::Unknown);
    }

    #[test]
    fn rasterize_empty_set_is_all_unknown() {
        let grid = rasterize(&BoxSet::with_budget(6), &GridGeometry::square(8));
        assert_eq!(grid.count(CellState::Unknown), 64);
    }

    #[test]
    fn rasterize_door_carves_gap_of_width_s() {
        let rooms = vec![
            RoomBox::new(0.0, 0.0, 10.0, 20.0, 1.0),
            RoomBox::new(10.0, 0.0, 20.0, 20.0, 1.0),
        ];
        let mut set = BoxSet::from_rooms(rooms, 2);
        set.doors.push(DoorBox::new(10.0, 10.0, 5.0, 1.0, (0, 1)));
        let grid = rasterize(&set, &GridGeometry::square(24));
        // Shared wall x=10: gap cells y in [8, 12], wall elsewhere.
        let mut gap = 0;
        for y in 1..20 {
            match grid.get(10, y) {
                CellState::Free => gap += 1,
                CellState::Occupied => {}
                CellState::Unknown => panic!("wall cell (10,{y}) unknown"),
            }
        }
        assert_eq!(gap, 5);
        for y in 8..=12 {
            assert_eq!(grid.get(10, y), CellState::Free, "gap cell y={y}");
        }
        assert_eq!(grid.get(10, 7), CellState::Occupied);
        assert_eq!(grid.get(10, 13), CellState::Occupied);
    }

    #[test]
    fn rasterize_merges_overlapping_boxes_into_one_room() {
        // The inner walls of an L-shaped two-box room must not survive.
        let set = BoxSet::from_rooms(
            vec![
                RoomBox::new(0.0, 0.0, 10.0, 10.0, 1.0),
                RoomBox::new(5.0, 5.0, 15.0, 15.0, 1.0),
            ],
            2,
        );
        let grid = rasterize(&set, &GridGeometry::square(20));
        // Box A's right wall at x=10 passes through box B's interior.
        assert_eq!(grid.get(10, 7), CellState::Free);
        // But stays a wall outside B.
        assert_eq!(grid.get(10, 2), CellState::Occupied);
    }
}
