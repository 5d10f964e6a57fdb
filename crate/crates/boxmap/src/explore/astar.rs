//! Grid pathfinding: A* with deterministic tie-breaking and a unit-cost
//! BFS used both as planner backend and as test oracle.

use std::collections::BinaryHeap;

use crate::gridworld::{CellState, OccupancyGrid};

/// 8-neighborhood in lexicographic (dy, dx) order; the fixed order is part
/// of the determinism contract.
const NEIGHBORS: [(i64, i64); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Shortest 8-connected path through FREE cells, unit cost per move.
///
/// Returns the cell sequence from `from` to `to` inclusive, or None when no
/// path exists (including a non-FREE goal). Ties break on (f, h, y, x).
pub fn astar(
    grid: &OccupancyGrid,
    from: (usize, usize),
    to: (usize, usize),
) -> Option<Vec<(usize, usize)>> {
    let (w, h) = (grid.width(), grid.height());
    if grid.get(from.0, from.1) != CellState::Free || grid.get(to.0, to.1) != CellState::Free {
        return None;
    }
    let idx = |x: usize, y: usize| y * w + x;
    let heuristic = |x: usize, y: usize| -> u32 {
        let dx = (x as i64 - to.0 as i64).unsigned_abs();
        let dy = (y as i64 - to.1 as i64).unsigned_abs();
        dx.max(dy) as u32
    };

    #[derive(PartialEq, Eq)]
    struct Entry {
        f: u32,
        h: u32,
        y: usize,
        x: usize,
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            // Reverse for a min-heap.
            (other.f, other.h, other.y, other.x).cmp(&(self.f, self.h, self.y, self.x))
        }
    }
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    let mut g = vec![u32::MAX; w * h];
    let mut parent = vec![usize::MAX; w * h];
    let mut heap = BinaryHeap::new();
    g[idx(from.0, from.1)] = 0;
    heap.push(Entry {
        f: heuristic(from.0, from.1),
        h: heuristic(from.0, from.1),
        y: from.1,
        x: from.0,
    });
    while let Some(Entry { f, x, y, .. }) = heap.pop() {
        let here = idx(x, y);
        if (x, y) == to {
            let mut path = vec![(x, y)];
            let mut at = here;
            while parent[at] != usize::MAX {
                at = parent[at];
                path.push((at % w, at / w));
            }
            path.reverse();
            return Some(path);
        }
        if f > g[here].saturating_add(heuristic(x, y)) {
            continue; // stale entry
        }
        for (dy, dx) in NEIGHBORS {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if grid.get(nx, ny) != CellState::Free {
                continue;
            }
            let cand = g[here] + 1;
            if cand < g[idx(nx, ny)] {
                g[idx(nx, ny)] = cand;
                parent[idx(nx, ny)] = here;
                let hh = heuristic(nx, ny);
                heap.push(Entry {
                    f: cand + hh,
                    h: hh,
                    y: ny,
                    x: nx,
                });
            }
        }
    }
    None
}

/// Unit-cost BFS distances from `from` over FREE cells, same connectivity
/// as `astar`. `None` marks unreachable cells.
pub fn bfs_distances(grid: &OccupancyGrid, from: (usize, usize)) -> Vec<Option<u32>> {
    let (w, h) = (grid.width(), grid.height());
    let mut dist: Vec<Option<u32>> = vec![None; w * h];
    if grid.get(from.0, from.1) != CellState::Free {
        return dist;
    }
    let mut queue = std::collections::VecDeque::new();
    dist[from.1 * w + from.0] = Some(0);
    queue.push_back(from);
    while let Some((x, y)) = queue.pop_front() {
        let d = dist[y * w + x].unwrap();
        for (dy, dx) in NEIGHBORS {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if grid.get(nx, ny) != CellState::Free || dist[ny * w + nx].is_some() {
                continue;
            }
            dist[ny * w + nx] = Some(d + 1);
            queue.push_back((nx, ny));
        }
    }
    dist
}

/// Nearest FREE cell to a continuous cell-space position (ring search,
/// deterministic (d2, y, x) ordering); used to snap graph goals onto the
/// traversable lattice.
pub fn snap_to_free(grid: &OccupancyGrid, pos: (f64, f64), max_radius: i64) -> Option<(usize, usize)> {
    let cx = pos.0.round() as i64;
    let cy = pos.1.round() as i64;
    let mut best: Option<(i64, usize, usize)> = None;
    for dy in -max_radius..=max_radius {
        for dx in -max_radius..=max_radius {
            let (x, y) = (cx + dx, cy + dy);
            if !grid.geometry().contains_cell(x, y) {
                continue;
            }
            let (x, y) = (x as usize, y as usize);
            if grid.get(x, y) != CellState::Free {
                continue;
            }
            let d2 = dx * dx + dy * dy;
            let key = (d2, y, x);
            if best.map_or(true, |b| key < b) {
                best = Some(key);
            }
        }
    }
    best.map(|(_, y, x)| (x, y))
}
