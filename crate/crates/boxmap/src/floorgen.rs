//! Procedural generation of annotated axis-aligned multi-room floorplans,
//! plus dataset export.
//!
//! A guillotine partition of the unit's bounding rectangle produces rooms
//! that share 1-cell walls; occasionally one room becomes an L-shape as a
//! two-box group. Doors (carved diamonds) are placed on a randomized
//! spanning tree of the room adjacency plus extra edges. The world raster
//! is produced by `rasterize` of the annotations, so the two are cell-exact
//! by construction, and free-space connectivity is verified by flood fill.

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxcalc::{rasterize, BoxSet, DoorBox, RoomBox};
use crate::gridworld::{
    chamfer_tsdf, simulate_scan, write_occupancy_pgm, write_tsdf_pgm, CellState, GridGeometry,
    LaserConfig, OccupancyGrid, Pose, DEFAULT_GAMMA,
};
use crate::predictor::{oracle_predict, Frame};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_rooms: usize,
    /// World side length in cells.
    pub size: usize,
    /// Side length of the unit's bounding rectangle, centered in the world.
    pub extent: usize,
    /// Minimum room side in cells.
    pub min_side: usize,
    /// Door gap width in cells.
    pub door_size: f64,
    /// Probability that one room becomes an L-shaped two-box group.
    pub p_l_shape: f64,
    /// Probability of each extra (non-spanning-tree) door.
    pub p_extra_door: f64,
    pub max_retries: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_rooms: 5,
            size: 256,
            extent: 64,
            min_side: 20,
            door_size: 5.0,
            p_l_shape: 0.3,
            p_extra_door: 0.2,
            max_retries: 64,
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("no valid floorplan after {0} attempts (degenerate partitions)")]
    GenerationFailed(usize),
    #[error("extent {extent} does not fit {n_rooms} rooms of min side {min_side}")]
    InfeasibleConfig {
        extent: usize,
        n_rooms: usize,
        min_side: usize,
    },
}

/// A generated world with its ground-truth annotations.
#[derive(Clone, Debug)]
pub struct Floorplan {
    pub world: OccupancyGrid,
    pub annotations: BoxSet,
    /// Number of rooms (multi-box groups count once).
    pub room_count: usize,
    pub seed: u64,
}

impl Floorplan {
    /// Random FREE start cells, deterministic in the seed.
    pub fn sample_free_cells(&self, count: usize, seed: u64) -> Vec<(usize, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let free: Vec<(usize, usize)> = (0..self.world.height())
            .flat_map(|y| (0..self.world.width()).map(move |x| (x, y)))
            .filter(|&(x, y)| self.world.get(x, y) == CellState::Free)
            .collect();
        (0..count)
            .map(|_| free[rng.gen_range(0..free.len())])
            .collect()
    }
}

#[derive(Clone, Copy)]
struct Rect {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

impl Rect {
    fn w(&self) -> i64 {
        self.x1 - self.x0
    }
    fn h(&self) -> i64 {
        self.y1 - self.y0
    }
    fn area(&self) -> i64 {
        self.w() * self.h()
    }
}

/// Generate one floorplan. Deterministic in (seed, cfg).
pub fn generate(seed: u64, cfg: &GenConfig) -> Result<Floorplan, GenError> {
    let min = cfg.min_side as i64;
    if cfg.extent + 2 > cfg.size || (cfg.extent as i64) < min {
        return Err(GenError::InfeasibleConfig {
            extent: cfg.extent,
            n_rooms: cfg.n_rooms,
            min_side: cfg.min_side,
        });
    }
    for attempt in 0..cfg.max_retries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (attempt as u64).wrapping_mul(0x9E3779B97F4A7C15));
        if let Some(fp) = try_generate(seed, cfg, &mut rng) {
            return Ok(fp);
        }
    }
    Err(GenError::GenerationFailed(cfg.max_retries))
}

fn try_generate(seed: u64, cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Option<Floorplan> {
    let min = cfg.min_side as i64;
    let off = ((cfg.size - cfg.extent) / 2) as i64;
    let outer = Rect {
        x0: off,
        y0: off,
        x1: off + cfg.extent as i64,
        y1: off + cfg.extent as i64,
    };

    // Guillotine partition: split the largest splittable leaf until the
    // room count is reached. Adjacent leaves share the cut line.
    let mut leaves = vec![outer];
    while leaves.len() < cfg.n_rooms {
        let candidates: Vec<usize> = (0..leaves.len())
            .filter(|&i| leaves[i].w() >= 2 * min || leaves[i].h() >= 2 * min)
            .collect();
        let &pick = candidates
            .iter()
            .max_by_key(|&&i| (leaves[i].area(), std::cmp::Reverse(i)))?;
        let r = leaves.swap_remove(pick);
        let vertical = if r.w() >= 2 * min && r.h() >= 2 * min {
            if r.w() == r.h() {
                rng.gen_bool(0.5)
            } else {
                r.w() > r.h()
            }
        } else {
            r.w() >= 2 * min
        };
        if vertical {
            let cut = rng.gen_range(r.x0 + min..=r.x1 - min);
            leaves.push(Rect { x1: cut, ..r });
            leaves.push(Rect { x0: cut, ..r });
        } else {
            let cut = rng.gen_range(r.y0 + min..=r.y1 - min);
            leaves.push(Rect { y1: cut, ..r });
            leaves.push(Rect { y0: cut, ..r });
        }
    }

    // Boxes and group labels; maybe carve one leaf into an L-shape.
    let mut boxes: Vec<RoomBox> = Vec::new();
    let mut group_of_box: Vec<usize> = Vec::new();
    let l_pick = if rng.gen_bool(cfg.p_l_shape) {
        Some(rng.gen_range(0..leaves.len()))
    } else {
        None
    };
    for (li, r) in leaves.iter().enumerate() {
        if Some(li) == l_pick && r.w() >= min + 10 && r.h() >= min + 10 {
            // Notch a corner: two overlapping boxes covering the L.
            let nx = rng.gen_range(6..=(r.w() - min).min(r.w() / 2));
            let ny = rng.gen_range(6..=(r.h() - min).min(r.h() / 2));
            let corner = rng.gen_range(0..4u8);
            let (b1, b2) = match corner {
                // Notch at (x1, y0): tall left box + wide bottom box.
                0 => (
                    Rect { x1: r.x1 - nx, ..*r },
                    Rect { y0: r.y0 + ny, ..*r },
                ),
                // Notch at (x0, y0).
                1 => (
                    Rect { x0: r.x0 + nx, ..*r },
                    Rect { y0: r.y0 + ny, ..*r },
                ),
                // Notch at (x1, y1).
                2 => (
                    Rect { x1: r.x1 - nx, ..*r },
                    Rect { y1: r.y1 - ny, ..*r },
                ),
                // Notch at (x0, y1).
                _ => (
                    Rect { x0: r.x0 + nx, ..*r },
                    Rect { y1: r.y1 - ny, ..*r },
                ),
            };
            for b in [b1, b2] {
                boxes.push(RoomBox::new(
                    b.x0 as f64,
                    b.y0 as f64,
                    b.x1 as f64,
                    b.y1 as f64,
                    1.0,
                ));
                group_of_box.push(li);
            }
        } else {
            boxes.push(RoomBox::new(
                r.x0 as f64,
                r.y0 as f64,
                r.x1 as f64,
                r.y1 as f64,
                1.0,
            ));
            group_of_box.push(li);
        }
    }

    // Door-feasible adjacency between boxes of different groups: shared
    // wall line with enough overlap to host a carved gap plus margins.
    let need = cfg.door_size + 2.0;
    let mut edges: Vec<(usize, usize, f64, f64, bool)> = Vec::new(); // (i, j, lo, wall, horizontal-wall?)
    for i in 0..boxes.len() {
        for j in (i + 1)..boxes.len() {
            if group_of_box[i] == group_of_box[j] {
                continue;
            }
            let (a, b) = (&boxes[i], &boxes[j]);
            let overlap_y = a.y1.min(b.y1) - a.y0.max(b.y0);
            let overlap_x = a.x1.min(b.x1) - a.x0.max(b.x0);
            if (a.x1 - b.x0).abs() < 0.5 && overlap_y >= need + 1.0 {
                edges.push((i, j, a.y0.max(b.y0), a.x1, false));
            } else if (b.x1 - a.x0).abs() < 0.5 && overlap_y >= need + 1.0 {
                edges.push((i, j, a.y0.max(b.y0), b.x1, false));
            } else if (a.y1 - b.y0).abs() < 0.5 && overlap_x >= need + 1.0 {
                edges.push((i, j, a.x0.max(b.x0), a.y1, true));
            } else if (b.y1 - a.y0).abs() < 0.5 && overlap_x >= need + 1.0 {
                edges.push((i, j, a.x0.max(b.x0), b.y1, true));
            }
        }
    }

    // Randomized spanning tree over groups, then extra doors.
    let groups: Vec<usize> = {
        let mut g = group_of_box.clone();
        g.sort_unstable();
        g.dedup();
        g
    };
    let gidx = |g: usize| groups.iter().position(|&x| x == g).unwrap();
    let mut parent: Vec<usize> = (0..groups.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    fn place_door(
        doors: &mut Vec<DoorBox>,
        boxes: &[RoomBox],
        door_size: f64,
        rng: &mut ChaCha8Rng,
        e: &(usize, usize, f64, f64, bool),
    ) -> bool {
        let (i, j, lo, wall, horizontal) = *e;
        let (a, b) = (&boxes[i], &boxes[j]);
        let hi = if horizontal {
            a.x1.min(b.x1)
        } else {
            a.y1.min(b.y1)
        };
        let margin = door_size / 2.0 + 1.0;
        let lo_c = (lo + margin).ceil() as i64;
        let hi_c = (hi - margin).floor() as i64;
        if hi_c < lo_c {
            return false;
        }
        let along = rng.gen_range(lo_c..=hi_c) as f64;
        let (cx, cy) = if horizontal { (along, wall) } else { (wall, along) };
        doors.push(DoorBox::new(cx, cy, door_size, 1.0, (i, j)));
        true
    }
    let mut shuffled = edges.clone();
    shuffled.shuffle(rng);
    let mut doors: Vec<DoorBox> = Vec::new();
    for e in &shuffled {
        let (gi, gj) = (gidx(group_of_box[e.0]), gidx(group_of_box[e.1]));
        let (ri, rj) = (find(&mut parent, gi), find(&mut parent, gj));
        if ri != rj && place_door(&mut doors, &boxes, cfg.door_size, rng, e) {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    // Spanning tree must connect every group.
    let root = find(&mut parent, 0);
    if (1..groups.len()).any(|i| find(&mut parent, i) != root) {
        return None;
    }
    for e in &shuffled {
        let dup = doors
            .iter()
            .any(|d| d.rooms == (e.0, e.1) || d.rooms == (e.1, e.0));
        if !dup && rng.gen_bool(cfg.p_extra_door) {
            place_door(&mut doors, &boxes, cfg.door_size, rng, e);
        }
    }

    let annotations = {
        let budget = boxes.len().max(6);
        let mut set = BoxSet::from_rooms(boxes, budget);
        set.doors = doors;
        set
    };
    let world = rasterize(&annotations, &GridGeometry::square(cfg.size));

    // Every room interior must be reachable from every other: single free
    // component.
    if !free_space_connected(&world) {
        return None;
    }
    Some(Floorplan {
        world,
        annotations,
        room_count: groups.len(),
        seed,
    })
}

fn free_space_connected(grid: &OccupancyGrid) -> bool {
    let (w, h) = (grid.width(), grid.height());
    let mut start = None;
    let mut total = 0usize;
    for y in 0..h {
        for x in 0..w {
            if grid.get(x, y) == CellState::Free {
                total += 1;
                if start.is_none() {
                    start = Some((x, y));
                }
            }
        }
    }
    let Some(start) = start else {
        return false;
    };
    let mut seen = vec![false; w * h];
    let mut queue = std::collections::VecDeque::from([start]);
    seen[start.1 * w + start.0] = true;
    let mut reached = 0usize;
    while let Some((x, y)) = queue.pop_front() {
        reached += 1;
        for (dx, dy) in [(0i64, -1i64), (-1, 0), (1, 0), (0, 1)] {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if grid.get(nx, ny) == CellState::Free && !seen[ny * w + nx] {
                seen[ny * w + nx] = true;
                queue.push_back((nx, ny));
            }
        }
    }
    reached == total
}

/// One exported dataset record: paths of the files written.
#[derive(Clone, Debug, Serialize)]
pub struct SampleRecord {
    pub index: usize,
    pub occupancy: std::path::PathBuf,
    pub tsdf: std::path::PathBuf,
    pub boxes: std::path::PathBuf,
}

/// Export per-pose training records: accumulated-scan crop, ground-truth
/// TSDF crop, and the oracle-visible annotation subset, as PGM + JSON.
pub fn export_samples(
    fp: &Floorplan,
    poses: &[(usize, usize)],
    crop_size: usize,
    rho: f64,
    out_dir: &std::path::Path,
) -> std::io::Result<Vec<SampleRecord>> {
    std::fs::create_dir_all(out_dir)?;
    let gamma = DEFAULT_GAMMA;
    let world_tsdf =
        chamfer_tsdf(&fp.world, gamma).expect("generated worlds always contain walls");
    let laser = LaserConfig::default();
    let geom = fp.world.geometry();
    let mut accumulated = OccupancyGrid::filled(*geom, CellState::Unknown);
    let mut records = Vec::new();
    for (index, &cell) in poses.iter().enumerate() {
        let scan = simulate_scan(&fp.world, &Pose::from_cell(cell, geom), &laser)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()))?;
        accumulated = accumulated.accumulate(&scan).expect("same geometry");
        let occ_crop = accumulated.crop_at_cell(cell, crop_size);
        let tsdf_crop = world_tsdf.crop_at_cell(cell, crop_size);
        let frame = Frame::of_crop(&occ_crop, geom);
        let visible = oracle_predict(&fp.annotations, &occ_crop, &frame, rho);

        let occupancy = out_dir.join(format!("{index:03}_occ.pgm"));
        let tsdf = out_dir.join(format!("{index:03}_tsdf.pgm"));
        let boxes = out_dir.join(format!("{index:03}_boxes.json"));
        write_occupancy_pgm(&occ_crop, &occupancy)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))?;
        write_tsdf_pgm(&tsdf_crop, &tsdf)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))?;
        std::fs::write(&boxes, serde_json::to_vec_pretty(&visible)?)?;
        records.push(SampleRecord {
            index,
            occupancy,
            tsdf,
            boxes,
        });
    }
    Ok(records)
}
