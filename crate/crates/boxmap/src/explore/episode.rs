//! Closed-loop exploration episodes: scan, predict, plan, move, repeat.

use serde::{Deserialize, Serialize};

use crate::boxcalc::{rasterize, BoxSet};
use crate::gridworld::{simulate_scan, LaserConfig, OccupancyGrid, Pose, CellState};
use crate::predictor::{Frame, Predictor, PredictorInput};
use crate::topograph::{build_nav, build_topo, mark_visited, NavNodeKind, TopoGraph, DEFAULT_ALPHA};

use super::astar::{astar, snap_to_free};
use super::frontier::{frontier_baseline_step, FrontierConfig};
use super::strategy::{step_greedy, step_rh};
use super::ExploreError;

/// Exploration policy of an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Closest unvisited room on the planning graph.
    Greedy,
    /// First leg of the optimal visit-all-rooms tour, re-solved each step.
    RecedingHorizon,
    /// Geometric frontier baseline (no graph).
    Frontier,
    /// Receding horizon goals with the full accumulated occupancy map as
    /// the predictor's prior instead of the rasterized graph.
    Hybrid,
}

impl Strategy {
    pub fn uses_graph(&self) -> bool {
        !matches!(self, Strategy::Frontier)
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Strategy::Greedy),
            "rh" => Ok(Strategy::RecedingHorizon),
            "frontier" => Ok(Strategy::Frontier),
            "hybrid" => Ok(Strategy::Hybrid),
            other => Err(format!(
                "unknown strategy '{other}' (expected greedy|rh|frontier|hybrid)"
            )),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Greedy => "greedy",
            Strategy::RecedingHorizon => "rh",
            Strategy::Frontier => "frontier",
            Strategy::Hybrid => "hybrid",
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub strategy: Strategy,
    pub laser: LaserConfig,
    /// Robot-centered predictor window side length.
    pub crop_size: usize,
    /// Room-position interpolation toward the nearest door.
    pub alpha: f64,
    pub frontier: FrontierConfig,
    /// Hard cap on measurement updates before the episode times out.
    pub max_updates: usize,
    /// Whether the rasterized prior counts as traversability evidence for
    /// door validation, alongside the fresh scan.
    pub prior_as_evidence: bool,
    /// Keep previously predicted boxes that sit mostly outside the current
    /// window: the graph update is a function of the whole previous graph,
    /// and the predictor cannot vouch for space it never saw.
    pub carry_out_of_window: bool,
    pub seed: u64,
    /// Keep per-update snapshots for frame dumps.
    pub record_frames: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Greedy,
            laser: LaserConfig::default(),
            crop_size: 128,
            alpha: DEFAULT_ALPHA,
            frontier: FrontierConfig::default(),
            max_updates: 50,
            prior_as_evidence: true,
            carry_out_of_window: true,
            seed: 0,
            record_frames: false,
        }
    }
}

/// Merge out-of-window rooms and doors of the previous graph into a fresh
/// prediction.
///
/// A previous active room mostly outside the window (less than half its
/// footprint visible) that no new active room matches is kept: for
/// predictors with stable slots (the oracle) its own gated-off slot is
/// re-gated, otherwise it is appended. Doors follow their endpoint rooms.
fn carry_out_of_window(
    new: &mut BoxSet,
    prev: &BoxSet,
    frame: &Frame,
    crop_size: usize,
) {
    let lo_x = frame.dx as f64;
    let lo_y = frame.dy as f64;
    let hi_x = lo_x + crop_size as f64 - 1.0;
    let hi_y = lo_y + crop_size as f64 - 1.0;
    let window_fraction = |r: &crate::boxcalc::RoomBox| -> f64 {
        let area = r.area();
        if area <= 0.0 {
            return 1.0;
        }
        let iw = (r.x1.min(hi_x) - r.x0.max(lo_x)).max(0.0);
        let ih = (r.y1.min(hi_y) - r.y0.max(lo_y)).max(0.0);
        iw * ih / area
    };
    // prev room index -> index in the merged set (for door endpoints).
    let mut room_map: Vec<Option<usize>> = vec![None; prev.rooms.len()];
    for (pi, room) in prev.rooms.iter().enumerate() {
        if !room.is_active() || window_fraction(room) >= 0.5 {
            continue;
        }
        if new
            .active_rooms()
            .any(|(_, n)| crate::boxcalc::iou(n, room) >= 0.3)
        {
            continue; // the new prediction already covers it
        }
        let slot = new
            .rooms
            .iter()
            .position(|n| !n.is_active() && crate::boxcalc::iou(n, room) >= 0.9);
        match slot {
            Some(i) => {
                new.rooms[i].q = room.q;
                room_map[pi] = Some(i);
            }
            None => {
                new.rooms.push(*room);
                room_map[pi] = Some(new.rooms.len() - 1);
            }
        }
    }
    for door in prev.doors.iter().filter(|d| d.is_active()) {
        let half = door.s / 2.0;
        let fake_room =
            crate::boxcalc::RoomBox::new(door.cx - half, door.cy - half, door.cx + half, door.cy + half, 1.0);
        if window_fraction(&fake_room) >= 0.5 {
            continue;
        }
        let near_existing = new.active_doors().any(|(_, d)| {
            (d.cx - door.cx).abs() + (d.cy - door.cy).abs() <= door.s
        });
        if near_existing {
            continue;
        }
        // Endpoints must exist in the merged set, either as carried slots
        // or as already-active rooms at the same indices (stable slots).
        let (a, b) = door.rooms;
        let map = |i: usize| -> Option<usize> {
            room_map.get(i).copied().flatten().or({
                if new.rooms.get(i).is_some_and(|r| r.is_active()) {
                    Some(i)
                } else {
                    None
                }
            })
        };
        if let (Some(na), Some(nb)) = (map(a), map(b)) {
            let mut carried = *door;
            carried.rooms = (na, nb);
            new.doors.push(carried);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    /// Termination criterion met (no unvisited rooms / no fresh frontier).
    Complete,
    /// Update cap reached first.
    Timeout,
    /// Goals kept failing and the frontier fallback had nothing left.
    Stuck,
}

/// One per-update snapshot for `--dump-frames`.
#[derive(Clone, Debug, Serialize)]
pub struct EpisodeFrame {
    pub update: usize,
    pub pose: (usize, usize),
    pub boxes: BoxSet,
    #[serde(skip_serializing)]
    pub accumulated: OccupancyGrid,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpisodeResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub status: EpisodeStatus,
    /// Cells traversed along executed paths.
    pub steps: usize,
    /// Measurement updates taken.
    pub updates: usize,
    pub pose_log: Vec<(usize, usize)>,
    pub measurement_cells: Vec<(usize, usize)>,
    pub final_boxes: BoxSet,
    pub final_topo: TopoGraph,
    #[serde(skip_serializing)]
    pub accumulated: OccupancyGrid,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub frames: Vec<EpisodeFrame>,
}

enum StepGoal {
    Done,
    Cell((usize, usize)),
    Unreachable,
}

/// Run one exploration episode on a ground-truth world.
///
/// Each iteration scans, merges the measurement, predicts a box set (graph
/// strategies), rebuilds the graphs, picks a goal and traverses an A* path
/// over the accumulated map. Greedy/RH terminate when no unvisited room
/// remains; the frontier baseline when no fresh frontier remains. A goal
/// that fails twice in a row falls back to a frontier step.
pub fn run_episode(
    world: &OccupancyGrid,
    predictor: &dyn Predictor,
    start: (usize, usize),
    cfg: &EpisodeConfig,
) -> Result<EpisodeResult, ExploreError> {
    if world.get(start.0, start.1) != CellState::Free {
        return Err(ExploreError::BadStart(start.0, start.1));
    }
    let geom = *world.geometry();
    let mut accumulated = OccupancyGrid::filled(geom, CellState::Unknown);
    let mut prev_boxes = BoxSet::default();
    let mut final_topo = TopoGraph::default();
    let mut pose = start;
    let mut pose_log = vec![start];
    let mut measurements: Vec<(usize, usize)> = Vec::new();
    let mut frames = Vec::new();
    let mut steps = 0usize;
    let mut updates = 0usize;
    let mut consecutive_failures = 0u32;

    let status = loop {
        if updates >= cfg.max_updates {
            break EpisodeStatus::Timeout;
        }
        let scan = simulate_scan(world, &Pose::from_cell(pose, &geom), &cfg.laser)?;
        updates += 1;
        measurements.push(pose);
        accumulated = accumulated.accumulate(&scan)?;

        let goal = if cfg.strategy.uses_graph() {
            let prior_world = if cfg.strategy == Strategy::Hybrid {
                accumulated.clone()
            } else {
                rasterize(&prev_boxes, &geom)
            };
            let laser_local = scan.crop_at_cell(pose, cfg.crop_size);
            let prior_local = prior_world.crop_at_cell(pose, cfg.crop_size);
            let frame = Frame::of_crop(&laser_local, &geom);
            let input = PredictorInput {
                prev_topo_raster: prior_local,
                laser_local,
                frame,
            };
            let mut boxes = predictor.predict(&input)?;
            if cfg.carry_out_of_window {
                carry_out_of_window(&mut boxes, &prev_boxes, &frame, cfg.crop_size);
            }
            let evidence = if cfg.prior_as_evidence {
                prior_world.accumulate(&scan)?
            } else {
                accumulated.clone()
            };
            let measured_f: Vec<(f64, f64)> = measurements
                .iter()
                .map(|&(x, y)| (x as f64, y as f64))
                .collect();
            let topo = mark_visited(&build_topo(&boxes, &evidence), &measured_f);
            let nav = build_nav(&topo, (pose.0 as f64, pose.1 as f64), cfg.alpha);
            if cfg.record_frames {
                frames.push(EpisodeFrame {
                    update: updates,
                    pose,
                    boxes: boxes.clone(),
                    accumulated: accumulated.clone(),
                });
            }
            prev_boxes = boxes;
            final_topo = topo.clone();
            let goal_topo = match cfg.strategy {
                Strategy::Greedy => step_greedy(&nav),
                _ => step_rh(&nav)?,
            };
            match goal_topo {
                None => StepGoal::Done,
                Some(topo_idx) => {
                    let position = nav
                        .nodes
                        .iter()
                        .find(|n| matches!(n.kind, NavNodeKind::Room { topo } if topo == topo_idx))
                        .map(|n| n.position)
                        .expect("goal node exists");
                    match snap_to_free(&accumulated, position, 8) {
                        Some(cell) => StepGoal::Cell(cell),
                        None => StepGoal::Unreachable,
                    }
                }
            }
        } else {
            if cfg.record_frames {
                frames.push(EpisodeFrame {
                    update: updates,
                    pose,
                    boxes: BoxSet::default(),
                    accumulated: accumulated.clone(),
                });
            }
            match frontier_baseline_step(&accumulated, pose, &cfg.frontier, &measurements) {
                None => StepGoal::Done,
                Some(cell) => StepGoal::Cell(cell),
            }
        };

        // A graph that has run out of unvisited rooms while fresh frontier
        // remains has under-predicted (a room never cleared the visibility
        // threshold); a frontier step reveals it and the loop continues.
        // Complete only fires with no unvisited rooms and no fresh frontier.
        // Recovery wants the nearest boundary, not the information-weighted
        // baseline policy, hence lambda = 0.
        let fallback_cfg = FrontierConfig {
            lambda: 0.0,
            ..cfg.frontier
        };
        let goal = match goal {
            StepGoal::Done if cfg.strategy.uses_graph() => {
                match frontier_baseline_step(&accumulated, pose, &fallback_cfg, &measurements) {
                    Some(cell) => StepGoal::Cell(cell),
                    None => StepGoal::Done,
                }
            }
            g => g,
        };
        let path = match goal {
            StepGoal::Done => break EpisodeStatus::Complete,
            StepGoal::Unreachable => None,
            StepGoal::Cell(cell) => astar(&accumulated, pose, cell),
        };
        match path {
            Some(path) => {
                consecutive_failures = 0;
                steps += path.len() - 1;
                pose_log.extend(path.iter().skip(1));
                pose = *path.last().unwrap();
            }
            None => {
                consecutive_failures += 1;
                if consecutive_failures >= 2 {
                    // The graph keeps proposing something unreachable; fall
                    // back to plain frontier progress to open the way.
                    let fallback =
                        frontier_baseline_step(&accumulated, pose, &fallback_cfg, &measurements)
                            .and_then(|cell| astar(&accumulated, pose, cell));
                    match fallback {
                        Some(path) => {
                            consecutive_failures = 0;
                            steps += path.len() - 1;
                            pose_log.extend(path.iter().skip(1));
                            pose = *path.last().unwrap();
                        }
                        None => break EpisodeStatus::Stuck,
                    }
                }
            }
        }
    };

    Ok(EpisodeResult {
        strategy: cfg.strategy,
        seed: cfg.seed,
        status,
        steps,
        updates,
        pose_log,
        measurement_cells: measurements,
        final_boxes: prev_boxes,
        final_topo,
        accumulated,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxcalc::{DoorBox, RoomBox};
    use crate::predictor::{OracleConfig, OraclePredictor};
    use crate::gridworld::GridGeometry;

    /// Three-room chain with doors, annotations included.
    fn chain_world() -> (OccupancyGrid, BoxSet) {
        let mut set = BoxSet::from_rooms(
            vec![
                RoomBox::new(4.0, 4.0, 30.0, 34.0, 1.0),
                RoomBox::new(30.0, 4.0, 56.0, 34.0, 1.0),
                RoomBox::new(56.0, 4.0, 82.0, 34.0, 1.0),
            ],
            6,
        );
        set.doors.push(DoorBox::new(30.0, 18.0, 5.0, 1.0, (0, 1)));
        set.doors.push(DoorBox::new(56.0, 20.0, 5.0, 1.0, (1, 2)));
        let world = rasterize(&set, &GridGeometry::square(88));
        (world, set)
    }

    fn oracle(set: &BoxSet) -> OraclePredictor {
        OraclePredictor::new(set.clone(), OracleConfig::default())
    }

    #[test]
    fn single_room_world_terminates_after_one_update() {
        let set = BoxSet::from_rooms(vec![RoomBox::new(4.0, 4.0, 30.0, 30.0, 1.0)], 6);
        let world = rasterize(&set, &GridGeometry::square(36));
        let pred = oracle(&set);
        let cfg = EpisodeConfig::default();
        let r = run_episode(&world, &pred, (16, 16), &cfg).unwrap();
        assert_eq!(r.status, EpisodeStatus::Complete);
        assert_eq!(r.updates, 1);
        assert_eq!(r.steps, 0);
    }

    #[test]
    fn chain_world_is_fully_visited_by_greedy() {
        let (world, set) = chain_world();
        let pred = oracle(&set);
        let cfg = EpisodeConfig::default();
        let r = run_episode(&world, &pred, (10, 10), &cfg).unwrap();
        assert_eq!(r.status, EpisodeStatus::Complete);
        // Every room interior holds at least one measurement pose.
        for (i, room) in set.rooms.iter().enumerate().take(3) {
            assert!(
                r.measurement_cells
                    .iter()
                    .any(|&(x, y)| room.contains(x as f64, y as f64)),
                "room {i} never measured: {:?}",
                r.measurement_cells
            );
        }
        // Executed path never crosses a ground-truth wall.
        for &(x, y) in &r.pose_log {
            assert_ne!(world.get(x, y), CellState::Occupied);
        }
        assert_eq!(r.steps, r.pose_log.len() - 1);
    }

    #[test]
    fn receding_horizon_completes_too() {
        let (world, set) = chain_world();
        let pred = oracle(&set);
        let cfg = EpisodeConfig {
            strategy: Strategy::RecedingHorizon,
            ..EpisodeConfig::default()
        };
        let r = run_episode(&world, &pred, (70, 20), &cfg).unwrap();
        assert_eq!(r.status, EpisodeStatus::Complete);
        assert!(r.updates >= 3);
    }

    #[test]
    fn frontier_baseline_covers_the_world() {
        let (world, set) = chain_world();
        let pred = oracle(&set); // unused by the strategy but required
        let cfg = EpisodeConfig {
            strategy: Strategy::Frontier,
            ..EpisodeConfig::default()
        };
        let r = run_episode(&world, &pred, (10, 10), &cfg).unwrap();
        assert_eq!(r.status, EpisodeStatus::Complete);
        // All room interiors observed.
        for room in set.rooms.iter().take(3) {
            let (cx, cy) = room.center();
            assert_ne!(
                r.accumulated.get(cx as usize, cy as usize),
                CellState::Unknown
            );
        }
    }

    #[test]
    fn same_seed_reruns_identically() {
        let (world, set) = chain_world();
        let pred = oracle(&set);
        let cfg = EpisodeConfig {
            strategy: Strategy::RecedingHorizon,
            ..EpisodeConfig::default()
        };
        let a = run_episode(&world, &pred, (10, 10), &cfg).unwrap();
        let b = run_episode(&world, &pred, (10, 10), &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn hybrid_strategy_runs_to_completion() {
        let (world, set) = chain_world();
        let pred = oracle(&set);
        let cfg = EpisodeConfig {
            strategy: Strategy::Hybrid,
            ..EpisodeConfig::default()
        };
        let r = run_episode(&world, &pred, (40, 20), &cfg).unwrap();
        assert_eq!(r.status, EpisodeStatus::Complete);
    }

    #[test]
    fn bad_start_is_rejected() {
        let (world, set) = chain_world();
        let pred = oracle(&set);
        let cfg = EpisodeConfig::default();
        assert!(matches!(
            run_episode(&world, &pred, (0, 0), &cfg),
            Err(ExploreError::BadStart(0, 0))
        ));
    }

    #[test]
    fn update_counter_stays_within_cap() {
        let (world, set) = chain_world();
        let pred = oracle(&set);
        let cfg = EpisodeConfig {
            max_updates: 2,
            ..EpisodeConfig::default()
        };
        let r = run_episode(&world, &pred, (10, 10), &cfg).unwrap();
        assert!(r.updates <= 2);
        assert_eq!(r.status, EpisodeStatus::Timeout);
    }
}
