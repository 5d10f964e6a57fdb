//! Optimization-based predictor: projected subgradient descent of the full
//! loss over room coordinates and gates, then door parameters with rooms
//! frozen.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PredictError, Predictor, PredictorInput};
use crate::boxcalc::{room_adjacency, BoxSet, DoorBox, RoomBox};
use crate::gridworld::{chamfer_tsdf, TsdfGrid, DEFAULT_GAMMA};
use crate::losses::{loss_total, LossReport, WallMask};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FitterConfig {
    /// Room box budget M.
    pub budget: usize,
    pub max_iters: usize,
    /// Initial step in cells; every parameter moves by the signed step.
    pub step: f64,
    pub decay_every: usize,
    pub decay: f64,
    /// Random restarts beyond the plain initialization.
    pub restarts: usize,
    /// Coordinate jitter amplitude for restarts, in cells.
    pub jitter: f64,
    /// Iterations of the door phase (rooms frozen).
    pub door_iters: usize,
    pub door_size_init: f64,
    pub seed: u64,
}

impl Default for FitterConfig {
    fn default() -> Self {
        Self {
            budget: 6,
            max_iters: 2000,
            step: 0.5,
            decay_every: 200,
            decay: 0.5,
            restarts: 2,
            jitter: 2.0,
            door_iters: 600,
            door_size_init: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("loss became non-finite during descent")]
    Diverged,
}

/// One row of the monotone best-so-far trace.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub best_total: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub boxes: BoxSet,
    pub report: LossReport,
    pub trace: Vec<TraceEntry>,
}

/// Bounding boxes of the free-space connected components of the truth's
/// zero-superlevel set, grown one cell to reach the walls, largest first,
/// padded to the budget with gated-off boxes.
fn component_init(truth: &TsdfGrid, budget: usize) -> BoxSet {
    let (w, h) = (truth.width(), truth.height());
    let mut seen = vec![false; w * h];
    let mut boxes: Vec<RoomBox> = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            if seen[sy * w + sx] || truth.get(sx, sy) <= 0.0 {
                continue;
            }
            let mut queue = std::collections::VecDeque::from([(sx, sy)]);
            seen[sy * w + sx] = true;
            let (mut x0, mut y0, mut x1, mut y1) = (sx, sy, sx, sy);
            let mut area = 0usize;
            let mut touches_border = false;
            while let Some((x, y)) = queue.pop_front() {
                area += 1;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    touches_border = true;
                }
                for (dx, dy) in [(0i64, -1i64), (-1, 0), (1, 0), (0, 1)] {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if !seen[ny * w + nx] && truth.get(nx, ny) > 0.0 {
                        seen[ny * w + nx] = true;
                        queue.push_back((nx, ny));
                    }
                }
            }
            if area < 4 || touches_border {
                // Speckle, or the ambient positive region outside the walls
                // (unknown space reads as open in a chamfer field).
                continue;
            }
            boxes.push(RoomBox::new(
                (x0 as f64 - 1.0).max(0.0),
                (y0 as f64 - 1.0).max(0.0),
                (x1 as f64 + 1.0).min(w as f64 - 1.0),
                (y1 as f64 + 1.0).min(h as f64 - 1.0),
                1.0,
            ));
        }
    }
    boxes.sort_by(|a, b| b.area().total_cmp(&a.area()));
    boxes.truncate(budget);
    BoxSet::from_rooms(boxes, budget)
}

fn project_rooms(set: &mut BoxSet, w: f64, h: f64) {
    for r in &mut set.rooms {
        r.x0 = r.x0.clamp(0.0, w - 1.0);
        r.x1 = r.x1.clamp(0.0, w - 1.0);
        r.y0 = r.y0.clamp(0.0, h - 1.0);
        r.y1 = r.y1.clamp(0.0, h - 1.0);
        if r.x0 > r.x1 {
            let mid = 0.5 * (r.x0 + r.x1);
            r.x0 = mid;
            r.x1 = mid;
        }
        if r.y0 > r.y1 {
            let mid = 0.5 * (r.y0 + r.y1);
            r.y0 = mid;
            r.y1 = mid;
        }
        r.q = r.q.clamp(0.0, 1.0);
    }
}

fn project_doors(set: &mut BoxSet, w: f64, h: f64) {
    for d in &mut set.doors {
        d.cx = d.cx.clamp(0.0, w - 1.0);
        d.cy = d.cy.clamp(0.0, h - 1.0);
        d.s = d.s.max(1.0);
        d.q = d.q.clamp(0.0, 1.0);
    }
}

/// Gates move by this fraction of the coordinate step: a full-cell jump of
/// a [0,1] gate swings the whole field by 2*gamma and locks the descent
/// into a two-cycle.
const GATE_STEP_RATIO: f64 = 0.1;

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Rooms,
    Doors,
}

/// Signed-step descent over one parameter group; returns the best-so-far
/// boxes, their report, and the appended trace.
fn descend(
    mut current: BoxSet,
    truth: &TsdfGrid,
    wall: &WallMask,
    phase: Phase,
    iters: usize,
    cfg: &FitterConfig,
    trace: &mut Vec<TraceEntry>,
    iter_base: usize,
) -> Result<(BoxSet, LossReport), FitError> {
    let (w, h) = (truth.width() as f64, truth.height() as f64);
    let mut step = cfg.step;
    let mut best = current.clone();
    let mut best_report = loss_total(&current, truth, wall);
    if !best_report.is_finite() {
        return Err(FitError::Diverged);
    }
    for it in 0..iters {
        let report = if it == 0 {
            best_report.clone()
        } else {
            loss_total(&current, truth, wall)
        };
        if !report.is_finite() {
            return Err(FitError::Diverged);
        }
        if report.total < best_report.total {
            best = current.clone();
            best_report = report.clone();
        }
        trace.push(TraceEntry {
            iter: iter_base + it,
            best_total: best_report.total,
            step,
        });
        let g = &report.gradients;
        let sgn = |v: f64| {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        };
        let q_step = step * GATE_STEP_RATIO;
        match phase {
            Phase::Rooms => {
                for (r, gr) in current.rooms.iter_mut().zip(&g.rooms) {
                    r.x0 -= step * sgn(gr.x0);
                    r.y0 -= step * sgn(gr.y0);
                    r.x1 -= step * sgn(gr.x1);
                    r.y1 -= step * sgn(gr.y1);
                    r.q -= q_step * sgn(gr.q);
                }
                project_rooms(&mut current, w, h);
            }
            Phase::Doors => {
                for (d, gd) in current.doors.iter_mut().zip(&g.doors) {
                    d.cx -= step * sgn(gd.cx);
                    d.cy -= step * sgn(gd.cy);
                    d.s -= step * sgn(gd.s);
                    d.q -= q_step * sgn(gd.q);
                }
                project_doors(&mut current, w, h);
            }
        }
        if (it + 1) % cfg.decay_every == 0 {
            step *= cfg.decay;
        }
    }
    // The final position may beat the last recorded best.
    let report = loss_total(&current, truth, wall);
    if report.is_finite() && report.total < best_report.total {
        best = current;
        best_report = report;
    }
    Ok((best, best_report))
}

/// Door candidates seeded at the shared-edge midpoints of adjacent fitted
/// rooms.
fn seed_doors(set: &mut BoxSet, size_init: f64) {
    let adjacency = room_adjacency(set, 3.0, 4.0);
    let m = set.rooms.len();
    for i in 0..m {
        for j in (i + 1)..m {
            if !adjacency[i][j] {
                continue;
            }
            let (a, b) = (&set.rooms[i], &set.rooms[j]);
            // Facing edges share a strip that is thin on the separating
            // axis; its midpoint lies on the shared wall line.
            let cx = 0.5 * (a.x0.max(b.x0) + a.x1.min(b.x1));
            let cy = 0.5 * (a.y0.max(b.y0) + a.y1.min(b.y1));
            set.doors.push(DoorBox::new(cx, cy, size_init, 1.0, (i, j)));
        }
    }
}

/// Fit a box set to a ground-truth TSDF by projected subgradient descent,
/// best of `1 + restarts` jittered starts, rooms first and doors second.
pub fn fit_boxes(
    truth: &TsdfGrid,
    cfg: &FitterConfig,
    init: Option<BoxSet>,
) -> Result<FitOutcome, FitError> {
    let wall = WallMask::from_tsdf(truth);
    let base = init.unwrap_or_else(|| component_init(truth, cfg.budget));
    let n_starts = cfg.restarts + 1;
    let outcomes: Vec<Result<FitOutcome, FitError>> = (0..n_starts)
        .into_par_iter()
        .map(|r| {
            let mut start = base.clone();
            if r > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
                for room in start.rooms.iter_mut().filter(|b| b.is_active()) {
                    room.x0 += rng.gen_range(-cfg.jitter..=cfg.jitter);
                    room.y0 += rng.gen_range(-cfg.jitter..=cfg.jitter);
                    room.x1 += rng.gen_range(-cfg.jitter..=cfg.jitter);
                    room.y1 += rng.gen_range(-cfg.jitter..=cfg.jitter);
                }
                project_rooms(&mut start, truth.width() as f64, truth.height() as f64);
            }
            let mut trace = Vec::new();
            let (mut fitted, _) = descend(
                start,
                truth,
                &wall,
                Phase::Rooms,
                cfg.max_iters,
                cfg,
                &mut trace,
                0,
            )?;
            if fitted.doors.is_empty() {
                seed_doors(&mut fitted, cfg.door_size_init);
            }
            let (boxes, report) = if fitted.doors.is_empty() {
                let report = loss_total(&fitted, truth, &wall);
                (fitted, report)
            } else {
                descend(
                    fitted,
                    truth,
                    &wall,
                    Phase::Doors,
                    cfg.door_iters,
                    cfg,
                    &mut trace,
                    cfg.max_iters,
                )?
            };
            Ok(FitOutcome {
                boxes,
                report,
                trace,
            })
        })
        .collect();

    let mut best: Option<FitOutcome> = None;
    for outcome in outcomes {
        let outcome = outcome?;
        let better = match &best {
            None => true,
            Some(b) => outcome.report.total < b.report.total,
        };
        if better {
            best = Some(outcome);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Predictor backed by the fitter, run on the chamfer TSDF of the observed
/// local map.
pub struct FitterPredictor {
    pub cfg: FitterConfig,
    pub gamma: f64,
}

impl FitterPredictor {
    pub fn new(cfg: FitterConfig) -> Self {
        Self {
            cfg,
            gamma: DEFAULT_GAMMA,
        }
    }
}

impl Predictor for FitterPredictor {
    fn predict(&self, input: &PredictorInput) -> Result<BoxSet, PredictError> {
        let observed = input.observed()?;
        let truth = chamfer_tsdf(&observed, self.gamma)?;
        let outcome = fit_boxes(&truth, &self.cfg, None)?;
        Ok(outcome
            .boxes
            .translated(input.frame.dx as f64, input.frame.dy as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxcalc::composite_tsdf;
    use crate::gridworld::GridGeometry;

    fn analytic_truth(set: &BoxSet, size: usize, gamma: f64) -> TsdfGrid {
        TsdfGrid::from_fn(GridGeometry::square(size), gamma, |x, y| {
            composite_tsdf(set, x, y, gamma)
        })
    }

    fn quick_cfg() -> FitterConfig {
        FitterConfig {
            max_iters: 600,
            restarts: 0,
            door_iters: 200,
            ..FitterConfig::default()
        }
    }

    #[test]
    fn recovers_single_room_from_perturbed_init() {
        let gamma = 5.0;
        let truth_box = RoomBox::new(10.0, 12.0, 40.0, 36.0, 1.0);
        let truth_set = BoxSet::from_rooms(vec![truth_box], 1);
        let truth = analytic_truth(&truth_set, 52, gamma);
        let mut init = truth_set.clone();
        init.rooms[0].x0 += 2.6;
        init.rooms[0].y0 -= 1.8;
        init.rooms[0].x1 -= 2.2;
        init.rooms[0].y1 += 3.0;
        let cfg = FitterConfig {
            max_iters: 1000,
            restarts: 0,
            ..FitterConfig::default()
        };
        let out = fit_boxes(&truth, &cfg, Some(init)).unwrap();
        let got = &out.boxes.rooms[0];
        for (a, b) in [
            (got.x0, truth_box.x0),
            (got.y0, truth_box.y0),
            (got.x1, truth_box.x1),
            (got.y1, truth_box.y1),
        ] {
            assert!((a - b).abs() <= 0.5, "{a} vs {b}");
        }
        assert!(out.report.l_tsdf <= 1e-3, "l_tsdf {}", out.report.l_tsdf);
    }

    #[test]
    fn descent_from_ground_truth_does_not_increase() {
        let gamma = 5.0;
        let set = BoxSet::from_rooms(
            vec![
                RoomBox::new(4.0, 4.0, 22.0, 30.0, 1.0),
                RoomBox::new(22.0, 4.0, 44.0, 30.0, 1.0),
            ],
            2,
        );
        let truth = analytic_truth(&set, 48, gamma);
        let out = fit_boxes(&truth, &quick_cfg(), Some(set.clone())).unwrap();
        let wall = WallMask::from_tsdf(&truth);
        let init_total = loss_total(&set, &truth, &wall).total;
        assert!(out.report.total <= init_total + 1e-12);
    }

    #[test]
    fn trace_is_monotone_nonincreasing() {
        let gamma = 5.0;
        let set = BoxSet::from_rooms(vec![RoomBox::new(8.0, 8.0, 30.0, 26.0, 1.0)], 1);
        let truth = analytic_truth(&set, 40, gamma);
        let out = fit_boxes(&truth, &quick_cfg(), None).unwrap();
        for pair in out.trace.windows(2) {
            assert!(pair[1].best_total <= pair[0].best_total + 1e-15);
        }
    }

    #[test]
    fn fitted_boxes_respect_invariants() {
        let gamma = 5.0;
        let set = BoxSet::from_rooms(vec![RoomBox::new(6.0, 6.0, 28.0, 22.0, 1.0)], 3);
        let truth = analytic_truth(&set, 36, gamma);
        let out = fit_boxes(&truth, &quick_cfg(), None).unwrap();
        for r in &out.boxes.rooms {
            assert!(r.x0 <= r.x1 && r.y0 <= r.y1);
            assert!((0.0..=1.0).contains(&r.q));
            assert!(r.x0 >= 0.0 && r.x1 <= 35.0);
        }
    }

    #[test]
    fn same_seed_and_config_reproduce_identically() {
        let gamma = 5.0;
        let set = BoxSet::from_rooms(vec![RoomBox::new(6.0, 6.0, 28.0, 22.0, 1.0)], 2);
        let truth = analytic_truth(&set, 36, gamma);
        let cfg = FitterConfig {
            restarts: 2,
            max_iters: 300,
            ..quick_cfg()
        };
        let a = fit_boxes(&truth, &cfg, None).unwrap();
        let b = fit_boxes(&truth, &cfg, None).unwrap();
        assert_eq!(a.boxes, b.boxes);
        assert_eq!(a.report.total, b.report.total);
    }

    #[test]
    fn component_init_finds_the_rooms() {
        let gamma = 5.0;
        let set = BoxSet::from_rooms(
            vec![
                RoomBox::new(4.0, 4.0, 22.0, 30.0, 1.0),
                RoomBox::new(22.0, 4.0, 44.0, 30.0, 1.0),
            ],
            6,
        );
        // Rasterized world gives disjoint free components per room.
        let world = crate::boxcalc::rasterize(&set, &GridGeometry::square(48));
        let truth = chamfer_tsdf(&world, gamma).unwrap();
        let init = component_init(&truth, 6);
        let active: Vec<_> = init.active_rooms().collect();
        assert_eq!(active.len(), 2);
        for (_, b) in active {
            assert!(b.area() > 200.0);
        }
    }
}
