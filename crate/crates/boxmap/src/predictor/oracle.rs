//! Oracle predictor: ground-truth annotations filtered by observed
//! coverage, standing in for a trained network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Frame, PredictError, Predictor, PredictorInput};
use crate::boxcalc::BoxSet;
use crate::gridworld::{CellState, OccupancyGrid};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Minimum observed fraction of a box's footprint for it to be emitted
    /// as existing. Zero means full information.
    pub rho: f64,
    /// Uniform coordinate noise amplitude in cells (robustness studies).
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            rho: 0.2,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Fraction of a box footprint's cells that are observed (non-UNKNOWN) in
/// `observed`, which sits at `frame` within the world.
pub fn visible_fraction(
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    observed: &OccupancyGrid,
    frame: &Frame,
) -> f64 {
    let cx0 = x0.ceil() as i64;
    let cx1 = x1.floor() as i64;
    let cy0 = y0.ceil() as i64;
    let cy1 = y1.floor() as i64;
    if cx1 < cx0 || cy1 < cy0 {
        return 0.0;
    }
    let total = ((cx1 - cx0 + 1) * (cy1 - cy0 + 1)) as f64;
    let mut seen = 0usize;
    for wy in cy0..=cy1 {
        for wx in cx0..=cx1 {
            let (lx, ly) = (wx - frame.dx, wy - frame.dy);
            if let Some(state) = observed.get_signed(lx, ly) {
                if state != CellState::Unknown {
                    seen += 1;
                }
            }
        }
    }
    seen as f64 / total
}

/// Filter annotations by observed coverage: boxes whose footprint is at
/// least `rho` observed keep gate 1, the rest are carried gated off.
pub fn oracle_predict(
    annotations: &BoxSet,
    observed: &OccupancyGrid,
    frame: &Frame,
    rho: f64,
) -> BoxSet {
    let mut out = annotations.clone();
    for room in &mut out.rooms {
        if room.q < 1.0 {
            continue; // annotation padding stays off
        }
        let frac = visible_fraction(room.x0, room.y0, room.x1, room.y1, observed, frame);
        room.q = if frac >= rho { 1.0 } else { 0.0 };
    }
    for door in &mut out.doors {
        let half = door.s / 2.0;
        let frac = visible_fraction(
            door.cx - half,
            door.cy - half,
            door.cx + half,
            door.cy + half,
            observed,
            frame,
        );
        door.q = if frac >= rho { 1.0 } else { 0.0 };
    }
    out
}

/// Ground-truth-backed predictor. Coordinate noise, when configured, is
/// drawn once at construction so repeated predictions stay deterministic.
pub struct OraclePredictor {
    annotations: BoxSet,
    cfg: OracleConfig,
}

impl OraclePredictor {
    pub fn new(annotations: BoxSet, cfg: OracleConfig) -> Self {
        let mut annotations = annotations;
        if cfg.noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let s = cfg.noise_sigma;
            for r in &mut annotations.rooms {
                if r.q >= 1.0 {
                    r.x0 += rng.gen_range(-s..=s);
                    r.y0 += rng.gen_range(-s..=s);
                    r.x1 += rng.gen_range(-s..=s);
                    r.y1 += rng.gen_range(-s..=s);
                }
            }
            for d in &mut annotations.doors {
                d.cx += rng.gen_range(-s..=s);
                d.cy += rng.gen_range(-s..=s);
            }
        }
        Self { annotations, cfg }
    }

    pub fn annotations(&self) -> &BoxSet {
        &self.annotations
    }
}

impl Predictor for OraclePredictor {
    fn predict(&self, input: &PredictorInput) -> Result<BoxSet, PredictError> {
        if self.annotations.rooms.is_empty() {
            return Err(PredictError::MissingAnnotations);
        }
        let observed = input.observed()?;
        Ok(oracle_predict(
            &self.annotations,
            &observed,
            &input.frame,
            self.cfg.rho,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxcalc::{rasterize, DoorBox, RoomBox};
    use crate::gridworld::GridGeometry;

    fn annotations() -> BoxSet {
        let mut set = BoxSet::from_rooms(
            vec![
                RoomBox::new(2.0, 2.0, 20.0, 20.0, 1.0),
                RoomBox::new(20.0, 2.0, 38.0, 20.0, 1.0),
            ],
            6,
        );
        set.doors.push(DoorBox::new(20.0, 11.0, 5.0, 1.0, (0, 1)));
        set
    }

    #[test]
    fn fully_observed_world_returns_full_annotation_set() {
        let set = annotations();
        let world = rasterize(&set, &GridGeometry::square(42));
        let frame = Frame::default();
        let out = oracle_predict(&set, &world, &frame, 0.2);
        assert!(out.rooms[0].is_active() && out.rooms[1].is_active());
        assert!(out.doors[0].is_active());
        // Padding rooms stay off.
        assert!(out.rooms[2..].iter().all(|r| !r.is_active()));
    }

    #[test]
    fn unobserved_rooms_are_gated_off() {
        let set = annotations();
        let world = rasterize(&set, &GridGeometry::square(42));
        // Only the left room observed.
        let mut observed = OccupancyGrid::filled(*world.geometry(), CellState::Unknown);
        for y in 2..=20 {
            for x in 2..=19 {
                observed.set(x, y, world.get(x, y));
            }
        }
        let out = oracle_predict(&set, &observed, &Frame::default(), 0.2);
        assert!(out.rooms[0].is_active());
        assert!(!out.rooms[1].is_active());
    }

    #[test]
    fn visibility_threshold_cuts_both_ways() {
        let set = annotations();
        let world = rasterize(&set, &GridGeometry::square(42));
        // Observe ~40% of room 1's columns.
        let mut observed = OccupancyGrid::filled(*world.geometry(), CellState::Unknown);
        for y in 2..=20 {
            for x in 20..=27 {
                observed.set(x, y, world.get(x, y));
            }
        }
        let frame = Frame::default();
        let frac = visible_fraction(20.0, 2.0, 38.0, 20.0, &observed, &frame);
        assert!(frac > 0.2 && frac < 0.5, "fraction {frac}");
        let included = oracle_predict(&set, &observed, &frame, 0.2);
        assert!(included.rooms[1].is_active());
        let excluded = oracle_predict(&set, &observed, &frame, 0.5);
        assert!(!excluded.rooms[1].is_active());
    }

    #[test]
    fn rho_zero_is_full_information() {
        let set = annotations();
        let blank = OccupancyGrid::filled(GridGeometry::square(42), CellState::Unknown);
        let out = oracle_predict(&set, &blank, &Frame::default(), 0.0);
        assert!(out.rooms[0].is_active() && out.rooms[1].is_active());
    }

    #[test]
    fn frame_offset_shifts_the_window() {
        let set = annotations();
        let world = rasterize(&set, &GridGeometry::square(42));
        let crop = world.crop_at_cell((10, 10), 16); // covers room 0's area
        let frame = Frame::of_crop(&crop, world.geometry());
        assert_eq!((frame.dx, frame.dy), (2, 2));
        let out = oracle_predict(&set, &crop, &frame, 0.2);
        assert!(out.rooms[0].is_active());
        assert!(!out.rooms[1].is_active()); // outside the window
    }

    #[test]
    fn oracle_output_is_identity_subset_with_binary_gates() {
        let set = annotations();
        let world = rasterize(&set, &GridGeometry::square(42));
        let out = oracle_predict(&set, &world, &Frame::default(), 0.2);
        for (a, b) in set.rooms.iter().zip(&out.rooms) {
            assert_eq!((a.x0, a.y0, a.x1, a.y1), (b.x0, b.y0, b.x1, b.y1));
            assert!(b.q == 0.0 || b.q == 1.0);
        }
    }

    #[test]
    fn predictor_trait_round_trip_is_deterministic() {
        let set = annotations();
        let world = rasterize(&set, &GridGeometry::square(42));
        let pred = OraclePredictor::new(set, OracleConfig::default());
        let input = PredictorInput {
            prev_topo_raster: OccupancyGrid::filled(*world.geometry(), CellState::Unknown),
            laser_local: world.clone(),
            frame: Frame::default(),
        };
        let a = pred.predict(&input).unwrap();
        let b = pred.predict(&input).unwrap();
        assert_eq!(a, b);
    }
}
