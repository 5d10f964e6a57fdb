//! The loss family over a predicted box set against a ground-truth TSDF,
//! with analytic subgradients for every box parameter and gate.
//!
//! All three map losses share a single 1/P normalization; the wall-masked
//! loss is not re-normalized by the mask size. Kinks (min/max ties, ReLU
//! zeros, mask boundaries) take the subgradient of the first-listed
//! argument, which keeps descent deterministic. `check_gradients` verifies
//! the analytic gradients against central finite differences at
//! configurations that are provably away from every kink.

use serde::{Deserialize, Serialize};

use crate::boxcalc::{relu, BoxSet, GATE_THRESHOLD};
use crate::gridworld::{CellState, OccupancyGrid, TsdfGrid};

/// |predicted TSDF| band that counts as "near a wall" in the door mask.
pub const DEFAULT_WALL_BAND: f64 = 1.0;

#[inline]
fn step(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn sign(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else if z < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Neumaier-compensated accumulator. Pixel sums feed finite-difference
/// checks, so plain f64 accumulation error over tens of thousands of terms
/// would show up as gradient noise.
#[derive(Clone, Copy, Default)]
struct Acc {
    sum: f64,
    comp: f64,
}

impl Acc {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

/// Partials with respect to one room box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoomGrad {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub q: f64,
}

/// Partials with respect to one door box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DoorGrad {
    pub cx: f64,
    pub cy: f64,
    pub s: f64,
    pub q: f64,
}

/// Per-parameter partials for a whole box set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub rooms: Vec<RoomGrad>,
    pub doors: Vec<DoorGrad>,
}

impl Gradients {
    pub fn zeros(set: &BoxSet) -> Self {
        Self {
            rooms: vec![RoomGrad::default(); set.rooms.len()],
            doors: vec![DoorGrad::default(); set.doors.len()],
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.rooms.iter_mut().zip(&other.rooms) {
            a.x0 += b.x0;
            a.y0 += b.y0;
            a.x1 += b.x1;
            a.y1 += b.y1;
            a.q += b.q;
        }
        for (a, b) in self.doors.iter_mut().zip(&other.doors) {
            a.cx += b.cx;
            a.cy += b.cy;
            a.s += b.s;
            a.q += b.q;
        }
    }

    fn scale(&mut self, k: f64) {
        for g in &mut self.rooms {
            g.x0 *= k;
            g.y0 *= k;
            g.x1 *= k;
            g.y1 *= k;
            g.q *= k;
        }
        for g in &mut self.doors {
            g.cx *= k;
            g.cy *= k;
            g.s *= k;
            g.q *= k;
        }
    }

    pub fn inf_norm(&self) -> f64 {
        let mut m: f64 = 0.0;
        for g in &self.rooms {
            for v in [g.x0, g.y0, g.x1, g.y1, g.q] {
                m = m.max(v.abs());
            }
        }
        for g in &self.doors {
            for v in [g.cx, g.cy, g.s, g.q] {
                m = m.max(v.abs());
            }
        }
        m
    }
}

/// Boolean mask over the truth lattice selecting wall pixels.
#[derive(Clone, Debug)]
pub struct WallMask {
    width: usize,
    height: usize,
    cells: Vec<bool>,
}

impl WallMask {
    /// Wall pixels are the zero level set of the ground-truth TSDF.
    pub fn from_tsdf(truth: &TsdfGrid) -> Self {
        Self {
            width: truth.width(),
            height: truth.height(),
            cells: truth.values().iter().map(|v| v.abs() <= 1e-9).collect(),
        }
    }

    pub fn from_grid(grid: &OccupancyGrid) -> Self {
        Self {
            width: grid.width(),
            height: grid.height(),
            cells: grid
                .cells()
                .iter()
                .map(|&c| c == CellState::Occupied)
                .collect(),
        }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![false; width * height],
        }
    }

    #[inline]
    pub fn is_set(&self, x: usize, y: usize) -> bool {
        self.cells[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Components, total, and full gradient of the training objective.
#[derive(Clone, Debug, Serialize)]
pub struct LossReport {
    pub l_tsdf: f64,
    pub l_tsdf_wall: f64,
    pub l_door: f64,
    pub l_iou: f64,
    pub l_gate: f64,
    pub total: f64,
    pub gradients: Gradients,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

// ---------------------------------------------------------------------------
// Forward + backward building blocks
// ---------------------------------------------------------------------------

/// One axis value with partials w.r.t. the two wall coordinates.
#[inline]
fn f1d_grad(x: f64, x0: f64, x1: f64, gamma: f64) -> (f64, f64, f64) {
    let t0 = relu(x - x0 + gamma) - relu(x - x0 - gamma) - gamma;
    let t1 = -relu(x - x1 + gamma) + relu(x - x1 - gamma) + gamma;
    if t0 <= t1 {
        let d0 = -step(x - x0 + gamma) + step(x - x0 - gamma);
        (t0, d0, 0.0)
    } else {
        let d1 = step(x - x1 + gamma) - step(x - x1 - gamma);
        (t1, 0.0, d1)
    }
}

/// Box TSDF value with partials w.r.t. (x0, y0, x1, y1).
#[inline]
fn box_tsdf_grad(b: &crate::boxcalc::RoomBox, px: f64, py: f64, gamma: f64) -> (f64, [f64; 4]) {
    let (fx, dx0, dx1) = f1d_grad(px, b.x0, b.x1, gamma);
    let (fy, dy0, dy1) = f1d_grad(py, b.y0, b.y1, gamma);
    if fx <= fy {
        (fx, [dx0, 0.0, dx1, 0.0])
    } else {
        (fy, [0.0, dy0, 0.0, dy1])
    }
}

/// Rooms composite at one point: value, winning box (if any), and the
/// winner's partials (coords then gate).
struct CompositeEval {
    value: f64,
    winner: Option<usize>,
    d_coords: [f64; 4],
    dq: f64,
}

fn composite_grad(set: &BoxSet, px: f64, py: f64, gamma: f64) -> CompositeEval {
    let mut best = -gamma;
    let mut winner = None;
    for (i, b) in set.rooms.iter().enumerate() {
        let f = crate::boxcalc::box_tsdf(b, px, py, gamma);
        let g = b.q * (f + gamma) - gamma;
        if g > best {
            best = g;
            winner = Some(i);
        }
    }
    match winner {
        None => CompositeEval {
            value: best,
            winner,
            d_coords: [0.0; 4],
            dq: 0.0,
        },
        Some(i) => {
            let b = &set.rooms[i];
            let (f, df) = box_tsdf_grad(b, px, py, gamma);
            CompositeEval {
                value: best,
                winner,
                d_coords: df.map(|d| b.q * d),
                dq: f + gamma,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Loss components
// ---------------------------------------------------------------------------

/// Mean squared difference between the truth and the rooms composite (Eq. 5
/// style, 1/P normalized).
pub fn loss_tsdf(pred: &BoxSet, truth: &TsdfGrid) -> (f64, Gradients) {
    let gamma = truth.gamma();
    let (w, h) = (truth.width(), truth.height());
    let p = (w * h) as f64;
    let mut acc = Acc::default();
    let mut grads = Gradients::zeros(pred);
    for y in 0..h {
        for x in 0..w {
            let c = composite_grad(pred, x as f64, y as f64, gamma);
            let r = c.value - truth.get(x, y);
            acc.add(r * r);
            if let Some(i) = c.winner {
                let g = &mut grads.rooms[i];
                let k = 2.0 * r;
                g.x0 += k * c.d_coords[0];
                g.y0 += k * c.d_coords[1];
                g.x1 += k * c.d_coords[2];
                g.y1 += k * c.d_coords[3];
                g.q += k * c.dq;
            }
        }
    }
    grads.scale(1.0 / p);
    (acc.value() / p, grads)
}

/// Same squared difference summed over wall pixels only, still 1/P.
pub fn loss_tsdf_wall(pred: &BoxSet, truth: &TsdfGrid, wall: &WallMask) -> (f64, Gradients) {
    let gamma = truth.gamma();
    let (w, h) = (truth.width(), truth.height());
    let p = (w * h) as f64;
    let mut acc = Acc::default();
    let mut grads = Gradients::zeros(pred);
    for y in 0..h {
        for x in 0..w {
            if !wall.is_set(x, y) {
                continue;
            }
            let c = composite_grad(pred, x as f64, y as f64, gamma);
            let r = c.value - truth.get(x, y);
            acc.add(r * r);
            if let Some(i) = c.winner {
                let g = &mut grads.rooms[i];
                let k = 2.0 * r;
                g.x0 += k * c.d_coords[0];
                g.y0 += k * c.d_coords[1];
                g.x1 += k * c.d_coords[2];
                g.y1 += k * c.d_coords[3];
                g.q += k * c.dq;
            }
        }
    }
    grads.scale(1.0 / p);
    (acc.value() / p, grads)
}

/// Hierarchical door loss: the residual field truth − rooms-composite is
/// compared against the gated max of door diamonds, on pixels where the
/// predicted composite is near zero or the input marks a wall.
///
/// The door field is `max(0, max_i(q_i (diamond_i + gamma) - gamma))`: the
/// same gating scheme as the room merge, floored at zero so an absent or
/// gated-off door set contributes nothing.
pub fn loss_door(
    pred: &BoxSet,
    truth: &TsdfGrid,
    input_walls: &WallMask,
    wall_band: f64,
) -> (f64, Gradients) {
    let gamma = truth.gamma();
    let (w, h) = (truth.width(), truth.height());
    let p = (w * h) as f64;
    let mut acc = Acc::default();
    let mut grads = Gradients::zeros(pred);
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64, y as f64);
            let c = composite_grad(pred, px, py, gamma);
            if c.value.abs() > wall_band && !input_walls.is_set(x, y) {
                continue;
            }
            let mut field = 0.0;
            let mut best: Option<(usize, f64)> = None;
            for (j, d) in pred.doors.iter().enumerate() {
                let dv = crate::boxcalc::door_diamond(d, px, py);
                let hj = d.q * (dv + gamma) - gamma;
                if hj > field {
                    field = hj;
                    best = Some((j, dv));
                }
            }
            let r = (truth.get(x, y) - c.value) - field;
            acc.add(r * r);
            let k = 2.0 * r;
            // The rooms composite appears in the residual with a minus sign.
            if let Some(i) = c.winner {
                let g = &mut grads.rooms[i];
                g.x0 -= k * c.d_coords[0];
                g.y0 -= k * c.d_coords[1];
                g.x1 -= k * c.d_coords[2];
                g.y1 -= k * c.d_coords[3];
                g.q -= k * c.dq;
            }
            if let Some((j, dv)) = best {
                let d = &pred.doors[j];
                let g = &mut grads.doors[j];
                g.q -= k * (dv + gamma);
                g.s -= k * (d.q * 0.5);
                g.cx -= k * (d.q * sign(px - d.cx));
                g.cy -= k * (d.q * sign(py - d.cy));
            }
        }
    }
    grads.scale(1.0 / p);
    (acc.value() / p, grads)
}

#[inline]
fn min_first(u: f64, v: f64) -> (f64, f64) {
    // (value, d/du) with the first argument winning ties.
    if u <= v {
        (u, 1.0)
    } else {
        (v, 0.0)
    }
}

#[inline]
fn max_first(u: f64, v: f64) -> (f64, f64) {
    if u >= v {
        (u, 1.0)
    } else {
        (v, 0.0)
    }
}

/// Mean pairwise IoU over ordered distinct active-room pairs, normalized by
/// M(M-1) with M the room budget.
pub fn loss_iou(pred: &BoxSet) -> (f64, Gradients) {
    let m = pred.rooms.len();
    let mut grads = Gradients::zeros(pred);
    if m < 2 {
        return (0.0, grads);
    }
    let norm = 1.0 / (m as f64 * (m - 1) as f64);
    let mut total = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let (a, b) = (&pred.rooms[i], &pred.rooms[j]);
            if !a.is_active() || !b.is_active() {
                continue;
            }
            // Intersection extents, first-listed (box a) winning ties.
            let (hi_x, d_hix_a) = min_first(a.x1, b.x1);
            let (lo_x, d_lox_a) = max_first(a.x0, b.x0);
            let (hi_y, d_hiy_a) = min_first(a.y1, b.y1);
            let (lo_y, d_loy_a) = max_first(a.y0, b.y0);
            let iw_raw = hi_x - lo_x;
            let ih_raw = hi_y - lo_y;
            let inter = relu(iw_raw) * relu(ih_raw);
            let union = a.area() + b.area() - inter;
            if union <= 0.0 || inter <= 0.0 {
                continue;
            }
            let val = inter / union;
            total += 2.0 * val; // both ordered pairs

            let sw = step(iw_raw);
            let sh = step(ih_raw);
            let iw = relu(iw_raw);
            let ih = relu(ih_raw);
            // dI w.r.t. each of the eight coords.
            let di = [
                // a.x0, a.y0, a.x1, a.y1
                -d_lox_a * sw * ih,
                -d_loy_a * sh * iw,
                d_hix_a * sw * ih,
                d_hiy_a * sh * iw,
                // b.x0, b.y0, b.x1, b.y1
                -(1.0 - d_lox_a) * sw * ih,
                -(1.0 - d_loy_a) * sh * iw,
                (1.0 - d_hix_a) * sw * ih,
                (1.0 - d_hiy_a) * sh * iw,
            ];
            // dA w.r.t. the same coords (own box only).
            let da = [
                -a.height(),
                -a.width(),
                a.height(),
                a.width(),
                -b.height(),
                -b.width(),
                b.height(),
                b.width(),
            ];
            let u2 = union * union;
            // Pair appears twice in the ordered sum.
            let k = 2.0 * norm;
            let mut d_out = [0.0; 8];
            for t in 0..8 {
                d_out[t] = k * (di[t] * (union + inter) - inter * da[t]) / u2;
            }
            let ga = &mut grads.rooms[i];
            ga.x0 += d_out[0];
            ga.y0 += d_out[1];
            ga.x1 += d_out[2];
            ga.y1 += d_out[3];
            let gb = &mut grads.rooms[j];
            gb.x0 += d_out[4];
            gb.y0 += d_out[5];
            gb.x1 += d_out[6];
            gb.y1 += d_out[7];
        }
    }
    (total * norm, grads)
}

/// Bi-modal + sparsity gate regularizer over an explicit gate list:
/// `(sum q(1-q) + sum q) / |Q|`. Returns the per-gate gradient alongside.
pub fn loss_gate(gates: &[f64]) -> (f64, Vec<f64>) {
    if gates.is_empty() {
        return (0.0, Vec::new());
    }
    let n = gates.len() as f64;
    let value = gates.iter().map(|q| 2.0 * q - q * q).sum::<f64>() / n;
    let grad = gates.iter().map(|q| (2.0 - 2.0 * q) / n).collect();
    (value, grad)
}

/// All components, their exact sum, and the combined gradient.
///
/// The wall mask is used both as the W of the wall-emphasis loss and as the
/// input-wall part of the door mask.
pub fn loss_total(pred: &BoxSet, truth: &TsdfGrid, wall: &WallMask) -> LossReport {
    let (l_tsdf, g1) = loss_tsdf(pred, truth);
    let (l_wall, g2) = loss_tsdf_wall(pred, truth, wall);
    let (l_door, g3) = loss_door(pred, truth, wall, DEFAULT_WALL_BAND);
    let (l_iou, g4) = loss_iou(pred);
    let gates = pred.gates();
    let (l_gate, gate_grad) = loss_gate(&gates);

    let mut gradients = g1;
    gradients.add(&g2);
    gradients.add(&g3);
    gradients.add(&g4);
    let n_rooms = pred.rooms.len();
    for (i, g) in gate_grad.iter().enumerate() {
        if i < n_rooms {
            gradients.rooms[i].q += g;
        } else {
            gradients.doors[i - n_rooms].q += g;
        }
    }
    LossReport {
        l_tsdf,
        l_tsdf_wall: l_wall,
        l_door,
        l_iou,
        l_gate,
        total: l_tsdf + l_wall + l_door + l_iou + l_gate,
        gradients,
    }
}

// ---------------------------------------------------------------------------
// Finite-difference verification
// ---------------------------------------------------------------------------

/// Identifies one scalar parameter of a box set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamId {
    Room(usize, usize), // box index, field 0..5 = x0,y0,x1,y1,q
    Door(usize, usize), // door index, field 0..4 = cx,cy,s,q
}

pub fn param_ids(set: &BoxSet) -> Vec<ParamId> {
    let mut ids = Vec::new();
    for i in 0..set.rooms.len() {
        for f in 0..5 {
            ids.push(ParamId::Room(i, f));
        }
    }
    for j in 0..set.doors.len() {
        for f in 0..4 {
            ids.push(ParamId::Door(j, f));
        }
    }
    ids
}

pub fn perturbed(set: &BoxSet, id: ParamId, delta: f64) -> BoxSet {
    let mut out = set.clone();
    match id {
        ParamId::Room(i, f) => {
            let r = &mut out.rooms[i];
            match f {
                0 => r.x0 += delta,
                1 => r.y0 += delta,
                2 => r.x1 += delta,
                3 => r.y1 += delta,
                _ => r.q += delta,
            }
        }
        ParamId::Door(j, f) => {
            let d = &mut out.doors[j];
            match f {
                0 => d.cx += delta,
                1 => d.cy += delta,
                2 => d.s += delta,
                _ => d.q += delta,
            }
        }
    }
    out
}

fn grad_at(g: &Gradients, id: ParamId) -> f64 {
    match id {
        ParamId::Room(i, f) => {
            let r = &g.rooms[i];
            [r.x0, r.y0, r.x1, r.y1, r.q][f]
        }
        ParamId::Door(j, f) => {
            let d = &g.doors[j];
            [d.cx, d.cy, d.s, d.q][f]
        }
    }
}

/// Outcome of one gradient verification run.
#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    /// True when the configuration sat too close to a kink and the check
    /// was skipped rather than evaluated.
    pub skipped_kink: bool,
    /// Smallest scaled distance to any min/max/ReLU/mask decision boundary.
    pub kink_margin: f64,
    pub max_rel_err: f64,
    pub params_checked: usize,
    pub passed: bool,
}

/// One-axis branch values with constancy flags; feeds margin candidates for
/// the selected branch's ReLU arguments and any live-slope tie.
fn axis_margin(v: f64, lo: f64, hi: f64, gamma: f64, consider: &mut impl FnMut(f64)) -> (f64, bool) {
    let a0 = v - lo + gamma;
    let a1 = v - lo - gamma;
    let b0 = v - hi + gamma;
    let b1 = v - hi - gamma;
    let t0 = relu(a0) - relu(a1) - gamma;
    let t1 = -relu(b0) + relu(b1) + gamma;
    // A branch on a saturated piece is locally constant; ties between two
    // constants are harmless (the min stays flat either way).
    let t0_const = a0 <= 0.0 || a1 >= 0.0;
    let t1_const = b0 <= 0.0 || b1 >= 0.0;
    if !(t0_const && t1_const) {
        consider((t0 - t1).abs());
    }
    if t0 <= t1 {
        consider(a0.abs());
        consider(a1.abs());
        (t0, t0_const)
    } else {
        consider(b0.abs());
        consider(b1.abs());
        (t1, t1_const)
    }
}

/// Box TSDF value + constancy flag, pushing the box's own branch margins.
fn box_margin(
    b: &crate::boxcalc::RoomBox,
    px: f64,
    py: f64,
    gamma: f64,
    consider: &mut impl FnMut(f64),
) -> (f64, bool) {
    let (fx, cx) = axis_margin(px, b.x0, b.x1, gamma, consider);
    let (fy, cy) = axis_margin(py, b.y0, b.y1, gamma, consider);
    if !(cx && cy) {
        consider((fx - fy).abs());
    }
    if fx <= fy {
        (fx, cx)
    } else {
        (fy, cy)
    }
}

/// Smallest scaled margin between the configuration and any decision
/// boundary of the loss family, in parameter units.
///
/// A central difference with step `h` is trustworthy only when no branch
/// flips inside ±h of any parameter; decision values move by at most
/// `max(1, 2 gamma)` per unit parameter change, hence the scaling. Ties
/// between locally constant branches (both saturated) are exempt.
pub fn kink_margin(pred: &BoxSet, truth: &TsdfGrid, input_walls: &WallMask, wall_band: f64) -> f64 {
    let gamma = truth.gamma();
    let scale = (2.0 * gamma).max(1.0);
    let mut margin = f64::INFINITY;
    let mut consider = |raw: f64| {
        let m = raw / scale;
        if m < margin {
            margin = m;
        }
    };

    let mut evals: Vec<(f64, bool)> = Vec::with_capacity(pred.rooms.len());
    for y in 0..truth.height() {
        for x in 0..truth.width() {
            let (px, py) = (x as f64, y as f64);
            evals.clear();
            let mut best = -gamma;
            let mut best_i = None;
            for (i, b) in pred.rooms.iter().enumerate() {
                let (f, f_const) = box_margin(b, px, py, gamma, &mut consider);
                let g = b.q * (f + gamma) - gamma;
                // g is locally constant only when f is pinned at -gamma
                // (then the gate slope f+gamma vanishes too).
                let g_const = f_const && f <= -gamma + 1e-12;
                evals.push((g, g_const));
                if g > best {
                    best = g;
                    best_i = Some(i);
                }
            }
            let best_const = best_i.map(|i| evals[i].1).unwrap_or(true);
            for (i, &(g, g_const)) in evals.iter().enumerate() {
                if Some(i) == best_i || (best_const && g_const) {
                    continue;
                }
                consider(best - g);
            }
            // Door-mask membership boundary (skipped where the composite is
            // locally constant and cannot cross the band).
            if !input_walls.is_set(x, y) && !best_const {
                consider((best.abs() - wall_band).abs());
            }
            // Door field: the zero floor plus each gated diamond. A door
            // branch is never locally constant (it always has gate slope
            // dv + gamma >= gamma), so every gap to the field maximum counts.
            let mut field = 0.0;
            let mut dbest: Option<usize> = None;
            for (j, d) in pred.doors.iter().enumerate() {
                let dv = crate::boxcalc::door_diamond(d, px, py);
                let hj = d.q * (dv + gamma) - gamma;
                if hj > field {
                    field = hj;
                    dbest = Some(j);
                }
            }
            for (j, d) in pred.doors.iter().enumerate() {
                if Some(j) == dbest {
                    continue;
                }
                let dv = crate::boxcalc::door_diamond(d, px, py);
                let hj = d.q * (dv + gamma) - gamma;
                consider(field - hj);
            }
            if let Some(j) = dbest {
                consider(field); // gap to the zero floor
                let d = &pred.doors[j];
                let arg = d.s / 2.0 - (px - d.cx).abs() - (py - d.cy).abs();
                consider(arg.abs());
                if arg > 0.0 {
                    consider((px - d.cx).abs());
                    consider((py - d.cy).abs());
                }
            }
        }
    }

    // IoU branches over active pairs, plus the activity threshold itself.
    for (i, a) in pred.rooms.iter().enumerate() {
        consider((a.q - GATE_THRESHOLD).abs());
        for b in pred.rooms.iter().skip(i + 1) {
            if !a.is_active() || !b.is_active() {
                continue;
            }
            consider((a.x1 - b.x1).abs());
            consider((a.x0 - b.x0).abs());
            consider((a.y1 - b.y1).abs());
            consider((a.y0 - b.y0).abs());
            let iw = a.x1.min(b.x1) - a.x0.max(b.x0);
            let ih = a.y1.min(b.y1) - a.y0.max(b.y0);
            consider(iw.abs());
            consider(ih.abs());
        }
    }
    for d in &pred.doors {
        consider((d.q - GATE_THRESHOLD).abs());
    }
    margin
}

/// Central finite differences on every parameter of every loss component.
///
/// Configurations closer than 10h (scaled) to a kink are flagged as skipped
/// instead of producing meaningless comparisons.
pub fn check_gradients(
    pred: &BoxSet,
    truth: &TsdfGrid,
    input_walls: &WallMask,
    h: f64,
    tol: f64,
) -> GradCheckReport {
    let margin = kink_margin(pred, truth, input_walls, DEFAULT_WALL_BAND);
    if margin < 10.0 * h {
        return GradCheckReport {
            skipped_kink: true,
            kink_margin: margin,
            max_rel_err: f64::NAN,
            params_checked: 0,
            passed: false,
        };
    }

    // Analytic per-component gradients.
    let analytic: [(f64, Gradients); 4] = [
        loss_tsdf(pred, truth),
        loss_tsdf_wall(pred, truth, input_walls),
        loss_door(pred, truth, input_walls, DEFAULT_WALL_BAND),
        loss_iou(pred),
    ];
    let gates = pred.gates();
    let (_, gate_grad) = loss_gate(&gates);

    let values = |set: &BoxSet| -> [f64; 5] {
        let (a, _) = loss_tsdf(set, truth);
        let (b, _) = loss_tsdf_wall(set, truth, input_walls);
        let (c, _) = loss_door(set, truth, input_walls, DEFAULT_WALL_BAND);
        let (d, _) = loss_iou(set);
        let (e, _) = loss_gate(&set.gates());
        [a, b, c, d, e]
    };

    let mut ginf: f64 = gate_grad.iter().fold(0.0, |m, g| m.max(g.abs()));
    for (_, g) in &analytic {
        ginf = ginf.max(g.inf_norm());
    }
    let floor = 1e-3 * ginf.max(1.0);

    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    for id in param_ids(pred) {
        let plus = values(&perturbed(pred, id, h));
        let minus = values(&perturbed(pred, id, -h));
        for c in 0..5 {
            let fd = (plus[c] - minus[c]) / (2.0 * h);
            let a = if c < 4 {
                grad_at(&analytic[c].1, id)
            } else {
                // Gate loss touches only q parameters.
                match id {
                    ParamId::Room(i, 4) => gate_grad[i],
                    ParamId::Door(j, 3) => gate_grad[pred.rooms.len() + j],
                    _ => 0.0,
                }
            };
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
            if rel > max_rel {
                max_rel = rel;
            }
            checked += 1;
        }
    }
    GradCheckReport {
        skipped_kink: false,
        kink_margin: margin,
        max_rel_err: max_rel,
        params_checked: checked,
        passed: max_rel <= tol,
    }
}

/// Deterministically sample a pred/truth pair suitable for gradient
/// verification: a two-room-plus-door scene with fractionally jittered,
/// partially gated predictions, internally resampled until every loss
/// branch clears the kink margin by a comfortable factor.
pub fn sample_check_config(seed: u64) -> (BoxSet, TsdfGrid) {
    use rand::{Rng, SeedableRng};
    let gamma = 5.0;
    let geom = crate::gridworld::GridGeometry::square(32);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..200 {
        let split = rng.gen_range(13..18) as f64;
        let door_y = rng.gen_range(8..14) as f64;
        let truth_rooms = BoxSet::from_rooms(
            vec![
                crate::boxcalc::RoomBox::new(3.0, 3.0, split, 20.0, 1.0),
                crate::boxcalc::RoomBox::new(split, 3.0, 28.0, 20.0, 1.0),
            ],
            2,
        );
        let truth_door = crate::boxcalc::DoorBox::new(split, door_y, 6.0, 1.0, (0, 1));
        let truth = TsdfGrid::from_fn(geom, gamma, |x, y| {
            crate::boxcalc::composite_tsdf(&truth_rooms, x, y, gamma)
                + crate::boxcalc::door_diamond(&truth_door, x, y)
        });

        let mut frac = |r: &mut rand_chacha::ChaCha8Rng| {
            let m = r.gen_range(0.15..0.45);
            if r.gen_bool(0.5) {
                m
            } else {
                -m
            }
        };
        // Rooms made to overlap slightly so the IoU term is live.
        let pred = {
            let mut rooms = vec![
                crate::boxcalc::RoomBox::new(
                    3.0 + frac(&mut rng),
                    3.0 + frac(&mut rng),
                    split + rng.gen_range(0.15..0.45),
                    20.0 + frac(&mut rng),
                    rng.gen_range(0.6..0.9),
                ),
                crate::boxcalc::RoomBox::new(
                    split - rng.gen_range(0.15..0.45),
                    3.0 + frac(&mut rng),
                    28.0 + frac(&mut rng),
                    20.0 + frac(&mut rng),
                    rng.gen_range(0.6..0.9),
                ),
            ];
            rooms.iter_mut().for_each(|r| {
                r.x0 = r.x0.max(0.0);
            });
            let door = crate::boxcalc::DoorBox::new(
                split + frac(&mut rng),
                door_y + frac(&mut rng),
                5.0 + frac(&mut rng),
                rng.gen_range(0.6..0.9),
                (0, 1),
            );
            BoxSet {
                rooms,
                doors: vec![door],
            }
        };
        let wall = WallMask::from_tsdf(&truth);
        // Slightly above the 10h acceptance bar of check_gradients at the
        // reference step h = 1e-4.
        if kink_margin(&pred, &truth, &wall, DEFAULT_WALL_BAND) >= 1.2e-3 {
            return (pred, truth);
        }
    }
    unreachable!("no smooth configuration found for seed {seed}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxcalc::{composite_tsdf, BoxSet, DoorBox, RoomBox};
    use crate::gridworld::GridGeometry;
    use approx::assert_relative_eq;

    /// Truth synthesized from a box set's own composite, so the optimum is
    /// exact and losses vanish at it.
    fn truth_of(set: &BoxSet, size: usize, gamma: f64) -> TsdfGrid {
        TsdfGrid::from_fn(GridGeometry::square(size), gamma, |x, y| {
            composite_tsdf(set, x, y, gamma)
        })
    }

    fn two_rooms() -> BoxSet {
        BoxSet::from_rooms(
            vec![
                RoomBox::new(3.0, 3.0, 15.0, 20.0, 1.0),
                RoomBox::new(15.0, 3.0, 28.0, 20.0, 1.0),
            ],
            2,
        )
    }

    #[test]
    fn perfect_prediction_has_zero_map_losses_and_gradients() {
        let set = two_rooms();
        let truth = truth_of(&set, 32, 5.0);
        let wall = WallMask::from_tsdf(&truth);
        let (v, g) = loss_tsdf(&set, &truth);
        assert_eq!(v, 0.0);
        assert_eq!(g.inf_norm(), 0.0);
        let (v, _) = loss_tsdf_wall(&set, &truth, &wall);
        assert_eq!(v, 0.0);
        let (v, _) = loss_door(&set, &truth, &wall, DEFAULT_WALL_BAND);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn all_gates_zero_against_gamma_truth_is_four_gamma_squared() {
        let gamma = 5.0;
        let mut set = two_rooms();
        set.rooms.iter_mut().for_each(|r| r.q = 0.0);
        let truth = TsdfGrid::from_fn(GridGeometry::square(16), gamma, |_, _| gamma);
        let (v, _) = loss_tsdf(&set, &truth);
        assert_relative_eq!(v, 4.0 * gamma * gamma);
    }

    #[test]
    fn wall_loss_single_pixel_mask() {
        let set = two_rooms();
        let gamma = 5.0;
        let truth = TsdfGrid::from_fn(GridGeometry::square(16), gamma, |_, _| gamma);
        let mut wall = WallMask::empty(16, 16);
        wall.cells[5 * 16 + 7] = true;
        let (v, _) = loss_tsdf_wall(&set, &truth, &wall);
        let pred_v = composite_tsdf(&set, 7.0, 5.0, gamma);
        assert_relative_eq!(v, (pred_v - gamma).powi(2) / 256.0);
    }

    #[test]
    fn gate_loss_tagged_examples() {
        assert_eq!(loss_gate(&[0.0; 6]).0, 0.0);
        assert_relative_eq!(loss_gate(&[1.0; 6]).0, 1.0);
        assert_relative_eq!(
            loss_gate(&[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).0,
            1.0 / 3.0
        );
    }

    #[test]
    fn iou_examples_and_sign() {
        // Two identical active rooms with budget 2: mean ordered-pair IoU 1.
        let set = BoxSet::from_rooms(
            vec![
                RoomBox::new(2.0, 2.0, 10.0, 10.0, 1.0),
                RoomBox::new(2.0, 2.0, 10.0, 10.0, 1.0),
            ],
            2,
        );
        let (v, _) = loss_iou(&set);
        assert_relative_eq!(v, 1.0);

        let disjoint = two_rooms(); // shares an edge only, zero area overlap
        assert_eq!(loss_iou(&disjoint).0, 0.0);

        // Gradient pushes overlapping boxes apart: growing the left box's x1
        // grows the loss.
        let overlapping = BoxSet::from_rooms(
            vec![
                RoomBox::new(0.0, 0.0, 12.0, 10.0, 1.0),
                RoomBox::new(8.0, 0.0, 20.0, 10.0, 1.0),
            ],
            2,
        );
        let (v0, g) = loss_iou(&overlapping);
        assert!(v0 > 0.0);
        assert!(g.rooms[0].x1 > 0.0);
        let fd = {
            let h = 1e-5;
            let plus = loss_iou(&perturbed(&overlapping, ParamId::Room(0, 2), h)).0;
            let minus = loss_iou(&perturbed(&overlapping, ParamId::Room(0, 2), -h)).0;
            (plus - minus) / (2.0 * h)
        };
        assert_relative_eq!(g.rooms[0].x1, fd, max_relative = 1e-6);
    }

    #[test]
    fn total_is_exact_sum_of_components() {
        let mut set = two_rooms();
        set.doors.push(DoorBox::new(15.0, 10.0, 5.0, 0.8, (0, 1)));
        set.rooms[0].x1 = 14.2; // imperfect on purpose
        let truth = truth_of(&two_rooms(), 32, 5.0);
        let wall = WallMask::from_tsdf(&truth);
        let r = loss_total(&set, &truth, &wall);
        assert_eq!(
            r.total,
            r.l_tsdf + r.l_tsdf_wall + r.l_door + r.l_iou + r.l_gate
        );
        assert!(r.total.is_finite());
        assert!(r.l_tsdf >= 0.0 && r.l_door >= 0.0 && r.l_iou >= 0.0 && r.l_gate >= 0.0);
    }

    #[test]
    fn perfect_binary_disjoint_prediction_total_is_gate_loss_only() {
        let set = two_rooms(); // edge-sharing, zero-area overlap, q = 1
        let truth = truth_of(&set, 32, 5.0);
        let wall = WallMask::from_tsdf(&truth);
        let r = loss_total(&set, &truth, &wall);
        assert_relative_eq!(r.total, 1.0); // all q = 1 -> L_gate = 1
        assert_eq!(r.l_tsdf, 0.0);
        assert_eq!(r.l_iou, 0.0);
    }

    #[test]
    fn all_zero_gate_total_is_map_losses_only() {
        let mut set = two_rooms();
        set.rooms.iter_mut().for_each(|r| r.q = 0.0);
        let truth = truth_of(&two_rooms(), 32, 5.0);
        let wall = WallMask::from_tsdf(&truth);
        let r = loss_total(&set, &truth, &wall);
        assert_eq!(r.l_iou, 0.0);
        assert_eq!(r.l_gate, 0.0);
        assert_relative_eq!(r.total, r.l_tsdf + r.l_tsdf_wall + r.l_door);
    }

    #[test]
    fn door_loss_decreases_as_displacement_shrinks() {
        // Rooms exact; door displaced by 2, 1, 0 cells along the wall.
        let gamma = 5.0;
        let rooms = two_rooms();
        let mut with_door = rooms.clone();
        with_door
            .doors
            .push(DoorBox::new(15.0, 11.0, 6.0, 1.0, (0, 1)));
        // Truth: rooms composite plus the door budge, synthesized with the
        // same field the loss reconstructs.
        let truth = TsdfGrid::from_fn(GridGeometry::square(32), gamma, |x, y| {
            let base = composite_tsdf(&rooms, x, y, gamma);
            let dv = crate::boxcalc::door_diamond(&with_door.doors[0], x, y);
            base + dv
        });
        let wall = WallMask::from_tsdf(&truth);
        let mut losses = Vec::new();
        for disp in [2.0, 1.0, 0.0] {
            let mut pred = with_door.clone();
            pred.doors[0].cy += disp;
            let (v, _) = loss_door(&pred, &truth, &wall, DEFAULT_WALL_BAND);
            losses.push(v);
        }
        assert!(losses[0] > losses[1]);
        assert!(losses[1] > losses[2]);
        assert!(losses[2].abs() < 1e-12);
    }

    #[test]
    fn no_doors_anywhere_is_zero_door_loss() {
        let set = two_rooms();
        let truth = truth_of(&set, 32, 5.0);
        let wall = WallMask::from_tsdf(&truth);
        let (v, g) = loss_door(&set, &truth, &wall, DEFAULT_WALL_BAND);
        assert_eq!(v, 0.0);
        assert_eq!(g.inf_norm(), 0.0);
    }

    #[test]
    fn gradient_check_passes_on_sampled_smooth_configurations() {
        for seed in 0..5 {
            let (pred, truth) = sample_check_config(seed);
            let wall = WallMask::from_tsdf(&truth);
            let report = check_gradients(&pred, &truth, &wall, 1e-4, 1e-6);
            assert!(!report.skipped_kink, "seed {seed} margin {}", report.kink_margin);
            assert!(
                report.passed,
                "seed {seed}: max rel err {} over {} params",
                report.max_rel_err, report.params_checked
            );
        }
    }

    #[test]
    fn sampled_configs_exercise_every_component() {
        let (pred, truth) = sample_check_config(7);
        let wall = WallMask::from_tsdf(&truth);
        let r = loss_total(&pred, &truth, &wall);
        assert!(r.l_tsdf > 0.0);
        assert!(r.l_tsdf_wall > 0.0);
        assert!(r.l_door > 0.0);
        assert!(r.l_iou > 0.0);
        assert!(r.l_gate > 0.0);
    }

    #[test]
    fn gradient_check_flags_kink_configurations() {
        let set = two_rooms(); // boxes share the edge x = 15 exactly: tie
        let truth = truth_of(&set, 32, 5.0);
        let wall = WallMask::from_tsdf(&truth);
        let report = check_gradients(&set, &truth, &wall, 1e-4, 1e-6);
        assert!(report.skipped_kink);
    }

    #[test]
    fn translation_equivariance_of_all_components() {
        let gamma = 5.0;
        let base = two_rooms();
        let mut pred = base.clone();
        pred.rooms[0].x1 -= 0.7;
        pred.doors.push(DoorBox::new(15.0, 9.3, 4.7, 0.83, (0, 1)));
        let (dx, dy) = (3.0, 2.0);
        let truth_a = truth_of(&base, 40, gamma);
        let truth_b = TsdfGrid::from_fn(GridGeometry::square(40), gamma, |x, y| {
            composite_tsdf(&base, x - dx, y - dy, gamma)
        });
        let wall_a = WallMask::from_tsdf(&truth_a);
        let wall_b = WallMask::from_tsdf(&truth_b);
        // The window is wide enough that both fields saturate at -gamma with
        // zero residual before the border, so the integer shift changes no
        // component.
        let ra = loss_total(&pred, &truth_a, &wall_a);
        let rb = loss_total(&pred.translated(dx, dy), &truth_b, &wall_b);
        assert_relative_eq!(ra.l_tsdf, rb.l_tsdf, epsilon = 1e-9);
        assert_relative_eq!(ra.l_tsdf_wall, rb.l_tsdf_wall, epsilon = 1e-9);
        assert_relative_eq!(ra.l_door, rb.l_door, epsilon = 1e-9);
        assert_relative_eq!(ra.l_iou, rb.l_iou, epsilon = 1e-12);
        assert_relative_eq!(ra.l_gate, rb.l_gate, epsilon = 1e-12);
    }

    #[test]
    fn zero_gradient_at_exact_optimum() {
        let set = two_rooms();
        let truth = truth_of(&set, 32, 5.0);
        let (_, g) = loss_tsdf(&set, &truth);
        assert_eq!(g.inf_norm(), 0.0);
    }
}
