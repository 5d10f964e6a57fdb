//! Evaluation metrics: SSIM between TSDFs, Hamming fraction between maps,
//! and serialized map-memory footprints.

use crate::boxcalc::BoxSet;
use crate::gridworld::{occupancy_pgm_bytes, CellState, OccupancyGrid, TsdfGrid};
use crate::topograph::TopoGraph;

use super::BenchError;

const K1: f64 = 0.01;
const K2: f64 = 0.03;
/// SSIM window side (uniform weights, stride 1).
pub const SSIM_WINDOW: usize = 8;

/// Mean structural similarity over all 8x8 windows, dynamic range 2*gamma.
pub fn ssim(a: &TsdfGrid, b: &TsdfGrid) -> Result<f64, BenchError> {
    let (w, h) = (a.width(), a.height());
    if (w, h) != (b.width(), b.height()) {
        return Err(BenchError::InvalidInput(format!(
            "grid sizes differ: {w}x{h} vs {}x{}",
            b.width(),
            b.height()
        )));
    }
    if (a.gamma() - b.gamma()).abs() > 1e-9 {
        return Err(BenchError::InvalidInput(
            "TSDF truncation radii differ".into(),
        ));
    }
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(BenchError::InvalidInput(format!(
            "grid {w}x{h} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let l = 2.0 * a.gamma();
    let c1 = (K1 * l) * (K1 * l);
    let c2 = (K2 * l) * (K2 * l);

    // Integral images over x, y, x^2, y^2, xy.
    let stride = w + 1;
    let mut sx = vec![0.0f64; stride * (h + 1)];
    let mut sy = vec![0.0f64; stride * (h + 1)];
    let mut sxx = vec![0.0f64; stride * (h + 1)];
    let mut syy = vec![0.0f64; stride * (h + 1)];
    let mut sxy = vec![0.0f64; stride * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            let (va, vb) = (a.get(x, y), b.get(x, y));
            let i = (y + 1) * stride + (x + 1);
            let up = y * stride + (x + 1);
            let left = (y + 1) * stride + x;
            let diag = y * stride + x;
            sx[i] = va + sx[up] + sx[left] - sx[diag];
            sy[i] = vb + sy[up] + sy[left] - sy[diag];
            sxx[i] = va * va + sxx[up] + sxx[left] - sxx[diag];
            syy[i] = vb * vb + syy[up] + syy[left] - syy[diag];
            sxy[i] = va * vb + sxy[up] + sxy[left] - sxy[diag];
        }
    }
    let window_sum = |s: &[f64], x: usize, y: usize| -> f64 {
        let (x1, y1) = (x + SSIM_WINDOW, y + SSIM_WINDOW);
        s[y1 * stride + x1] - s[y * stride + x1] - s[y1 * stride + x] + s[y * stride + x]
    };
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for y in 0..=(h - SSIM_WINDOW) {
        for x in 0..=(w - SSIM_WINDOW) {
            let mx = window_sum(&sx, x, y) / n;
            let my = window_sum(&sy, x, y) / n;
            let vx = window_sum(&sxx, x, y) / n - mx * mx;
            let vy = window_sum(&syy, x, y) / n - my * my;
            let cov = window_sum(&sxy, x, y) / n - mx * my;
            let s = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            total += s;
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

/// Fraction of truth's known cells whose classification differs in the
/// final map. UNKNOWN in the final map counts as a mismatch; cells unknown
/// in the truth (outside the unit) are excluded.
pub fn hamming(final_map: &OccupancyGrid, truth: &OccupancyGrid) -> Result<f64, BenchError> {
    if final_map.width() != truth.width() || final_map.height() != truth.height() {
        return Err(BenchError::InvalidInput("grid sizes differ".into()));
    }
    let mut total = 0usize;
    let mut mismatch = 0usize;
    for (got, want) in final_map.cells().iter().zip(truth.cells()) {
        if *want == CellState::Unknown {
            continue;
        }
        total += 1;
        if got != want {
            mismatch += 1;
        }
    }
    if total == 0 {
        return Err(BenchError::InvalidInput(
            "truth map has no known cells".into(),
        ));
    }
    Ok(mismatch as f64 / total as f64)
}

/// Serialized size of the compact graph representation (box set plus
/// topological graph, compact JSON).
pub fn boxmap_memory_bytes(boxes: &BoxSet, topo: &TopoGraph) -> usize {
    let boxes = serde_json::to_vec(boxes).expect("box sets serialize");
    let topo = serde_json::to_vec(topo).expect("graphs serialize");
    boxes.len() + topo.len()
}

/// Serialized size of the baseline grid representation (full PGM payload).
pub fn grid_memory_bytes(grid: &OccupancyGrid) -> usize {
    occupancy_pgm_bytes(grid).len()
}
