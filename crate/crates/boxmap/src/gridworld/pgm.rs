//! Binary PGM (P5) I/O for occupancy grids and TSDFs.
//!
//! Occupancy encoding: 0 = OCCUPIED, 255 = FREE, 128 = UNKNOWN (maxval 255).
//! TSDFs use 16-bit big-endian pixels with the affine map
//! `[-gamma, +gamma] -> [0, 65535]`; gamma travels in a `# gamma` comment.
//! Grid geometry is echoed in header comments (`# resolution`, `# origin`).

use std::fs;
use std::io::Write;
use std::path::Path;

use super::grid::{CellState, GridGeometry, OccupancyGrid, TsdfGrid};
use super::PgmError;

const OCC_OCCUPIED: u8 = 0;
const OCC_UNKNOWN: u8 = 128;
const OCC_FREE: u8 = 255;

/// Either grid type, as detected from the header.
pub enum PgmContent {
    Occupancy(OccupancyGrid),
    Tsdf(TsdfGrid),
}

pub fn write_occupancy_pgm(grid: &OccupancyGrid, path: &Path) -> Result<(), PgmError> {
    fs::write(path, occupancy_pgm_bytes(grid))?;
    Ok(())
}

/// Serialized PGM byte payload for an occupancy grid (also the baseline
/// map-memory measure).
pub fn occupancy_pgm_bytes(grid: &OccupancyGrid) -> Vec<u8> {
    let geom = grid.geometry();
    let mut out = header_bytes(geom, None, 255);
    out.reserve(geom.cell_count());
    for &c in grid.cells() {
        out.push(match c {
            CellState::Occupied => OCC_OCCUPIED,
            CellState::Free => OCC_FREE,
            CellState::Unknown => OCC_UNKNOWN,
        });
    }
    out
}

pub fn write_tsdf_pgm(tsdf: &TsdfGrid, path: &Path) -> Result<(), PgmError> {
    let geom = tsdf.geometry();
    let gamma = tsdf.gamma();
    let mut out = header_bytes(geom, Some(gamma), 65535);
    out.reserve(2 * geom.cell_count());
    for &v in tsdf.values() {
        let t = ((v + gamma) / (2.0 * gamma) * 65535.0).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&t.to_be_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

fn header_bytes(geom: &GridGeometry, gamma: Option<f64>, maxval: u32) -> Vec<u8> {
    let mut h = Vec::new();
    writeln!(h, "P5").unwrap();
    writeln!(h, "# resolution {}", geom.resolution).unwrap();
    writeln!(h, "# origin {} {}", geom.origin.0, geom.origin.1).unwrap();
    if let Some(g) = gamma {
        writeln!(h, "# gamma {g}").unwrap();
    }
    writeln!(h, "{} {}", geom.width, geom.height).unwrap();
    writeln!(h, "{maxval}").unwrap();
    h
}

pub fn read_occupancy_pgm(path: &Path) -> Result<OccupancyGrid, PgmError> {
    match read_pgm(path)? {
        PgmContent::Occupancy(g) => Ok(g),
        PgmContent::Tsdf(_) => Err(PgmError::UnknownEncoding(
            "expected 8-bit occupancy PGM, found 16-bit TSDF".into(),
        )),
    }
}

pub fn read_tsdf_pgm(path: &Path) -> Result<TsdfGrid, PgmError> {
    match read_pgm(path)? {
        PgmContent::Tsdf(t) => Ok(t),
        PgmContent::Occupancy(_) => Err(PgmError::UnknownEncoding(
            "expected 16-bit TSDF PGM, found occupancy grid".into(),
        )),
    }
}

/// Parse a PGM written by this module; maxval picks the grid type.
pub fn read_pgm(path: &Path) -> Result<PgmContent, PgmError> {
    let bytes = fs::read(path)?;
    let mut header = Header::parse(&bytes)?;
    let geom = GridGeometry {
        width: header.width,
        height: header.height,
        resolution: header.resolution.unwrap_or(super::grid::DEFAULT_RESOLUTION),
        origin: header.origin.unwrap_or((0.0, 0.0)),
    };
    let n = geom.cell_count();
    match header.maxval {
        255 => {
            let data = header.take_payload(&bytes, n)?;
            let mut cells = Vec::with_capacity(n);
            for &b in data {
                cells.push(match b {
                    OCC_OCCUPIED => CellState::Occupied,
                    OCC_FREE => CellState::Free,
                    OCC_UNKNOWN => CellState::Unknown,
                    other => {
                        return Err(PgmError::UnknownEncoding(format!(
                            "occupancy pixel value {other} is not one of 0/128/255"
                        )))
                    }
                });
            }
            Ok(PgmContent::Occupancy(OccupancyGrid::from_cells(geom, cells)))
        }
        65535 => {
            let gamma = header.gamma.ok_or_else(|| {
                PgmError::MalformedHeader("16-bit TSDF PGM is missing a '# gamma' comment".into())
            })?;
            let data = header.take_payload(&bytes, 2 * n)?;
            let values = data
                .chunks_exact(2)
                .map(|c| {
                    let t = u16::from_be_bytes([c[0], c[1]]) as f64;
                    t / 65535.0 * 2.0 * gamma - gamma
                })
                .collect();
            Ok(PgmContent::Tsdf(TsdfGrid::from_values(geom, gamma, values)))
        }
        other => Err(PgmError::UnknownEncoding(format!(
            "unsupported maxval {other} (expected 255 or 65535)"
        ))),
    }
}

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    resolution: Option<f64>,
    origin: Option<(f64, f64)>,
    gamma: Option<f64>,
    payload_at: usize,
}

impl Header {
    fn parse(bytes: &[u8]) -> Result<Self, PgmError> {
        if !bytes.starts_with(b"P5") {
            return Err(PgmError::UnknownEncoding(
                "not a binary PGM (magic is not P5)".into(),
            ));
        }
        let mut pos = 2;
        let mut resolution = None;
        let mut origin = None;
        let mut gamma = None;
        let mut fields = [0u32; 3];
        let mut field_idx = 0;
        while field_idx < 3 {
            // Skip whitespace and harvest comment lines.
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        let end = bytes[pos..]
                            .iter()
                            .position(|&b| b == b'\n')
                            .map(|e| pos + e)
                            .unwrap_or(bytes.len());
                        let line = String::from_utf8_lossy(&bytes[pos + 1..end]);
                        let mut it = line.split_whitespace();
                        match it.next() {
                            Some("resolution") => {
                                resolution = it.next().and_then(|v| v.parse().ok())
                            }
                            Some("origin") => {
                                let x = it.next().and_then(|v| v.parse().ok());
                                let y = it.next().and_then(|v| v.parse().ok());
                                if let (Some(x), Some(y)) = (x, y) {
                                    origin = Some((x, y));
                                }
                            }
                            Some("gamma") => gamma = it.next().and_then(|v| v.parse().ok()),
                            _ => {}
                        }
                        pos = end;
                    }
                    _ => break,
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
                pos += 1;
            }
            if start == pos {
                return Err(PgmError::MalformedHeader(format!(
                    "expected integer header field at byte {pos}"
                )));
            }
            fields[field_idx] = std::str::from_utf8(&bytes[start..pos])
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| PgmError::MalformedHeader("bad integer field".into()))?;
            field_idx += 1;
        }
        // Exactly one whitespace byte separates the maxval from the payload.
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            _ => {
                return Err(PgmError::MalformedHeader(
                    "missing whitespace before pixel payload".into(),
                ))
            }
        }
        if fields[0] == 0 || fields[1] == 0 {
            return Err(PgmError::MalformedHeader("zero image dimension".into()));
        }
        Ok(Header {
            width: fields[0] as usize,
            height: fields[1] as usize,
            maxval: fields[2],
            resolution,
            origin,
            gamma,
            payload_at: pos,
        })
    }

    fn take_payload<'a>(&mut self, bytes: &'a [u8], len: usize) -> Result<&'a [u8], PgmError> {
        let end = self.payload_at + len;
        if bytes.len() < end {
            return Err(PgmError::MalformedHeader(format!(
                "payload truncated: need {len} bytes, have {}",
                bytes.len() - self.payload_at
            )));
        }
        Ok(&bytes[self.payload_at..end])
    }
}
