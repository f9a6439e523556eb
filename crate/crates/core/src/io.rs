//! Field persistence: raw little-endian grids with JSON sidecars, CSV tables and
//! 16-bit PGM renders.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::LatticeGraph;

/// Decimal with 17 significant digits; round-trips every `f64`.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.16e}")
}

/// Sidecar shared by local-time and Gaussian field exports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    #[serde(rename = "N")]
    pub n: u32,
    pub num_vertices: usize,
    /// `local-time` or `gaussian`.
    pub kind: String,
    pub t: Option<f64>,
    pub seed: u64,
    pub excursion_count: Option<u64>,
    /// Distinguishes Gaussian covariances (e.g. `green` or `pinned-r5`).
    pub covariance_id: Option<String>,
    pub checksum: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_checksum(path: &Path) -> Result<String> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    Ok(sha256_hex(&buf))
}

fn le_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Write `values` (vertex order) to `<stem>.f64` and the sidecar to `<stem>.json`.
/// The sidecar checksum is filled in from the bytes written.
pub fn write_field_raw(stem: &Path, values: &[f64], mut sidecar: FieldSidecar) -> Result<FieldSidecar> {
    let bytes = le_bytes(values);
    sidecar.num_vertices = values.len();
    sidecar.checksum = sha256_hex(&bytes);
    File::create(stem.with_extension("f64"))?.write_all(&bytes)?;
    let json = serde_json::to_string_pretty(&sidecar)?;
    File::create(stem.with_extension("json"))?.write_all(json.as_bytes())?;
    Ok(sidecar)
}

/// Read back a raw field, verifying length and checksum against the sidecar.
pub fn read_field_raw(stem: &Path) -> Result<(Vec<f64>, FieldSidecar)> {
    let sidecar: FieldSidecar = serde_json::from_reader(File::open(stem.with_extension("json"))?)?;
    let mut bytes = Vec::new();
    File::open(stem.with_extension("f64"))?.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * sidecar.num_vertices {
        return Err(Error::ShapeMismatch { expected: sidecar.num_vertices, got: bytes.len() / 8 });
    }
    if sha256_hex(&bytes) != sidecar.checksum {
        return Err(Error::Numerical("field checksum mismatch".into()));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((values, sidecar))
}

/// CSV `id,x,y,<column>` in vertex order.
pub fn write_field_csv<W: Write>(g: &LatticeGraph, column: &str, values: &[f64], mut w: W) -> Result<()> {
    if values.len() != g.len() {
        return Err(Error::ShapeMismatch { expected: g.len(), got: values.len() });
    }
    writeln!(w, "id,x,y,{column}")?;
    for (id, v) in values.iter().enumerate() {
        let [x, y] = g.vertex(id);
        writeln!(w, "{id},{x},{y},{}", fmt17(*v))?;
    }
    Ok(())
}

/// Binary 16-bit PGM (`P5`, maxval 65535, big-endian samples), rows top to bottom.
pub fn write_pgm16<W: Write>(width: usize, height: usize, pixels: &[u16], w: W) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::ShapeMismatch { expected: width * height, got: pixels.len() });
    }
    let mut w = BufWriter::new(w);
    write!(w, "P5\n{width} {height}\n65535\n")?;
    for p in pixels {
        w.write_all(&p.to_be_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Render a per-vertex field over the bounding box of `V`: `value ↦ (value - lo) /
/// (hi - lo)` clamped to `[0, 1]`; cells outside `V` are black. Larger `y` is drawn
/// higher up.
pub fn render_field(g: &LatticeGraph, values: &[f64], lo: f64, hi: f64) -> (usize, usize, Vec<u16>) {
    let (w, h, origin) = g.bbox();
    let mut px = vec![0u16; w * h];
    let span = if hi > lo { hi - lo } else { 1.0 };
    for (id, v) in values.iter().enumerate() {
        let [x, y] = g.vertex(id);
        let (cx, cy) = ((x - origin[0]) as usize, (y - origin[1]) as usize);
        let level = ((v - lo) / span).clamp(0.0, 1.0);
        px[(h - 1 - cy) * w + cx] = (level * 65535.0).round() as u16;
    }
    (w, h, px)
}

/// Render a vertex subset: members white, other vertices mid-gray, outside black.
pub fn render_set(g: &LatticeGraph, members: &[usize]) -> (usize, usize, Vec<u16>) {
    let (w, h, origin) = g.bbox();
    let mut px = vec![0u16; w * h];
    let cell = |id: usize| {
        let [x, y] = g.vertex(id);
        (h - 1 - (y - origin[1]) as usize) * w + (x - origin[0]) as usize
    };
    for id in 0..g.len() {
        px[cell(id)] = 0x4000;
    }
    for &id in members {
        px[cell(id)] = u16::MAX;
    }
    (w, h, px)
}
