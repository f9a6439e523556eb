//! Wired lattice graphs `V ∪ {ρ}` built from planar domains.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel neighbor id: the edge ends at the boundary vertex `ρ`.
pub const RHO: u32 = u32::MAX;

/// Neighbor slot order used throughout: `+x, -x, +y, -y`.
pub const DIRECTIONS: [[i64; 2]; 4] = [[1, 0], [-1, 0], [0, 1], [0, -1]];

/// Open axis-aligned rectangle `(x0, x1) × (y0, y1)` in continuum coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    fn scaled(&self, s: f64) -> Rect {
        Rect::new(self.x0 * s, self.y0 * s, self.x1 * s, self.y1 * s)
    }

    fn contains_open(&self, x: f64, y: f64) -> bool {
        self.x0 < x && x < self.x1 && self.y0 < y && y < self.y1
    }

    fn contains_closed_square(&self, cx: f64, cy: f64, h: f64) -> bool {
        self.x0 < cx - h && cx + h < self.x1 && self.y0 < cy - h && cy + h < self.y1
    }
}

/// A planar domain given as the union of the interiors of finitely many rectangles.
///
/// Serialized as a bare JSON list of `{x0, y0, x1, y1}` objects; an object with a
/// `components` list is accepted on input as well.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    components: Vec<Rect>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DomainRepr {
    List(Vec<Rect>),
    Object { components: Vec<Rect> },
}

impl Serialize for DomainSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.components.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DomainSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let components = match DomainRepr::deserialize(d)? {
            DomainRepr::List(c) | DomainRepr::Object { components: c } => c,
        };
        DomainSpec::new(components).map_err(serde::de::Error::custom)
    }
}

impl DomainSpec {
    pub fn new(components: Vec<Rect>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDomain("no components".into()));
        }
        for (i, r) in components.iter().enumerate() {
            let finite = [r.x0, r.y0, r.x1, r.y1].iter().all(|v| v.is_finite());
            if !finite || r.x1 <= r.x0 || r.y1 <= r.y0 {
                return Err(Error::InvalidDomain(format!(
                    "component {i} must have finite coordinates and positive width and height"
                )));
            }
        }
        Ok(Self { components })
    }

    pub fn unit_square() -> Self {
        Self { components: vec![Rect::new(0.0, 0.0, 1.0, 1.0)] }
    }

    pub fn components(&self) -> &[Rect] {
        &self.components
    }

    /// `[xmin, ymin, xmax, ymax]` of the closure.
    pub fn bbox(&self) -> [f64; 4] {
        self.components.iter().fold(
            [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
            |b, r| [b[0].min(r.x0), b[1].min(r.y0), b[2].max(r.x1), b[3].max(r.y1)],
        )
    }

    /// Diameter in the `ℓ∞` metric.
    pub fn diam_inf(&self) -> f64 {
        let b = self.bbox();
        (b[2] - b[0]).max(b[3] - b[1])
    }

    /// Lebesgue measure of the union.
    pub fn area(&self) -> f64 {
        let mut xs: Vec<f64> = self.components.iter().flat_map(|r| [r.x0, r.x1]).collect();
        let mut ys: Vec<f64> = self.components.iter().flat_map(|r| [r.y0, r.y1]).collect();
        sort_dedup(&mut xs);
        sort_dedup(&mut ys);
        let mut area = 0.0;
        for wx in xs.windows(2) {
            for wy in ys.windows(2) {
                let (mx, my) = (0.5 * (wx[0] + wx[1]), 0.5 * (wy[0] + wy[1]));
                if self.components.iter().any(|r| r.contains_open(mx, my)) {
                    area += (wx[1] - wx[0]) * (wy[1] - wy[0]);
                }
            }
        }
        area
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.components.iter().any(|r| r.contains_open(x, y))
    }

    /// Is `d∞((x, y), R² \ D) > eps`?
    pub fn inner_distance_exceeds(&self, x: f64, y: f64, eps: f64) -> bool {
        covers_closed_square(&self.components, x, y, eps)
    }
}

fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(f64::total_cmp);
    v.dedup();
}

/// Whether the closed square of half-side `h` centred at `(cx, cy)` lies in the union
/// of the open rectangles. Membership is constant on every stratum cut out by the
/// rectangle edges, so testing breakpoints and midpoints in both axes is exact.
fn covers_closed_square(rects: &[Rect], cx: f64, cy: f64, h: f64) -> bool {
    if rects.iter().any(|r| r.contains_closed_square(cx, cy, h)) {
        return true;
    }
    if !rects.iter().any(|r| r.contains_open(cx, cy)) {
        return false;
    }
    let xs = stratum_samples(cx - h, cx + h, rects.iter().flat_map(|r| [r.x0, r.x1]));
    let ys = stratum_samples(cy - h, cy + h, rects.iter().flat_map(|r| [r.y0, r.y1]));
    xs.iter()
        .all(|&x| ys.iter().all(|&y| rects.iter().any(|r| r.contains_open(x, y))))
}

fn stratum_samples(lo: f64, hi: f64, cuts: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut bps: Vec<f64> = std::iter::once(lo)
        .chain(std::iter::once(hi))
        .chain(cuts.filter(|&c| lo < c && c < hi))
        .collect();
    sort_dedup(&mut bps);
    let mut out = Vec::with_capacity(2 * bps.len());
    for (i, &b) in bps.iter().enumerate() {
        out.push(b);
        if let Some(&next) = bps.get(i + 1) {
            out.push(0.5 * (b + next));
        }
    }
    out
}

/// The wired graph: lattice vertices `V ⊂ Z²` plus a boundary vertex `ρ` that
/// receives every edge leaving `V`, with multiplicity.
#[derive(Clone, Debug)]
pub struct LatticeGraph {
    scale: u32,
    domain: Option<DomainSpec>,
    vertices: Vec<[i64; 2]>,
    origin: [i64; 2],
    width: usize,
    height: usize,
    grid: Vec<u32>,
    neighbors: Vec<[u32; 4]>,
    rho_edges: Vec<u8>,
    boundary_edges: Vec<u32>,
}

/// JSON summary written next to the vertex table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphManifest {
    #[serde(rename = "N")]
    pub n: u32,
    pub num_vertices: usize,
    pub pi_rho: u64,
}

/// Canonical admissible approximation `{x ∈ Z² : d∞(x/N, R² \ D) > 1/N}`.
pub fn discretize(spec: &DomainSpec, n: u32) -> Result<LatticeGraph> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("N must be at least 2, got {n}")));
    }
    let s = f64::from(n);
    let rects: Vec<Rect> = spec.components.iter().map(|r| r.scaled(s)).collect();
    let b = spec.bbox();
    let (xlo, ylo) = ((b[0] * s).floor() as i64, (b[1] * s).floor() as i64);
    let (xhi, yhi) = ((b[2] * s).ceil() as i64, (b[3] * s).ceil() as i64);
    let mut points = Vec::new();
    for y in ylo..=yhi {
        for x in xlo..=xhi {
            if covers_closed_square(&rects, x as f64, y as f64, 1.0) {
                points.push([x, y]);
            }
        }
    }
    if points.is_empty() {
        return Err(Error::DomainTooSmall { n });
    }
    let mut g = LatticeGraph::from_points(n, points)?;
    g.domain = Some(spec.clone());
    Ok(g)
}

/// `{v ∈ V : d∞(v/N, R² \ D) > eps}`. Graphs built from raw point sets have no
/// continuum domain; there the distance is the lattice `ℓ∞` distance to the nearest
/// point of `Z² \ V`, divided by `N`.
pub fn inner_region(g: &LatticeGraph, eps: f64) -> Vec<usize> {
    let s = f64::from(g.scale);
    match &g.domain {
        Some(spec) => {
            let rects: Vec<Rect> = spec.components.iter().map(|r| r.scaled(s)).collect();
            (0..g.len())
                .filter(|&v| {
                    let [x, y] = g.vertices[v];
                    covers_closed_square(&rects, x as f64, y as f64, eps * s)
                })
                .collect()
        }
        None => {
            let reach = (eps * s).floor() as i64;
            (0..g.len())
                .filter(|&v| {
                    let [x, y] = g.vertices[v];
                    (-reach..=reach).all(|dy| {
                        (-reach..=reach).all(|dx| g.vertex_id(x + dx, y + dy).is_some())
                    })
                })
                .collect()
        }
    }
}

impl LatticeGraph {
    /// Wired graph on an arbitrary finite point set. Points are deduplicated and
    /// ordered row-major (`y` outer, `x` inner).
    pub fn from_points(scale: u32, points: impl IntoIterator<Item = [i64; 2]>) -> Result<Self> {
        let mut vertices: Vec<[i64; 2]> = points.into_iter().collect();
        if vertices.is_empty() {
            return Err(Error::DomainTooSmall { n: scale });
        }
        vertices.sort_by_key(|p| (p[1], p[0]));
        vertices.dedup();
        if vertices.len() >= RHO as usize {
            return Err(Error::InvalidParameter("too many vertices".into()));
        }
        let xmin = vertices.iter().map(|p| p[0]).min().unwrap_or(0);
        let xmax = vertices.iter().map(|p| p[0]).max().unwrap_or(0);
        let ymin = vertices[0][1];
        let ymax = vertices[vertices.len() - 1][1];
        let width = (xmax - xmin + 1) as usize;
        let height = (ymax - ymin + 1) as usize;
        let mut grid = vec![RHO; width * height];
        for (id, p) in vertices.iter().enumerate() {
            grid[(p[1] - ymin) as usize * width + (p[0] - xmin) as usize] = id as u32;
        }
        let mut g = Self {
            scale,
            domain: None,
            vertices,
            origin: [xmin, ymin],
            width,
            height,
            grid,
            neighbors: Vec::new(),
            rho_edges: Vec::new(),
            boundary_edges: Vec::new(),
        };
        let mut neighbors = Vec::with_capacity(g.len());
        let mut rho_edges = Vec::with_capacity(g.len());
        let mut boundary_edges = Vec::new();
        for (id, &[x, y]) in g.vertices.iter().enumerate() {
            let mut slots = [RHO; 4];
            let mut wired = 0u8;
            for (slot, d) in slots.iter_mut().zip(DIRECTIONS) {
                match g.vertex_id(x + d[0], y + d[1]) {
                    Some(w) => *slot = w as u32,
                    None => {
                        wired += 1;
                        boundary_edges.push(id as u32);
                    }
                }
            }
            neighbors.push(slots);
            rho_edges.push(wired);
        }
        g.neighbors = neighbors;
        g.rho_edges = rho_edges;
        g.boundary_edges = boundary_edges;
        Ok(g)
    }

    /// `w × h` block with lower-left corner `(x0, y0)`.
    pub fn block(scale: u32, x0: i64, y0: i64, w: usize, h: usize) -> Result<Self> {
        let pts = (0..h as i64).flat_map(|dy| (0..w as i64).map(move |dx| [x0 + dx, y0 + dy]));
        Self::from_points(scale, pts)
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn domain(&self) -> Option<&DomainSpec> {
        self.domain.as_ref()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[[i64; 2]] {
        &self.vertices
    }

    pub fn vertex(&self, id: usize) -> [i64; 2] {
        self.vertices[id]
    }

    /// Scaled position `v/N`.
    pub fn position(&self, id: usize) -> [f64; 2] {
        let s = f64::from(self.scale);
        let [x, y] = self.vertices[id];
        [x as f64 / s, y as f64 / s]
    }

    pub fn vertex_id(&self, x: i64, y: i64) -> Option<usize> {
        let (dx, dy) = (x - self.origin[0], y - self.origin[1]);
        if dx < 0 || dy < 0 || dx as usize >= self.width || dy as usize >= self.height {
            return None;
        }
        match self.grid[dy as usize * self.width + dx as usize] {
            RHO => None,
            id => Some(id as usize),
        }
    }

    /// Neighbor ids in slot order `+x, -x, +y, -y`; [`RHO`] marks an edge to `ρ`.
    pub fn neighbors(&self, id: usize) -> &[u32; 4] {
        &self.neighbors[id]
    }

    pub fn neighbor_table(&self) -> &[[u32; 4]] {
        &self.neighbors
    }

    pub fn rho_edges(&self, id: usize) -> u8 {
        self.rho_edges[id]
    }

    /// `π(v)`: number of incident edges, counting those to `ρ`.
    pub fn degree(&self, id: usize) -> u32 {
        let inner = self.neighbors[id].iter().filter(|&&w| w != RHO).count() as u32;
        inner + u32::from(self.rho_edges[id])
    }

    /// `π(ρ)`: total number of boundary edges.
    pub fn pi_rho(&self) -> u64 {
        self.boundary_edges.len() as u64
    }

    /// One entry per `ρ`-edge holding the `V`-endpoint; uniform choice over this list
    /// is the multiplicity-weighted choice of an excursion's entry vertex.
    pub fn boundary_edges(&self) -> &[u32] {
        &self.boundary_edges
    }

    /// `(width, height, origin)` of the bounding box of `V`.
    pub fn bbox(&self) -> (usize, usize, [i64; 2]) {
        (self.width, self.height, self.origin)
    }

    /// `Some((w, h))` when `V` fills its bounding box; vertex ids are then row-major
    /// grid offsets.
    pub fn full_rectangle(&self) -> Option<(usize, usize)> {
        (self.width * self.height == self.len()).then_some((self.width, self.height))
    }

    /// Breadth-first search from `ρ`.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.len()];
        let mut queue: VecDeque<u32> = VecDeque::new();
        for &v in &self.boundary_edges {
            if !seen[v as usize] {
                seen[v as usize] = true;
                queue.push_back(v);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &w in &self.neighbors[v as usize] {
                if w != RHO && !seen[w as usize] {
                    seen[w as usize] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    pub fn manifest(&self) -> GraphManifest {
        GraphManifest { n: self.scale, num_vertices: self.len(), pi_rho: self.pi_rho() }
    }

    /// CSV vertex table `id,x,y,rho_edges`.
    pub fn write_vertex_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "id,x,y,rho_edges")?;
        for (id, [x, y]) in self.vertices.iter().enumerate() {
            writeln!(w, "{id},{x},{y},{}", self.rho_edges[id])?;
        }
        Ok(())
    }
}
