//! Unstructured triangular meshes with the edge-based staggered dual grid.
//!
//! The primal grid is the triangle mesh itself; every edge j carries a dual
//! quadrilateral spanning the barycenters of its two adjacent triangles and
//! the edge endpoints. Boundary edges carry a degenerate (triangular) dual
//! cell treated as a quadrilateral with one collapsed side so that a single
//! reference-square chart serves all dual elements.

use crate::error::Error;
use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;

// ---------------------------------------------------------------------------
// Plane geometry helpers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }
    /// Rotation by +90 degrees.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
    pub fn normalize(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}
impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}
impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}
impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

fn tri_signed_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    0.5 * (b - a).cross(c - a)
}

// ---------------------------------------------------------------------------
// Raw mesh data (file contents before connectivity construction)
// ---------------------------------------------------------------------------

/// Plain mesh data as stored in the native format: nodes, triangles and
/// tagged boundary segments, all 0-based in memory.
#[derive(Debug, Clone, Default)]
pub struct RawMesh {
    pub nodes: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    /// Boundary segments (n1, n2, tag), tag >= 1.
    pub boundary: Vec<(usize, usize, u32)>,
    /// Curved boundary edges: index into `boundary` plus physical midpoint.
    pub curved: Vec<(usize, Vec2)>,
}

impl RawMesh {
    pub fn parse_native(text: &str) -> Result<RawMesh, Error> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(format!("unexpected end of file, expected {what}")))
        };
        let header = next("header")?;
        if header != "STDG-MESH 1" {
            return Err(Error::parse(format!(
                "bad header {header:?}, expected \"STDG-MESH 1\""
            )));
        }
        let n_nodes: usize = parse_one(next("node count")?)?;
        let mut mesh = RawMesh::default();
        for _ in 0..n_nodes {
            let line = next("node line")?;
            let f = fields(line, 3)?;
            mesh.nodes.push(Vec2::new(
                f[1].parse().map_err(bad_num)?,
                f[2].parse().map_err(bad_num)?,
            ));
        }
        let n_tri: usize = parse_one(next("triangle count")?)?;
        for _ in 0..n_tri {
            let f = fields(next("triangle line")?, 4)?;
            let idx: Result<Vec<usize>, Error> =
                f[1..4].iter().map(|s| to_index(s, n_nodes)).collect();
            let idx = idx?;
            mesh.triangles.push([idx[0], idx[1], idx[2]]);
        }
        let n_bedge: usize = parse_one(next("boundary edge count")?)?;
        for _ in 0..n_bedge {
            let f = fields(next("boundary edge line")?, 4)?;
            let n1 = to_index(f[1], n_nodes)?;
            let n2 = to_index(f[2], n_nodes)?;
            let tag: u32 = f[3].parse().map_err(bad_num)?;
            if tag == 0 {
                return Err(Error::parse("boundary tag 0 is reserved for interior edges"));
            }
            mesh.boundary.push((n1, n2, tag));
        }
        if let Some(line) = lines.next() {
            if line != "CURVED" {
                return Err(Error::parse(format!("unexpected trailing line {line:?}")));
            }
            for line in lines {
                let f = fields(line, 3)?;
                let id: usize = f[0].parse().map_err(bad_num)?;
                if id == 0 || id > mesh.boundary.len() {
                    return Err(Error::parse(format!("curved edge id {id} out of range")));
                }
                mesh.curved.push((
                    id - 1,
                    Vec2::new(f[1].parse().map_err(bad_num)?, f[2].parse().map_err(bad_num)?),
                ));
            }
        }
        Ok(mesh)
    }

    /// Gmsh MSH 2.2 ASCII import: element type 2 (triangles) becomes the
    /// primal grid, type 1 (lines) with their physical tag become boundary
    /// segments.
    pub fn parse_gmsh(text: &str) -> Result<RawMesh, Error> {
        let mut mesh = RawMesh::default();
        let mut node_ids: HashMap<usize, usize> = HashMap::new();
        let mut lines = text.lines().map(str::trim);
        while let Some(line) = lines.next() {
            match line {
                "$MeshFormat" => {
                    let f = lines.next().ok_or_else(|| Error::parse("truncated $MeshFormat"))?;
                    if !f.starts_with("2.2") {
                        return Err(Error::parse(format!("unsupported gmsh version {f:?}")));
                    }
                }
                "$Nodes" => {
                    let n: usize = parse_one(lines.next().unwrap_or(""))?;
                    for _ in 0..n {
                        let f = fields(lines.next().unwrap_or(""), 4)?;
                        let id: usize = f[0].parse().map_err(bad_num)?;
                        node_ids.insert(id, mesh.nodes.len());
                        mesh.nodes.push(Vec2::new(
                            f[1].parse().map_err(bad_num)?,
                            f[2].parse().map_err(bad_num)?,
                        ));
                    }
                }
                "$Elements" => {
                    let n: usize = parse_one(lines.next().unwrap_or(""))?;
                    for _ in 0..n {
                        let raw = lines.next().unwrap_or("");
                        let f: Vec<&str> = raw.split_whitespace().collect();
                        if f.len() < 3 {
                            return Err(Error::parse(format!("bad element line {raw:?}")));
                        }
                        let etype: usize = f[1].parse().map_err(bad_num)?;
                        let ntags: usize = f[2].parse().map_err(bad_num)?;
                        if f.len() < 3 + ntags {
                            return Err(Error::parse(format!("bad element line {raw:?}")));
                        }
                        let conn = &f[3 + ntags..];
                        let node = |s: &str| -> Result<usize, Error> {
                            let id: usize = s.parse().map_err(bad_num)?;
                            node_ids
                                .get(&id)
                                .copied()
                                .ok_or_else(|| Error::parse(format!("unknown node id {id}")))
                        };
                        match etype {
                            1 => {
                                let tag: u32 =
                                    if ntags > 0 { f[3].parse().map_err(bad_num)? } else { 1 };
                                mesh.boundary.push((node(conn[0])?, node(conn[1])?, tag.max(1)));
                            }
                            2 => mesh
                                .triangles
                                .push([node(conn[0])?, node(conn[1])?, node(conn[2])?]),
                            _ => {} // points and higher-order elements are ignored
                        }
                    }
                }
                _ => {}
            }
        }
        if mesh.triangles.is_empty() {
            return Err(Error::parse("gmsh file contains no triangles"));
        }
        Ok(mesh)
    }

    pub fn write_native(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "STDG-MESH 1")?;
        writeln!(w, "{}", self.nodes.len())?;
        for (i, n) in self.nodes.iter().enumerate() {
            writeln!(w, "{} {:.17e} {:.17e}", i + 1, n.x, n.y)?;
        }
        writeln!(w, "{}", self.triangles.len())?;
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(w, "{} {} {} {}", i + 1, t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        writeln!(w, "{}", self.boundary.len())?;
        for (i, b) in self.boundary.iter().enumerate() {
            writeln!(w, "{} {} {} {}", i + 1, b.0 + 1, b.1 + 1, b.2)?;
        }
        if !self.curved.is_empty() {
            writeln!(w, "CURVED")?;
            for (id, m) in &self.curved {
                writeln!(w, "{} {:.17e} {:.17e}", id + 1, m.x, m.y)?;
            }
        }
        Ok(())
    }
}

fn parse_one<T: std::str::FromStr>(line: &str) -> Result<T, Error> {
    line.split_whitespace()
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(format!("expected a number, got {line:?}")))
}

fn fields(line: &str, n: usize) -> Result<Vec<&str>, Error> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() < n {
        return Err(Error::parse(format!("expected {n} fields in {line:?}")));
    }
    Ok(f)
}

fn bad_num<E: fmt::Display>(e: E) -> Error {
    Error::parse(format!("bad number: {e}"))
}

fn to_index(s: &str, n: usize) -> Result<usize, Error> {
    let id: usize = s.parse().map_err(bad_num)?;
    if id == 0 || id > n {
        return Err(Error::parse(format!("index {id} out of range 1..={n}")));
    }
    Ok(id - 1)
}

// ---------------------------------------------------------------------------
// Staggered mesh
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EdgeRec {
    /// Endpoints ordered so that (b_left, n1, b_right, n2) is counter-clockwise.
    pub nodes: [usize; 2],
    pub left: usize,
    pub right: Option<usize>,
    /// Unit normal oriented from the left to the right triangle (outward on
    /// the boundary).
    pub normal: Vec2,
    pub length: f64,
    /// 0 for interior edges, the boundary group otherwise. Periodically
    /// merged edges are interior and keep tag 0.
    pub tag: u32,
    /// For periodically merged edges: translation added to right-frame
    /// coordinates to land in the edge's canonical (left) frame.
    pub wrap_shift: Option<Vec2>,
    /// Physical midpoint of a curved boundary edge.
    pub curved_mid: Option<Vec2>,
}

impl EdgeRec {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
    pub fn is_wrapped(&self) -> bool {
        self.wrap_shift.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct TriRec {
    pub nodes: [usize; 3],
    /// Edge index per local side s (nodes s -> s+1 mod 3); this is the set S_i.
    pub edges: [usize; 3],
    /// Neighbor triangle across each side, if any.
    pub neighbor: [Option<usize>; 3],
    pub area: f64,
    pub barycenter: Vec2,
    /// Incircle diameter 4A/perimeter.
    pub incircle_diameter: f64,
}

/// One face of the dual grid: the segment from a triangle barycenter to one
/// of its vertices, separating the dual cells of the two incident edges.
#[derive(Debug, Clone)]
pub struct DualFace {
    pub tri: usize,
    /// Endpoints: barycenter, vertex (in the triangle's own frame).
    pub a: Vec2,
    pub b: Vec2,
    /// Dual cells (edge indices) on either side; normal points left -> right.
    pub left: usize,
    pub right: usize,
    pub normal: Vec2,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct StaggeredMesh {
    pub nodes: Vec<Vec2>,
    pub triangles: Vec<TriRec>,
    pub edges: Vec<EdgeRec>,
    pub dual_faces: Vec<DualFace>,
    /// Interior faces of each dual cell, indices into `dual_faces`.
    pub cell_faces: Vec<Vec<usize>>,
    /// Total domain area.
    pub area: f64,
    /// Smallest triangle incircle diameter.
    pub h_min: f64,
    /// FNV-1a hash of the raw geometry, used to key operator dumps.
    pub hash: u64,
}

impl StaggeredMesh {
    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Sign function on the edge-triangle incidence: +1 if i is the left
    /// triangle of j, -1 if it is the right one.
    pub fn sigma(&self, i: usize, j: usize) -> Result<f64, Error> {
        let e = &self.edges[j];
        if e.left == i {
            Ok(1.0)
        } else if e.right == Some(i) {
            Ok(-1.0)
        } else {
            Err(Error::topology(format!("triangle {i} is not adjacent to edge {j}")))
        }
    }

    /// Outward normal of triangle i restricted to edge j.
    pub fn normal_out(&self, i: usize, j: usize) -> Result<Vec2, Error> {
        Ok(self.edges[j].normal * self.sigma(i, j)?)
    }

    /// Barycenter of the right triangle expressed in the edge's canonical
    /// frame (shifted for periodically wrapped edges).
    pub fn right_barycenter(&self, j: usize) -> Option<Vec2> {
        let e = &self.edges[j];
        e.right.map(|r| {
            let b = self.triangles[r].barycenter;
            match e.wrap_shift {
                Some(s) => b + s,
                None => b,
            }
        })
    }

    /// Corners of the dual cell of edge j in its canonical frame.
    /// Interior: [b_left, n1, b_right, n2]; boundary: [b, n1, n2, b].
    pub fn dual_corners(&self, j: usize) -> [Vec2; 4] {
        let e = &self.edges[j];
        let n1 = self.nodes[e.nodes[0]];
        let n2 = self.nodes[e.nodes[1]];
        let bl = self.triangles[e.left].barycenter;
        match self.right_barycenter(j) {
            Some(br) => [bl, n1, br, n2],
            None => [bl, n1, n2, bl],
        }
    }

    /// Area of the sub-element T_{i,j} = R_j intersected with T_i.
    pub fn sub_area(&self, i: usize, j: usize) -> Result<f64, Error> {
        let e = &self.edges[j];
        let side = self.sigma(i, j)?;
        let n1 = self.nodes[e.nodes[0]];
        let n2 = self.nodes[e.nodes[1]];
        let b = self.triangles[i].barycenter;
        if side > 0.0 || !e.is_wrapped() {
            Ok(tri_signed_area(b, n1, n2).abs())
        } else {
            // Right side of a wrapped edge: use the edge copy in its own frame.
            let s = e.wrap_shift.unwrap();
            Ok(tri_signed_area(b, n1 - s, n2 - s).abs())
        }
    }

    /// Dual cell area.
    pub fn dual_area(&self, j: usize) -> f64 {
        let e = &self.edges[j];
        let mut a = self.sub_area(e.left, j).unwrap();
        if let Some(r) = e.right {
            a += self.sub_area(r, j).unwrap();
        }
        a
    }

    /// Inradius proxy 2A/P of the dual cell, used by the viscous flux.
    pub fn dual_inradius(&self, j: usize) -> f64 {
        let c = self.dual_corners(j);
        let m = if self.edges[j].is_boundary() { 3 } else { 4 };
        let mut per = 0.0;
        for k in 0..m {
            per += (c[(k + 1) % m] - c[k]).norm();
        }
        2.0 * self.dual_area(j) / per
    }

    /// Geometry map of primal triangle i (isoparametric P2 on triangles with
    /// a curved boundary edge, affine otherwise).
    pub fn tri_map(&self, i: usize) -> TriMap {
        let t = &self.triangles[i];
        let v = [
            self.nodes[t.nodes[0]],
            self.nodes[t.nodes[1]],
            self.nodes[t.nodes[2]],
        ];
        let mut mids = [
            (v[0] + v[1]) * 0.5,
            (v[1] + v[2]) * 0.5,
            (v[2] + v[0]) * 0.5,
        ];
        let mut curved = false;
        for s in 0..3 {
            let e = &self.edges[t.edges[s]];
            if let Some(m) = e.curved_mid {
                mids[s] = m;
                curved = true;
            }
        }
        if curved {
            TriMap::P2 { v, mids }
        } else {
            TriMap::affine(v)
        }
    }

    /// Geometry map of the dual cell of edge j (bilinear on interior quads,
    /// affine triangle chart on boundary cells, blended when curved).
    pub fn dual_map(&self, j: usize) -> QuadMap {
        let e = &self.edges[j];
        let c = self.dual_corners(j);
        if !e.is_boundary() {
            QuadMap::Bilinear { c }
        } else if let Some(mid) = e.curved_mid {
            QuadMap::TriBlend { b: c[0], n1: c[1], n2: c[2], mid }
        } else {
            QuadMap::TriAffine { b: c[0], n1: c[1], n2: c[2] }
        }
    }
}

// ---------------------------------------------------------------------------
// Geometry maps
// ---------------------------------------------------------------------------

/// Map from the reference triangle to a physical triangle.
#[derive(Debug, Clone)]
pub enum TriMap {
    Affine {
        v0: Vec2,
        jac: [[f64; 2]; 2],
        inv: [[f64; 2]; 2],
        det: f64,
    },
    /// Quadratic Lagrange map: vertices plus (possibly displaced) midpoints.
    P2 { v: [Vec2; 3], mids: [Vec2; 3] },
}

impl TriMap {
    pub fn affine(v: [Vec2; 3]) -> TriMap {
        let jac = [
            [v[1].x - v[0].x, v[2].x - v[0].x],
            [v[1].y - v[0].y, v[2].y - v[0].y],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [
            [jac[1][1] / det, -jac[0][1] / det],
            [-jac[1][0] / det, jac[0][0] / det],
        ];
        TriMap::Affine { v0: v[0], jac, inv, det }
    }

    /// Physical point and Jacobian (d x / d ref) at a reference point.
    pub fn eval(&self, r: [f64; 2]) -> (Vec2, [[f64; 2]; 2]) {
        match self {
            TriMap::Affine { v0, jac, .. } => (
                Vec2::new(
                    v0.x + jac[0][0] * r[0] + jac[0][1] * r[1],
                    v0.y + jac[1][0] * r[0] + jac[1][1] * r[1],
                ),
                *jac,
            ),
            TriMap::P2 { v, mids } => {
                let (xi, ga) = (r[0], r[1]);
                let la = 1.0 - xi - ga;
                // Quadratic shape functions: vertices, then midpoints of the
                // sides (s, s+1).
                let n = [
                    la * (2.0 * la - 1.0),
                    xi * (2.0 * xi - 1.0),
                    ga * (2.0 * ga - 1.0),
                    4.0 * la * xi,
                    4.0 * xi * ga,
                    4.0 * ga * la,
                ];
                let dxi = [
                    1.0 - 4.0 * la,
                    4.0 * xi - 1.0,
                    0.0,
                    4.0 * (la - xi),
                    4.0 * ga,
                    -4.0 * ga,
                ];
                let dga = [
                    1.0 - 4.0 * la,
                    0.0,
                    4.0 * ga - 1.0,
                    -4.0 * xi,
                    4.0 * xi,
                    4.0 * (la - ga),
                ];
                let pts = [v[0], v[1], v[2], mids[0], mids[1], mids[2]];
                let mut x = Vec2::default();
                let mut jac = [[0.0; 2]; 2];
                for k in 0..6 {
                    x = x + pts[k] * n[k];
                    jac[0][0] += pts[k].x * dxi[k];
                    jac[0][1] += pts[k].x * dga[k];
                    jac[1][0] += pts[k].y * dxi[k];
                    jac[1][1] += pts[k].y * dga[k];
                }
                (x, jac)
            }
        }
    }

    /// Inverse map (Newton for the quadratic case).
    pub fn invert(&self, x: Vec2) -> Result<[f64; 2], Error> {
        match self {
            TriMap::Affine { v0, inv, .. } => {
                let d = x - *v0;
                Ok([
                    inv[0][0] * d.x + inv[0][1] * d.y,
                    inv[1][0] * d.x + inv[1][1] * d.y,
                ])
            }
            TriMap::P2 { .. } => newton_invert(|r| self.eval(r), x, [1.0 / 3.0, 1.0 / 3.0]),
        }
    }
}

/// Map from the reference square (interior cells) or the reference triangle
/// corner of the unit square (boundary cells) to a dual cell.
#[derive(Debug, Clone)]
pub enum QuadMap {
    /// Interior dual quadrilateral, bilinear through its four corners.
    Bilinear { c: [Vec2; 4] },
    /// Boundary (triangular) dual cell on an affine chart: the unit square
    /// spans the parallelogram (b, n1, n1+n2-b, n2) and the cell itself is
    /// the image of the corner triangle xi + gamma <= 1. Gradients stay
    /// bounded and all pullbacks remain polynomial.
    TriAffine { b: Vec2, n1: Vec2, n2: Vec2 },
    /// Boundary cell whose outer side is a quadratic arc: affine chart plus
    /// a transfinite blend that bends the hypotenuse onto the arc.
    TriBlend { b: Vec2, n1: Vec2, n2: Vec2, mid: Vec2 },
}

impl QuadMap {
    pub fn is_boundary_chart(&self) -> bool {
        !matches!(self, QuadMap::Bilinear { .. })
    }

    pub fn eval(&self, r: [f64; 2]) -> (Vec2, [[f64; 2]; 2]) {
        match self {
            QuadMap::Bilinear { c } => {
                let (xi, ga) = (r[0], r[1]);
                let x = c[0] * ((1.0 - xi) * (1.0 - ga))
                    + c[1] * (xi * (1.0 - ga))
                    + c[2] * (xi * ga)
                    + c[3] * ((1.0 - xi) * ga);
                let dxi = (c[1] - c[0]) * (1.0 - ga) + (c[2] - c[3]) * ga;
                let dga = (c[3] - c[0]) * (1.0 - xi) + (c[2] - c[1]) * xi;
                (x, [[dxi.x, dga.x], [dxi.y, dga.y]])
            }
            QuadMap::TriAffine { b, n1, n2 } => {
                let (xi, ga) = (r[0], r[1]);
                let e1 = *n1 - *b;
                let e2 = *n2 - *b;
                let x = *b + e1 * xi + e2 * ga;
                (x, [[e1.x, e2.x], [e1.y, e2.y]])
            }
            QuadMap::TriBlend { b, n1, n2, mid } => {
                // Affine part plus (xi+ga) * (arc(s) - chord(s)), s = ga/(xi+ga).
                let (xi, ga) = (r[0], r[1]);
                let e1 = *n1 - *b;
                let e2 = *n2 - *b;
                let affine = *b + e1 * xi + e2 * ga;
                let w = xi + ga;
                if w < 1e-14 {
                    return (affine, [[e1.x, e2.x], [e1.y, e2.y]]);
                }
                let s = ga / w;
                // Quadratic arc through n1, mid, n2 minus the straight chord;
                // the deviation d(s) = 4 s (1-s) (mid - (n1+n2)/2).
                let bump = *mid - (*n1 + *n2) * 0.5;
                let d = bump * (4.0 * s * (1.0 - s));
                let dprime = bump * (4.0 - 8.0 * s);
                let x = affine + d * w;
                // d/dxi [w d(s)] = d(s) + w d'(s) * ds/dxi, ds/dxi = -ga/w^2
                let dxi = e1 + d - dprime * (ga / w);
                let dga = e2 + d + dprime * (xi / w);
                (x, [[dxi.x, dga.x], [dxi.y, dga.y]])
            }
        }
    }

    pub fn det(&self, r: [f64; 2]) -> f64 {
        let (_, j) = self.eval(r);
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    }

    pub fn invert(&self, x: Vec2) -> Result<[f64; 2], Error> {
        newton_invert(|r| self.eval(r), x, [0.5, 0.5])
    }
}

fn newton_invert(
    f: impl Fn([f64; 2]) -> (Vec2, [[f64; 2]; 2]),
    target: Vec2,
    start: [f64; 2],
) -> Result<[f64; 2], Error> {
    let mut r = start;
    for _ in 0..60 {
        let (x, j) = f(r);
        let res = x - target;
        if res.norm() < 1e-14 {
            return Ok(r);
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            return Err(Error::geometry("singular Jacobian in map inversion"));
        }
        r[0] -= (j[1][1] * res.x - j[0][1] * res.y) / det;
        r[1] -= (-j[1][0] * res.x + j[0][0] * res.y) / det;
    }
    let (x, _) = f(r);
    if (x - target).norm() < 1e-10 {
        Ok(r)
    } else {
        Err(Error::geometry("map inversion did not converge"))
    }
}

pub fn invert_jacobian(j: &[[f64; 2]; 2]) -> ([[f64; 2]; 2], f64) {
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    (
        [
            [j[1][1] / det, -j[0][1] / det],
            [-j[1][0] / det, j[0][0] / det],
        ],
        det,
    )
}

// ---------------------------------------------------------------------------
// Mesh construction
// ---------------------------------------------------------------------------

/// Pair of boundary tags identified by a translation (periodic boundaries).
pub type PeriodicPair = (u32, u32);

pub fn load_mesh(path: impl AsRef<Path>) -> Result<StaggeredMesh, Error> {
    load_mesh_periodic(path, &[])
}

pub fn load_mesh_periodic(
    path: impl AsRef<Path>,
    periodic: &[PeriodicPair],
) -> Result<StaggeredMesh, Error> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let raw = if text.trim_start().starts_with("$MeshFormat") {
        RawMesh::parse_gmsh(&text)?
    } else {
        RawMesh::parse_native(&text)?
    };
    build_mesh(raw, periodic)
}

pub fn build_mesh(raw: RawMesh, periodic: &[PeriodicPair]) -> Result<StaggeredMesh, Error> {
    let n_nodes = raw.nodes.len();
    if n_nodes < 3 || raw.triangles.is_empty() {
        return Err(Error::topology("mesh needs at least one triangle"));
    }
    // Geometric scale for tolerance checks.
    let (mut lo, mut hi) = (Vec2::new(f64::MAX, f64::MAX), Vec2::new(f64::MIN, f64::MIN));
    for n in &raw.nodes {
        lo = Vec2::new(lo.x.min(n.x), lo.y.min(n.y));
        hi = Vec2::new(hi.x.max(n.x), hi.y.max(n.y));
    }
    let scale = (hi - lo).norm().max(1e-300);

    // Duplicate nodes are hard errors.
    {
        let mut seen: HashMap<(i64, i64), usize> = HashMap::new();
        let q = 1e-12 * scale;
        for (i, n) in raw.nodes.iter().enumerate() {
            let key = ((n.x / q).round() as i64, (n.y / q).round() as i64);
            if let Some(&j) = seen.get(&key) {
                return Err(Error::geometry(format!("duplicate nodes {j} and {i} at {n}")));
            }
            seen.insert(key, i);
        }
    }

    // Orient triangles counter-clockwise, reject degenerate ones.
    let mut tris = raw.triangles.clone();
    for (i, t) in tris.iter_mut().enumerate() {
        let a = tri_signed_area(raw.nodes[t[0]], raw.nodes[t[1]], raw.nodes[t[2]]);
        if a.abs() < 1e-13 * scale * scale {
            return Err(Error::geometry(format!("triangle {i} has zero area")));
        }
        if a < 0.0 {
            t.swap(1, 2);
        }
    }

    // Edge discovery.
    let mut edge_map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (i, t) in tris.iter().enumerate() {
        for s in 0..3 {
            let (a, b) = (t[s], t[(s + 1) % 3]);
            let key = (a.min(b), a.max(b));
            edge_map.entry(key).or_default().push(i);
        }
    }
    for (key, adj) in &edge_map {
        if adj.len() > 2 {
            return Err(Error::topology(format!(
                "edge {:?} shared by {} triangles",
                (key.0 + 1, key.1 + 1),
                adj.len()
            )));
        }
    }

    // Isolated nodes are errors.
    {
        let mut used = vec![false; n_nodes];
        for t in &tris {
            for &n in t {
                used[n] = true;
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::topology(format!("isolated node {}", i + 1)));
        }
    }

    // Boundary tag lookup.
    let mut tag_of: HashMap<(usize, usize), (u32, usize)> = HashMap::new();
    for (bid, &(a, b, tag)) in raw.boundary.iter().enumerate() {
        tag_of.insert((a.min(b), a.max(b)), (tag, bid));
    }
    let mut curved_of: HashMap<usize, Vec2> = HashMap::new();
    for &(bid, mid) in &raw.curved {
        curved_of.insert(bid, mid);
    }

    // Barycenters (needed for orientation decisions).
    let bary: Vec<Vec2> = tris
        .iter()
        .map(|t| (raw.nodes[t[0]] + raw.nodes[t[1]] + raw.nodes[t[2]]) * (1.0 / 3.0))
        .collect();

    // Assemble edge records; deterministic order: sorted by node key.
    let mut keys: Vec<(usize, usize)> = edge_map.keys().copied().collect();
    keys.sort_unstable();
    let mut edges: Vec<EdgeRec> = Vec::with_capacity(keys.len());
    let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
    for key in keys {
        let adj = &edge_map[&key];
        let (n1, n2) = key;
        let (left, right) = match adj.as_slice() {
            [i] => (*i, None),
            [i, j] => (*i.min(j), Some(*i.max(j))),
            _ => unreachable!(),
        };
        if right.is_none() && !tag_of.contains_key(&key) {
            return Err(Error::topology(format!(
                "boundary edge {}-{} has no tag entry",
                n1 + 1,
                n2 + 1
            )));
        }
        let (tag, bid) = match right {
            None => {
                let (t, b) = tag_of[&key];
                (t, Some(b))
            }
            Some(_) => (0, None),
        };
        let pa = raw.nodes[n1];
        let pb = raw.nodes[n2];
        let t = (pb - pa).normalize();
        let mut normal = Vec2::new(t.y, -t.x); // rotate -90
        let mid = (pa + pb) * 0.5;
        let point_right = match right {
            Some(r) => bary[r] - bary[left],
            None => mid - bary[left], // outward
        };
        if normal.dot(point_right) < 0.0 {
            normal = -normal;
        }
        // Order endpoints so (b_l, n1, b_r, n2) is counter-clockwise.
        let mut nodes = [n1, n2];
        let along = normal.perp();
        if (pb - pa).dot(along) < 0.0 {
            nodes.swap(0, 1);
        }
        let idx = edges.len();
        edge_index.insert(key, idx);
        edges.push(EdgeRec {
            nodes,
            left,
            right,
            normal,
            length: (pb - pa).norm(),
            tag,
            wrap_shift: None,
            curved_mid: bid.and_then(|b| curved_of.get(&b).copied()),
        });
    }

    // Periodic merging: edges tagged (ta, tb) are identified by translation.
    let mut remap: Vec<usize> = (0..edges.len()).collect();
    let mut dead: Vec<bool> = vec![false; edges.len()];
    for &(ta, tb) in periodic {
        let group_a: Vec<usize> = (0..edges.len()).filter(|&j| edges[j].tag == ta).collect();
        let group_b: Vec<usize> = (0..edges.len()).filter(|&j| edges[j].tag == tb).collect();
        if group_a.len() != group_b.len() || group_a.is_empty() {
            return Err(Error::topology(format!(
                "periodic tags {ta}/{tb}: {} vs {} edges",
                group_a.len(),
                group_b.len()
            )));
        }
        let mids: Vec<Vec2> = edges
            .iter()
            .map(|e| (raw.nodes[e.nodes[0]] + raw.nodes[e.nodes[1]]) * 0.5)
            .collect();
        let lo_of = |g: &[usize]| {
            g.iter().map(|&j| mids[j]).fold(Vec2::new(f64::MAX, f64::MAX), |a, m| {
                Vec2::new(a.x.min(m.x), a.y.min(m.y))
            })
        };
        // b-frame + shift = a-frame
        let shift = lo_of(&group_a) - lo_of(&group_b);
        let tol = 1e-9 * scale;
        let mut lookup: HashMap<(i64, i64), usize> = HashMap::new();
        for &j in &group_a {
            let m = mids[j];
            lookup.insert(((m.x / tol).round() as i64, (m.y / tol).round() as i64), j);
        }
        for &jb in &group_b {
            let m = mids[jb] + shift;
            let key = ((m.x / tol).round() as i64, (m.y / tol).round() as i64);
            let ja = *lookup
                .get(&key)
                .ok_or_else(|| Error::topology(format!("periodic match failed for edge near {m}")))?;
            // Merge jb into ja: ja keeps its geometry; jb's triangle becomes
            // the right triangle seen through the translation. The normal
            // already points outward of ja's triangle, i.e. towards the
            // wrapped right side.
            let right_tri = edges[jb].left;
            edges[ja].right = Some(right_tri);
            edges[ja].tag = 0;
            edges[ja].wrap_shift = Some(shift);
            dead[jb] = true;
            remap[jb] = ja;
        }
    }
    // Compact the edge list.
    let mut new_ids = vec![usize::MAX; edges.len()];
    let mut compact: Vec<EdgeRec> = Vec::with_capacity(edges.len());
    for (j, e) in edges.iter().enumerate() {
        if !dead[j] {
            new_ids[j] = compact.len();
            compact.push(e.clone());
        }
    }
    let remap: Vec<usize> = remap.into_iter().map(|j| new_ids[j]).collect();
    let edges = compact;

    // Triangle records.
    let mut triangles: Vec<TriRec> = Vec::with_capacity(tris.len());
    for (i, t) in tris.iter().enumerate() {
        let v = [raw.nodes[t[0]], raw.nodes[t[1]], raw.nodes[t[2]]];
        let area = tri_signed_area(v[0], v[1], v[2]);
        let per = (v[1] - v[0]).norm() + (v[2] - v[1]).norm() + (v[0] - v[2]).norm();
        let mut e3 = [usize::MAX; 3];
        let mut nb = [None; 3];
        for s in 0..3 {
            let (a, b) = (t[s], t[(s + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let j = remap[edge_index[&key]];
            e3[s] = j;
            let e = &edges[j];
            nb[s] = if e.left == i { e.right } else { Some(e.left) };
        }
        triangles.push(TriRec {
            nodes: *t,
            edges: e3,
            neighbor: nb,
            area,
            barycenter: bary[i],
            incircle_diameter: 4.0 * area / per,
        });
    }

    let area: f64 = triangles.iter().map(|t| t.area).sum();
    let h_min = triangles
        .iter()
        .map(|t| t.incircle_diameter)
        .fold(f64::MAX, f64::min);

    let hash = {
        let mut h = 0xcbf29ce484222325u64;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for n in &raw.nodes {
            eat(&n.x.to_le_bytes());
            eat(&n.y.to_le_bytes());
        }
        for t in &tris {
            for &n in t {
                eat(&(n as u64).to_le_bytes());
            }
        }
        for &(a, b, tag) in &raw.boundary {
            eat(&(a as u64).to_le_bytes());
            eat(&(b as u64).to_le_bytes());
            eat(&(tag as u64).to_le_bytes());
        }
        h
    };

    let mut mesh = StaggeredMesh {
        nodes: raw.nodes,
        triangles,
        edges,
        dual_faces: Vec::new(),
        cell_faces: Vec::new(),
        area,
        h_min,
        hash,
    };
    build_dual_faces(&mut mesh)?;
    validate(&mesh)?;
    Ok(mesh)
}

fn build_dual_faces(mesh: &mut StaggeredMesh) -> Result<(), Error> {
    let mut faces = Vec::with_capacity(3 * mesh.triangles.len());
    let mut cell_faces = vec![Vec::new(); mesh.edges.len()];
    for (i, t) in mesh.triangles.iter().enumerate() {
        for s in 0..3 {
            // Vertex s is shared by side s and side s+2.
            let v = mesh.nodes[t.nodes[s]];
            let b = t.barycenter;
            let j1 = t.edges[s];
            let j0 = t.edges[(s + 2) % 3];
            let d = v - b;
            let len = d.norm();
            if len < 1e-300 {
                return Err(Error::geometry(format!("degenerate dual face in triangle {i}")));
            }
            let normal = Vec2::new(d.y, -d.x) * (1.0 / len);
            // The edge whose midpoint lies along +normal is the right cell.
            let m1 = edge_midpoint_in_tri_frame(mesh, i, j1);
            let m0 = edge_midpoint_in_tri_frame(mesh, i, j0);
            let d1 = normal.dot(m1 - b);
            let d0 = normal.dot(m0 - b);
            if d1 * d0 >= 0.0 {
                return Err(Error::geometry(format!(
                    "dual face orientation ambiguous in triangle {i}"
                )));
            }
            let (left, right) = if d1 > 0.0 { (j0, j1) } else { (j1, j0) };
            let fid = faces.len();
            faces.push(DualFace {
                tri: i,
                a: b,
                b: v,
                left,
                right,
                normal,
                length: len,
            });
            cell_faces[left].push(fid);
            cell_faces[right].push(fid);
        }
    }
    mesh.dual_faces = faces;
    mesh.cell_faces = cell_faces;
    Ok(())
}

fn edge_midpoint_in_tri_frame(mesh: &StaggeredMesh, i: usize, j: usize) -> Vec2 {
    let e = &mesh.edges[j];
    let m = (mesh.nodes[e.nodes[0]] + mesh.nodes[e.nodes[1]]) * 0.5;
    if e.is_wrapped() && e.right == Some(i) && e.left != i {
        m - e.wrap_shift.unwrap()
    } else {
        m
    }
}

fn validate(mesh: &StaggeredMesh) -> Result<(), Error> {
    // Normal orientation invariant and dual cell convexity.
    for (j, e) in mesh.edges.iter().enumerate() {
        if let Some(br) = mesh.right_barycenter(j) {
            let bl = mesh.triangles[e.left].barycenter;
            if e.normal.dot(br - bl) <= 0.0 {
                return Err(Error::geometry(format!(
                    "edge {j}: normal does not point left->right"
                )));
            }
            let c = mesh.dual_corners(j);
            for k in 0..4 {
                let a = c[(k + 1) % 4] - c[k];
                let b = c[(k + 2) % 4] - c[(k + 1) % 4];
                if a.cross(b) <= 0.0 {
                    return Err(Error::geometry(format!(
                        "dual cell of edge {j} is not convex; mesh too distorted"
                    )));
                }
            }
        }
    }
    // Sub-element tiling of each triangle.
    for (i, t) in mesh.triangles.iter().enumerate() {
        let sum: f64 = t.edges.iter().map(|&j| mesh.sub_area(i, j).unwrap()).sum();
        if ((sum - t.area) / t.area).abs() > 1e-12 {
            return Err(Error::geometry(format!(
                "triangle {i}: sub-element areas sum to {sum}, area is {}",
                t.area
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
pub mod tests {
    use super::*;
    use crate::basis::interval_rule;

    /// n x n squares with alternating diagonals, fully periodic in both
    /// directions (tags 1/2 bottom-top, 3/4 left-right).
    pub fn periodic_square_mesh(n: usize, lo: f64, hi: f64) -> StaggeredMesh {
        let mut raw = RawMesh::default();
        let h = (hi - lo) / n as f64;
        for j in 0..=n {
            for i in 0..=n {
                raw.nodes.push(Vec2::new(lo + i as f64 * h, lo + j as f64 * h));
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                if (i + j) % 2 == 0 {
                    raw.triangles.push([a, b, c]);
                    raw.triangles.push([a, c, d]);
                } else {
                    raw.triangles.push([a, b, d]);
                    raw.triangles.push([b, c, d]);
                }
            }
        }
        for i in 0..n {
            raw.boundary.push((id(i, 0), id(i + 1, 0), 1));
            raw.boundary.push((id(i, n), id(i + 1, n), 2));
            raw.boundary.push((id(0, i), id(0, i + 1), 3));
            raw.boundary.push((id(n, i), id(n, i + 1), 4));
        }
        build_mesh(raw, &[(1, 2), (3, 4)]).unwrap()
    }

    /// Same grid as [`periodic_square_mesh`] but with plain tagged walls
    /// (1 bottom, 2 top, 3 left, 4 right).
    pub fn wall_square_mesh(n: usize, lo: f64, hi: f64) -> StaggeredMesh {
        let mut raw = RawMesh::default();
        let h = (hi - lo) / n as f64;
        for j in 0..=n {
            for i in 0..=n {
                raw.nodes.push(Vec2::new(lo + i as f64 * h, lo + j as f64 * h));
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                if (i + j) % 2 == 0 {
                    raw.triangles.push([a, b, c]);
                    raw.triangles.push([a, c, d]);
                } else {
                    raw.triangles.push([a, b, d]);
                    raw.triangles.push([b, c, d]);
                }
            }
        }
        for i in 0..n {
            raw.boundary.push((id(i, 0), id(i + 1, 0), 1));
            raw.boundary.push((id(i, n), id(i + 1, n), 2));
            raw.boundary.push((id(0, i), id(0, i + 1), 3));
            raw.boundary.push((id(n, i), id(n, i + 1), 4));
        }
        build_mesh(raw, &[]).unwrap()
    }

    pub fn two_triangle_square() -> RawMesh {
        RawMesh {
            nodes: vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.0, 1.0),
            ],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            boundary: vec![(0, 1, 1), (1, 2, 2), (2, 3, 3), (3, 0, 4)],
            curved: vec![],
        }
    }

    #[test]
    fn two_triangle_counts_and_dual_area() {
        let mesh = build_mesh(two_triangle_square(), &[]).unwrap();
        assert_eq!(mesh.n_triangles(), 2);
        assert_eq!(mesh.n_edges(), 5);
        let interior: Vec<usize> = (0..5).filter(|&j| !mesh.edges[j].is_boundary()).collect();
        assert_eq!(interior.len(), 1);
        let j = interior[0];
        // Dual quad joins the two barycenters across the diagonal; its two
        // sub-triangles have area 1/6 each.
        assert!((mesh.dual_area(j) - 1.0 / 3.0).abs() < 1e-14);
        assert!((mesh.sub_area(0, j).unwrap() - 1.0 / 6.0).abs() < 1e-14);
        assert!((mesh.sub_area(1, j).unwrap() - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn sigma_signs() {
        let mesh = build_mesh(two_triangle_square(), &[]).unwrap();
        for (j, e) in mesh.edges.iter().enumerate() {
            assert_eq!(mesh.sigma(e.left, j).unwrap(), 1.0);
            if let Some(r) = e.right {
                assert_eq!(mesh.sigma(r, j).unwrap(), -1.0);
            }
        }
        // Neither side -> error. Triangle 1 is not adjacent to edge (0,1).
        let j01 = (0..5)
            .find(|&j| {
                let n = mesh.edges[j].nodes;
                n.contains(&0) && n.contains(&1)
            })
            .unwrap();
        assert!(mesh.sigma(1, j01).is_err());
    }

    #[test]
    fn non_manifold_rejected() {
        let mut raw = two_triangle_square();
        raw.nodes.push(Vec2::new(2.0, 0.5));
        raw.triangles.push([0, 2, 4]); // third triangle on the diagonal 0-2
        let err = build_mesh(raw, &[]).unwrap_err();
        assert!(matches!(err, Error::Topology(_)));
    }

    #[test]
    fn zero_area_rejected() {
        let mut raw = two_triangle_square();
        raw.nodes.push(Vec2::new(0.5, 0.5));
        raw.triangles[1] = [0, 2, 4]; // collinear with the diagonal
        assert!(matches!(build_mesh(raw, &[]).unwrap_err(), Error::Geometry(_)));
    }

    #[test]
    fn duplicate_nodes_rejected() {
        let mut raw = two_triangle_square();
        raw.nodes[3] = raw.nodes[0];
        assert!(build_mesh(raw, &[]).is_err());
    }

    #[test]
    fn native_round_trip() {
        let raw = two_triangle_square();
        let mut buf = Vec::new();
        raw.write_native(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let again = RawMesh::parse_native(&text).unwrap();
        assert_eq!(again.triangles, raw.triangles);
        assert_eq!(again.boundary, raw.boundary);
        let mesh = build_mesh(again, &[]).unwrap();
        assert_eq!(mesh.n_edges(), 5);
    }

    /// Closed-surface normal integral per triangle, via edge quadrature.
    #[test]
    fn discrete_gauss_identity() {
        let mesh = build_mesh(two_triangle_square(), &[]).unwrap();
        let (xq, wq) = interval_rule(4);
        for (i, t) in mesh.triangles.iter().enumerate() {
            let mut sum = Vec2::default();
            for &j in &t.edges {
                let e = &mesh.edges[j];
                let n_out = mesh.normal_out(i, j).unwrap();
                for _q in 0..xq.len() {
                    sum = sum + n_out * (wq[_q] * e.length);
                }
            }
            assert!(sum.norm() < 1e-12, "triangle {i}: {sum}");
        }
    }

    #[test]
    fn dual_tiling_covers_domain() {
        let mesh = build_mesh(two_triangle_square(), &[]).unwrap();
        let total: f64 = (0..mesh.n_edges()).map(|j| mesh.dual_area(j)).sum();
        assert!(((total - mesh.area) / mesh.area).abs() < 1e-12);
    }

    #[test]
    fn tri_map_properties() {
        let mesh = build_mesh(two_triangle_square(), &[]).unwrap();
        let map = mesh.tri_map(0);
        let (x, _) = map.eval([0.0, 0.0]);
        let v0 = mesh.nodes[mesh.triangles[0].nodes[0]];
        assert!((x - v0).norm() < 1e-14);
        let (c, _) = map.eval([1.0 / 3.0, 1.0 / 3.0]);
        assert!((c - mesh.triangles[0].barycenter).norm() < 1e-14);
    }

    #[test]
    fn map_round_trip_random_points() {
        let mesh = build_mesh(two_triangle_square(), &[]).unwrap();
        let mut state = 42u64;
        let mut rand01 = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for j in 0..mesh.n_edges() {
            let map = mesh.dual_map(j);
            for _ in 0..10 {
                let r = [0.1 + 0.8 * rand01(), 0.1 + 0.8 * rand01()];
                let (x, _) = map.eval(r);
                let back = map.invert(x).unwrap();
                let (x2, _) = map.eval(back);
                assert!((x2 - x).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn boundary_chart_constant_jacobian() {
        let mesh = build_mesh(two_triangle_square(), &[]).unwrap();
        let j = (0..5).find(|&j| mesh.edges[j].is_boundary()).unwrap();
        let map = mesh.dual_map(j);
        assert!(map.is_boundary_chart());
        let area = mesh.dual_area(j);
        for &(xi, ga) in &[(0.3, 0.2), (0.7, 0.1), (0.1, 0.5)] {
            assert!((map.det([xi, ga]).abs() - 2.0 * area).abs() < 1e-13);
        }
        // The hypotenuse xi + gamma = 1 is the physical boundary edge.
        let e = &mesh.edges[j];
        let (x0, _) = map.eval([1.0, 0.0]);
        let (x1, _) = map.eval([0.0, 1.0]);
        assert!((x0 - mesh.nodes[e.nodes[0]]).norm() < 1e-14);
        assert!((x1 - mesh.nodes[e.nodes[1]]).norm() < 1e-14);
    }

    #[test]
    fn periodic_pairing_strip() {
        // 2x1 strip of 4 triangles, periodic left-right.
        let raw = RawMesh {
            nodes: vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(2.0, 0.0),
                Vec2::new(0.0, 1.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(2.0, 1.0),
            ],
            triangles: vec![[0, 1, 4], [0, 4, 3], [1, 2, 5], [1, 5, 4]],
            boundary: vec![
                (0, 1, 1),
                (1, 2, 1),
                (4, 5, 2),
                (3, 4, 2),
                (0, 3, 3),
                (2, 5, 4),
            ],
            curved: vec![],
        };
        let mesh = build_mesh(raw, &[(3, 4)]).unwrap();
        let wrapped: Vec<&EdgeRec> = mesh.edges.iter().filter(|e| e.is_wrapped()).collect();
        assert_eq!(wrapped.len(), 1);
        assert!(!wrapped[0].is_boundary());
        let total: f64 = (0..mesh.n_edges()).map(|j| mesh.dual_area(j)).sum();
        assert!(((total - mesh.area) / mesh.area).abs() < 1e-12);
    }

    #[test]
    fn dual_faces_three_per_triangle() {
        let mesh = build_mesh(two_triangle_square(), &[]).unwrap();
        assert_eq!(mesh.dual_faces.len(), 6);
        for (j, e) in mesh.edges.iter().enumerate() {
            let expect = if e.is_boundary() { 2 } else { 4 };
            assert_eq!(mesh.cell_faces[j].len(), expect, "cell {j}");
        }
    }
}
