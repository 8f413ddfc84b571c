//! Fixture mesh generator.
//!
//! Produces the native-format meshes used by the benchmark harness:
//! structured square families (uniformly refined), Delaunay channel and
//! cavity meshes, and the cylinder mesh with curved boundary edges.
//! Deterministic by construction so the fixtures are reproducible.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use stdg::mesh::{build_mesh, RawMesh, Vec2};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = match args.as_slice() {
        [dir] => PathBuf::from(dir),
        _ => {
            eprintln!("usage: stdg-meshgen <output-dir>");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = generate_all(&out) {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}

fn generate_all(out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    std::fs::create_dir_all(out)?;

    // Square families: 5 x 4 cells -> 40 triangles, refined by 4 each level.
    for (name, lo, hi) in [
        ("square", -0.5, 0.5),
        ("tg", 0.0, 2.0 * std::f64::consts::PI),
        ("dsl", -1.0, 1.0),
    ] {
        let mut raw = structured_rect(5, 4, lo, hi, lo, hi);
        for level in 0..4 {
            let n = raw.triangles.len();
            if keep_level(name, n) {
                write_checked(&raw, out.join(format!("{name}_{n}.mesh")), periodic_tags(name))?;
            }
            if level < 3 {
                raw = refine(&raw);
            }
        }
    }

    // Channel for the oscillatory flow: Delaunay 46, then refined.
    let mut raw = channel_46();
    for _ in 0..4 {
        let n = raw.triangles.len();
        write_checked(&raw, out.join(format!("channel_{n}.mesh")), &[])?;
        if n >= 2944 {
            break;
        }
        raw = refine(&raw);
    }

    // Cavity meshes.
    let raw = cavity_delaunay(116)?;
    write_checked(&raw, out.join("cavity_116.mesh"), &[])?;
    let raw = cavity_delaunay(512)?;
    write_checked(&raw, out.join("cavity_512.mesh"), &[])?;

    // Cylinder mesh with curved boundary edges.
    let raw = cylinder_mesh(1702)?;
    let n = raw.triangles.len();
    write_checked(&raw, out.join(format!("cylinder_{n}.mesh")), &[])?;

    Ok(())
}

fn keep_level(name: &str, n: usize) -> bool {
    match name {
        "dsl" => n == 640,
        _ => true,
    }
}

fn periodic_tags(name: &str) -> &'static [(u32, u32)] {
    match name {
        "tg" | "dsl" => &[(1, 2), (3, 4)],
        _ => &[],
    }
}

fn write_checked(
    raw: &RawMesh,
    path: PathBuf,
    periodic: &[(u32, u32)],
) -> Result<(), Box<dyn std::error::Error>> {
    // Validate through the real loader before writing.
    build_mesh(raw.clone(), periodic).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut buf = Vec::new();
    raw.write_native(&mut buf)?;
    std::fs::write(&path, buf)?;
    println!(
        "{}: {} nodes, {} triangles, {} boundary edges",
        path.display(),
        raw.nodes.len(),
        raw.triangles.len(),
        raw.boundary.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Structured grids
// ---------------------------------------------------------------------------

/// nx x ny cells split into two triangles each with alternating diagonals.
/// Tags: 1 bottom, 2 top, 3 left, 4 right.
fn structured_rect(nx: usize, ny: usize, x0: f64, x1: f64, y0: f64, y1: f64) -> RawMesh {
    let mut raw = RawMesh::default();
    for j in 0..=ny {
        for i in 0..=nx {
            raw.nodes.push(Vec2::new(
                x0 + (x1 - x0) * i as f64 / nx as f64,
                y0 + (y1 - y0) * j as f64 / ny as f64,
            ));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    for j in 0..ny {
        for i in 0..nx {
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
    for i in 0..nx {
        raw.boundary.push((id(i, 0), id(i + 1, 0), 1));
        raw.boundary.push((id(i, ny), id(i + 1, ny), 2));
    }
    for j in 0..ny {
        raw.boundary.push((id(0, j), id(0, j + 1), 3));
        raw.boundary.push((id(nx, j), id(nx, j + 1), 4));
    }
    raw
}

/// Uniform midpoint refinement: every triangle becomes four; boundary tags
/// are inherited by the half segments.
fn refine(raw: &RawMesh) -> RawMesh {
    use std::collections::HashMap;
    let mut out = RawMesh {
        nodes: raw.nodes.clone(),
        ..Default::default()
    };
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<Vec2>| -> usize {
        let key = (a.min(b), a.max(b));
        *mid.entry(key).or_insert_with(|| {
            let m = (nodes[a] + nodes[b]) * 0.5;
            nodes.push(m);
            nodes.len() - 1
        })
    };
    for t in &raw.triangles {
        let m01 = midpoint(t[0], t[1], &mut out.nodes);
        let m12 = midpoint(t[1], t[2], &mut out.nodes);
        let m20 = midpoint(t[2], t[0], &mut out.nodes);
        out.triangles.push([t[0], m01, m20]);
        out.triangles.push([m01, t[1], m12]);
        out.triangles.push([m20, m12, t[2]]);
        out.triangles.push([m01, m12, m20]);
    }
    for &(a, b, tag) in &raw.boundary {
        let key = (a.min(b), a.max(b));
        let m = mid[&key];
        out.boundary.push((a, m, tag));
        out.boundary.push((m, b, tag));
    }
    out
}

// ---------------------------------------------------------------------------
// Delaunay (Bowyer-Watson)
// ---------------------------------------------------------------------------

fn delaunay(points: &[Vec2]) -> Vec<[usize; 3]> {
    // Bounding super-triangle.
    let (mut lo, mut hi) = (Vec2::new(f64::MAX, f64::MAX), Vec2::new(f64::MIN, f64::MIN));
    for p in points {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let c = (lo + hi) * 0.5;
    let d = (hi - lo).norm().max(1e-12) * 20.0;
    let n0 = points.len();
    let mut pts = points.to_vec();
    pts.push(Vec2::new(c.x - d, c.y - d * 0.6));
    pts.push(Vec2::new(c.x + d, c.y - d * 0.6));
    pts.push(Vec2::new(c.x, c.y + d));

    let mut tris: Vec<[usize; 3]> = vec![[n0, n0 + 1, n0 + 2]];
    for (pi, p) in points.iter().enumerate() {
        // Collect triangles whose circumcircle contains p.
        let mut bad: Vec<usize> = Vec::new();
        for (ti, t) in tris.iter().enumerate() {
            if in_circumcircle(pts[t[0]], pts[t[1]], pts[t[2]], *p) {
                bad.push(ti);
            }
        }
        // Boundary of the cavity: edges appearing exactly once.
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for &ti in &bad {
            let t = tris[ti];
            for s in 0..3 {
                let e = (t[s], t[(s + 1) % 3]);
                if let Some(pos) = edges.iter().position(|&(a, b)| a == e.1 && b == e.0) {
                    edges.swap_remove(pos);
                } else {
                    edges.push(e);
                }
            }
        }
        for &ti in bad.iter().rev() {
            tris.swap_remove(ti);
        }
        for (a, b) in edges {
            tris.push([a, b, pi]);
        }
    }
    tris.retain(|t| t.iter().all(|&v| v < n0));
    tris
}

fn in_circumcircle(a: Vec2, b: Vec2, c: Vec2, p: Vec2) -> bool {
    let (ax, ay) = (a.x - p.x, a.y - p.y);
    let (bx, by) = (b.x - p.x, b.y - p.y);
    let (cx, cy) = (c.x - p.x, c.y - p.y);
    let det = (ax * ax + ay * ay) * (bx * cy - cx * by)
        - (bx * bx + by * by) * (ax * cy - cx * ay)
        + (cx * cx + cy * cy) * (ax * by - bx * ay);
    // Positive for counter-clockwise (a,b,c); normalize orientation.
    let orient = (b - a).cross(c - a);
    if orient > 0.0 {
        det > 0.0
    } else {
        det < 0.0
    }
}

/// Deterministic jitter stream.
fn jitter(seed: u64) -> impl FnMut() -> f64 {
    let mut state = seed;
    move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }
}

/// Tag rectangle boundary segments by side.
fn tag_rect_boundary(raw: &mut RawMesh, x0: f64, x1: f64, y0: f64, y1: f64) {
    use std::collections::HashMap;
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &raw.triangles {
        for s in 0..3 {
            let (a, b) = (t[s], t[(s + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let tol = 1e-9 * ((x1 - x0).abs() + (y1 - y0).abs());
    for (&(a, b), &c) in &count {
        if c != 1 {
            continue;
        }
        let (pa, pb) = (raw.nodes[a], raw.nodes[b]);
        let tag = if (pa.y - y0).abs() < tol && (pb.y - y0).abs() < tol {
            1
        } else if (pa.y - y1).abs() < tol && (pb.y - y1).abs() < tol {
            2
        } else if (pa.x - x0).abs() < tol && (pb.x - x0).abs() < tol {
            3
        } else if (pa.x - x1).abs() < tol && (pb.x - x1).abs() < tol {
            4
        } else {
            panic!("untaggable boundary edge at {pa} - {pb}");
        };
        raw.boundary.push((a, b, tag));
    }
}

/// Channel [-0.5,0.5] x [-0.2,0.2] with exactly 46 triangles
/// (16 boundary + 16 interior points: T = 2I + B - 2).
fn channel_46() -> RawMesh {
    let mut pts: Vec<Vec2> = Vec::new();
    // Corners.
    for &(x, y) in &[(-0.5, -0.2), (0.5, -0.2), (0.5, 0.2), (-0.5, 0.2)] {
        pts.push(Vec2::new(x, y));
    }
    // 5 interior points per long side, one per short side.
    for k in 1..=5 {
        let x = -0.5 + k as f64 / 6.0;
        pts.push(Vec2::new(x, -0.2));
        pts.push(Vec2::new(x, 0.2));
    }
    pts.push(Vec2::new(-0.5, 0.0));
    pts.push(Vec2::new(0.5, 0.0));
    // 8 x 2 interior grid, jittered.
    let mut rnd = jitter(2024);
    for j in 0..2 {
        for i in 0..8 {
            let x = -0.5 + (i as f64 + 1.0) / 9.0 + 0.015 * rnd();
            let y = -0.2 + 0.4 * (j as f64 + 1.0) / 3.0 + 0.02 * rnd();
            pts.push(Vec2::new(x, y));
        }
    }
    let tris = delaunay(&pts);
    let mut raw = RawMesh {
        nodes: pts,
        triangles: tris,
        ..Default::default()
    };
    tag_rect_boundary(&mut raw, -0.5, 0.5, -0.2, 0.2);
    raw
}

/// Cavity [-0.5,0.5]^2 with a target triangle count (from boundary/interior
/// point counts satisfying T = 2I + B - 2).
fn cavity_delaunay(target: usize) -> Result<RawMesh, String> {
    let (per_side, grid) = match target {
        116 => (4usize, 7usize), // B = 4 + 4*4 = 20, I = 48+... see below
        512 => (12, 16),
        _ => return Err(format!("no cavity recipe for {target} triangles")),
    };
    // B = 4 corners + 4 * per_side + extras to hit the exact count.
    let mut pts: Vec<Vec2> = Vec::new();
    for &(x, y) in &[(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)] {
        pts.push(Vec2::new(x, y));
    }
    for k in 1..=per_side {
        let s = -0.5 + k as f64 / (per_side + 1) as f64;
        pts.push(Vec2::new(s, -0.5));
        pts.push(Vec2::new(s, 0.5));
        pts.push(Vec2::new(-0.5, s));
        pts.push(Vec2::new(0.5, s));
    }
    let b = pts.len();
    // interior points: I = (target - B + 2) / 2
    if (target + 2) < b || (target - b + 2) % 2 != 0 {
        return Err("cavity parameters do not satisfy T = 2I + B - 2".into());
    }
    let interior = (target - b + 2) / 2;
    let mut rnd = jitter(777);
    let mut placed = 0;
    'outer: for j in 0..grid {
        for i in 0..grid {
            if placed == interior {
                break 'outer;
            }
            let x = -0.5 + (i as f64 + 1.0) / (grid as f64 + 1.0) + 0.02 * rnd();
            let y = -0.5 + (j as f64 + 1.0) / (grid as f64 + 1.0) + 0.02 * rnd();
            pts.push(Vec2::new(x, y));
            placed += 1;
        }
    }
    if placed != interior {
        return Err(format!("grid too small: placed {placed} of {interior}"));
    }
    let tris = delaunay(&pts);
    let mut raw = RawMesh {
        nodes: pts,
        triangles: tris,
        ..Default::default()
    };
    tag_rect_boundary(&mut raw, -0.5, 0.5, -0.5, 0.5);
    if raw.triangles.len() != target {
        return Err(format!(
            "cavity mesh has {} triangles, wanted {target}",
            raw.triangles.len()
        ));
    }
    Ok(raw)
}

/// Flow-past-cylinder mesh: [-20,80] x [-20,20] minus the unit disk, graded
/// from ~0.35 at the cylinder to ~4 in the far field, with curved boundary
/// edges on the circle. Boundary tags: 1 bottom, 2 top, 3 left, 4 right,
/// 5 cylinder.
fn cylinder_mesh(target: usize) -> Result<RawMesh, String> {
    let build = |extra: usize| -> RawMesh {
        let mut pts: Vec<Vec2> = Vec::new();
        // Circle rings (first ring on the cylinder surface).
        let n_circle = 24;
        for k in 0..n_circle {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n_circle as f64;
            pts.push(Vec2::new(a.cos(), a.sin()));
        }
        let rings = [1.35, 1.85, 2.5, 3.4, 4.6, 6.2, 8.3];
        for (ri, &r) in rings.iter().enumerate() {
            let n = (n_circle as f64 * (1.0 - 0.06 * ri as f64)).round() as usize;
            let off = 0.5 * ri as f64;
            for k in 0..n {
                let a = 2.0 * std::f64::consts::PI * (k as f64 + off * 0.31) / n as f64;
                pts.push(Vec2::new(r * a.cos(), r * a.sin()));
            }
        }
        // Outer boundary points.
        let nx = 26;
        let ny = 11;
        for k in 0..=nx {
            let x = -20.0 + 100.0 * k as f64 / nx as f64;
            pts.push(Vec2::new(x, -20.0));
            pts.push(Vec2::new(x, 20.0));
        }
        for k in 1..ny {
            let y = -20.0 + 40.0 * k as f64 / ny as f64;
            pts.push(Vec2::new(-20.0, y));
            pts.push(Vec2::new(20.0 * 4.0, y));
        }
        // Graded interior points: finer in the wake, coarse far field.
        let mut rnd = jitter(31415);
        let mut place = |x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize, pts: &mut Vec<Vec2>| {
            for j in 0..ny {
                for i in 0..nx {
                    let x = x0 + (x1 - x0) * (i as f64 + 0.5) / nx as f64 + 0.12 * rnd();
                    let y = y0 + (y1 - y0) * (j as f64 + 0.5) / ny as f64 + 0.12 * rnd();
                    if x * x + y * y > 9.2 * 9.2 {
                        pts.push(Vec2::new(x, y));
                    }
                }
            }
        };
        // Wake region behind the cylinder, medium resolution.
        place(9.0, 40.0, -7.0, 7.0, 22, 11, &mut pts);
        // Near field around cylinder outside the rings.
        place(-9.0, 9.0, -9.0, 9.0, 10, 10, &mut pts);
        // Far field.
        place(-19.0, 79.0, -19.0, -8.0, 22, 4, &mut pts);
        place(-19.0, 79.0, 8.0, 19.0, 22, 4, &mut pts);
        place(-19.0, -10.0, -8.0, 8.0, 4, 5, &mut pts);
        place(41.0, 79.0, -8.0, 8.0, 12, 6, &mut pts);
        // Adjustment points in the wake to tune the count.
        for k in 0..extra {
            let x = 12.0 + 26.0 * ((k * 29 + 7) % 97) as f64 / 97.0;
            let y = -5.5 + 11.0 * ((k * 53 + 13) % 89) as f64 / 89.0;
            pts.push(Vec2::new(x + 0.05 * rnd(), y + 0.05 * rnd()));
        }

        // Deduplicate near-coincident points.
        let mut uniq: Vec<Vec2> = Vec::new();
        'cand: for p in pts {
            for q in &uniq {
                if (p - *q).norm() < 0.05 {
                    continue 'cand;
                }
            }
            uniq.push(p);
        }
        // A few Laplacian smoothing passes on the movable points repair
        // slivers that would make barycenter dual cells non-convex.
        let movable: Vec<bool> = uniq
            .iter()
            .map(|p| {
                let on_rect = (p.x + 20.0).abs() < 1e-9
                    || (p.x - 80.0).abs() < 1e-9
                    || (p.y + 20.0).abs() < 1e-9
                    || (p.y - 20.0).abs() < 1e-9;
                let on_circle = (p.norm() - 1.0).abs() < 1e-9;
                !(on_rect || on_circle)
            })
            .collect();
        for _ in 0..4 {
            let tris = delaunay(&uniq);
            let mut acc = vec![(Vec2::default(), 0usize); uniq.len()];
            for t in &tris {
                let c = (uniq[t[0]] + uniq[t[1]] + uniq[t[2]]) * (1.0 / 3.0);
                if c.norm() <= 1.0 {
                    continue;
                }
                for s in 0..3 {
                    let (a, b) = (t[s], t[(s + 1) % 3]);
                    acc[a] = (acc[a].0 + uniq[b], acc[a].1 + 1);
                    acc[b] = (acc[b].0 + uniq[a], acc[b].1 + 1);
                }
            }
            for (k, p) in uniq.iter_mut().enumerate() {
                if movable[k] && acc[k].1 > 0 {
                    let avg = acc[k].0 * (1.0 / acc[k].1 as f64);
                    let blended = *p + (avg - *p) * 0.65;
                    if blended.norm() > 1.28 {
                        *p = blended;
                    }
                }
            }
        }
        let tris = delaunay(&uniq);
        let mut raw = RawMesh {
            nodes: uniq,
            triangles: tris,
            ..Default::default()
        };
        // Remove hole triangles.
        raw.triangles.retain(|t| {
            let c = (raw.nodes[t[0]] + raw.nodes[t[1]] + raw.nodes[t[2]]) * (1.0 / 3.0);
            c.norm() > 1.0
        });
        raw
    };

    let mut chosen: Option<RawMesh> = None;
    let mut extra = 0usize;
    for _ in 0..60 {
        let raw = build(extra);
        let n = raw.triangles.len();
        if n == target {
            chosen = Some(raw);
            break;
        }
        if n < target {
            extra += ((target - n) / 2).max(1);
        } else if extra as isize - ((n - target) / 2) as isize >= 0 {
            extra -= ((n - target) / 2).max(1);
        } else {
            chosen = Some(raw);
            break;
        }
    }
    let mut raw = chosen.ok_or("cylinder count tuning failed")?;

    // Tag boundaries: rectangle sides and the circle.
    use std::collections::HashMap;
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &raw.triangles {
        for s in 0..3 {
            let (a, b) = (t[s], t[(s + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut curved = Vec::new();
    for (&(a, b), &c) in &count {
        if c != 1 {
            continue;
        }
        let (pa, pb) = (raw.nodes[a], raw.nodes[b]);
        let tol = 1e-6;
        let tag = if (pa.y + 20.0).abs() < tol && (pb.y + 20.0).abs() < tol {
            1
        } else if (pa.y - 20.0).abs() < tol && (pb.y - 20.0).abs() < tol {
            2
        } else if (pa.x + 20.0).abs() < tol && (pb.x + 20.0).abs() < tol {
            3
        } else if (pa.x - 80.0).abs() < tol && (pb.x - 80.0).abs() < tol {
            4
        } else if (pa.norm() - 1.0).abs() < 1e-6 && (pb.norm() - 1.0).abs() < 1e-6 {
            5
        } else {
            return Err(format!("unexpected boundary edge {pa} - {pb}"));
        };
        raw.boundary.push((a, b, tag));
        if tag == 5 {
            let m = (pa + pb) * 0.5;
            curved.push((raw.boundary.len() - 1, m * (1.0 / m.norm())));
        }
    }
    raw.curved = curved;
    Ok(raw)
}
