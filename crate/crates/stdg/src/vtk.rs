//! Legacy ASCII VTK output of one field snapshot.
//!
//! Each primal triangle is subdivided p^2 times so high-order fields stay
//! visually faithful; pressure and velocity become point data (velocity with
//! a zero z component), the vorticity is written as cell data. Files are
//! written to a temporary sibling and atomically renamed.

use crate::assembly::OperatorStore;
use crate::basis::RefPoint;
use crate::cases::sub_cell_of;
use crate::error::Error;
use crate::mesh::{StaggeredMesh, Vec2};
use crate::operators::FieldState;
use std::fmt::Write as _;
use std::path::Path;

/// Write the slab state evaluated at physical time `t`.
pub fn write_vtk(
    state: &FieldState,
    mesh: &StaggeredMesh,
    ops: &OperatorStore,
    t: f64,
    path: impl AsRef<Path>,
) -> Result<(), Error> {
    let path = path.as_ref();
    let body = render_vtk(state, mesh, ops, t)?;
    let tmp = path.with_extension("vtk.tmp");
    std::fs::write(&tmp, body)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn render_vtk(
    state: &FieldState,
    mesh: &StaggeredMesh,
    ops: &OperatorStore,
    t: f64,
) -> Result<String, Error> {
    let p_plot = ops.basis.p.max(1);
    let tau = if state.dt > 0.0 {
        ((t - state.t_start) / state.dt).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let g = ops.basis.time.eval(tau);

    // Reference subdivision nodes and sub-triangles of one triangle.
    let mut ref_nodes: Vec<[f64; 2]> = Vec::new();
    let mut row_offset = vec![0usize; p_plot + 2];
    for j in 0..=p_plot {
        row_offset[j + 1] = row_offset[j] + (p_plot + 1 - j);
        for i in 0..=(p_plot - j) {
            ref_nodes.push([i as f64 / p_plot as f64, j as f64 / p_plot as f64]);
        }
    }
    let nid = |i: usize, j: usize| row_offset[j] + i;
    let mut sub_tris: Vec<[usize; 3]> = Vec::new();
    for j in 0..p_plot {
        for i in 0..(p_plot - j) {
            sub_tris.push([nid(i, j), nid(i + 1, j), nid(i, j + 1)]);
            if i + 1 <= p_plot - j - 1 {
                sub_tris.push([nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)]);
            }
        }
    }

    let n_tri = mesh.n_triangles();
    let pts_per = ref_nodes.len();
    let n_points = n_tri * pts_per;
    let n_cells = n_tri * sub_tris.len();

    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(out, "incompressible flow snapshot t = {t:.9e}");
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {n_points} double");

    let mut pressures = Vec::with_capacity(n_points);
    let mut velocities = Vec::with_capacity(n_points);
    for i in 0..n_tri {
        let map = mesh.tri_map(i);
        let p_coeff = state.p_block(i) * &g;
        for rn in &ref_nodes {
            let (x, _) = map.eval(*rn);
            let _ = writeln!(out, "{:.9e} {:.9e} 0", x.x, x.y);
            let phi = ops.basis.tri.eval(RefPoint { xi: rn[0], gamma: rn[1] });
            let mut ph = 0.0;
            for l in 0..ops.n_phi() {
                ph += phi[l] * p_coeff[l];
            }
            pressures.push(ph);
            velocities.push(velocity_at(state, mesh, ops, &g, i, x)?);
        }
    }

    let _ = writeln!(out, "CELLS {} {}", n_cells, 4 * n_cells);
    for i in 0..n_tri {
        let base = i * pts_per;
        for st in &sub_tris {
            let _ = writeln!(out, "3 {} {} {}", base + st[0], base + st[1], base + st[2]);
        }
    }
    let _ = writeln!(out, "CELL_TYPES {n_cells}");
    for _ in 0..n_cells {
        out.push_str("5\n");
    }

    let _ = writeln!(out, "POINT_DATA {n_points}");
    out.push_str("SCALARS pressure double 1\nLOOKUP_TABLE default\n");
    for p in &pressures {
        let _ = writeln!(out, "{p:.9e}");
    }
    out.push_str("VECTORS velocity double\n");
    for v in &velocities {
        let _ = writeln!(out, "{:.9e} {:.9e} 0", v[0], v[1]);
    }

    let _ = writeln!(out, "CELL_DATA {n_cells}");
    out.push_str("SCALARS vorticity double 1\nLOOKUP_TABLE default\n");
    for i in 0..n_tri {
        let map = mesh.tri_map(i);
        for st in &sub_tris {
            let c = [
                (ref_nodes[st[0]][0] + ref_nodes[st[1]][0] + ref_nodes[st[2]][0]) / 3.0,
                (ref_nodes[st[0]][1] + ref_nodes[st[1]][1] + ref_nodes[st[2]][1]) / 3.0,
            ];
            let (x, _) = map.eval(c);
            let wz = vorticity_at(state, mesh, ops, &g, i, x)?;
            let _ = writeln!(out, "{wz:.9e}");
        }
    }
    Ok(out)
}

fn velocity_at(
    state: &FieldState,
    mesh: &StaggeredMesh,
    ops: &OperatorStore,
    g: &nalgebra::DVector<f64>,
    tri: usize,
    x: Vec2,
) -> Result<[f64; 2], Error> {
    let cell = sub_cell_of(mesh, tri, x);
    let map = mesh.dual_map(cell);
    let r = map.invert(shift_into_cell_frame(mesh, cell, tri, x))?;
    let psi = ops.basis.quad.eval(RefPoint { xi: r[0], gamma: r[1] });
    let cu = state.v_block(cell, 0) * g;
    let cv = state.v_block(cell, 1) * g;
    let mut out = [0.0, 0.0];
    for l in 0..ops.n_psi() {
        out[0] += psi[l] * cu[l];
        out[1] += psi[l] * cv[l];
    }
    Ok(out)
}

fn vorticity_at(
    state: &FieldState,
    mesh: &StaggeredMesh,
    ops: &OperatorStore,
    g: &nalgebra::DVector<f64>,
    tri: usize,
    x: Vec2,
) -> Result<f64, Error> {
    let cell = sub_cell_of(mesh, tri, x);
    let map = mesh.dual_map(cell);
    let r = map.invert(shift_into_cell_frame(mesh, cell, tri, x))?;
    let (_, jac) = map.eval(r);
    let (jinv, _) = crate::mesh::invert_jacobian(&jac);
    let grads = ops.basis.quad.eval_grad(RefPoint { xi: r[0], gamma: r[1] });
    let cu = state.v_block(cell, 0) * g;
    let cv = state.v_block(cell, 1) * g;
    let mut wz = 0.0;
    for l in 0..ops.n_psi() {
        let gx = jinv[0][0] * grads[l][0] + jinv[1][0] * grads[l][1];
        let gy = jinv[0][1] * grads[l][0] + jinv[1][1] * grads[l][1];
        wz += gx * cv[l] - gy * cu[l];
    }
    Ok(wz)
}

fn shift_into_cell_frame(mesh: &StaggeredMesh, cell: usize, tri: usize, x: Vec2) -> Vec2 {
    let e = &mesh.edges[cell];
    if e.is_wrapped() && e.right == Some(tri) && e.left != tri {
        x + e.wrap_shift.unwrap()
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::mesh::{build_mesh, tests::two_triangle_square};
    use crate::operators::interpolate_velocity;

    #[test]
    fn structure_and_roundtrip_two_triangles() {
        let mesh = build_mesh(two_triangle_square(), &[]).unwrap();
        let ops = assemble(&mesh, 1, 0).unwrap();
        let mut state = FieldState::zeros(&ops, &mesh, 0.0, 1.0);
        let lin = |x: Vec2| [0.25 + x.x, -0.5 * x.y];
        let trace = interpolate_velocity(&ops, &mesh, lin);
        state.set_constant_in_time(&trace);
        // constant-in-space pressure
        for v in state.p.iter_mut() {
            *v = 2.5;
        }
        let body = render_vtk(&state, &mesh, &ops, 1.0).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next().unwrap(), "# vtk DataFile Version 3.0");
        // p = 1: 3 points and 1 cell per triangle.
        assert!(body.contains("POINTS 6 double"));
        assert!(body.contains("CELLS 2 8"));
        assert!(body.contains("SCALARS pressure double 1"));
        assert!(body.contains("VECTORS velocity double"));
        assert!(body.contains("SCALARS vorticity double 1"));

        // Constant pressure reproduced at write precision.
        let after = body.split("LOOKUP_TABLE default\n").nth(1).unwrap();
        for val in after.lines().take(6) {
            let v: f64 = val.parse().unwrap();
            assert!((v - 2.5).abs() < 1e-8);
        }

        // Velocity point samples equal the linear field to write precision.
        let vel_block = body.split("VECTORS velocity double\n").nth(1).unwrap();
        let pts_block = body.split("POINTS 6 double\n").nth(1).unwrap();
        let pts: Vec<Vec<f64>> = pts_block
            .lines()
            .take(6)
            .map(|l| l.split_whitespace().map(|s| s.parse().unwrap()).collect())
            .collect();
        for (k, l) in vel_block.lines().take(6).enumerate() {
            let f: Vec<f64> = l.split_whitespace().map(|s| s.parse().unwrap()).collect();
            let want = lin(Vec2::new(pts[k][0], pts[k][1]));
            assert!((f[0] - want[0]).abs() < 1e-8, "point {k}");
            assert!((f[1] - want[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn atomic_write_creates_file() {
        let mesh = build_mesh(two_triangle_square(), &[]).unwrap();
        let ops = assemble(&mesh, 1, 0).unwrap();
        let state = FieldState::zeros(&ops, &mesh, 0.0, 1.0);
        let dir = std::env::temp_dir().join(format!("stdg-vtk-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("snap.vtk");
        write_vtk(&state, &mesh, &ops, 0.0, &path).unwrap();
        assert!(path.exists());
        assert!(!dir.join("snap.vtk.tmp").exists());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
