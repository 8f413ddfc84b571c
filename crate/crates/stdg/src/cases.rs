//! Benchmark problems: analytic solutions, initial and boundary data,
//! manufactured source terms, error norms and the convergence-study harness.

use crate::assembly::{assemble, OperatorStore};
use crate::error::Error;
use crate::mesh::{load_mesh_periodic, StaggeredMesh, Vec2};
use crate::operators::{
    interpolate_velocity, BcKind, BoundaryData, FieldState, PhysicsParams, SourceFn,
};
use crate::timeloop::{run_time_loop, RunConfig, StepStats};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Small complex helper for the oscillatory channel solution
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }
    pub fn mul(self, o: Complex) -> Complex {
        Complex::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
    pub fn div(self, o: Complex) -> Complex {
        let d = o.re * o.re + o.im * o.im;
        Complex::new(
            (self.re * o.re + self.im * o.im) / d,
            (self.im * o.re - self.re * o.im) / d,
        )
    }
    pub fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
    /// cos(a + ib) = cos a cosh b - i sin a sinh b
    pub fn cos(self) -> Complex {
        Complex::new(
            self.re.cos() * self.im.cosh(),
            -self.re.sin() * self.im.sinh(),
        )
    }
}

// ---------------------------------------------------------------------------
// Case definitions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseId {
    Manufactured,
    Womersley,
    TaylorGreen,
    ShearLayer,
    Cavity,
    Cylinder,
}

impl CaseId {
    pub fn parse(s: &str) -> Result<CaseId, Error> {
        Ok(match s {
            "manufactured" => CaseId::Manufactured,
            "womersley" => CaseId::Womersley,
            "taylor_green" => CaseId::TaylorGreen,
            "shear_layer" => CaseId::ShearLayer,
            "cavity" => CaseId::Cavity,
            "cylinder" => CaseId::Cylinder,
            _ => return Err(Error::config(format!("unknown case {s:?}"))),
        })
    }
    pub fn name(self) -> &'static str {
        match self {
            CaseId::Manufactured => "manufactured",
            CaseId::Womersley => "womersley",
            CaseId::TaylorGreen => "taylor_green",
            CaseId::ShearLayer => "shear_layer",
            CaseId::Cavity => "cavity",
            CaseId::Cylinder => "cylinder",
        }
    }
}

/// Boundary entry: a condition kind or a periodic identification with the
/// partner tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcEntry {
    Kind(BcKind),
    Periodic(u32),
}

#[derive(Debug, Clone)]
pub struct CaseSpec {
    pub id: CaseId,
    pub nu: f64,
    pub convection: bool,
    /// Manufactured: amplitudes and wave parameters.
    pub v0: f64,
    pub p0: f64,
    pub omega: f64,
    pub wavenumber: f64,
    /// Channel flow: pressure amplitude over density, half height, bottom y.
    pub p_amp: f64,
    pub half_height: f64,
    pub y_bottom: f64,
    /// Shear layer.
    pub delta: f64,
    pub rho_slope: f64,
    /// Cavity / cylinder speeds.
    pub lid_speed: f64,
    pub u_bar: f64,
    pub bc_map: HashMap<u32, BcEntry>,
}

impl CaseSpec {
    /// Benchmark defaults; boundary tags follow the fixture meshes
    /// (1 bottom, 2 top, 3 left, 4 right, 5 inner wall where present).
    pub fn new(id: CaseId) -> CaseSpec {
        let mut spec = CaseSpec {
            id,
            nu: 0.0,
            convection: true,
            v0: 1.0,
            p0: 1.0,
            omega: 2.0 * std::f64::consts::PI,
            wavenumber: 10.0 / (2.0 * std::f64::consts::PI),
            p_amp: 1.0,
            half_height: 0.2,
            y_bottom: -0.2,
            delta: 0.05,
            rho_slope: 30.0,
            lid_speed: 1.0,
            u_bar: 0.5,
            bc_map: HashMap::new(),
        };
        match id {
            CaseId::Manufactured => {
                spec.nu = 0.01;
                for tag in 1..=4 {
                    spec.bc_map.insert(tag, BcEntry::Kind(BcKind::Dirichlet));
                }
            }
            CaseId::Womersley => {
                spec.nu = 5e-2;
                spec.convection = false;
                spec.bc_map.insert(1, BcEntry::Kind(BcKind::NoSlip));
                spec.bc_map.insert(2, BcEntry::Kind(BcKind::NoSlip));
                spec.bc_map.insert(3, BcEntry::Kind(BcKind::Pressure));
                spec.bc_map.insert(4, BcEntry::Kind(BcKind::Pressure));
            }
            CaseId::TaylorGreen => {
                spec.nu = 0.1;
                spec.bc_map.insert(1, BcEntry::Periodic(2));
                spec.bc_map.insert(3, BcEntry::Periodic(4));
            }
            CaseId::ShearLayer => {
                spec.nu = 2e-4;
                spec.bc_map.insert(1, BcEntry::Periodic(2));
                spec.bc_map.insert(3, BcEntry::Periodic(4));
            }
            CaseId::Cavity => {
                spec.nu = 0.01;
                spec.bc_map.insert(1, BcEntry::Kind(BcKind::NoSlip));
                spec.bc_map.insert(2, BcEntry::Kind(BcKind::Velocity));
                spec.bc_map.insert(3, BcEntry::Kind(BcKind::NoSlip));
                spec.bc_map.insert(4, BcEntry::Kind(BcKind::NoSlip));
            }
            CaseId::Cylinder => {
                spec.nu = 0.01;
                spec.bc_map.insert(1, BcEntry::Kind(BcKind::Passage));
                spec.bc_map.insert(2, BcEntry::Kind(BcKind::Passage));
                spec.bc_map.insert(3, BcEntry::Kind(BcKind::Velocity));
                spec.bc_map.insert(4, BcEntry::Kind(BcKind::Passage));
                spec.bc_map.insert(5, BcEntry::Kind(BcKind::NoSlip));
            }
        }
        spec
    }

    pub fn periodic_pairs(&self) -> Vec<(u32, u32)> {
        let mut pairs = Vec::new();
        for (&tag, entry) in &self.bc_map {
            if let BcEntry::Periodic(other) = entry {
                if tag < *other {
                    pairs.push((tag, *other));
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }

    pub fn physics(&self) -> PhysicsParams {
        PhysicsParams {
            nu: self.nu,
            convection: self.convection,
            source: self.source(),
        }
    }

    pub fn load_mesh(&self, path: impl AsRef<Path>) -> Result<StaggeredMesh, Error> {
        load_mesh_periodic(path, &self.periodic_pairs())
    }

    /// Exact solution where one exists: (velocity, pressure).
    pub fn exact(&self, x: Vec2, t: f64) -> Option<([f64; 2], f64)> {
        match self.id {
            CaseId::Manufactured => {
                let (v, p, _) = manufactured_eval(x.x, x.y, t, self);
                Some((v, p))
            }
            CaseId::Womersley => {
                let u = womersley_velocity(x.y, t, self);
                Some(([u, 0.0], womersley_pressure(x.x, t, self)))
            }
            CaseId::TaylorGreen => {
                let (v, p) = taylor_green_eval(x.x, x.y, t, self.nu);
                Some((v, p))
            }
            _ => None,
        }
    }

    pub fn initial_velocity(&self, x: Vec2) -> [f64; 2] {
        match self.id {
            CaseId::Manufactured | CaseId::Womersley | CaseId::TaylorGreen => {
                self.exact(x, 0.0).unwrap().0
            }
            CaseId::ShearLayer => shear_layer_init(x.x, x.y, self).0,
            CaseId::Cavity => [0.0, 0.0],
            CaseId::Cylinder => [self.u_bar, 0.0],
        }
    }

    pub fn source(&self) -> Option<SourceFn> {
        match self.id {
            CaseId::Manufactured => {
                let spec = self.clone();
                Some(Arc::new(move |x: Vec2, t: f64| {
                    let (_, _, s) = manufactured_eval(x.x, x.y, t, &spec);
                    s
                }) as SourceFn)
            }
            _ => None,
        }
    }

    pub fn boundary(&self) -> CaseBoundary {
        CaseBoundary { spec: self.clone() }
    }

    pub fn has_exact(&self) -> bool {
        matches!(
            self.id,
            CaseId::Manufactured | CaseId::Womersley | CaseId::TaylorGreen
        )
    }
}

/// Boundary data provider derived from a case specification.
pub struct CaseBoundary {
    spec: CaseSpec,
}

impl BoundaryData for CaseBoundary {
    fn kind(&self, tag: u32) -> BcKind {
        match self.spec.bc_map.get(&tag) {
            Some(BcEntry::Kind(k)) => *k,
            // Periodic edges never reach the flux loops; any kind works.
            Some(BcEntry::Periodic(_)) => BcKind::NoSlip,
            None => BcKind::NoSlip,
        }
    }

    fn velocity(&self, tag: u32, x: Vec2, t: f64) -> [f64; 2] {
        match self.kind(tag) {
            BcKind::Dirichlet => self.spec.exact(x, t).map(|(v, _)| v).unwrap_or([0.0, 0.0]),
            BcKind::Velocity => match self.spec.id {
                CaseId::Cavity => [self.spec.lid_speed, 0.0],
                CaseId::Cylinder => [self.spec.u_bar, 0.0],
                _ => [0.0, 0.0],
            },
            _ => [0.0, 0.0],
        }
    }

    fn pressure(&self, tag: u32, x: Vec2, t: f64) -> f64 {
        match self.kind(tag) {
            BcKind::Dirichlet => self.spec.exact(x, t).map(|(_, p)| p).unwrap_or(0.0),
            BcKind::Pressure => match self.spec.id {
                CaseId::Womersley => womersley_pressure(x.x, t, &self.spec),
                _ => 0.0,
            },
            _ => 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Analytic solutions
// ---------------------------------------------------------------------------

/// Travelling-wave solution with its balancing momentum source.
/// v = v0 sin(k(x-y) - omega t) in both components (divergence-free),
/// p = p0 sin(k(x-y) - omega t). The convective term vanishes analytically.
pub fn manufactured_eval(x: f64, y: f64, t: f64, spec: &CaseSpec) -> ([f64; 2], f64, [f64; 2]) {
    let (v0, p0, om, k) = (spec.v0, spec.p0, spec.omega, spec.wavenumber);
    let theta = k * (x - y) - om * t;
    let (s, c) = theta.sin_cos();
    let v = [v0 * s, v0 * s];
    let p = p0 * s;
    let visc = 2.0 * spec.nu * k * k * v0 * s;
    let sx = -om * v0 * c + p0 * k * c + visc;
    let sy = -om * v0 * c - p0 * k * c + visc;
    (v, p, [sx, sy])
}

/// Axial velocity of the oscillatory pressure-driven channel flow.
/// u(y, t) = Re[ i (P/rho) / omega (1 - cos(lambda (y_c - 1)) / cos(lambda)) e^{i omega t} ]
/// with lambda = sqrt(-i alpha^2), alpha = R sqrt(omega / nu), y_c = (y - y_b)/R.
pub fn womersley_velocity(y: f64, t: f64, spec: &CaseSpec) -> f64 {
    let r = spec.half_height;
    let alpha = r * (spec.omega / spec.nu).sqrt();
    // sqrt(-i) = (1 - i)/sqrt(2)
    let lam = Complex::new(alpha / 2f64.sqrt(), -alpha / 2f64.sqrt());
    let yc = (y - spec.y_bottom) / r;
    let arg = Complex::new(lam.re * (yc - 1.0), lam.im * (yc - 1.0));
    let frac = arg.cos().div(lam.cos());
    let one_minus = Complex::new(1.0, 0.0).sub(frac);
    let coef = Complex::new(0.0, spec.p_amp / spec.omega); // i * (P/rho) / omega
    let phase = Complex::new((spec.omega * t).cos(), (spec.omega * t).sin());
    coef.mul(one_minus).mul(phase).re
}

/// Pressure of the channel flow: linear in x with the prescribed oscillatory
/// gradient, zero mean over the symmetric channel.
pub fn womersley_pressure(x: f64, t: f64, spec: &CaseSpec) -> f64 {
    spec.p_amp * (spec.omega * t).cos() * x
}

pub fn taylor_green_eval(x: f64, y: f64, t: f64, nu: f64) -> ([f64; 2], f64) {
    let decay = (-2.0 * nu * t).exp();
    let u = x.sin() * y.cos() * decay;
    let v = -x.cos() * y.sin() * decay;
    let p = 0.25 * ((2.0 * x).cos() + (2.0 * y).cos()) * decay * decay;
    ([u, v], p)
}

/// Perturbed double shear layer initial data on [-1,1]^2.
pub fn shear_layer_init(x: f64, y: f64, spec: &CaseSpec) -> ([f64; 2], f64) {
    let yn = (y + 1.0) / 2.0;
    let xn = (x + 1.0) / 2.0;
    let u = if yn <= 0.5 {
        (spec.rho_slope * (yn - 0.25)).tanh()
    } else {
        (spec.rho_slope * (0.75 - yn)).tanh()
    };
    let v = spec.delta * (2.0 * std::f64::consts::PI * xn).sin();
    ([u, v], 1.0)
}

// ---------------------------------------------------------------------------
// Norms and diagnostics
// ---------------------------------------------------------------------------

/// L2 errors (pressure over the primal grid, velocity over the dual grid) of
/// the slab polynomials evaluated at physical time t.
pub fn l2_error(
    mesh: &StaggeredMesh,
    ops: &OperatorStore,
    state: &FieldState,
    spec: &CaseSpec,
    t: f64,
) -> Result<(f64, f64), Error> {
    if !spec.has_exact() {
        return Err(Error::config(format!(
            "case {} has no analytic solution",
            spec.id.name()
        )));
    }
    let tau = if state.dt > 0.0 {
        ((t - state.t_start) / state.dt).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let g = ops.basis.time.eval(tau);

    let mut err_p = 0.0;
    for i in 0..mesh.n_triangles() {
        let coeff = state.p_block(i) * &g;
        let tv = &ops.tri_vol[i];
        for q in 0..tv.w.len() {
            let mut ph = 0.0;
            for l in 0..ops.n_phi() {
                ph += tv.phi[(q, l)] * coeff[l];
            }
            let (_, pe) = spec.exact(tv.pos[q], t).unwrap();
            err_p += tv.w[q] * (ph - pe) * (ph - pe);
        }
    }

    let mut err_v = 0.0;
    for cell in 0..mesh.n_edges() {
        let cu = state.v_block(cell, 0) * &g;
        let cv = state.v_block(cell, 1) * &g;
        let vol = &ops.cell_vol[cell];
        for q in 0..vol.w.len() {
            let mut uh = 0.0;
            let mut vh = 0.0;
            for l in 0..ops.n_psi() {
                uh += vol.psi[(q, l)] * cu[l];
                vh += vol.psi[(q, l)] * cv[l];
            }
            let (ve, _) = spec.exact(vol.pos[q], t).unwrap();
            err_v += vol.w[q] * ((uh - ve[0]) * (uh - ve[0]) + (vh - ve[1]) * (vh - ve[1]));
        }
    }
    Ok((err_p.sqrt(), err_v.sqrt()))
}

/// Kinetic energy (1/2) int |v|^2 of the slab field at reference time tau.
pub fn kinetic_energy(mesh: &StaggeredMesh, ops: &OperatorStore, state: &FieldState, tau: f64) -> f64 {
    let g = ops.basis.time.eval(tau);
    let mut e = 0.0;
    for cell in 0..mesh.n_edges() {
        let cu = state.v_block(cell, 0) * &g;
        let cv = state.v_block(cell, 1) * &g;
        let vol = &ops.cell_vol[cell];
        for q in 0..vol.w.len() {
            let mut uh = 0.0;
            let mut vh = 0.0;
            for l in 0..ops.n_psi() {
                uh += vol.psi[(q, l)] * cu[l];
                vh += vol.psi[(q, l)] * cv[l];
            }
            e += 0.5 * vol.w[q] * (uh * uh + vh * vh);
        }
    }
    e
}

/// Vorticity extrema sampled at the volume quadrature points.
pub fn vorticity_extrema(
    mesh: &StaggeredMesh,
    ops: &OperatorStore,
    state: &FieldState,
    tau: f64,
) -> (f64, f64) {
    let g = ops.basis.time.eval(tau);
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for cell in 0..mesh.n_edges() {
        let cu = state.v_block(cell, 0) * &g;
        let cv = state.v_block(cell, 1) * &g;
        let vol = &ops.cell_vol[cell];
        for q in 0..vol.w.len() {
            let mut wz = 0.0;
            for l in 0..ops.n_psi() {
                wz += vol.dpsi_x[(q, l)] * cv[l] - vol.dpsi_y[(q, l)] * cu[l];
            }
            lo = lo.min(wz);
            hi = hi.max(wz);
        }
    }
    (lo, hi)
}

/// Point sample of the velocity: locate the containing triangle, pick the
/// sub-cell and evaluate its dual polynomial.
pub fn sample_velocity(
    mesh: &StaggeredMesh,
    ops: &OperatorStore,
    state: &FieldState,
    x: Vec2,
    tau: f64,
) -> Option<[f64; 2]> {
    let (_, cell) = locate(mesh, x)?;
    let g = ops.basis.time.eval(tau);
    let cu = state.v_block(cell, 0) * &g;
    let cv = state.v_block(cell, 1) * &g;
    let map = mesh.dual_map(cell);
    let r = map.invert(x).ok()?;
    let psi = ops
        .basis
        .quad
        .eval(crate::basis::RefPoint { xi: r[0], gamma: r[1] });
    let mut u = 0.0;
    let mut v = 0.0;
    for l in 0..ops.n_psi() {
        u += psi[l] * cu[l];
        v += psi[l] * cv[l];
    }
    Some([u, v])
}

pub fn sample_pressure(
    mesh: &StaggeredMesh,
    ops: &OperatorStore,
    state: &FieldState,
    x: Vec2,
    tau: f64,
) -> Option<f64> {
    let (tri, _) = locate(mesh, x)?;
    let g = ops.basis.time.eval(tau);
    let coeff = state.p_block(tri) * &g;
    let map = mesh.tri_map(tri);
    let r = map.invert(x).ok()?;
    let phi = ops
        .basis
        .tri
        .eval(crate::basis::RefPoint { xi: r[0], gamma: r[1] });
    let mut p = 0.0;
    for l in 0..ops.n_phi() {
        p += phi[l] * coeff[l];
    }
    Some(p)
}

/// Containing triangle and dual cell of a physical point.
pub fn locate(mesh: &StaggeredMesh, x: Vec2) -> Option<(usize, usize)> {
    let tol = -1e-11;
    for (i, t) in mesh.triangles.iter().enumerate() {
        let v = [
            mesh.nodes[t.nodes[0]],
            mesh.nodes[t.nodes[1]],
            mesh.nodes[t.nodes[2]],
        ];
        let a = (v[1] - v[0]).cross(x - v[0]);
        let b = (v[2] - v[1]).cross(x - v[1]);
        let c = (v[0] - v[2]).cross(x - v[2]);
        let area2 = 2.0 * t.area;
        if a >= tol * area2 && b >= tol * area2 && c >= tol * area2 {
            return Some((i, sub_cell_of(mesh, i, x)));
        }
    }
    None
}

/// Dual cell (edge index) whose sub-element of triangle `tri` contains `x`:
/// the one with the largest margin against the two dual faces bounding it.
pub fn sub_cell_of(mesh: &StaggeredMesh, tri: usize, x: Vec2) -> usize {
    let t = &mesh.triangles[tri];
    let bary = t.barycenter;
    let mut best = (f64::MIN, t.edges[0]);
    for s in 0..3 {
        let j = t.edges[s];
        let n1 = mesh.nodes[t.nodes[s]];
        let n2 = mesh.nodes[t.nodes[(s + 1) % 3]];
        let d1 = (n1 - bary).cross(x - bary);
        let d2 = (x - bary).cross(n2 - bary);
        let score = d1.min(d2);
        if score > best.0 {
            best = (score, j);
        }
    }
    best.1
}

// ---------------------------------------------------------------------------
// Case runs and convergence studies
// ---------------------------------------------------------------------------

pub struct CaseRunResult {
    pub state: FieldState,
    pub steps: Vec<StepStats>,
    pub eps_p: Option<f64>,
    pub eps_v: Option<f64>,
}

/// Run a case on one mesh to t_end; errors are computed when the case has an
/// analytic solution.
pub fn run_case(
    spec: &CaseSpec,
    run: &RunConfig,
    mesh: &StaggeredMesh,
    mut on_step: impl FnMut(&FieldState, &StepStats) -> Result<(), Error>,
) -> Result<CaseRunResult, Error> {
    let ops = assemble(mesh, run.p, run.p_gamma)?;
    let phys = spec.physics();
    let bc = spec.boundary();
    let trace0 = interpolate_velocity(&ops, mesh, |x| spec.initial_velocity(x));
    let mut steps = Vec::new();
    let (state, _) = run_time_loop(mesh, &ops, &phys, &bc, run, trace0, 0.0, |st, ss| {
        steps.push(ss.clone());
        on_step(st, ss)
    })?;
    let (eps_p, eps_v) = if spec.has_exact() {
        let (ep, ev) = l2_error(mesh, &ops, &state, spec, run.t_end)?;
        (Some(ep), Some(ev))
    } else {
        (None, None)
    };
    Ok(CaseRunResult {
        state,
        steps,
        eps_p,
        eps_v,
    })
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub n_tri: usize,
    pub eps_p: f64,
    pub eps_v: f64,
    pub sigma_p: Option<f64>,
    pub sigma_v: Option<f64>,
}

/// Observed order between two refinement levels under mesh halving
/// (h ratio inferred from the triangle-count ratio).
pub fn convergence_rate(eps_coarse: f64, eps_fine: f64, n_coarse: usize, n_fine: usize) -> f64 {
    let h_ratio = ((n_fine as f64) / (n_coarse as f64)).sqrt();
    if eps_fine == eps_coarse {
        return 0.0;
    }
    (eps_coarse / eps_fine).ln() / h_ratio.ln()
}

/// Run a mesh sequence and tabulate errors and observed orders. The fixed
/// time step, when used, halves with every refinement level.
pub fn convergence_study(
    spec: &CaseSpec,
    run: &RunConfig,
    mesh_paths: &[std::path::PathBuf],
) -> Result<Vec<ConvergenceRow>, Error> {
    if mesh_paths.len() < 2 {
        return Err(Error::Usage(
            "convergence study needs at least 2 refinement levels".into(),
        ));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for (level, path) in mesh_paths.iter().enumerate() {
        let mesh = spec.load_mesh(path)?;
        let mut run_l = run.clone();
        if let Some(dt) = run.dt_fixed {
            run_l.dt_fixed = Some(dt / (1 << level) as f64);
        }
        let result = run_case(spec, &run_l, &mesh, |_, _| Ok(()))?;
        let (eps_p, eps_v) = (
            result.eps_p.ok_or_else(|| Error::config("case has no analytic solution"))?,
            result.eps_v.unwrap(),
        );
        let (sigma_p, sigma_v) = match rows.last() {
            Some(prev) => (
                Some(convergence_rate(prev.eps_p, eps_p, prev.n_tri, mesh.n_triangles())),
                Some(convergence_rate(prev.eps_v, eps_v, prev.n_tri, mesh.n_triangles())),
            ),
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            n_tri: mesh.n_triangles(),
            eps_p,
            eps_v,
            sigma_p,
            sigma_v,
        });
    }
    Ok(rows)
}

/// CSV table: header and one row per level, 6 significant digits.
pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("N_i,eps_p,eps_v,sigma_p,sigma_v\n");
    for r in rows {
        let sp = r.sigma_p.map(|s| format!("{s:.6e}")).unwrap_or_default();
        let sv = r.sigma_v.map(|s| format!("{s:.6e}")).unwrap_or_default();
        let _ = writeln!(out, "{},{:.6e},{:.6e},{},{}", r.n_tri, r.eps_p, r.eps_v, sp, sv);
    }
    out
}

/// Dominant frequency of a uniformly sampled signal by a direct DFT scan
/// with parabolic peak refinement (mean removed).
pub fn dominant_frequency(samples: &[f64], dt: f64) -> Option<f64> {
    let n = samples.len();
    if n < 8 || dt <= 0.0 {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let mut best = (0usize, 0.0f64);
    let half = n / 2;
    let mut power = vec![0.0; half];
    for (k, pk) in power.iter_mut().enumerate().take(half).skip(1) {
        let mut re = 0.0;
        let mut im = 0.0;
        for (m, &s) in samples.iter().enumerate() {
            let ang = -2.0 * std::f64::consts::PI * (k * m) as f64 / n as f64;
            re += (s - mean) * ang.cos();
            im += (s - mean) * ang.sin();
        }
        *pk = re * re + im * im;
        if *pk > best.1 {
            best = (k, *pk);
        }
    }
    if best.0 == 0 {
        return None;
    }
    // Parabolic refinement around the peak bin.
    let k = best.0;
    let refine = if k > 1 && k + 1 < half {
        let (a, b, c) = (power[k - 1], power[k], power[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom.abs() > 1e-300 {
            0.5 * (a - c) / denom
        } else {
            0.0
        }
    } else {
        0.0
    };
    Some((k as f64 + refine) / (n as f64 * dt))
}
