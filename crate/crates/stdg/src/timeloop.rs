//! One time step of the scheme and the outer time march.
//!
//! Every step runs a fixed number of Picard iterations; each iteration
//! computes the momentum predictor, solves the pressure-correction four-point
//! block system with matrix-free GMRES and updates the velocity explicitly.
//! On domains without any prescribed-pressure boundary the pressure operator
//! has the spatially-constant modes (one per temporal layer) in its null
//! space; those are projected out of the residual and the iterates.

use crate::assembly::OperatorStore;
use crate::error::Error;
use crate::linsolve::{gmres, gmres_flex, KrylovConfig, LinearOperator};
use crate::mesh::StaggeredMesh;
use crate::operators::{BoundaryData, FieldState, PhysicsParams, RunOps, SlabContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitGuess {
    /// Constant-in-time extension of the old end state; zero pressure.
    Zero,
    /// Extrapolate the previous slab polynomials into the new slab.
    Extrapolate,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub p: usize,
    pub p_gamma: usize,
    pub cfl: f64,
    pub dt_fixed: Option<f64>,
    pub n_picard: usize,
    pub t_end: f64,
    pub krylov: KrylovConfig,
    pub init_guess: InitGuess,
}

impl RunConfig {
    pub fn new(p: usize, p_gamma: usize) -> Self {
        RunConfig {
            p,
            p_gamma,
            cfl: 0.4,
            dt_fixed: None,
            n_picard: p + 1,
            t_end: 1.0,
            krylov: KrylovConfig::default(),
            init_guess: InitGuess::Zero,
        }
    }
}

/// CFL time step for the explicit convective terms; falls back to the fixed
/// step when convection is off or the field is at rest.
pub fn compute_dt(
    v_max: f64,
    h_min: f64,
    cfl: f64,
    p: usize,
    dt_fixed: Option<f64>,
    convection: bool,
) -> Result<f64, Error> {
    if !convection || v_max == 0.0 {
        return dt_fixed.ok_or_else(|| {
            Error::config("dt_fixed is required when convection is disabled or the field is at rest")
        });
    }
    Ok(cfl / (2.0 * p as f64 + 1.0) * h_min / (2.0 * v_max))
}

/// Per-Picard-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct PicardStats {
    pub dp_norm: f64,
    pub pressure_iters: usize,
    pub pressure_residual: f64,
    pub viscous_iters: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct StepStats {
    pub t: f64,
    pub dt: f64,
    pub picard: Vec<PicardStats>,
    /// max over triangles of the continuity residual sup-norm.
    pub divergence_residual: f64,
    pub v_max: f64,
}

/// The pressure-correction operator: dp -> sum_j D_{i,j} M^{-1} Q dp.
struct PressureOperator<'a, 'b> {
    ctx: &'a SlabContext<'b>,
    project: bool,
    dim: usize,
}

impl<'a, 'b> PressureOperator<'a, 'b> {
    fn project_layer_means(&self, p: &mut [f64]) {
        project_zero_mean(self.ctx.ops, self.ctx.mesh, p);
    }
}

impl LinearOperator for PressureOperator<'_, '_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        if self.project {
            let mut dp = x.to_vec();
            self.project_layer_means(&mut dp);
            self.ctx.four_point_apply(&dp, y);
            self.project_layer_means(y);
        } else {
            self.ctx.four_point_apply(x, y);
        }
    }
}

/// Remove the spatial mean of every temporal pressure layer.
pub fn project_zero_mean(ops: &OperatorStore, mesh: &StaggeredMesh, p: &mut [f64]) {
    let n_phi = ops.n_phi();
    let ng = ops.n_gamma();
    for l2 in 0..ng {
        let mut mean = 0.0;
        for i in 0..mesh.n_triangles() {
            let o = i * n_phi * ng + l2 * n_phi;
            for l1 in 0..n_phi {
                mean += ops.tri_phi_int[i][l1] * p[o + l1];
            }
        }
        mean /= mesh.area;
        for i in 0..mesh.n_triangles() {
            let o = i * n_phi * ng + l2 * n_phi;
            for l1 in 0..n_phi {
                p[o + l1] -= mean;
            }
        }
    }
}

/// Whether the boundary pins the pressure (any prescribed-pressure edge).
pub fn pressure_is_pinned(mesh: &StaggeredMesh, bc: &dyn BoundaryData) -> bool {
    mesh.edges
        .iter()
        .filter(|e| e.is_boundary())
        .any(|e| bc.kind(e.tag).has_pressure())
}

/// The substituted pressure operator with implicit viscosity:
/// dp -> sum_j D_{i,j} (M + V)^{-1} Q dp, evaluated with nested tightly
/// converged viscous solves.
struct SchurOperator<'a, 'b> {
    ctx: &'a SlabContext<'b>,
    project: bool,
    dim: usize,
    inner_tol: f64,
}

impl LinearOperator for SchurOperator<'_, '_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut dp = x.to_vec();
        if self.project {
            project_zero_mean(self.ctx.ops, self.ctx.mesh, &mut dp);
        }
        let g = self.ctx.pressure_gradient(&dp, false);
        let (dv, _) = self
            .ctx
            .solve_momentum(&g, None, self.inner_tol)
            .expect("inner viscous solve failed in pressure operator");
        let out = self.ctx.continuity_residual(&dv);
        y.copy_from_slice(&out);
        if self.project {
            project_zero_mean(self.ctx.ops, self.ctx.mesh, y);
        }
    }
}

/// Four-point approximate solve used as a flexible preconditioner for the
/// substituted operator.
struct PressurePrecond<'a, 'b> {
    ctx: &'a SlabContext<'b>,
    project: bool,
    dim: usize,
}

impl LinearOperator for PressurePrecond<'_, '_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let op = PressureOperator {
            ctx: self.ctx,
            project: self.project,
            dim: self.dim,
        };
        let cfg = KrylovConfig {
            tol: 1e-3,
            max_iter: 400,
            restart: self.ctx.krylov.restart.max(60),
            zero_guess: true,
        };
        let bj = self.ctx.press_bj.as_ref().map(|blocks| crate::operators::BlockJacobi {
            blocks,
            nst: self.ctx.ops.n_phi() * self.ctx.ops.n_gamma(),
        });
        match gmres_flex(
            &op,
            bj.as_ref().map(|b| b as &dyn LinearOperator),
            x,
            &cfg,
            None,
        ) {
            Ok(r) => y.copy_from_slice(&r.x),
            Err(_) => y.copy_from_slice(x),
        }
    }
}

/// Solve the pressure-correction system for the given predictor field.
/// Without viscosity this is the four-point block system; with implicit
/// viscosity the momentum matrix is substituted exactly and the four-point
/// operator acts as a flexible preconditioner.
pub fn pressure_correction_solve(
    ctx: &SlabContext,
    fv: &[f64],
    project: bool,
) -> Result<(Vec<f64>, usize, f64), Error> {
    let mut rhs = ctx.continuity_residual(fv);
    if project {
        project_zero_mean(ctx.ops, ctx.mesh, &mut rhs);
    }
    let bj = ctx.press_bj.as_ref().map(|blocks| crate::operators::BlockJacobi {
        blocks,
        nst: ctx.ops.n_phi() * ctx.ops.n_gamma(),
    });
    let r = if ctx.phys.nu == 0.0 {
        let op = PressureOperator {
            ctx,
            project,
            dim: rhs.len(),
        };
        gmres_flex(
            &op,
            bj.as_ref().map(|b| b as &dyn LinearOperator),
            &rhs,
            &ctx.krylov,
            None,
        )?
    } else {
        let op = SchurOperator {
            ctx,
            project,
            dim: rhs.len(),
            inner_tol: (ctx.krylov.tol * 1e-2).max(1e-13),
        };
        let prec = PressurePrecond {
            ctx,
            project,
            dim: rhs.len(),
        };
        gmres_flex(&op, Some(&prec), &rhs, &ctx.krylov, None)?
    };
    if !r.converged {
        return Err(Error::solver(format!(
            "pressure solve did not converge: residual {:.3e} after {} iterations",
            r.residual, r.iterations
        )));
    }
    let mut dp = r.x;
    if project {
        project_zero_mean(ctx.ops, ctx.mesh, &mut dp);
    }
    Ok((dp, r.iterations, r.residual))
}

/// Velocity update with the pressure correction, through the same momentum
/// matrix as the predictor solve.
pub fn velocity_update(ctx: &SlabContext, fv: &[f64], dp: &[f64]) -> Vec<f64> {
    let mut dv = ctx.pressure_gradient(dp, false);
    if ctx.phys.nu == 0.0 {
        ctx.m_inv_apply(&mut dv);
    } else {
        let tol = (ctx.krylov.tol * 1e-2).max(1e-13);
        let (solved, _) = ctx
            .solve_momentum(&dv, None, tol)
            .expect("viscous solve failed in velocity update");
        dv = solved;
    }
    fv.iter().zip(&dv).map(|(a, b)| a - b).collect()
}

/// Advance one slab [t_n, t_n + dt]. `trace_n` carries the spatial velocity
/// DoFs at t_n; `prev` optionally provides the previous slab for
/// extrapolated initial guesses.
pub fn advance_timestep(
    ctx: &SlabContext,
    trace_n: &[f64],
    prev: Option<&FieldState>,
    cfg: &RunConfig,
) -> Result<(FieldState, StepStats), Error> {
    let mesh = ctx.mesh;
    let ops = ctx.ops;
    let mut state = FieldState::zeros(ops, mesh, ctx.t_start, ctx.dt);

    match (cfg.init_guess, prev) {
        (InitGuess::Extrapolate, Some(old)) => {
            extrapolate_state(ops, old, &mut state);
        }
        _ => {
            state.set_constant_in_time(trace_n);
            // pressure guess stays zero
        }
    }

    let project = !pressure_is_pinned(mesh, ctx.bc);
    let mut stats = Vec::with_capacity(cfg.n_picard);
    for _k in 0..cfg.n_picard {
        let (fv, visc) = ctx.momentum_predictor(trace_n, &state, &state.p)?;
        let (dp, pit, pres) = pressure_correction_solve(ctx, &fv, project)?;
        let v_new = velocity_update(ctx, &fv, &dp);
        let dp_norm = dp.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (pk, dk) in state.p.iter_mut().zip(&dp) {
            *pk += dk;
        }
        state.v = v_new;
        stats.push(PicardStats {
            dp_norm,
            pressure_iters: pit,
            pressure_residual: pres,
            viscous_iters: [visc[0].iterations, visc[1].iterations],
        });
    }

    if state.v.iter().chain(state.p.iter()).any(|x| !x.is_finite()) {
        return Err(Error::solver(format!(
            "non-finite degrees of freedom at t = {}",
            ctx.t_start
        )));
    }

    let divergence_residual = divergence_residual(ctx, &state.v);
    let v_max = state.v_max();
    Ok((
        state,
        StepStats {
            t: ctx.t_start + ctx.dt,
            dt: ctx.dt,
            picard: stats,
            divergence_residual,
            v_max,
        },
    ))
}

/// max over triangles of the sup-norm of the discrete continuity residual.
pub fn divergence_residual(ctx: &SlabContext, v: &[f64]) -> f64 {
    ctx.continuity_residual(v)
        .iter()
        .fold(0.0f64, |a, &b| a.max(b.abs()))
}

fn extrapolate_state(ops: &OperatorStore, old: &FieldState, new: &mut FieldState) {
    // Evaluate the old slab polynomials at the new slab's node times.
    let ng = ops.n_gamma();
    let ratio = new.dt / old.dt;
    let taus: Vec<f64> = ops
        .basis
        .time
        .line
        .nodes
        .iter()
        .map(|&tau| 1.0 + tau * ratio)
        .collect();
    let n_cells = new.v.len() / (2 * new.n_psi * ng);
    for (l2, &tau_old) in taus.iter().enumerate() {
        let g = ops.basis.time.eval(tau_old);
        for cell in 0..n_cells {
            for comp in 0..2 {
                let ob = old.v_block(cell, comp);
                let w = ob * &g;
                let o = new.v_off(cell, comp) + l2 * new.n_psi;
                new.v[o..o + new.n_psi].copy_from_slice(w.as_slice());
            }
        }
        let n_tris = new.p.len() / (new.n_phi * ng);
        for tri in 0..n_tris {
            let pb = old.p_block(tri);
            let w = pb * &g;
            let o = new.p_off(tri) + l2 * new.n_phi;
            new.p[o..o + new.n_phi].copy_from_slice(w.as_slice());
        }
    }
}

/// Outer time march until t_end; calls `on_step` after every completed step.
#[allow(clippy::too_many_arguments)]
pub fn run_time_loop(
    mesh: &StaggeredMesh,
    ops: &OperatorStore,
    phys: &PhysicsParams,
    bc: &dyn BoundaryData,
    cfg: &RunConfig,
    initial_trace: Vec<f64>,
    t_start: f64,
    mut on_step: impl FnMut(&FieldState, &StepStats) -> Result<(), Error>,
) -> Result<(FieldState, Vec<f64>), Error> {
    let run_ops = RunOps::build(mesh, ops, phys, bc);
    let mut t = t_start;
    let mut trace = initial_trace;
    let mut prev: Option<FieldState> = None;
    let mut trace_vmax = trace_max(&trace);
    let mut last_state: Option<FieldState> = None;

    while t < cfg.t_end - 1e-14 * cfg.t_end.max(1.0) {
        let mut dt = compute_dt(
            trace_vmax,
            mesh.h_min,
            cfg.cfl,
            cfg.p,
            cfg.dt_fixed,
            phys.convection,
        )?;
        if t + dt > cfg.t_end {
            dt = cfg.t_end - t;
        }
        let mut ctx = SlabContext {
            mesh,
            ops,
            phys,
            bc,
            run_ops: &run_ops,
            t_start: t,
            dt,
            krylov: cfg.krylov.clone(),
            visc_bj: None,
            press_bj: None,
        };
        ctx.prepare();
        let (state, stats) = advance_timestep(&ctx, &trace, prev.as_ref(), cfg)?;
        trace = state.end_trace(ops);
        trace_vmax = stats.v_max.max(trace_max(&trace));
        t += dt;
        on_step(&state, &stats)?;
        prev = Some(state.clone());
        last_state = Some(state);
    }
    let state = match last_state {
        Some(s) => s,
        None => {
            // t_end <= t_start: produce the initial state as a degenerate slab.
            let mut s = FieldState::zeros(ops, mesh, t_start, 0.0);
            s.set_constant_in_time(&trace);
            s
        }
    };
    Ok((state, trace))
}

/// Sup-norm of a trace vector, used as the convective speed estimate.
fn trace_max(trace: &[f64]) -> f64 {
    trace.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}
