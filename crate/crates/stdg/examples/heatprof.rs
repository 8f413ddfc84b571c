use stdg::cases::{kinetic_energy, CaseId, CaseSpec};
use stdg::operators::{interpolate_velocity, FieldState, PhysicsParams};
use stdg::timeloop::{run_time_loop, RunConfig};

fn main() {
    // Pure diffusion of u = sin(y) on the periodic square: E(t) = E0 e^{-2 nu t}.
    let nu: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let dt: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.25);
    let p: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(2);
    let spec = CaseSpec::new(CaseId::TaylorGreen);
    let mesh = spec.load_mesh("crates/stdg/fixtures/tg_160.mesh").unwrap();
    let ops = stdg::assembly::assemble(&mesh, p, p).unwrap();
    let phys = PhysicsParams { nu, convection: false, source: None };
    let bc = spec.boundary();
    let mut run = RunConfig::new(p, p);
    run.t_end = 4.0 * dt;
    run.dt_fixed = Some(dt);
    run.krylov.restart = 100;
    let trace0 = interpolate_velocity(&ops, &mesh, |x| [x.y.sin(), 0.0]);
    let mut e_prev = {
        let mut s0 = FieldState::zeros(&ops, &mesh, 0.0, 1.0);
        s0.set_constant_in_time(&trace0);
        kinetic_energy(&mesh, &ops, &s0, 1.0)
    };
    let expected = (-2.0 * nu * dt).exp();
    run_time_loop(&mesh, &ops, &phys, &bc, &run, trace0, 0.0, |st, ss| {
        let e = kinetic_energy(&mesh, &ops, st, 1.0);
        eprintln!("t={:.3} decay/step={:.6} expected={:.6} div={:.2e}",
            ss.t, (e / e_prev).sqrt(), expected, ss.divergence_residual);
        e_prev = e;
        Ok(())
    }).unwrap();
}
