use stdg::cases::{run_case, sample_velocity, sample_pressure, womersley_velocity, CaseId, CaseSpec};
use stdg::mesh::Vec2;
use stdg::timeloop::RunConfig;

fn main() {
    let spec = CaseSpec::new(CaseId::Womersley);
    let mesh = spec.load_mesh("crates/stdg/fixtures/channel_46.mesh").unwrap();
    let ops = stdg::assembly::assemble(&mesh, 1, 1).unwrap();
    let nsteps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut run = RunConfig::new(1, 1);
    run.dt_fixed = Some(1.5 / 6.0);
    run.t_end = run.dt_fixed.unwrap() * nsteps as f64;
    run.krylov.restart = 100;
    let r = run_case(&spec, &run, &mesh, |_, _| Ok(())).unwrap();
    let t = run.t_end;
    for y in [-0.15, -0.08, 0.0, 0.08, 0.15] {
        let pt = Vec2::new(0.05, y);
        let v = sample_velocity(&mesh, &ops, &r.state, pt, 1.0).unwrap();
        let ue = womersley_velocity(y, t, &spec);
        let ph = sample_pressure(&mesh, &ops, &r.state, pt, 1.0).unwrap();
        let pe = stdg::cases::womersley_pressure(0.05, t, &spec);
        eprintln!("y={y:+.2}: u={:+.4e} (exact {:+.4e})  v={:+.2e}  p={:+.4e} (exact {:+.4e})", v[0], ue, v[1], ph, pe);
    }
}
