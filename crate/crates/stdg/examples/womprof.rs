use stdg::cases::{run_case, CaseId, CaseSpec};
use stdg::timeloop::RunConfig;
fn main() {
    let spec = CaseSpec::new(CaseId::Womersley);
    let nt: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(46);
    let p: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let nsteps: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(6);
    let mesh = spec.load_mesh(format!("crates/stdg/fixtures/channel_{nt}.mesh")).unwrap();
    let mut run = RunConfig::new(p, p);
    run.t_end = 1.5;
    run.dt_fixed = Some(1.5 / nsteps as f64);
    run.krylov.restart = 100;
    stdg::operators::reset_matvec_counters();
    let t0 = std::time::Instant::now();
    let mut steps = 0;
    let r = run_case(&spec, &run, &mesh, |_, ss| {
        steps += 1;
        eprintln!("  step {steps} t={:.3} div={:.2e} p_iters={:?}", ss.t, ss.divergence_residual,
            ss.picard.iter().map(|p| p.pressure_iters).collect::<Vec<_>>());
        Ok(())
    }).unwrap();
    let (c5, c4) = stdg::operators::matvec_counters();
    eprintln!("N={nt} p={p} steps={steps} eps_p={:.4e} eps_v={:.4e} c5={c5} c4={c4} [{:?}]",
        r.eps_p.unwrap(), r.eps_v.unwrap(), t0.elapsed());
}
