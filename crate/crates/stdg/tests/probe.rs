// scratch convergence probe (temporary)
use stdg::cases::{l2_error, run_case, CaseId, CaseSpec};
use stdg::mesh::{build_mesh, RawMesh, Vec2};
use stdg::timeloop::RunConfig;

fn wall_square(n: usize, lo: f64, hi: f64) -> stdg::mesh::StaggeredMesh {
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

#[test]
#[ignore]
fn manufactured_convergence_probe() {
    let mut spec = CaseSpec::new(CaseId::Manufactured);
    if std::env::var("PROBE_NU0").is_ok() { spec.nu = 0.0; }
    if std::env::var("PROBE_NOCONV").is_ok() { spec.convection = false; }
    let p = 1;
    let mut prev: Option<(usize, f64, f64)> = None;
    for n in [3usize, 6, 12] {
        let mesh = wall_square(n, -0.5, 0.5);
        let mut cfg = RunConfig::new(p, p);
        cfg.t_end = 0.1;
        cfg.cfl = 0.4;
        if let Ok(np) = std::env::var("PROBE_NPIC") { cfg.n_picard = np.parse().unwrap(); }
        if !spec.convection { cfg.dt_fixed = Some(0.1 / (3.0 * n as f64 / 3.0)); }
        if let Ok(d) = std::env::var("PROBE_DT") { cfg.dt_fixed = Some(d.parse().unwrap()); }
        let t0 = std::time::Instant::now();
        stdg::operators::reset_matvec_counters();
        let r = run_case(&spec, &cfg, &mesh, |_, _| Ok(())).unwrap();
        let (c5, c4) = stdg::operators::matvec_counters();
        eprintln!("  matvecs: visc={c5} fourpoint={c4}");
        let (ep, ev) = (r.eps_p.unwrap(), r.eps_v.unwrap());
        let div = r.steps.iter().map(|s| s.divergence_residual).fold(0.0f64, f64::max);
        let (sp, sv) = match prev {
            Some((pn, pep, pev)) => (
                stdg::cases::convergence_rate(pep, ep, pn * pn * 2, n * n * 2),
                stdg::cases::convergence_rate(pev, ev, pn * pn * 2, n * n * 2),
            ),
            None => (0.0, 0.0),
        };
        eprintln!(
            "N={:4} eps_p={ep:.4e} eps_v={ev:.4e} sigma_p={sp:.2} sigma_v={sv:.2} div={div:.2e} steps={} [{:?}]",
            2 * n * n, r.steps.len(), t0.elapsed()
        );
        prev = Some((n, ep, ev));
    }
}

#[test]
#[ignore]
fn taylor_green_convergence_probe() {
    let pi = std::f64::consts::PI;
    let spec = CaseSpec::new(CaseId::TaylorGreen);
    let p = 1;
    let mut prev: Option<(usize, f64, f64)> = None;
    for n in [3usize, 6, 12] {
        // periodic mesh on [0, 2pi]^2 built from the raw grid + periodic tags
        let mut raw = RawMesh::default();
        let h = 2.0 * pi / n as f64;
        for j in 0..=n {
            for i in 0..=n {
                raw.nodes.push(Vec2::new(i as f64 * h, j as f64 * h));
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
        let mesh = build_mesh(raw, &[(1, 2), (3, 4)]).unwrap();
        let mut cfg = RunConfig::new(p, p);
        cfg.t_end = 0.1;
        cfg.cfl = 0.4;
        let t0 = std::time::Instant::now();
        let r = run_case(&spec, &cfg, &mesh, |_, _| Ok(())).unwrap();
        let (ep, ev) = (r.eps_p.unwrap(), r.eps_v.unwrap());
        let div = r.steps.iter().map(|s| s.divergence_residual).fold(0.0f64, f64::max);
        let pit: usize = r.steps.iter().flat_map(|s| s.picard.iter().map(|p| p.pressure_iters)).sum();
        let vit: usize = r.steps.iter().flat_map(|s| s.picard.iter().map(|p| p.viscous_iters[0] + p.viscous_iters[1])).sum();
        let (sp, sv) = match prev {
            Some((pn, pep, pev)) => (
                stdg::cases::convergence_rate(pep, ep, pn * pn * 2, n * n * 2),
                stdg::cases::convergence_rate(pev, ev, pn * pn * 2, n * n * 2),
            ),
            None => (0.0, 0.0),
        };
        eprintln!(
            "N={:4} eps_p={ep:.4e} eps_v={ev:.4e} sigma_p={sp:.2} sigma_v={sv:.2} div={div:.2e} steps={} p_iters={pit} v_iters={vit} [{:?}]",
            2 * n * n, r.steps.len(), t0.elapsed()
        );
        prev = Some((n, ep, ev));
    }
}

#[test]
#[ignore]
fn picard_contraction_probe() {
    let mut spec = CaseSpec::new(CaseId::Manufactured);
    if std::env::var("PROBE_NOCONV").is_ok() { spec.convection = false; }
    if let Ok(nu) = std::env::var("PROBE_NU") { spec.nu = nu.parse().unwrap(); }
    let n: usize = std::env::var("PROBE_N").map(|s| s.parse().unwrap()).unwrap_or(12);
    let mesh = wall_square(n, -0.5, 0.5);
    let mut cfg = RunConfig::new(1, 1);
    cfg.t_end = 0.02;
    cfg.n_picard = 8;
    if let Ok(d) = std::env::var("PROBE_DT") { cfg.dt_fixed = Some(d.parse().unwrap()); }
    let mut step = 0;
    run_case(&spec, &cfg, &mesh, |_, ss| {
        step += 1;
        if step <= 4 {
            let dps: Vec<String> = ss.picard.iter().map(|p| format!("{:.2e}", p.dp_norm)).collect();
            eprintln!("step {step} dt={:.3e} dp_norms: {}", ss.dt, dps.join(" "));
        }
        Ok(())
    })
    .unwrap();
}

fn channel_mesh(m: usize, n: usize) -> stdg::mesh::StaggeredMesh {
    // [-0.5, 0.5] x [-0.2, 0.2], tags 1 bottom, 2 top, 3 left, 4 right
    let mut raw = RawMesh::default();
    let (lx, ly) = (1.0, 0.4);
    for j in 0..=n {
        for i in 0..=m {
            raw.nodes.push(Vec2::new(-0.5 + i as f64 * lx / m as f64, -0.2 + j as f64 * ly / n as f64));
        }
    }
    let id = |i: usize, j: usize| j * (m + 1) + i;
    for j in 0..n {
        for i in 0..m {
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
    for i in 0..m {
        raw.boundary.push((id(i, 0), id(i + 1, 0), 1));
        raw.boundary.push((id(i, n), id(i + 1, n), 2));
    }
    for j in 0..n {
        raw.boundary.push((id(0, j), id(0, j + 1), 3));
        raw.boundary.push((id(m, j), id(m, j + 1), 4));
    }
    build_mesh(raw, &[]).unwrap()
}

#[test]
#[ignore]
fn womersley_convergence_probe() {
    let spec = CaseSpec::new(CaseId::Womersley);
    let p: usize = std::env::var("PROBE_P").map(|s| s.parse().unwrap()).unwrap_or(1);
    let mut prev: Option<(usize, f64, f64)> = None;
    for (level, nt) in [46usize, 184, 736].iter().enumerate() {
        let mesh = spec
            .load_mesh(format!("{}/fixtures/channel_{nt}.mesh", env!("CARGO_MANIFEST_DIR")))
            .unwrap();
        let _ = channel_mesh;
        let mut cfg = RunConfig::new(p, p);
        cfg.t_end = 1.5;
        cfg.dt_fixed = Some(1.5 / (6 << level) as f64);
        let t0 = std::time::Instant::now();
        stdg::operators::reset_matvec_counters();
        let r = run_case(&spec, &cfg, &mesh, |_, _| Ok(())).unwrap();
        let (c5, c4) = stdg::operators::matvec_counters();
        let (ep, ev) = (r.eps_p.unwrap(), r.eps_v.unwrap());
        let div = r.steps.iter().map(|s| s.divergence_residual).fold(0.0f64, f64::max);
        let nt = mesh.n_triangles();
        let (sp, sv) = match prev {
            Some((pn, pep, pev)) => (
                stdg::cases::convergence_rate(pep, ep, pn, nt),
                stdg::cases::convergence_rate(pev, ev, pn, nt),
            ),
            None => (0.0, 0.0),
        };
        eprintln!(
            "N={nt:5} eps_p={ep:.4e} eps_v={ev:.4e} sigma_p={sp:.2} sigma_v={sv:.2} div={div:.2e} steps={} c5={c5} c4={c4} [{:?}]",
            r.steps.len(), t0.elapsed()
        );
        prev = Some((nt, ep, ev));
    }
}
