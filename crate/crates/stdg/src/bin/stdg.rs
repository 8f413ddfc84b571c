//! Command-line driver: solve a case, run a convergence study or inspect a
//! mesh.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use stdg::cases::{convergence_csv, convergence_study, l2_error, run_case};
use stdg::config::parse_config;
use stdg::error::Error;
use stdg::mesh::load_mesh;
use stdg::operators::{interpolate_velocity, FieldState};
use stdg::vtk::write_vtk;

const USAGE: &str = "usage:
  stdg solve <config>
  stdg convergence <config> --levels <mesh1,mesh2,...>
  stdg mesh-info <mesh>

Environment: STDG_THREADS caps worker parallelism.";

fn main() -> ExitCode {
    init_threads();
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn init_threads() {
    #[cfg(feature = "parallel")]
    {
        if let Ok(n) = std::env::var("STDG_THREADS") {
            if let Ok(n) = n.parse::<usize>() {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build_global();
            }
        }
    }
}

fn run(args: &[String]) -> Result<(), Error> {
    match args.first().map(String::as_str) {
        Some("solve") => {
            let path = args.get(1).ok_or_else(|| Error::Usage(USAGE.into()))?;
            cmd_solve(path)
        }
        Some("convergence") => {
            let path = args.get(1).ok_or_else(|| Error::Usage(USAGE.into()))?;
            let mut levels: Option<String> = None;
            let mut k = 2;
            while k < args.len() {
                match args[k].as_str() {
                    "--levels" => {
                        levels = Some(
                            args.get(k + 1)
                                .ok_or_else(|| Error::Usage("--levels needs a value".into()))?
                                .clone(),
                        );
                        k += 2;
                    }
                    other => return Err(Error::Usage(format!("unknown flag {other:?}\n{USAGE}"))),
                }
            }
            let levels =
                levels.ok_or_else(|| Error::Usage("convergence requires --levels".into()))?;
            cmd_convergence(path, &levels)
        }
        Some("mesh-info") => {
            let path = args.get(1).ok_or_else(|| Error::Usage(USAGE.into()))?;
            cmd_mesh_info(path)
        }
        _ => Err(Error::Usage(USAGE.into())),
    }
}

fn cmd_solve(config_path: &str) -> Result<(), Error> {
    let cfg = parse_config(config_path)?;
    let mesh = cfg.case.load_mesh(&cfg.mesh)?;
    println!(
        "# case={} mesh={} N_i={} N_j={} p={} p_gamma={} nu={}",
        cfg.case.id.name(),
        cfg.mesh.display(),
        mesh.n_triangles(),
        mesh.n_edges(),
        cfg.run.p,
        cfg.run.p_gamma,
        cfg.case.nu
    );
    let ops = stdg::assembly::assemble(&mesh, cfg.run.p, cfg.run.p_gamma)?;

    let mut csv = match &cfg.step_csv {
        Some(path) => {
            let mut f = std::fs::File::create(path)?;
            writeln!(
                f,
                "step,t,dt,picard_dp_norms,pressure_iters,viscous_iters,divergence_residual"
            )?;
            Some(f)
        }
        None => None,
    };

    // Initial snapshot when output is requested.
    if let Some(prefix) = &cfg.output_prefix {
        let mut state0 = FieldState::zeros(&ops, &mesh, 0.0, 0.0);
        let trace0 = interpolate_velocity(&ops, &mesh, |x| cfg.case.initial_velocity(x));
        state0.set_constant_in_time(&trace0);
        write_vtk(&state0, &mesh, &ops, 0.0, format!("{prefix}_000000.vtk"))?;
    }
    if cfg.run.t_end == 0.0 {
        println!("# t_end = 0: initial snapshot only");
        return Ok(());
    }

    let mut step = 0usize;
    let result = run_case(&cfg.case, &cfg.run, &mesh, |state, ss| {
        step += 1;
        let dp: Vec<String> = ss.picard.iter().map(|p| format!("{:.3e}", p.dp_norm)).collect();
        let pits: Vec<String> = ss.picard.iter().map(|p| p.pressure_iters.to_string()).collect();
        let vits: Vec<String> = ss
            .picard
            .iter()
            .map(|p| format!("{}+{}", p.viscous_iters[0], p.viscous_iters[1]))
            .collect();
        println!(
            "step {:6}  t={:.6e}  dt={:.3e}  |dp|=[{}]  p_iters=[{}]  v_iters=[{}]  div={:.3e}",
            step,
            ss.t,
            ss.dt,
            dp.join(" "),
            pits.join(" "),
            vits.join(" "),
            ss.divergence_residual
        );
        if let Some(f) = csv.as_mut() {
            writeln!(
                f,
                "{},{:.12e},{:.12e},{},{},{},{:.3e}",
                step,
                ss.t,
                ss.dt,
                dp.join(" "),
                pits.join(" "),
                vits.join(" "),
                ss.divergence_residual
            )?;
        }
        if let Some(prefix) = &cfg.output_prefix {
            if cfg.output_every > 0 && step % cfg.output_every == 0 {
                write_vtk(state, &mesh, &ops, ss.t, format!("{prefix}_{step:06}.vtk"))?;
            }
        }
        Ok(())
    })?;

    if let Some(prefix) = &cfg.output_prefix {
        write_vtk(&result.state, &mesh, &ops, cfg.run.t_end, format!("{prefix}_final.vtk"))?;
    }
    if cfg.case.has_exact() {
        let (ep, ev) = l2_error(&mesh, &ops, &result.state, &cfg.case, cfg.run.t_end)?;
        println!(
            "L2 errors at t={}: eps_p = {ep:.6e}, eps_v = {ev:.6e}",
            cfg.run.t_end
        );
    }
    Ok(())
}

fn cmd_convergence(config_path: &str, levels: &str) -> Result<(), Error> {
    let cfg = parse_config(config_path)?;
    let base = PathBuf::from(config_path);
    let dir = base.parent().map(PathBuf::from).unwrap_or_default();
    let paths: Vec<PathBuf> = levels
        .split(',')
        .map(|s| {
            let p = PathBuf::from(s.trim());
            if p.is_relative() {
                dir.join(p)
            } else {
                p
            }
        })
        .collect();
    if paths.len() < 2 {
        return Err(Error::Usage(
            "convergence needs at least 2 refinement levels".into(),
        ));
    }
    let rows = convergence_study(&cfg.case, &cfg.run, &paths)?;
    let table = convergence_csv(&rows);
    print!("{table}");
    if let Some(prefix) = &cfg.output_prefix {
        let path = format!("{prefix}_convergence.csv");
        let tmp = format!("{path}.tmp");
        std::fs::write(&tmp, &table)?;
        std::fs::rename(&tmp, &path)?;
        println!("# written to {path}");
    }
    Ok(())
}

fn cmd_mesh_info(path: &str) -> Result<(), Error> {
    let mesh = load_mesh(path)?;
    let n_bnd = mesh.edges.iter().filter(|e| e.is_boundary()).count();
    let mut tags: Vec<u32> = mesh
        .edges
        .iter()
        .filter(|e| e.is_boundary())
        .map(|e| e.tag)
        .collect();
    tags.sort_unstable();
    tags.dedup();
    let h_max = mesh
        .triangles
        .iter()
        .map(|t| t.incircle_diameter)
        .fold(f64::MIN, f64::max);
    let quality: Vec<f64> = mesh
        .triangles
        .iter()
        .map(|t| {
            let v: Vec<_> = t.nodes.iter().map(|&n| mesh.nodes[n]).collect();
            let lmax = [
                (v[1] - v[0]).norm(),
                (v[2] - v[1]).norm(),
                (v[0] - v[2]).norm(),
            ]
            .into_iter()
            .fold(f64::MIN, f64::max);
            t.incircle_diameter / lmax
        })
        .collect();
    let qmin = quality.iter().cloned().fold(f64::MAX, f64::min);
    let qavg = quality.iter().sum::<f64>() / quality.len() as f64;
    println!("N_i = {}", mesh.n_triangles());
    println!("N_j = {}", mesh.n_edges());
    println!("boundary edges = {n_bnd} (tags: {tags:?})");
    println!("domain area = {:.12e}", mesh.area);
    println!("h_min (incircle) = {:.6e}", mesh.h_min);
    println!("h_max (incircle) = {h_max:.6e}");
    println!("quality d_in/l_max: min = {qmin:.3}, avg = {qavg:.3}");
    let curved = mesh.edges.iter().filter(|e| e.curved_mid.is_some()).count();
    if curved > 0 {
        println!("curved boundary edges = {curved}");
    }
    Ok(())
}
