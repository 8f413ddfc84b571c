//! Flat key=value run configuration.
//!
//! Unknown keys are hard errors so typos surface immediately. Boundary
//! entries use `bc.<tag> = <kind>` with kinds `noslip`, `velocity`,
//! `pressure`, `dirichlet`, `passage` and `periodic:<other-tag>`.

use crate::cases::{BcEntry, CaseId, CaseSpec};
use crate::error::Error;
use crate::linsolve::KrylovConfig;
use crate::operators::BcKind;
use crate::timeloop::{InitGuess, RunConfig};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct ConfigFile {
    pub case: CaseSpec,
    pub run: RunConfig,
    pub mesh: PathBuf,
    pub output_prefix: Option<String>,
    pub output_every: usize,
    pub step_csv: Option<PathBuf>,
}

const KNOWN_KEYS: &[&str] = &[
    "case",
    "mesh",
    "p",
    "p_gamma",
    "nu",
    "cfl",
    "dt_fixed",
    "t_end",
    "n_picard",
    "gmres_tol",
    "gmres_restart",
    "init_guess",
    "output_prefix",
    "output_every",
    "step_csv",
];

pub fn parse_config(path: impl AsRef<Path>) -> Result<ConfigFile, Error> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_config_str(&text)?;
    // Mesh paths are relative to the config file.
    if cfg.mesh.is_relative() {
        if let Some(dir) = path.parent() {
            cfg.mesh = dir.join(&cfg.mesh);
        }
    }
    Ok(cfg)
}

pub fn parse_config_str(text: &str) -> Result<ConfigFile, Error> {
    let mut map: HashMap<String, String> = HashMap::new();
    let mut bc_lines: Vec<(u32, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected key = value", lineno + 1)))?;
        let key = key.trim();
        let value = value.trim().to_string();
        if let Some(tag) = key.strip_prefix("bc.") {
            let tag: u32 = tag
                .parse()
                .map_err(|_| Error::config(format!("line {}: bad boundary tag {key:?}", lineno + 1)))?;
            bc_lines.push((tag, value));
            continue;
        }
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::config(format!("unknown key {key:?}")));
        }
        if map.insert(key.to_string(), value).is_some() {
            return Err(Error::config(format!("duplicate key {key:?}")));
        }
    }

    let required = |k: &str| {
        map.get(k)
            .cloned()
            .ok_or_else(|| Error::config(format!("missing required key {k:?}")))
    };
    let num = |k: &str, v: &str| -> Result<f64, Error> {
        v.parse()
            .map_err(|_| Error::config(format!("key {k:?}: expected a number, got {v:?}")))
    };
    let int = |k: &str, v: &str| -> Result<usize, Error> {
        v.parse()
            .map_err(|_| Error::config(format!("key {k:?}: expected an integer, got {v:?}")))
    };

    let case_id = CaseId::parse(&required("case")?)?;
    let mut case = CaseSpec::new(case_id);
    let mesh = PathBuf::from(required("mesh")?);
    let p = int("p", &required("p")?)?;
    let p_gamma = int("p_gamma", &required("p_gamma")?)?;
    if p > 4 || p_gamma > 4 {
        return Err(Error::UnsupportedDegree(p.max(p_gamma) as isize));
    }
    let mut run = RunConfig::new(p, p_gamma);
    run.t_end = num("t_end", &required("t_end")?)?;
    if run.t_end < 0.0 {
        return Err(Error::config("t_end must be non-negative"));
    }
    if let Some(v) = map.get("nu") {
        case.nu = num("nu", v)?;
        if case.nu < 0.0 {
            return Err(Error::config("nu must be non-negative"));
        }
    }
    if let Some(v) = map.get("cfl") {
        run.cfl = num("cfl", v)?;
        if run.cfl <= 0.0 || run.cfl >= 0.5 {
            return Err(Error::config(format!(
                "cfl must lie in (0, 0.5), got {}",
                run.cfl
            )));
        }
    }
    if let Some(v) = map.get("dt_fixed") {
        let dt = num("dt_fixed", v)?;
        if dt <= 0.0 {
            return Err(Error::config("dt_fixed must be positive"));
        }
        run.dt_fixed = Some(dt);
    }
    run.n_picard = match map.get("n_picard") {
        Some(v) => {
            let n = int("n_picard", v)?;
            if n == 0 {
                return Err(Error::config("n_picard must be at least 1"));
            }
            n
        }
        None => p + 1,
    };
    if let Some(v) = map.get("gmres_tol") {
        run.krylov.tol = num("gmres_tol", v)?;
        if run.krylov.tol <= 0.0 {
            return Err(Error::config("gmres_tol must be positive"));
        }
    }
    if let Some(v) = map.get("gmres_restart") {
        run.krylov.restart = int("gmres_restart", v)?;
        if run.krylov.restart == 0 {
            return Err(Error::config("gmres_restart must be at least 1"));
        }
    }
    run.init_guess = match map.get("init_guess").map(String::as_str) {
        None | Some("zero") => InitGuess::Zero,
        Some("extrapolate") => InitGuess::Extrapolate,
        Some(v) => {
            return Err(Error::config(format!(
                "init_guess must be zero or extrapolate, got {v:?}"
            )))
        }
    };
    run.krylov = KrylovConfig {
        zero_guess: true,
        ..run.krylov
    };

    for (tag, value) in bc_lines {
        let entry = parse_bc_entry(&value)?;
        case.bc_map.insert(tag, entry);
    }

    let output_prefix = map.get("output_prefix").cloned();
    let output_every = match map.get("output_every") {
        Some(v) => int("output_every", v)?,
        None => 0,
    };
    let step_csv = map.get("step_csv").map(PathBuf::from);

    Ok(ConfigFile {
        case,
        run,
        mesh,
        output_prefix,
        output_every,
        step_csv,
    })
}

fn parse_bc_entry(value: &str) -> Result<BcEntry, Error> {
    if let Some(other) = value.strip_prefix("periodic:") {
        let other: u32 = other
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad periodic partner tag in {value:?}")))?;
        return Ok(BcEntry::Periodic(other));
    }
    Ok(BcEntry::Kind(match value {
        "noslip" => BcKind::NoSlip,
        "velocity" => BcKind::Velocity,
        "pressure" => BcKind::Pressure,
        "dirichlet" => BcKind::Dirichlet,
        "passage" => BcKind::Passage,
        _ => {
            return Err(Error::config(format!(
                "unknown boundary kind {value:?} (noslip|velocity|pressure|dirichlet|passage|periodic:<tag>)"
            )))
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_taylor_green_defaults() {
        let cfg = parse_config_str(
            "case = taylor_green\nmesh = tg.mesh\np = 2\np_gamma = 2\nt_end = 0.1\n",
        )
        .unwrap();
        assert_eq!(cfg.run.n_picard, 3); // p + 1
        assert_eq!(cfg.case.nu, 0.1);
        assert!(cfg.case.convection);
        assert_eq!(cfg.run.krylov.tol, 1e-10);
    }

    #[test]
    fn cfl_range_enforced() {
        let err = parse_config_str(
            "case = cavity\nmesh = m\np = 1\np_gamma = 1\nt_end = 1\ncfl = 0.6\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_config_str(
            "case = cavity\nmesh = m\np = 1\np_gamma = 1\nt_end = 1\nnuu = 0.1\n",
        )
        .unwrap_err();
        assert!(format!("{err}").contains("nuu"));
    }

    #[test]
    fn bc_overrides_and_periodic() {
        let cfg = parse_config_str(
            "case = cavity\nmesh = m\np = 1\np_gamma = 1\nt_end = 1\nbc.2 = velocity\nbc.5 = periodic:6\n",
        )
        .unwrap();
        assert_eq!(cfg.case.bc_map[&2], BcEntry::Kind(BcKind::Velocity));
        assert_eq!(cfg.case.bc_map[&5], BcEntry::Periodic(6));
    }

    #[test]
    fn missing_required_key() {
        let err = parse_config_str("case = cavity\nmesh = m\np = 1\np_gamma = 1\n").unwrap_err();
        assert!(format!("{err}").contains("t_end"));
    }
}
