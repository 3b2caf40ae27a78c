//! Batch driver: configuration parsing, run orchestration, snapshot and
//! statistics output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::cases::CaseSetup;
use crate::dg::{DGBasis, DgOperator};
use crate::linalg::max_abs;
use crate::mesh::{build_hierarchy, GridHierarchy, SubgridMap};
use crate::mgprecond::{MGConfig, MgPreconditioner};
use crate::physics::EulerGravity;
use crate::state::NVAR;
use crate::timeint::{
    explicit_dt, sdirk2_step, ssprk34_step, IdentityPreconditioner, NewtonParams, OdeRhs,
    Sdirk2Tableau, StagePreconditioner, StageStats,
};
use crate::transfer::{TransferKind, TransferMatrices};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Implicit,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFormat {
    Text,
    Json,
    Quiet,
}

/// Validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: CaseSetup,
    pub k: usize,
    pub level: usize,
    pub base_nx: usize,
    pub base_nz: usize,
    /// None selects the stable explicit step for the explicit integrator
    /// and the case default for the implicit one.
    pub dt: Option<f64>,
    pub t_final: f64,
    pub integrator: Integrator,
    /// None runs GMRES without preconditioning.
    pub mg: Option<MGConfig>,
    pub newton: NewtonParams,
    pub cfl: f64,
    pub outdir: PathBuf,
    /// None writes only the initial and final snapshots.
    pub output_interval: Option<f64>,
    pub log_format: LogFormat,
    pub vtk: bool,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub case: Option<String>,
    pub dt: Option<String>,
    pub mg: Option<String>,
    pub level: Option<String>,
    pub integrator: Option<String>,
    pub outdir: Option<String>,
}

const KEYS: [&str; 20] = [
    "case",
    "k",
    "level",
    "base_nx",
    "base_nz",
    "dx",
    "dt",
    "t_final",
    "integrator",
    "mg",
    "transfer",
    "pseudo_cfl",
    "smoother_stages",
    "newton_tol",
    "gmres_restart",
    "cfl",
    "outdir",
    "output_interval",
    "log_format",
    "vtk",
];

/// A raw value with its source: a config line, or line 0 for a flag.
struct Entry {
    value: String,
    line: usize,
}

struct Entries(BTreeMap<&'static str, Entry>);

impl Entries {
    fn err(&self, key: &str, msg: String) -> Error {
        match self.0.get(key) {
            Some(e) if e.line > 0 => Error::Config { line: e.line, msg },
            _ => Error::Flag {
                flag: key.to_string(),
                msg,
            },
        }
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|e| e.value.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(key, format!("invalid value {v:?} for {key}"))),
        }
    }

    fn positive(&self, key: &str) -> Result<Option<f64>> {
        let v: Option<f64> = self.parse(key)?;
        match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                Err(self.err(key, format!("{key} must be positive, got {x}")))
            }
            _ => Ok(v),
        }
    }
}

/// Parse `key = value` lines (`#` starts a comment) and apply overrides.
pub fn parse_config(text: &str, overrides: &Overrides) -> Result<RunConfig> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            msg: format!("expected `key = value`, got {content:?}"),
        })?;
        let key = key.trim();
        let key = *KEYS.iter().find(|k| **k == key).ok_or_else(|| Error::Config {
            line,
            msg: format!("unknown key {key:?}"),
        })?;
        let entry = Entry {
            value: value.trim().to_string(),
            line,
        };
        if let Some(prev) = map.insert(key, entry) {
            return Err(Error::Config {
                line,
                msg: format!("duplicate key {key:?}, first set on line {}", prev.line),
            });
        }
    }
    let flags = [
        ("case", &overrides.case),
        ("dt", &overrides.dt),
        ("mg", &overrides.mg),
        ("level", &overrides.level),
        ("integrator", &overrides.integrator),
        ("outdir", &overrides.outdir),
    ];
    for (key, v) in flags {
        if let Some(v) = v {
            map.insert(
                key,
                Entry {
                    value: v.clone(),
                    line: 0,
                },
            );
        }
    }
    build_config(&Entries(map))
}

fn build_config(e: &Entries) -> Result<RunConfig> {
    let name = e
        .str("case")
        .ok_or_else(|| Error::Flag {
            flag: "case".into(),
            msg: "no case given in the config file or on the command line".into(),
        })?;
    let case = CaseSetup::by_name(name).map_err(|err| e.err("case", err.to_string()))?;

    let k: usize = e.parse("k")?.unwrap_or(3);
    if k > 7 || !(k + 1).is_power_of_two() {
        return Err(e.err("k", format!("k = {k}: k+1 must be a power of two and k ≤ 7")));
    }
    let level: usize = e.parse("level")?.unwrap_or(case.dg_level);
    if level > 8 {
        return Err(e.err("level", format!("level {level} is too fine (at most 8)")));
    }
    let dx = e.positive("dx")?;
    let cells = |key: &str, extent: f64, default: usize| -> Result<usize> {
        if let Some(n) = e.parse::<usize>(key)? {
            if n == 0 {
                return Err(e.err(key, format!("{key} must be at least 1")));
            }
            return Ok(n);
        }
        Ok(match dx {
            Some(dx) => {
                let n = (extent / (dx * (1usize << level) as f64)).round() as usize;
                if n == 0 {
                    return Err(e.err("dx", format!("dx = {dx} is coarser than the domain at level {level}")));
                }
                n
            }
            None => default,
        })
    };
    let base_nx = cells("base_nx", case.domain.width(), case.base_nx)?;
    let base_nz = cells("base_nz", case.domain.height(), case.base_nz)?;

    let integrator = match e.str("integrator").unwrap_or("implicit") {
        "implicit" => Integrator::Implicit,
        "explicit" => Integrator::Explicit,
        other => {
            return Err(e.err(
                "integrator",
                format!("integrator must be implicit or explicit, got {other:?}"),
            ))
        }
    };
    let mut mg = match e.str("mg").unwrap_or("mg001111V") {
        "none" => None,
        key => Some(
            key.parse::<MGConfig>()
                .map_err(|err| e.err("mg", err.to_string()))?,
        ),
    };
    if let Some(cfg) = mg.as_mut() {
        cfg.transfer = match e.str("transfer").unwrap_or("interp") {
            "interp" => TransferKind::Interpolation,
            "massfix" => TransferKind::MassFix,
            other => {
                return Err(e.err(
                    "transfer",
                    format!("transfer must be interp or massfix, got {other:?}"),
                ))
            }
        };
        if let Some(c) = e.positive("pseudo_cfl")? {
            cfg.pseudo_cfl = c;
        }
        if let Some(s) = e.parse::<usize>("smoother_stages")? {
            if s == 0 {
                return Err(e.err("smoother_stages", "smoother_stages must be at least 1".into()));
            }
            cfg.smoother_stages = s;
        }
    }

    let mut newton = NewtonParams::default();
    if let Some(t) = e.positive("newton_tol")? {
        if t >= 1.0 {
            return Err(e.err("newton_tol", format!("newton_tol must be below 1, got {t}")));
        }
        newton.tol = t;
    }
    if let Some(r) = e.parse::<usize>("gmres_restart")? {
        if r == 0 {
            return Err(e.err("gmres_restart", "gmres_restart must be at least 1".into()));
        }
        newton.gmres.restart = r;
    }
    let log_format = match e.str("log_format").unwrap_or("text") {
        "text" => LogFormat::Text,
        "json" => LogFormat::Json,
        "quiet" => LogFormat::Quiet,
        other => {
            return Err(e.err(
                "log_format",
                format!("log_format must be text, json or quiet, got {other:?}"),
            ))
        }
    };
    let dt = e.positive("dt")?;
    Ok(RunConfig {
        case,
        k,
        level,
        base_nx,
        base_nz,
        dt: dt.or(match integrator {
            Integrator::Implicit => Some(case.dt),
            Integrator::Explicit => None,
        }),
        t_final: e.positive("t_final")?.unwrap_or(case.t_final),
        integrator,
        mg,
        newton,
        cfl: e.positive("cfl")?.unwrap_or(1.0),
        outdir: PathBuf::from(e.str("outdir").unwrap_or("output")),
        output_interval: e.positive("output_interval")?,
        log_format,
        vtk: e.parse::<bool>("vtk")?.unwrap_or(false),
    })
}

/// A case discretized on the DG mesh with its multigrid hierarchy.
pub struct Discretization {
    pub case: CaseSetup,
    pub hierarchy: GridHierarchy,
    pub map: SubgridMap,
    pub dg: DgOperator<EulerGravity>,
}

impl Discretization {
    pub fn new(case: &CaseSetup, k: usize, base_nx: usize, base_nz: usize, level: usize) -> Result<Self> {
        let (hierarchy, map) = build_hierarchy(case.domain, base_nx, base_nz, level, k)?;
        let c = *case;
        let dg = DgOperator::new(
            case.model(),
            DGBasis::new(k),
            *hierarchy.level(level),
            level,
            case.bc,
            move |x, z| c.background(x, z),
        )?;
        Ok(Self {
            case: *case,
            hierarchy,
            map,
            dg,
        })
    }

    pub fn initial_state(&self) -> Result<Vec<f64>> {
        Ok(crate::cases::build_initial_state(&self.case, &self.dg.grid, &self.dg.basis)?.data)
    }

    pub fn preconditioner(&self, cfg: MGConfig) -> Result<MgPreconditioner<'_, EulerGravity>> {
        let c = self.case;
        MgPreconditioner::new(&self.dg, &self.hierarchy, self.map.clone(), cfg, move |x, z| {
            c.background(x, z)
        })
    }

    /// Largest stable explicit step for state `u` at the given CFL number.
    pub fn stable_dt(&self, u: &[f64], cfl: f64) -> Result<f64> {
        let g = &self.dg.grid;
        Ok(explicit_dt(cfl, self.dg.basis.k, [g.dx, g.dz], self.dg.max_wave_speeds(u)?))
    }

    /// Perturbation at the finite-volume subcell centers, one row
    /// `[x, z, ρ′, (ρu)′, (ρw)′, θ′]` per subcell.
    pub fn subcell_rows(&self, u: &[f64]) -> Result<Vec<[f64; 6]>> {
        let transfer = TransferMatrices::new(&self.dg.basis)?;
        let fine = self.hierarchy.level(self.map.fv_level);
        let mut fv = vec![0.0; fine.n_cells() * NVAR];
        transfer.dg_to_fv_slice(&self.map, TransferKind::Interpolation, u, &mut fv);
        let mut rows = Vec::with_capacity(fine.n_cells());
        for c in 0..fine.n_cells() {
            let (i, j) = fine.unflat(c);
            let (x, z) = fine.cell_center(i, j);
            let p = &fv[c * NVAR..(c + 1) * NVAR];
            let bg = self.case.background(x, z);
            let rho = bg.rho + p[0];
            let theta = (bg.rho_theta + p[3]) / rho - bg.rho_theta / bg.rho;
            rows.push([x, z, p[0], p[1], p[2], theta]);
        }
        Ok(rows)
    }
}

/// One statistics row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsRow {
    pub time: f64,
    pub stage: usize,
    pub stats: StageStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub final_time: f64,
    pub dt: f64,
    pub rows: Vec<StatsRow>,
    pub snapshots: Vec<PathBuf>,
    pub final_state: Vec<f64>,
}

impl RunSummary {
    pub fn total_gmres(&self) -> usize {
        self.rows.iter().map(|r| r.stats.gmres_iters).sum()
    }
}

/// Advance a discretization from `u0` over `n_steps` steps of size `dt`,
/// calling `observe` after each step with the step index, time and state.
pub fn integrate(
    disc: &Discretization,
    integrator: Integrator,
    mg: Option<MGConfig>,
    newton: &NewtonParams,
    u0: Vec<f64>,
    dt: f64,
    n_steps: usize,
    mut observe: impl FnMut(usize, f64, &[f64], &[StatsRow]) -> Result<()>,
) -> Result<(Vec<f64>, Vec<StatsRow>)> {
    let mut precond: Box<dyn StagePreconditioner + '_> = match mg {
        Some(cfg) => Box::new(disc.preconditioner(cfg)?),
        None => Box::new(IdentityPreconditioner),
    };
    let mut u = u0;
    let mut rows = Vec::new();
    for step in 0..n_steps {
        let t0 = step as f64 * dt;
        let new_rows = match integrator {
            Integrator::Implicit => {
                let (next, st) = sdirk2_step(&disc.dg, precond.as_mut(), &u, dt, newton)
                    .map_err(|e| step_error(e, step, t0))?;
                u = next;
                vec![
                    StatsRow {
                        time: t0 + Sdirk2Tableau::ALPHA * dt,
                        stage: 1,
                        stats: st[0],
                    },
                    StatsRow {
                        time: t0 + dt,
                        stage: 2,
                        stats: st[1],
                    },
                ]
            }
            Integrator::Explicit => {
                let d0 = disc.dg.evaluations();
                u = ssprk34_step(&disc.dg, &u, dt).map_err(|e| step_error(e, step, t0))?;
                vec![StatsRow {
                    time: t0 + dt,
                    stage: 0,
                    stats: StageStats {
                        dg_ops: disc.dg.evaluations() - d0,
                        ..Default::default()
                    },
                }]
            }
        };
        rows.extend_from_slice(&new_rows);
        observe(step + 1, t0 + dt, &u, &new_rows)?;
    }
    Ok((u, rows))
}

fn step_error(e: Error, step: usize, t: f64) -> Error {
    Error::Solver(format!("step {} from t = {t}: {e}", step + 1))
}

pub const SNAPSHOT_HEADER: &str = "x,z,rho_p,rhou_p,rhow_p,theta_p";
pub const STATS_HEADER: &str = "time,stage,newton_iters,gmres_iters,dg_ops,fv_ops,residual";

pub fn write_snapshot(rows: &[[f64; 6]], path: &Path) -> Result<()> {
    let mut s = String::with_capacity(rows.len() * 100);
    s.push_str(SNAPSHOT_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{:e},{:e},{:e},{:e}", r[0], r[1], r[2], r[3], r[4], r[5]);
    }
    fs::write(path, s)?;
    Ok(())
}

/// Legacy VTK cell data on the subcell grid.
pub fn write_vtk(rows: &[[f64; 6]], nx: usize, nz: usize, dx: f64, dz: f64, origin: [f64; 2], path: &Path) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\nperturbation fields\nASCII\nDATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} 1", nx + 1, nz + 1);
    let _ = writeln!(s, "ORIGIN {} {} 0\nSPACING {} {} 1", origin[0], origin[1], dx, dz);
    let _ = writeln!(s, "CELL_DATA {}", nx * nz);
    for (col, name) in ["rho_p", "rhou_p", "rhow_p", "theta_p"].iter().enumerate() {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for r in rows {
            let _ = writeln!(s, "{:e}", r[col + 2]);
        }
    }
    fs::write(path, s)?;
    Ok(())
}

fn stats_line(r: &StatsRow) -> String {
    format!(
        "{},{},{},{},{},{},{:e}",
        r.time, r.stage, r.stats.newton_iters, r.stats.gmres_iters, r.stats.dg_ops, r.stats.fv_ops, r.stats.residual
    )
}

pub fn write_stats(rows: &[StatsRow], path: &Path) -> Result<()> {
    let mut s = String::from(STATS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&stats_line(r));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Execute a configured run, writing snapshots and statistics to the
/// output directory. The statistics file is appended per step so partial
/// output survives a solver failure.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let disc = Discretization::new(&cfg.case, cfg.k, cfg.base_nx, cfg.base_nz, cfg.level)?;
    fs::create_dir_all(&cfg.outdir)?;
    let u0 = disc.initial_state()?;
    let dt = match cfg.dt {
        Some(dt) => dt,
        None => disc.stable_dt(&u0, cfg.cfl)?,
    };
    let n_steps = (cfg.t_final / dt).ceil().max(1.0) as usize;
    let dt = cfg.t_final / n_steps as f64;

    let fine = *disc.hierarchy.level(disc.map.fv_level);
    let mut snapshots = Vec::new();
    let mut snap = |idx: usize, u: &[f64]| -> Result<()> {
        let rows = disc.subcell_rows(u)?;
        let path = cfg.outdir.join(format!("snapshot_{idx:05}.csv"));
        write_snapshot(&rows, &path)?;
        if cfg.vtk {
            let vtk = cfg.outdir.join(format!("snapshot_{idx:05}.vtk"));
            write_vtk(&rows, fine.nx, fine.nz, fine.dx, fine.dz, [fine.x_min, fine.z_min], &vtk)?;
        }
        snapshots.push(path);
        Ok(())
    };
    snap(0, &u0)?;

    let stats_path = cfg.outdir.join("stats.csv");
    let mut stats_file = fs::File::create(&stats_path)?;
    writeln!(stats_file, "{STATS_HEADER}")?;
    let mut next_output = cfg.output_interval;
    let mut n_snap = 1;
    let log = cfg.log_format;
    let result = integrate(&disc, cfg.integrator, cfg.mg, &cfg.newton, u0, dt, n_steps, |step, t, u, rows| {
        for r in rows {
            writeln!(stats_file, "{}", stats_line(r))?;
        }
        let gmres: usize = rows.iter().map(|r| r.stats.gmres_iters).sum();
        let newton: usize = rows.iter().map(|r| r.stats.newton_iters).sum();
        match log {
            LogFormat::Text => eprintln!(
                "step {step:5}  t = {t:10.3}  newton = {newton:3}  gmres = {gmres:4}  max|U'| = {:.3e}",
                max_abs(u)
            ),
            LogFormat::Json => eprintln!(
                "{{\"step\":{step},\"time\":{t},\"newton_iters\":{newton},\"gmres_iters\":{gmres},\"max_abs\":{:e}}}",
                max_abs(u)
            ),
            LogFormat::Quiet => {}
        }
        if let Some(next) = next_output.as_mut() {
            if t >= *next - 1e-9 * dt && step < n_steps {
                snap(n_snap, u)?;
                n_snap += 1;
                while *next <= t + 1e-9 * dt {
                    *next += cfg.output_interval.unwrap_or(f64::INFINITY);
                }
            }
        }
        Ok(())
    });
    let (u, rows) = result?;
    snap(n_snap, &u)?;
    Ok(RunSummary {
        steps: n_steps,
        final_time: n_steps as f64 * dt,
        dt,
        rows,
        snapshots,
        final_state: u,
    })
}

/// Exit status for an error: 2 for configuration problems, 3 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Flag { .. } | Error::MgKey { .. } | Error::UnsupportedDegree(_) => 2,
        _ => 3,
    }
}
