//! Command implementations behind the `discount-reach` binary.
//!
//! Every command reads an [`ExperimentConfig`] and writes under its
//! `output_dir`:
//!
//! ```text
//! target.drfd  constraint.drfd
//! ra/     value.drfd  snapshots/snap_NNNN.drfd  meta.json  timing.json
//! rclvf/  srcis.drfd  rclvf.drfd  shifted.drfd  meta.json  timing.json
//! sa/     sa.drfd  target_slot.drfd  snapshots/...  meta.json  timing.json
//! traj/   {ra,sa}_K.csv  <config name>.json
//! ```
//!
//! `meta.json` files are deterministic; wall-clock times go to
//! `timing.json`. Exit codes: 0 success, 1 bad config, 2 solver or I/O
//! failure, 3 missing upstream artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::control::{rollout, write_trajectory_csv, Artifacts, RolloutMode, Trajectory};
use crate::dynamics::DynamicsSpec;
use crate::error::Error;
use crate::geometry::sample_to_field;
use crate::grid::{read_field, write_field, Grid, ScalarField};
use crate::hji::{solve, Snapshot, SolveResult};
use crate::rclvf::{solve_rclvf, RclvfResult};
use crate::sa::solve_sa;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_MISSING: i32 = 3;

/// Environment variable read when `--threads` is absent.
pub const THREADS_ENV: &str = "DISCOUNT_REACH_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(Error),
    #[error("{0}")]
    Solver(#[from] Error),
    #[error("missing upstream artifact: {0}")]
    Missing(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Missing(_) => EXIT_MISSING,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Sizes the global rayon pool from `threads`, else from
/// `DISCOUNT_REACH_THREADS`, else leaves the default.
pub fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Config(Error::Config(format!("{THREADS_ENV}={v} is not a thread count"))))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Config(Error::Config("thread count must be positive".into())));
        }
        // A pool that already exists (tests, repeated calls) is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Loads and validates a config, replacing `output_dir` when `out` is given.
pub fn load_config(path: &Path, out: Option<&Path>) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).map_err(CliError::Config)?;
    if let Some(out) = out {
        cfg.output_dir = out.to_path_buf();
    }
    Ok(cfg)
}

fn report(result: CliResult<()>) -> i32 {
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}

pub fn cmd_solve_ra(cfg: &ExperimentConfig) -> i32 {
    report(solve_ra(cfg))
}

pub fn cmd_solve_rclvf(cfg: &ExperimentConfig) -> i32 {
    report(solve_rclvf_cmd(cfg))
}

pub fn cmd_solve_sa(cfg: &ExperimentConfig) -> i32 {
    report(solve_sa_cmd(cfg))
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> i32 {
    report(simulate(cfg))
}

/// Converts a binary field to a headerless CSV, one row per node:
/// coordinates then value. Writes next to the input with a `.csv`
/// extension unless `out` is given.
pub fn cmd_export(field_file: &Path, format: &str, out: Option<&Path>) -> i32 {
    report(export(field_file, format, out))
}

struct Problem {
    grid: Arc<Grid>,
    dyn_: DynamicsSpec,
    ell: ScalarField,
    c: ScalarField,
}

fn problem(cfg: &ExperimentConfig) -> CliResult<Problem> {
    let grid = cfg.grid.build().map_err(CliError::Config)?;
    let dyn_ = cfg.system.build().map_err(CliError::Config)?;
    let ell = sample_to_field(&cfg.target, &grid).map_err(CliError::Config)?;
    let c = sample_to_field(&cfg.constraint, &grid).map_err(CliError::Config)?;
    Ok(Problem { grid, dyn_, ell, c })
}

fn subdir(cfg: &ExperimentConfig, name: &str) -> CliResult<PathBuf> {
    let dir = cfg.output_dir.join(name);
    fs::create_dir_all(&dir).map_err(Error::from)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    let mut f = fs::File::create(path).map_err(Error::from)?;
    f.write_all(text.as_bytes()).map_err(Error::from)?;
    f.write_all(b"\n").map_err(Error::from)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    if !path.exists() {
        return Err(CliError::Missing(path.display().to_string()));
    }
    let text = fs::read_to_string(path).map_err(Error::from)?;
    serde_json::from_str(&text).map_err(|e| CliError::Solver(Error::Format(format!("{}: {e}", path.display()))))
}

fn read_artifact(path: &Path) -> CliResult<ScalarField> {
    if !path.exists() {
        return Err(CliError::Missing(path.display().to_string()));
    }
    Ok(read_field(path)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

fn write_timing(dir: &Path, start: Instant) -> CliResult<()> {
    write_json(
        &dir.join("timing.json"),
        &Timing {
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub file: String,
    pub time_to_go: f64,
}

/// `ra/meta.json`, and the solve part of `sa/meta.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveMeta {
    pub gamma: f64,
    pub converged: bool,
    pub horizon: f64,
    pub dt: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub snapshots: Vec<SnapshotEntry>,
}

fn write_solve(dir: &Path, value_file: &str, res: &SolveResult, gamma: f64) -> CliResult<SolveMeta> {
    write_field(dir.join(value_file), &res.final_field)?;
    let snap_dir = dir.join("snapshots");
    if snap_dir.exists() {
        fs::remove_dir_all(&snap_dir).map_err(Error::from)?;
    }
    fs::create_dir_all(&snap_dir).map_err(Error::from)?;
    let mut entries = Vec::with_capacity(res.snapshots.len());
    for (k, s) in res.snapshots.iter().enumerate() {
        let file = format!("snapshots/snap_{k:04}.drfd");
        write_field(dir.join(&file), &s.field)?;
        entries.push(SnapshotEntry {
            file,
            time_to_go: s.time_to_go,
        });
    }
    Ok(SolveMeta {
        gamma,
        converged: res.converged,
        horizon: res.horizon,
        dt: res.dt,
        iterations: res.iterations,
        residual_history: res.residual_history.clone(),
        snapshots: entries,
    })
}

fn read_snapshots(dir: &Path, meta: &SolveMeta) -> CliResult<Vec<Snapshot>> {
    meta.snapshots
        .iter()
        .map(|e| {
            Ok(Snapshot {
                time_to_go: e.time_to_go,
                field: read_artifact(&dir.join(&e.file))?,
            })
        })
        .collect()
}

fn write_problem_fields(cfg: &ExperimentConfig, p: &Problem) -> CliResult<()> {
    fs::create_dir_all(&cfg.output_dir).map_err(Error::from)?;
    write_field(cfg.output_dir.join("target.drfd"), &p.ell)?;
    write_field(cfg.output_dir.join("constraint.drfd"), &p.c)?;
    Ok(())
}

fn solve_ra(cfg: &ExperimentConfig) -> CliResult<()> {
    let start = Instant::now();
    let p = problem(cfg)?;
    write_problem_fields(cfg, &p)?;
    let scfg = cfg.solver_config();
    let res = solve(&p.ell, &p.c, &p.dyn_, &scfg)?;
    let dir = subdir(cfg, "ra")?;
    let meta = write_solve(&dir, "value.drfd", &res, scfg.gamma)?;
    write_json(&dir.join("meta.json"), &meta)?;
    write_timing(&dir, start)?;
    log::info!(
        "reach-avoid: converged {} at horizon {:.3}; {} nodes in the set",
        res.converged,
        res.horizon,
        res.final_field.values().iter().filter(|&&v| v < 0.0).count()
    );
    Ok(())
}

/// `rclvf/meta.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RclvfMeta {
    pub point: Vec<f64>,
    pub dims: Vec<usize>,
    pub gamma_clvf: f64,
    pub v_min: f64,
    pub big_m: f64,
    pub level_tol: f64,
    pub cap: f64,
    pub capped_nodes: usize,
    pub converged: bool,
    pub srcis_converged: bool,
    pub srcis_horizon: f64,
    pub srcis_nodes: usize,
    pub im_nodes: usize,
}

fn write_rclvf(cfg: &ExperimentConfig, r: &RclvfResult, start: Instant) -> CliResult<()> {
    let dir = subdir(cfg, "rclvf")?;
    write_field(dir.join("srcis.drfd"), &r.srcis_field)?;
    write_field(dir.join("rclvf.drfd"), &r.field)?;
    write_field(dir.join("shifted.drfd"), &r.shifted_field)?;
    let count = |m: &[bool]| m.iter().filter(|&&b| b).count();
    let meta = RclvfMeta {
        point: r.seed.point.clone(),
        dims: r.seed.dims.clone(),
        gamma_clvf: r.gamma_clvf,
        v_min: r.v_min,
        big_m: r.big_m,
        level_tol: r.level_tol,
        cap: r.cap,
        capped_nodes: r.capped_count(),
        converged: r.converged,
        srcis_converged: r.srcis_converged,
        srcis_horizon: r.srcis_horizon,
        srcis_nodes: count(&r.srcis_mask),
        im_nodes: count(&r.im_mask()),
    };
    write_json(&dir.join("meta.json"), &meta)?;
    write_timing(&dir, start)
}

fn read_rclvf(cfg: &ExperimentConfig) -> CliResult<RclvfResult> {
    let dir = cfg.output_dir.join("rclvf");
    let meta: RclvfMeta = read_json(&dir.join("meta.json"))?;
    let field = read_artifact(&dir.join("rclvf.drfd"))?;
    let srcis_field = read_artifact(&dir.join("srcis.drfd"))?;
    let shifted_field = read_artifact(&dir.join("shifted.drfd"))?;
    let seed = cfg
        .stabilize
        .clone()
        .ok_or_else(|| CliError::Config(Error::Config("stabilize: seed required".into())))?;
    let srcis_mask = srcis_field.values().iter().map(|&v| v <= meta.v_min + meta.level_tol).collect();
    let capped = field.values().iter().map(|&v| v >= meta.cap).collect();
    Ok(RclvfResult {
        field,
        gamma_clvf: meta.gamma_clvf,
        seed,
        v_min: meta.v_min,
        srcis_field,
        srcis_mask,
        shifted_field,
        big_m: meta.big_m,
        level_tol: meta.level_tol,
        cap: meta.cap,
        capped,
        converged: meta.converged,
        srcis_converged: meta.srcis_converged,
        srcis_horizon: meta.srcis_horizon,
    })
}

fn seed_of(cfg: &ExperimentConfig) -> CliResult<&crate::rclvf::Seed> {
    cfg.stabilize
        .as_ref()
        .ok_or_else(|| CliError::Config(Error::Config("stabilize: this command needs a [stabilize] seed".into())))
}

fn solve_rclvf_cmd(cfg: &ExperimentConfig) -> CliResult<()> {
    let start = Instant::now();
    let seed = seed_of(cfg)?;
    let p = problem(cfg)?;
    write_problem_fields(cfg, &p)?;
    let r = solve_rclvf(&p.dyn_, seed, &p.ell, &cfg.solver_config(), &cfg.rclvf_config())?;
    write_rclvf(cfg, &r, start)
}

/// `sa/meta.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaMeta {
    pub summary: crate::sa::SaSummary,
    pub solve: SolveMeta,
}

fn solve_sa_cmd(cfg: &ExperimentConfig) -> CliResult<()> {
    let start = Instant::now();
    let seed = seed_of(cfg)?;
    let p = problem(cfg)?;
    write_problem_fields(cfg, &p)?;
    let scfg = cfg.solver_config();
    let out = solve_sa(&p.dyn_, &p.ell, &p.c, seed, &scfg, &cfg.rclvf_config())?;
    write_rclvf(cfg, &out.rclvf, start)?;
    let dir = subdir(cfg, "sa")?;
    write_field(dir.join("target_slot.drfd"), &out.target_slot)?;
    let solve = write_solve(&dir, "sa.drfd", &out.ra, scfg.gamma)?;
    write_json(
        &dir.join("meta.json"),
        &SaMeta {
            summary: out.summary(scfg.gamma),
            solve,
        },
    )?;
    write_timing(&dir, start)?;
    log::info!("stabilize-avoid: {:?}", out.summary(scfg.gamma));
    Ok(())
}

/// One line of `traj/meta.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub file: String,
    pub mode: RolloutMode,
    pub x0: Vec<f64>,
    pub final_state: Vec<f64>,
    pub switch_time: Option<f64>,
    pub left_grid: bool,
    pub fallback_steps: usize,
}

fn simulate(cfg: &ExperimentConfig) -> CliResult<()> {
    let spec = cfg
        .rollout
        .as_ref()
        .ok_or_else(|| CliError::Config(Error::Config("rollout: simulate needs a [rollout] section".into())))?;
    let p = problem(cfg)?;
    let mut metas = Vec::new();
    let mut trajs: Vec<(String, Trajectory)> = Vec::new();
    for &mode in &spec.modes {
        let (dir_name, tag) = match mode {
            RolloutMode::Ra => ("ra", "ra"),
            RolloutMode::Sa => ("sa", "sa"),
        };
        let dir = cfg.output_dir.join(dir_name);
        let (meta, rclvf) = match mode {
            RolloutMode::Ra => (read_json::<SolveMeta>(&dir.join("meta.json"))?, None),
            RolloutMode::Sa => (read_json::<SaMeta>(&dir.join("meta.json"))?.solve, Some(read_rclvf(cfg)?)),
        };
        let snapshots = read_snapshots(&dir, &meta)?;
        if let Some(s) = snapshots.first() {
            if **s.field.grid() != *p.grid {
                return Err(CliError::Solver(Error::GridMismatch));
            }
        }
        let art = Artifacts {
            snapshots: Some(&snapshots),
            rclvf: rclvf.as_ref(),
        };
        for (k, x0) in spec.x0.iter().enumerate() {
            let traj = rollout(x0, mode, art, &p.dyn_, spec.disturbance, spec.spec())?;
            let file = format!("{tag}_{k}.csv");
            metas.push(TrajectoryMeta {
                file: file.clone(),
                mode,
                x0: x0.clone(),
                final_state: traj.final_state().to_vec(),
                switch_time: traj.switch_time,
                left_grid: traj.left_grid,
                fallback_steps: traj.fallback_steps,
            });
            trajs.push((file, traj));
        }
    }
    let dir = subdir(cfg, "traj")?;
    for (file, traj) in &trajs {
        write_trajectory_csv(dir.join(file), traj)?;
    }
    write_json(&dir.join(format!("{}.json", cfg.name)), &metas)
}

fn export(field_file: &Path, format: &str, out: Option<&Path>) -> CliResult<()> {
    if format != "csv" {
        return Err(CliError::Config(Error::Config(format!("export format {format:?} is not supported; use csv"))));
    }
    let field = read_artifact(field_file)?;
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| field_file.with_extension("csv"));
    let mut w = std::io::BufWriter::new(fs::File::create(&target).map_err(Error::from)?);
    write_field_csv_to(&field, &mut w)?;
    w.flush().map_err(Error::from)?;
    Ok(())
}

/// Headerless CSV rows `x0,..,x{n-1},value` in node order.
pub fn write_field_csv_to<W: Write>(field: &ScalarField, mut w: W) -> crate::Result<()> {
    let grid = field.grid();
    let mut x = vec![0.0; grid.n_dims()];
    for (i, v) in field.values().iter().enumerate() {
        grid.node_into(i, &mut x);
        let mut row: Vec<String> = x.iter().map(f64::to_string).collect();
        row.push(v.to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn export_five_nodes() {
        let g = Arc::new(Grid::new(&[(0.0, 1.0)], &[5], &[false]).unwrap());
        let f = ScalarField::new(g, vec![0.5, -1.25, 3.0, 1e-17, -0.0]).unwrap();
        let mut buf = Vec::new();
        write_field_csv_to(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 5);
        for (i, row) in rows.iter().enumerate() {
            let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
            assert_eq!(cols, vec![i as f64 * 0.25, f.values()[i]]);
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(Error::Config("x".into())).exit_code(), 1);
        assert_eq!(CliError::Solver(Error::GridMismatch).exit_code(), 2);
        assert_eq!(CliError::Missing("x".into()).exit_code(), 3);
    }
}
