//! Finite-horizon terminal-value HJI variational inequality, marched backward
//! in time from `W(x, T) = max{l, c, V0}` until the discounted reach-avoid
//! value stops changing.
//!
//! In time-to-go the PDE branch reads `W' = H(x, DW) - gamma W` with
//! `H = max_d min_u DW . f`. After every full step the variational inequality
//! is enforced as `W <- max(c, min(l, W))`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::grid::{Order, ScalarField};
use crate::scheme::{Marcher, Scratch};

/// Numerical Hamiltonian used by the explicit schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flux {
    #[default]
    LaxFriedrichs,
    /// Dimension-wise Godunov; exact upwinding for separable Hamiltonians.
    Godunov,
}

/// Steps over which the convergence test looks back.
pub const CONVERGENCE_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Discount rate.
    pub gamma: f64,
    pub cfl_factor: f64,
    /// Sup-norm change per unit time below which the march stops.
    pub convergence_tol: f64,
    pub max_horizon: f64,
    pub derivative_order: Order,
    pub snapshot_interval: f64,
    pub flux: Flux,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gamma: 0.1,
            cfl_factor: 0.8,
            convergence_tol: 1e-4,
            max_horizon: 100.0,
            derivative_order: Order::First,
            snapshot_interval: 0.5,
            flux: Flux::LaxFriedrichs,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.cfl_factor > 0.0 && self.cfl_factor <= 1.0) {
            return Err(Error::Domain(format!("cfl_factor must be in (0, 1], got {}", self.cfl_factor)));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Domain(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        if !(self.max_horizon > 0.0 && self.max_horizon.is_finite()) {
            return Err(Error::Domain(format!("max_horizon must be positive, got {}", self.max_horizon)));
        }
        if !(self.snapshot_interval > 0.0) {
            return Err(Error::Domain(format!(
                "snapshot_interval must be positive, got {}",
                self.snapshot_interval
            )));
        }
        Ok(())
    }
}

/// A stored slice `W(., T - time_to_go)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time_to_go: f64,
    pub field: ScalarField,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// `W(x, 0)`; the discounted value when `converged`.
    pub final_field: ScalarField,
    /// Increasing time-to-go; the first entry is the terminal condition.
    pub snapshots: Vec<Snapshot>,
    pub converged: bool,
    /// Sup-norm change per unit time, one entry per step.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    /// Time-to-go reached.
    pub horizon: f64,
    pub dt: f64,
}

/// `W(x, T) = max{l, c, V0}`; without `v0` it is `max{l, c}`.
pub fn terminal_condition(ell: &ScalarField, c: &ScalarField, v0: Option<&ScalarField>) -> Result<ScalarField> {
    let mut w = ell.zip_map(c, f64::max)?;
    if let Some(v0) = v0 {
        w = w.zip_map(v0, f64::max)?;
    }
    Ok(w)
}

#[inline]
fn clamp_ra(w: f64, ell: f64, c: f64) -> f64 {
    c.max(ell.min(w))
}

/// Largest admissible step `cfl_factor / max_x sum_i alpha_i(x) / dx_i`.
pub fn cfl_bound<D: Dynamics + ?Sized>(grid: &crate::grid::Grid, dyn_: &D, cfl_factor: f64) -> f64 {
    Marcher::new(grid, dyn_, Order::First).cfl_bound(cfl_factor)
}

/// Step chosen by the solvers: the CFL bound, tightened so that the
/// discount term also stays monotone.
pub(crate) fn auto_dt(rate: f64, gamma: f64, cfl: f64, fallback: f64) -> f64 {
    let denom = rate + gamma.abs();
    if denom > 0.0 {
        cfl / denom
    } else {
        fallback
    }
}

/// One backward step of size `dt`.
pub fn hji_step<D: Dynamics + ?Sized>(
    w: &ScalarField,
    ell: &ScalarField,
    c: &ScalarField,
    dyn_: &D,
    cfg: &SolverConfig,
    dt: f64,
) -> Result<ScalarField> {
    w.check_same_grid(ell)?;
    w.check_same_grid(c)?;
    let marcher = Marcher::with_flux(w.grid(), dyn_, cfg.derivative_order, cfg.flux);
    let bound = marcher.cfl_bound(cfg.cfl_factor);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, bound });
    }
    let mut out = vec![0.0; w.len()];
    marcher.advance(w.values(), dt, -cfg.gamma, &mut out, &mut Scratch::default());
    for ((o, &l), &cv) in out.iter_mut().zip(ell.values()).zip(c.values()) {
        *o = clamp_ra(*o, l, cv);
    }
    Ok(w.with_values(out))
}

/// Marches from `max{l, c}` to convergence or `max_horizon`.
pub fn solve<D: Dynamics + ?Sized>(
    ell: &ScalarField,
    c: &ScalarField,
    dyn_: &D,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    solve_from(ell, c, None, dyn_, cfg)
}

/// Marches from `max{l, c, V0}`.
pub fn solve_from<D: Dynamics + ?Sized>(
    ell: &ScalarField,
    c: &ScalarField,
    v0: Option<&ScalarField>,
    dyn_: &D,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    let grid = ell.grid().clone();
    if dyn_.n_dims() != grid.n_dims() {
        return Err(Error::Domain(format!(
            "dynamics have {} states but grid has {} dimensions",
            dyn_.n_dims(),
            grid.n_dims()
        )));
    }
    lipschitz_diagnostic(dyn_, cfg.gamma).log();
    let terminal = terminal_condition(ell, c, v0)?;
    let marcher = Marcher::with_flux(&grid, dyn_, cfg.derivative_order, cfg.flux);
    let bound = marcher.cfl_bound(cfg.cfl_factor);
    let dt_nominal = auto_dt(marcher.rate, cfg.gamma, cfg.cfl_factor, cfg.snapshot_interval);
    if dt_nominal > bound * (1.0 + 1e-12) {
        return Err(Error::CflViolation {
            dt: dt_nominal,
            bound,
        });
    }

    let (ell_v, c_v) = (ell.values(), c.values());
    let mut w = terminal.values().to_vec();
    let mut next = vec![0.0; w.len()];
    let mut scratch = Scratch::default();
    let mut snapshots = vec![Snapshot {
        time_to_go: 0.0,
        field: terminal.clone(),
    }];
    let mut next_snapshot = cfg.snapshot_interval;
    let mut residuals = Vec::new();
    let mut window: VecDeque<f64> = VecDeque::with_capacity(CONVERGENCE_WINDOW);
    let mut t = 0.0;
    let mut iterations = 0;
    let mut converged = false;

    while t < cfg.max_horizon {
        let dt = dt_nominal.min(cfg.max_horizon - t);
        marcher.advance(&w, dt, -cfg.gamma, &mut next, &mut scratch);
        next.iter_mut()
            .zip(ell_v.iter().zip(c_v))
            .for_each(|(o, (&l, &cv))| *o = clamp_ra(*o, l, cv));
        t += dt;
        iterations += 1;
        if let Some(node) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { node, time_to_go: t });
        }
        let rate = crate::grid::sup_diff(&next, &w) / dt;
        std::mem::swap(&mut w, &mut next);
        residuals.push(rate);
        if window.len() == CONVERGENCE_WINDOW {
            window.pop_front();
        }
        window.push_back(rate);

        let done = window.len() == CONVERGENCE_WINDOW && window.iter().all(|&r| r < cfg.convergence_tol);
        if t + 1e-12 >= next_snapshot || done || t >= cfg.max_horizon {
            snapshots.push(Snapshot {
                time_to_go: t,
                field: terminal.with_values(w.clone()),
            });
            while next_snapshot <= t + 1e-12 {
                next_snapshot += cfg.snapshot_interval;
            }
        }
        if done {
            converged = true;
            break;
        }
    }
    log::info!(
        "hji solve: {} steps, horizon {:.3}, converged {}, last residual {:.3e}",
        iterations,
        t,
        converged,
        residuals.last().copied().unwrap_or(0.0)
    );

    Ok(SolveResult {
        final_field: terminal.with_values(w),
        snapshots,
        converged,
        residual_history: residuals,
        iterations,
        horizon: t,
        dt: dt_nominal,
    })
}

/// Whether `L_f < gamma`, the condition under which the discounted value is
/// Lipschitz. Reported only; never gates a solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzDiagnostic {
    pub lipschitz: f64,
    pub gamma: f64,
    pub satisfied: bool,
}

impl LipschitzDiagnostic {
    fn log(&self) {
        if !self.satisfied {
            log::debug!(
                "L_f = {} >= gamma = {}: value may not be Lipschitz",
                self.lipschitz,
                self.gamma
            );
        }
    }
}

pub fn lipschitz_diagnostic<D: Dynamics + ?Sized>(dyn_: &D, gamma: f64) -> LipschitzDiagnostic {
    let lipschitz = dyn_.lipschitz_estimate();
    LipschitzDiagnostic {
        lipschitz,
        gamma,
        satisfied: lipschitz < gamma,
    }
}
