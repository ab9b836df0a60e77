//! Robust control Lyapunov-value functions.
//!
//! The R-CLVF-VI `0 = max{ r(x) - V, max_d min_u DV . f + gamma V }` with
//! `r(x) = ||x - p|| - v_min` is marched in pseudo-time as
//! `V <- max(r, V + dt (H_LF + gamma V))`. With `gamma = 0` the minimum of the
//! converged field is `v_min` and its minimizers form the smallest robustly
//! control invariant set `I_m`. The level shift `V - M` makes the largest
//! sublevel set inside the target the zero sublevel set.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result, Stage};
use crate::geometry::{sample_to_field, ImplicitSurface};
use crate::grid::{Grid, Order, ScalarField};
use crate::hji::{auto_dt, Flux, SolverConfig, CONVERGENCE_WINDOW};
use crate::scheme::{Marcher, Scratch};

/// Upper bound on `gamma_clvf * dt` for the anti-dissipative growth term.
pub const MAX_GROWTH_STEP: f64 = 0.1;

/// Stabilization point `p` and the state coordinates it constrains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seed {
    pub point: Vec<f64>,
    pub dims: Vec<usize>,
}

impl Seed {
    pub fn new(point: Vec<f64>, dims: Vec<usize>) -> Result<Seed> {
        let seed = Seed { point, dims };
        seed.surface(0.0)?;
        Ok(seed)
    }

    /// `||x_dims - p|| - offset`.
    pub fn surface(&self, offset: f64) -> Result<ImplicitSurface> {
        ImplicitSurface::norm_to_point(&self.point, &self.dims, offset)
    }

    /// `r(x) = ||x_dims - p|| - v_min` on `grid`.
    pub fn field(&self, grid: &Arc<Grid>, v_min: f64) -> Result<ScalarField> {
        let seed_dims = self.dims.iter().copied().max().map_or(0, |d| d + 1);
        if seed_dims > grid.n_dims() {
            return Err(Error::Domain(format!(
                "seed uses dimension {} but grid has {}",
                seed_dims - 1,
                grid.n_dims()
            )));
        }
        for (&d, &p) in self.dims.iter().zip(&self.point) {
            if !grid.periodic()[d] && !(grid.lower()[d] <= p && p <= grid.upper()[d]) {
                return Err(Error::Domain(format!("seed coordinate {p} lies outside dimension {d} of the grid")));
            }
        }
        sample_to_field(&self.surface(v_min)?, grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RclvfConfig {
    /// Exponential stabilization rate.
    pub gamma_clvf: f64,
    /// Value margin for extracting `I_m` and for the level shift. Defaults to
    /// the smallest grid spacing along the seed dimensions.
    pub level_tol: Option<f64>,
    /// Nodes above `cap_factor * max |r|` are frozen as outside the domain.
    pub cap_factor: f64,
    /// Numerical Hamiltonian for both R-CLVF marches. Lax-Friedrichs
    /// dissipation keeps lifting the minimum of the `gamma = 0` field, so the
    /// default is Godunov.
    pub flux: Flux,
    /// Derivative order for both marches; the solver's order when unset.
    pub derivative_order: Option<Order>,
    /// Stop the `gamma = 0` march at this horizon and use the field reached
    /// there instead of requiring convergence. On coarse grids numerical
    /// diffusion keeps raising the minimum long after the true value settles.
    pub srcis_horizon: Option<f64>,
}

impl Default for RclvfConfig {
    fn default() -> Self {
        RclvfConfig {
            gamma_clvf: 0.5,
            level_tol: None,
            cap_factor: 1e3,
            flux: Flux::Godunov,
            derivative_order: None,
            srcis_horizon: None,
        }
    }
}

impl RclvfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_clvf > 0.0 && self.gamma_clvf.is_finite()) {
            return Err(Error::Domain(format!("gamma_clvf must be positive, got {}", self.gamma_clvf)));
        }
        if let Some(t) = self.level_tol {
            if !(t > 0.0) {
                return Err(Error::Domain(format!("level_tol must be positive, got {t}")));
            }
        }
        if !(self.cap_factor > 1.0) {
            return Err(Error::Domain(format!("cap_factor must exceed 1, got {}", self.cap_factor)));
        }
        if let Some(h) = self.srcis_horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Domain(format!("srcis_horizon must be positive, got {h}")));
            }
        }
        Ok(())
    }

    pub fn level_tol_for(&self, grid: &Grid, seed: &Seed) -> f64 {
        self.level_tol.unwrap_or_else(|| {
            seed.dims
                .iter()
                .map(|&d| grid.spacing()[d])
                .reduce(f64::min)
                .unwrap_or_else(|| grid.min_spacing())
        })
    }
}

/// Output of one R-CLVF-VI march.
#[derive(Debug, Clone)]
pub struct ViSolve {
    pub field: ScalarField,
    pub converged: bool,
    /// Value at which nodes were frozen.
    pub cap: f64,
    /// Nodes frozen at the cap (outside the stabilizable domain).
    pub capped: Vec<bool>,
    pub iterations: usize,
    pub horizon: f64,
    pub dt: f64,
    pub residual_history: Vec<f64>,
}

impl ViSolve {
    pub fn capped_count(&self) -> usize {
        self.capped.iter().filter(|&&c| c).count()
    }
}

fn march<D: Dynamics + ?Sized>(r: &ScalarField, dyn_: &D, gamma: f64, cfg: &SolverConfig, cap: f64) -> Result<ViSolve> {
    cfg.validate()?;
    let grid = r.grid().clone();
    if dyn_.n_dims() != grid.n_dims() {
        return Err(Error::Domain(format!(
            "dynamics have {} states but grid has {} dimensions",
            dyn_.n_dims(),
            grid.n_dims()
        )));
    }
    let marcher = Marcher::with_flux(&grid, dyn_, cfg.derivative_order, cfg.flux);
    let mut dt = auto_dt(marcher.rate, gamma, cfg.cfl_factor, cfg.snapshot_interval);
    if gamma > 0.0 {
        dt = dt.min(MAX_GROWTH_STEP / gamma);
    }
    let rv = r.values();
    let mut w = rv.to_vec();
    let mut next = vec![0.0; w.len()];
    let mut capped: Vec<bool> = w.iter().map(|&v| v >= cap).collect();
    let mut scratch = Scratch::default();
    let mut window: VecDeque<f64> = VecDeque::with_capacity(CONVERGENCE_WINDOW);
    let mut residuals = Vec::new();
    let (mut t, mut iterations, mut converged) = (0.0, 0, false);

    while t < cfg.max_horizon {
        let step = dt.min(cfg.max_horizon - t);
        marcher.advance(&w, step, gamma, &mut next, &mut scratch);
        let mut delta: f64 = 0.0;
        for i in 0..w.len() {
            if capped[i] {
                next[i] = cap;
                continue;
            }
            let v = rv[i].max(next[i]);
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { node: i, time_to_go: t + step });
            }
            if v >= cap {
                capped[i] = true;
                next[i] = cap;
            } else {
                next[i] = v;
                delta = delta.max((v - w[i]).abs());
            }
        }
        std::mem::swap(&mut w, &mut next);
        t += step;
        iterations += 1;
        if capped.iter().all(|&c| c) {
            return Err(Error::NoConvergence {
                reason: format!("global divergence: every node exceeded the cap {cap:e} by time {t:.3}"),
                partial: Some(Box::new(r.with_values(w))),
            });
        }
        let rate = delta / step;
        residuals.push(rate);
        if window.len() == CONVERGENCE_WINDOW {
            window.pop_front();
        }
        window.push_back(rate);
        if window.len() == CONVERGENCE_WINDOW && window.iter().all(|&x| x < cfg.convergence_tol) {
            converged = true;
            break;
        }
    }
    log::info!(
        "r-clvf march (gamma {}): {} steps, horizon {:.3}, converged {}, {} capped",
        gamma,
        iterations,
        t,
        converged,
        capped.iter().filter(|&&c| c).count()
    );
    Ok(ViSolve {
        field: r.with_values(w),
        converged,
        cap,
        capped,
        iterations,
        horizon: t,
        dt,
        residual_history: residuals,
    })
}

fn divergence_cap(r: &ScalarField, factor: f64) -> f64 {
    factor * r.sup_norm().max(f64::MIN_POSITIVE)
}

/// The `gamma = 0` field, its minimum `v_min` and the mask
/// `I_m = {V <= v_min + level_tol}`.
#[derive(Debug, Clone)]
pub struct Srcis {
    pub solve: ViSolve,
    pub v_min: f64,
    pub mask: Vec<bool>,
}

pub fn compute_srcis<D: Dynamics + ?Sized>(
    dyn_: &D,
    seed: &Seed,
    grid: &Arc<Grid>,
    cfg: &SolverConfig,
    level_tol: f64,
) -> Result<Srcis> {
    let srcis = srcis_at_horizon(dyn_, seed, grid, cfg, level_tol)?;
    if !srcis.solve.converged {
        return Err(Error::NoConvergence {
            reason: format!("srcis did not settle within horizon {}", cfg.max_horizon),
            partial: Some(Box::new(srcis.solve.field)),
        });
    }
    Ok(srcis)
}

/// Like [`compute_srcis`] but accepts the field at `cfg.max_horizon` when
/// the march has not settled by then.
pub fn srcis_at_horizon<D: Dynamics + ?Sized>(
    dyn_: &D,
    seed: &Seed,
    grid: &Arc<Grid>,
    cfg: &SolverConfig,
    level_tol: f64,
) -> Result<Srcis> {
    let r = seed.field(grid, 0.0)?;
    let solve = march(&r, dyn_, 0.0, cfg, divergence_cap(&r, RclvfConfig::default().cap_factor))?;
    let v_min = solve.field.min_value();
    let mask = solve.field.values().iter().map(|&v| v <= v_min + level_tol).collect();
    Ok(Srcis { solve, v_min, mask })
}

/// Marches the R-CLVF-VI with `r = ||x - p|| - v_min`. Nodes that pass the
/// divergence cap are frozen there; only divergence at every node is an
/// error.
pub fn compute_rclvf<D: Dynamics + ?Sized>(
    dyn_: &D,
    seed: &Seed,
    gamma_clvf: f64,
    v_min: f64,
    grid: &Arc<Grid>,
    cfg: &SolverConfig,
    cap_factor: f64,
) -> Result<ViSolve> {
    if !(gamma_clvf > 0.0) {
        return Err(Error::Domain(format!("gamma_clvf must be positive, got {gamma_clvf}")));
    }
    let r = seed.field(grid, v_min)?;
    march(&r, dyn_, gamma_clvf, cfg, divergence_cap(&r, cap_factor))
}

/// Largest level `M` such that every node with `clvf <= M` has `l < 0`, less
/// `level_tol`. Returns `clvf - M` and `M`.
pub fn shift_rclvf(clvf: &ScalarField, ell: &ScalarField, level_tol: f64) -> Result<(ScalarField, f64)> {
    clvf.check_same_grid(ell)?;
    let v = clvf.values();
    let l = ell.values();
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let big_m = match order.iter().find(|&&i| l[i] >= 0.0) {
        Some(&bad) => v[bad] - level_tol,
        None => clvf.max_value() - level_tol,
    };
    let shifted = clvf.map(|x| x - big_m);
    let inside = shifted.values().iter().zip(l).filter(|(&s, _)| s < 0.0).count();
    if inside == 0 {
        return Err(Error::AssumptionViolated(
            "no sublevel set of the R-CLVF fits inside the target".into(),
        ));
    }
    Ok((shifted, big_m))
}

#[derive(Debug, Clone)]
pub struct RclvfResult {
    /// `V^CLVF`, with capped nodes at `cap`.
    pub field: ScalarField,
    pub gamma_clvf: f64,
    pub seed: Seed,
    pub v_min: f64,
    /// The `gamma = 0` field.
    pub srcis_field: ScalarField,
    /// `I_m`.
    pub srcis_mask: Vec<bool>,
    /// `V^CLVF - M`.
    pub shifted_field: ScalarField,
    pub big_m: f64,
    pub level_tol: f64,
    pub cap: f64,
    pub capped: Vec<bool>,
    pub converged: bool,
    pub srcis_converged: bool,
    pub srcis_horizon: f64,
}

impl RclvfResult {
    pub fn capped_count(&self) -> usize {
        self.capped.iter().filter(|&&c| c).count()
    }

    /// Nodes of `I_M = {shifted < 0}`.
    pub fn im_mask(&self) -> Vec<bool> {
        self.shifted_field.negative_mask()
    }
}

/// SRCIS, R-CLVF and level shift against the target `ell`, with errors
/// labeled by stage.
pub fn solve_rclvf<D: Dynamics + ?Sized>(
    dyn_: &D,
    seed: &Seed,
    ell: &ScalarField,
    cfg: &SolverConfig,
    rcfg: &RclvfConfig,
) -> Result<RclvfResult> {
    rcfg.validate()?;
    let cfg = &SolverConfig {
        flux: rcfg.flux,
        derivative_order: rcfg.derivative_order.unwrap_or(cfg.derivative_order),
        ..cfg.clone()
    };
    let grid = ell.grid().clone();
    let level_tol = rcfg.level_tol_for(&grid, seed);
    let srcis = match rcfg.srcis_horizon {
        None => compute_srcis(dyn_, seed, &grid, cfg, level_tol),
        Some(h) => srcis_at_horizon(
            dyn_,
            seed,
            &grid,
            &SolverConfig {
                max_horizon: h,
                ..cfg.clone()
            },
            level_tol,
        ),
    }
    .map_err(|e| e.at_stage(Stage::Srcis))?;
    log::info!(
        "srcis: v_min = {:.5} at horizon {:.3} (converged {})",
        srcis.v_min,
        srcis.solve.horizon,
        srcis.solve.converged
    );
    let clvf = compute_rclvf(dyn_, seed, rcfg.gamma_clvf, srcis.v_min, &grid, cfg, rcfg.cap_factor)
        .map_err(|e| e.at_stage(Stage::Rclvf))?;
    let (shifted, big_m) = shift_rclvf(&clvf.field, ell, level_tol).map_err(|e| e.at_stage(Stage::Shift))?;
    Ok(RclvfResult {
        gamma_clvf: rcfg.gamma_clvf,
        seed: seed.clone(),
        v_min: srcis.v_min,
        srcis_field: srcis.solve.field,
        srcis_mask: srcis.mask,
        shifted_field: shifted,
        big_m,
        level_tol,
        cap: clvf.cap,
        capped: clvf.capped,
        converged: clvf.converged,
        srcis_converged: srcis.solve.converged,
        srcis_horizon: srcis.solve.horizon,
        field: clvf.field,
    })
}
