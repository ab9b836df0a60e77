//! Two-step stabilize-avoid value.
//!
//! The shifted R-CLVF `V - M` replaces the target function in the discounted
//! reach-avoid solve. Its zero sublevel set `I_M` lies inside the target and
//! is robustly invariant, so reaching it while avoiding the obstacles means
//! the state can then be stabilized to `I_m` forever.

use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result, Stage};
use crate::grid::ScalarField;
use crate::hji::{solve, SolveResult, SolverConfig};
use crate::rclvf::{solve_rclvf, RclvfConfig, RclvfResult, Seed};

#[derive(Debug, Clone)]
pub struct SaResult {
    /// `V^SA`.
    pub sa_field: ScalarField,
    pub rclvf: RclvfResult,
    /// The inner reach-avoid solve, whose snapshots drive the reach phase.
    pub ra: SolveResult,
    /// The target slot of the inner solve: the shifted R-CLVF, clipped.
    pub target_slot: ScalarField,
    /// `{V^SA < 0}`.
    pub sa_mask: Vec<bool>,
}

/// Summary numbers written next to the fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaSummary {
    pub v_min: f64,
    pub big_m: f64,
    pub gamma: f64,
    pub gamma_clvf: f64,
    pub capped_nodes: usize,
    pub rclvf_converged: bool,
    pub ra_converged: bool,
    pub sa_nodes: usize,
}

impl SaResult {
    pub fn summary(&self, gamma: f64) -> SaSummary {
        SaSummary {
            v_min: self.rclvf.v_min,
            big_m: self.rclvf.big_m,
            gamma,
            gamma_clvf: self.rclvf.gamma_clvf,
            capped_nodes: self.rclvf.capped_count(),
            rclvf_converged: self.rclvf.converged,
            ra_converged: self.ra.converged,
            sa_nodes: self.sa_mask.iter().filter(|&&m| m).count(),
        }
    }
}

/// SRCIS, R-CLVF, level shift against `ell`, then the discounted
/// reach-avoid solve with the shifted R-CLVF as target and the same `c`.
/// Errors carry the stage that failed.
pub fn solve_sa<D: Dynamics + ?Sized>(
    dyn_: &D,
    ell: &ScalarField,
    c: &ScalarField,
    seed: &Seed,
    cfg: &SolverConfig,
    rcfg: &RclvfConfig,
) -> Result<SaResult> {
    ell.check_same_grid(c)?;
    let rclvf = solve_rclvf(dyn_, seed, ell, cfg, rcfg)?;
    let ceiling = rclvf.cap - rclvf.big_m;
    let target_slot = rclvf.shifted_field.map(|v| v.min(ceiling));
    let usable = target_slot
        .values()
        .iter()
        .zip(ell.values())
        .zip(c.values())
        .any(|((&s, &l), &cv)| s < 0.0 && l < 0.0 && cv < 0.0);
    if !usable {
        return Err(Error::AssumptionViolated("I_M has no node inside the constraint set".into()).at_stage(Stage::Shift));
    }
    log::info!(
        "stabilize-avoid: v_min {:.4}, M {:.4}, {} nodes in I_M",
        rclvf.v_min,
        rclvf.big_m,
        target_slot.values().iter().filter(|&&v| v < 0.0).count()
    );
    let ra = solve(&target_slot, c, dyn_, cfg).map_err(|e| e.at_stage(Stage::ReachAvoid))?;
    let sa_field = ra.final_field.clone();
    let sa_mask = sa_field.negative_mask();
    Ok(SaResult {
        sa_field,
        rclvf,
        ra,
        target_slot,
        sa_mask,
    })
}
