//! Feedback controllers read off value functions, and closed-loop rollouts.
//!
//! * `pi_RA` picks the stored finite-horizon slice with the smallest
//!   time-to-go that is non-positive at the state and follows its gradient.
//! * `pi_H` follows the R-CLVF gradient.
//! * `pi_SA` runs `pi_RA` until the shifted R-CLVF is non-positive, then
//!   latches to `pi_H`.
//!
//! Gradients off the grid are central differences at the surrounding nodes,
//! interpolated multilinearly.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{flow, Dynamics};
use crate::error::{Error, Result};
use crate::grid::{gradient_at, interpolate, interpolate_flagged, Grid, ScalarField};
use crate::hji::Snapshot;
use crate::rclvf::RclvfResult;

/// How the disturbance acts during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbancePolicy {
    /// Maximizer of the Hamiltonian for the gradient the controller used.
    #[default]
    WorstCase,
    /// Per component, the interval midpoint when it contains zero, else the
    /// bound nearest zero.
    Zero,
    /// Uniform samples from the box, reproducible from `seed`.
    SeededRandom { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    RaPhase,
    StabilizePhase,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::RaPhase => "ra_phase",
            Mode::StabilizePhase => "stabilize_phase",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutMode {
    Ra,
    Sa,
}

/// Output of a controller evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub u: Vec<f64>,
    /// Worst-case disturbance for the same gradient.
    pub d_worst: Vec<f64>,
    /// `pi_RA` only: no stored slice was non-positive at the state and the
    /// largest horizon was used.
    pub fallback: bool,
    /// `pi_RA` only: time-to-go of the slice used.
    pub time_to_go: f64,
}

/// `pi_RA`. `snapshots` must be ordered by increasing time-to-go.
pub fn controller_ra<D: Dynamics + ?Sized>(state: &[f64], snapshots: &[Snapshot], dyn_: &D) -> Result<Action> {
    let last = snapshots
        .last()
        .ok_or_else(|| Error::Domain("pi_RA needs at least one snapshot".into()))?;
    let (snap, fallback) = match snapshots.iter().find(|s| interpolate(&s.field, state) <= 0.0) {
        Some(s) => (s, false),
        None => (last, true),
    };
    let p = gradient_at(&snap.field, state);
    let (u, d_worst) = dyn_.optimal_inputs(state, &p);
    Ok(Action {
        u,
        d_worst,
        fallback,
        time_to_go: snap.time_to_go,
    })
}

/// `pi_H` from the R-CLVF gradient.
pub fn controller_h<D: Dynamics + ?Sized>(state: &[f64], rclvf: &RclvfResult, dyn_: &D) -> Result<Action> {
    let value = interpolate(&rclvf.field, state);
    if value >= rclvf.cap {
        return Err(Error::OutsideDomain { value, cap: rclvf.cap });
    }
    let p = gradient_at(&rclvf.field, state);
    let (u, d_worst) = dyn_.optimal_inputs(state, &p);
    Ok(Action {
        u,
        d_worst,
        fallback: false,
        time_to_go: 0.0,
    })
}

/// Value functions a rollout can draw on.
#[derive(Debug, Clone, Copy, Default)]
pub struct Artifacts<'a> {
    /// Finite-horizon slices for `pi_RA`, increasing time-to-go.
    pub snapshots: Option<&'a [Snapshot]>,
    /// Required in `sa` mode.
    pub rclvf: Option<&'a RclvfResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutSpec {
    pub dt: f64,
    pub t_end: f64,
}

/// A closed-loop rollout. Every per-time vector has one entry per recorded
/// time; the inputs at index `k` drive the step from `k` to `k + 1`, and the
/// inputs at the last time are computed but not applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    /// Reach-avoid (or stabilize-avoid) value in the reach phase, shifted
    /// R-CLVF in the stabilize phase.
    pub values: Vec<f64>,
    pub modes: Vec<Mode>,
    /// Some state left the grid box and was clamped for lookups.
    pub left_grid: bool,
    /// Steps where `pi_RA` fell back to the largest horizon.
    pub fallback_steps: usize,
    /// Time at which the stabilize phase began.
    pub switch_time: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Index of the first stabilize-phase entry.
    pub fn switch_index(&self) -> Option<usize> {
        self.modes.iter().position(|&m| m == Mode::StabilizePhase)
    }
}

fn sample_disturbance<D: Dynamics + ?Sized>(
    policy: DisturbancePolicy,
    dyn_: &D,
    worst: &[f64],
    rng: &mut Option<ChaCha8Rng>,
) -> Vec<f64> {
    let boxed = dyn_.disturbances();
    match policy {
        DisturbancePolicy::WorstCase => worst.to_vec(),
        DisturbancePolicy::Zero => (0..boxed.dim())
            .map(|j| {
                let (lo, hi) = (boxed.lower[j], boxed.upper[j]);
                if lo <= 0.0 && 0.0 <= hi {
                    0.5 * (lo + hi)
                } else if lo > 0.0 {
                    lo
                } else {
                    hi
                }
            })
            .collect(),
        DisturbancePolicy::SeededRandom { .. } => {
            let rng = rng.as_mut().expect("rng seeded for random policy");
            (0..boxed.dim())
                .map(|j| {
                    let (lo, hi) = (boxed.lower[j], boxed.upper[j]);
                    if hi > lo {
                        rng.gen_range(lo..=hi)
                    } else {
                        lo
                    }
                })
                .collect()
        }
    }
}

/// Simulates the closed loop from `x0` with steps of `spec.dt` until
/// `spec.t_end`.
pub fn rollout<D: Dynamics + ?Sized>(
    x0: &[f64],
    mode: RolloutMode,
    artifacts: Artifacts<'_>,
    dyn_: &D,
    policy: DisturbancePolicy,
    spec: RolloutSpec,
) -> Result<Trajectory> {
    if !(spec.dt > 0.0 && spec.t_end >= 0.0) {
        return Err(Error::Domain(format!(
            "rollout needs dt > 0 and t_end >= 0, got dt {} t_end {}",
            spec.dt, spec.t_end
        )));
    }
    if x0.len() != dyn_.n_dims() {
        return Err(Error::Domain(format!(
            "initial state has {} entries, dynamics have {}",
            x0.len(),
            dyn_.n_dims()
        )));
    }
    let snapshots = artifacts
        .snapshots
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Domain("rollout needs reach-avoid snapshots".into()))?;
    let rclvf = match mode {
        RolloutMode::Sa => {
            Some(artifacts.rclvf.ok_or_else(|| Error::Domain("sa rollout needs the R-CLVF".into()))?)
        }
        RolloutMode::Ra => None,
    };
    let value_field: &ScalarField = &snapshots[snapshots.len() - 1].field;
    let mut rng = match policy {
        DisturbancePolicy::SeededRandom { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };

    let steps = (spec.t_end / spec.dt).round() as usize;
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps + 1),
        disturbances: Vec::with_capacity(steps + 1),
        values: Vec::with_capacity(steps + 1),
        modes: Vec::with_capacity(steps + 1),
        left_grid: false,
        fallback_steps: 0,
        switch_time: None,
    };
    let mut x = x0.to_vec();
    let mut phase = Mode::RaPhase;
    for k in 0..=steps {
        let t = k as f64 * spec.dt;
        if let (Some(r), Mode::RaPhase) = (rclvf, phase) {
            if interpolate(&r.shifted_field, &x) <= 0.0 {
                phase = Mode::StabilizePhase;
                traj.switch_time = Some(t);
            }
        }
        let (action, (value, clamped)) = match phase {
            Mode::RaPhase => (
                controller_ra(&x, snapshots, dyn_)?,
                interpolate_flagged(value_field, &x),
            ),
            Mode::StabilizePhase => {
                let r = rclvf.expect("stabilize phase only in sa mode");
                (controller_h(&x, r, dyn_)?, interpolate_flagged(&r.shifted_field, &x))
            }
        };
        traj.left_grid |= clamped;
        if clamped {
            log::warn!("rollout state {x:?} left the grid at t = {t:.3}");
        }
        traj.fallback_steps += action.fallback as usize;
        let d = sample_disturbance(policy, dyn_, &action.d_worst, &mut rng);
        let next = flow(dyn_, &x, &action.u, &d, spec.dt);
        traj.times.push(t);
        traj.states.push(std::mem::replace(&mut x, next));
        traj.controls.push(action.u);
        traj.disturbances.push(d);
        traj.values.push(value);
        traj.modes.push(phase);
    }
    Ok(traj)
}

/// Independent rollouts from several initial states, in input order.
pub fn rollout_batch<D: Dynamics + ?Sized>(
    x0s: &[Vec<f64>],
    mode: RolloutMode,
    artifacts: Artifacts<'_>,
    dyn_: &D,
    policy: DisturbancePolicy,
    spec: RolloutSpec,
) -> Result<Vec<Trajectory>> {
    x0s.par_iter()
        .map(|x0| rollout(x0, mode, artifacts, dyn_, policy, spec))
        .collect()
}

/// Distance from `x` to the set a node mask represents: the points whose
/// nearest node is in the mask, i.e. the union of half-cell boxes centred on
/// the mask nodes. Measured on `dims` (periodic-aware); infinite when the
/// mask is empty.
pub fn mask_distance(grid: &Grid, mask: &[bool], x: &[f64], dims: &[usize]) -> f64 {
    let mut node = vec![0.0; grid.n_dims()];
    let mut best = f64::INFINITY;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        grid.node_into(i, &mut node);
        let sq: f64 = dims
            .iter()
            .map(|&d| {
                let gap = grid.distance(x, &node, &[d]) - 0.5 * grid.spacing()[d];
                gap.max(0.0).powi(2)
            })
            .sum();
        best = best.min(sq);
    }
    best.sqrt()
}

/// CSV with columns `t, x0.., u0.., d0.., value, mode`.
pub fn write_trajectory_csv_to<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    let n = traj.states.first().map_or(0, Vec::len);
    let m = traj.controls.first().map_or(0, Vec::len);
    let q = traj.disturbances.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend((0..q).map(|i| format!("d{i}")));
    header.extend(["value".to_string(), "mode".to_string()]);
    writeln!(w, "{}", header.join(","))?;
    for k in 0..traj.len() {
        let mut row: Vec<String> = vec![traj.times[k].to_string()];
        row.extend(traj.states[k].iter().map(f64::to_string));
        row.extend(traj.controls[k].iter().map(f64::to_string));
        row.extend(traj.disturbances[k].iter().map(f64::to_string));
        row.push(traj.values[k].to_string());
        row.push(traj.modes[k].as_str().to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_trajectory_csv(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_trajectory_csv_to(traj, &mut w)?;
    w.flush()?;
    Ok(())
}
