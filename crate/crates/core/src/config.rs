//! TOML experiment files.
//!
//! One file describes a whole experiment: system, grid, target and
//! constraint, discount rates, solver settings, the stabilization seed and
//! rollouts. Bundled examples live in `configs/`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::{DisturbancePolicy, RolloutMode, RolloutSpec};
use crate::dynamics::{DoubleIntegrator2d, Dubins3d, Dynamics, DynamicsSpec, Integrator1d, LinearSystem};
use crate::error::{Error, Result};
use crate::geometry::ImplicitSurface;
use crate::grid::{Grid, Order};
use crate::hji::{Flux, SolverConfig};
use crate::rclvf::{RclvfConfig, Seed};

/// Built-in systems, selected by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemConfig {
    Dubins3d(Dubins3d),
    Integrator1d(Integrator1d),
    DoubleIntegrator2d(DoubleIntegrator2d),
    Linear(LinearSystem),
}

impl SystemConfig {
    pub fn build(&self) -> Result<DynamicsSpec> {
        match self {
            SystemConfig::Dubins3d(s) => s.build(),
            SystemConfig::Integrator1d(s) => s.build(),
            SystemConfig::DoubleIntegrator2d(s) => s.build(),
            SystemConfig::Linear(s) => s.build(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
    /// All false when omitted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub periodic: Vec<bool>,
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.lower.len();
        if n == 0 {
            return Err(Error::Config("grid.lower: at least one dimension is required".into()));
        }
        for (name, len) in [("grid.upper", self.upper.len()), ("grid.counts", self.counts.len())] {
            if len != n {
                return Err(Error::Config(format!("{name}: expected {n} entries, found {len}")));
            }
        }
        if !self.periodic.is_empty() && self.periodic.len() != n {
            return Err(Error::Config(format!(
                "grid.periodic: expected {n} entries, found {}",
                self.periodic.len()
            )));
        }
        for d in 0..n {
            let (lo, hi) = (self.lower[d], self.upper[d]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "grid.lower[{d}] = {lo} must be finite and below grid.upper[{d}] = {hi}"
                )));
            }
            if self.counts[d] < 2 {
                return Err(Error::Config(format!("grid.counts[{d}] must be at least 2")));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<Grid>> {
        self.validate()?;
        let bounds: Vec<(f64, f64)> = self.lower.iter().copied().zip(self.upper.iter().copied()).collect();
        let periodic = if self.periodic.is_empty() {
            vec![false; bounds.len()]
        } else {
            self.periodic.clone()
        };
        Ok(Arc::new(Grid::new(&bounds, &self.counts, &periodic)?))
    }
}

/// Everything in [`SolverConfig`] except `gamma`, which sits at the top
/// level of the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub cfl_factor: f64,
    pub convergence_tol: f64,
    pub max_horizon: f64,
    pub derivative_order: Order,
    pub snapshot_interval: f64,
    pub flux: Flux,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        let d = SolverConfig::default();
        SchemeConfig {
            cfl_factor: d.cfl_factor,
            convergence_tol: d.convergence_tol,
            max_horizon: d.max_horizon,
            derivative_order: d.derivative_order,
            snapshot_interval: d.snapshot_interval,
            flux: d.flux,
        }
    }
}

/// [`RclvfConfig`] without `gamma_clvf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RclvfSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level_tol: Option<f64>,
    pub cap_factor: f64,
    pub flux: Flux,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derivative_order: Option<Order>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub srcis_horizon: Option<f64>,
}

impl Default for RclvfSection {
    fn default() -> Self {
        let d = RclvfConfig::default();
        RclvfSection {
            level_tol: d.level_tol,
            cap_factor: d.cap_factor,
            flux: d.flux,
            derivative_order: d.derivative_order,
            srcis_horizon: d.srcis_horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutConfig {
    pub x0: Vec<Vec<f64>>,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub disturbance: DisturbancePolicy,
    #[serde(default = "default_modes")]
    pub modes: Vec<RolloutMode>,
}

fn default_modes() -> Vec<RolloutMode> {
    vec![RolloutMode::Ra]
}

impl RolloutConfig {
    pub fn spec(&self) -> RolloutSpec {
        RolloutSpec {
            dt: self.dt,
            t_end: self.t_end,
        }
    }
}

fn default_gamma_clvf() -> f64 {
    RclvfConfig::default().gamma_clvf
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub output_dir: PathBuf,
    /// Reach-avoid discount rate.
    pub gamma: f64,
    #[serde(default = "default_gamma_clvf")]
    pub gamma_clvf: f64,
    pub system: SystemConfig,
    pub grid: GridConfig,
    /// Negative inside the target.
    pub target: ImplicitSurface,
    /// Negative on safe states.
    pub constraint: ImplicitSurface,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stabilize: Option<Seed>,
    #[serde(default)]
    pub solver: SchemeConfig,
    #[serde(default)]
    pub rclvf: RclvfSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout: Option<RolloutConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str| {
            let name = name.to_string();
            move |e: Error| Error::Config(format!("{name}: {}", e.root()))
        };
        self.grid.validate()?;
        let n = self.grid.lower.len();
        let dyn_ = self.system.build().map_err(field("system"))?;
        if dyn_.n_dims() != n {
            return Err(Error::Config(format!(
                "system: {} has {} states but the grid has {n} dimensions",
                dyn_.name(),
                dyn_.n_dims()
            )));
        }
        for (name, surface) in [("target", &self.target), ("constraint", &self.constraint)] {
            surface.validate().map_err(field(name))?;
            if surface.max_dim().is_some_and(|d| d >= n) {
                return Err(Error::Config(format!("{name}: refers to a dimension beyond the grid")));
            }
        }
        self.solver_config().validate().map_err(field("solver"))?;
        self.rclvf_config().validate().map_err(field("rclvf"))?;
        if let Some(seed) = &self.stabilize {
            if seed.dims.iter().any(|&d| d >= n) {
                return Err(Error::Config("stabilize.dims: dimension beyond the grid".into()));
            }
            seed.surface(0.0).map_err(field("stabilize"))?;
        }
        if let Some(r) = &self.rollout {
            if !(r.dt > 0.0 && r.dt.is_finite()) {
                return Err(Error::Config(format!("rollout.dt must be positive, got {}", r.dt)));
            }
            if !(r.t_end >= 0.0 && r.t_end.is_finite()) {
                return Err(Error::Config(format!("rollout.t_end must be nonnegative, got {}", r.t_end)));
            }
            if let Some((k, x)) = r.x0.iter().enumerate().find(|(_, x)| x.len() != n) {
                return Err(Error::Config(format!("rollout.x0[{k}] has {} entries, expected {n}", x.len())));
            }
            if r.modes.contains(&RolloutMode::Sa) && self.stabilize.is_none() {
                return Err(Error::Config("rollout.modes: sa rollouts need a [stabilize] seed".into()));
            }
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            gamma: self.gamma,
            cfl_factor: s.cfl_factor,
            convergence_tol: s.convergence_tol,
            max_horizon: s.max_horizon,
            derivative_order: s.derivative_order,
            snapshot_interval: s.snapshot_interval,
            flux: s.flux,
        }
    }

    pub fn rclvf_config(&self) -> RclvfConfig {
        let r = &self.rclvf;
        RclvfConfig {
            gamma_clvf: self.gamma_clvf,
            level_tol: r.level_tol,
            cap_factor: r.cap_factor,
            flux: r.flux,
            derivative_order: r.derivative_order,
            srcis_horizon: r.srcis_horizon,
        }
    }
}
