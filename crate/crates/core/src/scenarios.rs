//! Ready-made problem setups: the 1D integrator used for analytic checks and
//! the Dubins car with a disk target and three obstacles.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::dynamics::{Dubins3d, DynamicsSpec, Integrator1d};
use crate::geometry::ImplicitSurface;
use crate::grid::Grid;

/// A grid, dynamics, target and constraint, plus the stabilization seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub grid: Arc<Grid>,
    pub dynamics: DynamicsSpec,
    /// Negative inside the target.
    pub target: ImplicitSurface,
    /// Negative on safe states.
    pub constraint: ImplicitSurface,
    pub stabilize_point: Vec<f64>,
    /// State coordinates entering `||x - p||`.
    pub stabilize_dims: Vec<usize>,
}

/// `x' = u + d` on `[-3, 3]`, `u in [-1, 1]`, `d in [-0.2, 0.2]`; target
/// `|x| <= 0.5`, obstacle `x in [1, 2]`, stabilize at 0.
pub fn integrator1d(nodes: usize) -> Scenario {
    Scenario {
        grid: Arc::new(Grid::new(&[(-3.0, 3.0)], &[nodes], &[false]).expect("valid grid")),
        dynamics: Integrator1d::default().build().expect("valid dynamics"),
        target: ImplicitSurface::sphere(&[0.0], 0.5, &[0]).expect("valid target"),
        constraint: ImplicitSurface::rectangle(&[1.5], &[0.5], &[0])
            .expect("valid obstacle")
            .complement(),
        stabilize_point: vec![0.0],
        stabilize_dims: vec![0],
    }
}

/// Obstacle functions of the Dubins scene, each positive inside its obstacle.
pub fn dubins_obstacles() -> Vec<ImplicitSurface> {
    vec![
        ImplicitSurface::circle(&[-2.0, -2.0], 1.0, &[0, 1]).expect("valid").complement(),
        ImplicitSurface::circle(&[3.0, -3.0], 1.0, &[0, 1]).expect("valid").complement(),
        ImplicitSurface::box_obstacle(&[1.0, 0.5], &[2.0, 1.5], &[0, 1]).expect("valid"),
    ]
}

/// Dubins car on `[-5, 5]^2 x [-pi, pi)`. The constraint is the pointwise
/// max of the obstacle functions, so it is negative exactly outside every
/// obstacle.
pub fn dubins(counts: [usize; 3]) -> Scenario {
    Scenario {
        grid: Arc::new(
            Grid::new(&[(-5.0, 5.0), (-5.0, 5.0), (-PI, PI)], &counts, &[false, false, true]).expect("valid grid"),
        ),
        dynamics: Dubins3d::default().build().expect("valid dynamics"),
        target: ImplicitSurface::circle(&[3.5, 3.5], 1.0, &[0, 1]).expect("valid target"),
        constraint: ImplicitSurface::Intersection { of: dubins_obstacles() },
        stabilize_point: vec![3.5, 3.5, 0.0],
        stabilize_dims: vec![0, 1],
    }
}
