//! Cartesian grids and the scalar fields that live on them.
//!
//! Nodes are stored row-major with dimension 0 varying slowest. Periodic
//! dimensions do not duplicate the endpoint: node `count` is node `0`.

mod derivatives;
mod format;
pub(crate) mod interp;

use std::sync::Arc;

use rayon::prelude::*;
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub(crate) use derivatives::node_one_sided;
pub use derivatives::{central_gradient_at_node, gradient_at, upwind_gradients, GradientPair, Order};
pub use format::{read_field, read_field_from, write_field, write_field_to, MAGIC, VERSION};
pub use interp::{interpolate, interpolate_flagged};

/// Small inline buffer for per-dimension scratch data.
pub(crate) type DimVec<T> = SmallVec<[T; 6]>;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    counts: Vec<usize>,
    periodic: Vec<bool>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    /// Builds a grid from per-dimension `(lower, upper)` bounds, node counts and
    /// periodicity flags.
    pub fn new(bounds: &[(f64, f64)], counts: &[usize], periodic: &[bool]) -> Result<Grid> {
        let n = bounds.len();
        if n == 0 {
            return Err(Error::Domain("grid needs at least one dimension".into()));
        }
        if counts.len() != n || periodic.len() != n {
            return Err(Error::Domain(format!(
                "bounds, counts and periodic must have equal length (got {}, {}, {})",
                n,
                counts.len(),
                periodic.len()
            )));
        }
        let mut spacing = Vec::with_capacity(n);
        for i in 0..n {
            let (lo, hi) = bounds[i];
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(Error::Domain(format!(
                    "bounds of dimension {i} are not ordered: ({lo}, {hi})"
                )));
            }
            if counts[i] < 3 {
                return Err(Error::Domain(format!(
                    "dimension {i} needs at least 3 nodes, got {}",
                    counts[i]
                )));
            }
            let cells = if periodic[i] { counts[i] } else { counts[i] - 1 };
            spacing.push((hi - lo) / cells as f64);
        }
        let mut strides = vec![1usize; n];
        for i in (0..n - 1).rev() {
            strides[i] = strides[i + 1] * counts[i + 1];
        }
        Ok(Grid {
            lower: bounds.iter().map(|b| b.0).collect(),
            upper: bounds.iter().map(|b| b.1).collect(),
            counts: counts.to_vec(),
            periodic: periodic.to_vec(),
            spacing,
            len: counts.iter().product(),
            strides,
        })
    }

    pub fn n_dims(&self) -> usize {
        self.counts.len()
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn period(&self, dim: usize) -> f64 {
        self.upper[dim] - self.lower[dim]
    }

    /// Index of dimension `dim` for the node at flat index `flat`.
    #[inline]
    pub fn coord_index(&self, flat: usize, dim: usize) -> usize {
        (flat / self.strides[dim]) % self.counts[dim]
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Writes the coordinates of node `flat` into `out`.
    #[inline]
    pub fn node_into(&self, flat: usize, out: &mut [f64]) {
        for (d, o) in out.iter_mut().enumerate().take(self.n_dims()) {
            *o = self.lower[d] + self.coord_index(flat, d) as f64 * self.spacing[d];
        }
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n_dims()];
        self.node_into(flat, &mut x);
        x
    }

    /// Maps periodic coordinates into `[lower, upper)`; leaves the others alone.
    pub fn wrap_point(&self, x: &mut [f64]) {
        for d in 0..self.n_dims() {
            if self.periodic[d] {
                let p = self.period(d);
                x[d] = self.lower[d] + (x[d] - self.lower[d]).rem_euclid(p);
            }
        }
    }

    /// True when `x` lies in the box on every non-periodic dimension.
    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.n_dims()).all(|d| self.periodic[d] || (x[d] >= self.lower[d] && x[d] <= self.upper[d]))
    }

    /// Distance between two states, measured the short way round on periodic
    /// dimensions and restricted to `dims`.
    pub fn distance(&self, a: &[f64], b: &[f64], dims: &[usize]) -> f64 {
        dims.iter()
            .map(|&d| {
                let mut diff = (a[d] - b[d]).abs();
                if self.periodic[d] {
                    let p = self.period(d);
                    diff = diff.rem_euclid(p);
                    diff = diff.min(p - diff);
                }
                diff * diff
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// One value per node of a grid.
#[derive(Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("counts", &self.grid.counts())
            .field("min", &self.min_value())
            .field("max", &self.max_value())
            .finish()
    }
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.len() {
            return Err(Error::Domain(format!(
                "field has {} values but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, value: f64) -> ScalarField {
        let values = vec![value; grid.len()];
        ScalarField { grid, values }
    }

    /// Samples `f` at every node.
    pub fn from_fn<F>(grid: Arc<Grid>, f: F) -> ScalarField
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let n = grid.n_dims();
        let values = (0..grid.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |x, i| {
                    grid.node_into(i, x);
                    f(x)
                },
            )
            .collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub(crate) fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// A new field on the same grid with values from `f`.
    pub fn with_values(&self, values: Vec<f64>) -> ScalarField {
        assert_eq!(values.len(), self.values.len());
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> ScalarField {
        self.with_values(self.values.par_iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<ScalarField> {
        self.check_same_grid(other)?;
        Ok(self.with_values(
            self.values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sup-norm of `self - other`.
    pub fn sup_distance(&self, other: &ScalarField) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(sup_diff(&self.values, &other.values))
    }

    /// Index of the first non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    /// Mask of nodes with value strictly below zero.
    pub fn negative_mask(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v < 0.0).collect()
    }
}

/// Max of `|a_i - b_i|`; order-independent, so parallel reduction is deterministic.
pub(crate) fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.par_iter()
        .zip(b.par_iter())
        .map(|(x, y)| (x - y).abs())
        .reduce(|| 0.0, f64::max)
}
