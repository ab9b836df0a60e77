use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::interp::stencil;
use super::{DimVec, Grid, ScalarField};

/// Spatial derivative order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Order {
    /// One-sided first-order differences.
    #[default]
    First,
    /// Fifth-order WENO.
    Fifth,
}

impl TryFrom<u8> for Order {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Order::First),
            5 => Ok(Order::Fifth),
            other => Err(format!("derivative order must be 1 or 5, got {other}")),
        }
    }
}

impl From<Order> for u8 {
    fn from(o: Order) -> u8 {
        match o {
            Order::First => 1,
            Order::Fifth => 5,
        }
    }
}

/// Left and right one-sided derivatives at every node, node-major
/// (`left[node * n_dims + dim]`).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    n_dims: usize,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl GradientPair {
    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn left_at(&self, node: usize, dim: usize) -> f64 {
        self.left[node * self.n_dims + dim]
    }

    pub fn right_at(&self, node: usize, dim: usize) -> f64 {
        self.right[node * self.n_dims + dim]
    }
}

/// Value at offset `k` from node `flat` along `dim`, with periodic wrap or
/// linear-extrapolation ghost cells.
#[inline]
pub(crate) fn line_value(grid: &Grid, values: &[f64], flat: usize, i: usize, dim: usize, k: isize) -> f64 {
    let n = grid.counts()[dim] as isize;
    let stride = grid.strides()[dim] as isize;
    let j = i as isize + k;
    let base = flat as isize - i as isize * stride;
    if grid.periodic()[dim] {
        let jw = j.rem_euclid(n);
        return values[(base + jw * stride) as usize];
    }
    if j < 0 {
        let v0 = values[base as usize];
        let v1 = values[(base + stride) as usize];
        v0 + j as f64 * (v1 - v0)
    } else if j >= n {
        let vl = values[(base + (n - 1) * stride) as usize];
        let vp = values[(base + (n - 2) * stride) as usize];
        vl + (j - (n - 1)) as f64 * (vl - vp)
    } else {
        values[(base + j * stride) as usize]
    }
}

fn weno5(v1: f64, v2: f64, v3: f64, v4: f64, v5: f64) -> f64 {
    let s1 = 13.0 / 12.0 * (v1 - 2.0 * v2 + v3).powi(2) + 0.25 * (v1 - 4.0 * v2 + 3.0 * v3).powi(2);
    let s2 = 13.0 / 12.0 * (v2 - 2.0 * v3 + v4).powi(2) + 0.25 * (v2 - v4).powi(2);
    let s3 = 13.0 / 12.0 * (v3 - 2.0 * v4 + v5).powi(2) + 0.25 * (3.0 * v3 - 4.0 * v4 + v5).powi(2);
    let vmax = [v1, v2, v3, v4, v5].iter().fold(0.0f64, |m, v| m.max(v * v));
    let eps = 1e-6 * vmax + 1e-99;
    let a1 = 0.1 / (s1 + eps).powi(2);
    let a2 = 0.6 / (s2 + eps).powi(2);
    let a3 = 0.3 / (s3 + eps).powi(2);
    let sum = a1 + a2 + a3;
    let p1 = v1 / 3.0 - 7.0 / 6.0 * v2 + 11.0 / 6.0 * v3;
    let p2 = -v2 / 6.0 + 5.0 / 6.0 * v3 + v4 / 3.0;
    let p3 = v3 / 3.0 + 5.0 / 6.0 * v4 - v5 / 6.0;
    (a1 * p1 + a2 * p2 + a3 * p3) / sum
}

/// One-sided derivatives at a single node.
#[inline]
pub(crate) fn node_one_sided(
    grid: &Grid,
    values: &[f64],
    flat: usize,
    order: Order,
    left: &mut [f64],
    right: &mut [f64],
) {
    for dim in 0..grid.n_dims() {
        let h = grid.spacing()[dim];
        let i = grid.coord_index(flat, dim);
        let at = |k: isize| line_value(grid, values, flat, i, dim, k);
        match order {
            Order::First => {
                let v0 = values[flat];
                left[dim] = (v0 - at(-1)) / h;
                right[dim] = (at(1) - v0) / h;
            }
            Order::Fifth => {
                let v: [f64; 7] = [at(-3), at(-2), at(-1), values[flat], at(1), at(2), at(3)];
                // d[m] = (v[m+1] - v[m]) / h, i.e. D+ at offset m-3
                let mut d = [0.0; 6];
                for m in 0..6 {
                    d[m] = (v[m + 1] - v[m]) / h;
                }
                left[dim] = weno5(d[0], d[1], d[2], d[3], d[4]);
                right[dim] = weno5(d[5], d[4], d[3], d[2], d[1]);
            }
        }
    }
}

/// Left/right approximations of the gradient at every node.
pub fn upwind_gradients(field: &ScalarField, order: Order) -> GradientPair {
    let grid = field.grid();
    let n = grid.n_dims();
    let mut left = vec![0.0; field.len() * n];
    let mut right = vec![0.0; field.len() * n];
    left.par_chunks_mut(n)
        .zip(right.par_chunks_mut(n))
        .enumerate()
        .for_each(|(flat, (l, r))| node_one_sided(grid, field.values(), flat, order, l, r));
    GradientPair { n_dims: n, left, right }
}

/// Central-difference gradient at a node; one-sided on non-periodic boundaries.
pub fn central_gradient_at_node(field: &ScalarField, flat: usize, out: &mut [f64]) {
    let grid = field.grid();
    for (dim, o) in out.iter_mut().enumerate().take(grid.n_dims()) {
        let i = grid.coord_index(flat, dim);
        let h = grid.spacing()[dim];
        let vp = line_value(grid, field.values(), flat, i, dim, 1);
        let vm = line_value(grid, field.values(), flat, i, dim, -1);
        *o = (vp - vm) / (2.0 * h);
    }
}

/// Gradient at an arbitrary point: central differences at the surrounding
/// nodes, multilinearly interpolated.
pub fn gradient_at(field: &ScalarField, point: &[f64]) -> Vec<f64> {
    let n = field.grid().n_dims();
    let (st, _) = stencil(field.grid(), point);
    let mut out = vec![0.0; n];
    let mut g: DimVec<f64> = smallvec::smallvec![0.0; n];
    for &(node, w) in &st {
        central_gradient_at_node(field, node, &mut g);
        for d in 0..n {
            out[d] += w * g[d];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn grid1(lo: f64, hi: f64, n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(&[(lo, hi)], &[n], &[false]).unwrap())
    }

    #[test]
    fn linear_field_both_orders() {
        let g = grid1(0.0, 1.0, 5);
        let f = ScalarField::from_fn(g, |x| x[0]);
        for order in [Order::First, Order::Fifth] {
            let gp = upwind_gradients(&f, order);
            for node in 0..5 {
                assert!((gp.left_at(node, 0) - 1.0).abs() < 1e-10, "{order:?}");
                assert!((gp.right_at(node, 0) - 1.0).abs() < 1e-10, "{order:?}");
            }
        }
    }

    #[test]
    fn constant_field_zero() {
        let g = Arc::new(Grid::new(&[(0.0, 1.0), (0.0, 1.0)], &[6, 7], &[false, true]).unwrap());
        let f = ScalarField::constant(g, 3.5);
        for order in [Order::First, Order::Fifth] {
            let gp = upwind_gradients(&f, order);
            assert!(gp.left.iter().chain(&gp.right).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn abs_kink_first_order() {
        let g = grid1(-1.0, 1.0, 9);
        let f = ScalarField::from_fn(g, |x| x[0].abs());
        let gp = upwind_gradients(&f, Order::First);
        assert_eq!(gp.left_at(4, 0), -1.0);
        assert_eq!(gp.right_at(4, 0), 1.0);
    }

    #[test]
    fn weno_smooth_accuracy() {
        let g = Arc::new(Grid::new(&[(0.0, 2.0 * std::f64::consts::PI)], &[64], &[true]).unwrap());
        let f = ScalarField::from_fn(g.clone(), |x| x[0].sin());
        let gp5 = upwind_gradients(&f, Order::Fifth);
        let gp1 = upwind_gradients(&f, Order::First);
        let err = |gp: &GradientPair| {
            (0..g.len())
                .map(|i| (gp.left_at(i, 0) - g.node(i)[0].cos()).abs())
                .fold(0.0, f64::max)
        };
        assert!(err(&gp5) < 1e-5);
        assert!(err(&gp1) > 1e-2);
    }

    #[test]
    fn central_gradient_interpolates() {
        let g = Arc::new(Grid::new(&[(0.0, 1.0), (0.0, 1.0)], &[5, 5], &[false, false]).unwrap());
        let f = ScalarField::from_fn(g, |x| 3.0 * x[0] - 2.0 * x[1] + 1.0);
        let grad = gradient_at(&f, &[0.33, 0.71]);
        assert!((grad[0] - 3.0).abs() < 1e-12);
        assert!((grad[1] + 2.0).abs() < 1e-12);
    }
}
