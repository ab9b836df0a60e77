//! Explicit time marching shared by the reach-avoid and R-CLVF solvers.
//!
//! Two monotone numerical Hamiltonians are available. Lax-Friedrichs
//! evaluates `H` on the central gradient and adds `alpha_i (r_i - l_i) / 2`.
//! The dimension-wise Godunov flux for `W' = H(DW)` takes, per dimension,
//! the max of `H(p e_i)` over `[l_i, r_i]` when `l_i <= r_i` and the min over
//! `[r_i, l_i]` otherwise; it needs a separable Hamiltonian and falls back to
//! Lax-Friedrichs at nodes where that fails.

use rayon::prelude::*;
use smallvec::smallvec;

use crate::dynamics::Dynamics;
use crate::grid::{node_one_sided, DimVec, Grid, Order};
use crate::hji::Flux;

/// Per-node dissipation coefficients and the resulting CFL data for one
/// grid/dynamics pair.
pub(crate) struct Marcher<'a, D: ?Sized> {
    pub grid: &'a Grid,
    pub dyn_: &'a D,
    pub order: Order,
    alpha: Vec<f64>,
    /// Nodes where the Godunov flux applies; empty for Lax-Friedrichs.
    godunov: Vec<bool>,
    /// `H(x, e_i)` and `H(x, -e_i)` per node and dimension. `H` is
    /// positively homogeneous in `p`, so these fix `H(p e_i)` for every `p`.
    axis_h: Vec<[f64; 2]>,
    /// `max over nodes of sum_i alpha_i / dx_i`
    pub rate: f64,
}

impl<'a, D: Dynamics + ?Sized> Marcher<'a, D> {
    pub fn new(grid: &'a Grid, dyn_: &'a D, order: Order) -> Self {
        Self::with_flux(grid, dyn_, order, Flux::LaxFriedrichs)
    }

    pub fn with_flux(grid: &'a Grid, dyn_: &'a D, order: Order, flux: Flux) -> Self {
        let n = grid.n_dims();
        let mut alpha = vec![0.0; grid.len() * n];
        alpha.par_chunks_mut(n).enumerate().for_each(|(i, a)| {
            let mut x: DimVec<f64> = smallvec![0.0; n];
            grid.node_into(i, &mut x);
            dyn_.dissipation_bounds(&x, a);
        });
        let rate = alpha
            .par_chunks(n)
            .map(|a| a.iter().zip(grid.spacing()).map(|(a, h)| a / h).sum::<f64>())
            .reduce(|| 0.0, f64::max);
        let godunov: Vec<bool> = match flux {
            Flux::LaxFriedrichs => vec![],
            Flux::Godunov => (0..grid.len())
                .into_par_iter()
                .map(|i| dyn_.is_separable(&grid.node(i)))
                .collect(),
        };
        let axis_h: Vec<[f64; 2]> = if godunov.is_empty() {
            vec![]
        } else {
            (0..grid.len() * n)
                .into_par_iter()
                .map(|k| {
                    let (i, d) = (k / n, k % n);
                    let x = grid.node(i);
                    let mut p: DimVec<f64> = smallvec![0.0; n];
                    p[d] = 1.0;
                    let plus = dyn_.hamiltonian(&x, &p);
                    p[d] = -1.0;
                    [plus, dyn_.hamiltonian(&x, &p)]
                })
                .collect()
        };
        let fallback = godunov.iter().filter(|&&g| !g).count();
        if fallback > 0 {
            log::warn!("Hamiltonian not separable at {fallback} nodes; Lax-Friedrichs used there");
        }
        Marcher {
            grid,
            dyn_,
            order,
            alpha,
            godunov,
            axis_h,
            rate,
        }
    }

    /// `cfl_factor / sum_i(alpha_i / dx_i)`, infinite when nothing moves.
    pub fn cfl_bound(&self, cfl_factor: f64) -> f64 {
        if self.rate > 0.0 {
            cfl_factor / self.rate
        } else {
            f64::INFINITY
        }
    }

    /// `out = H_LF(x, grad w) + growth * w` at every node.
    pub fn rhs(&self, w: &[f64], growth: f64, out: &mut [f64]) {
        let grid = self.grid;
        let n = grid.n_dims();
        let order = self.order;
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let mut l: DimVec<f64> = smallvec![0.0; n];
            let mut r: DimVec<f64> = smallvec![0.0; n];
            node_one_sided(grid, w, i, order, &mut l, &mut r);
            if self.godunov.get(i).copied().unwrap_or(false) {
                *o = self.godunov_flux(&self.axis_h[i * n..(i + 1) * n], &l, &r) + growth * w[i];
                return;
            }
            let mut x: DimVec<f64> = smallvec![0.0; n];
            grid.node_into(i, &mut x);
            let a = &self.alpha[i * n..(i + 1) * n];
            let mut diss = 0.0;
            for d in 0..n {
                diss += a[d] * (r[d] - l[d]) * 0.5;
                l[d] = 0.5 * (l[d] + r[d]);
            }
            *o = self.dyn_.hamiltonian(&x, &l) + diss + growth * w[i];
        });
    }

    fn godunov_flux(&self, axis_h: &[[f64; 2]], l: &[f64], r: &[f64]) -> f64 {
        let mut total = 0.0;
        for (d, k) in axis_h.iter().enumerate() {
            let h = |v: f64| if v >= 0.0 { v * k[0] } else { -v * k[1] };
            let (hl, hr) = (h(l[d]), h(r[d]));
            let straddles = l[d].min(r[d]) < 0.0 && l[d].max(r[d]) > 0.0;
            total += if l[d] <= r[d] {
                let m = hl.max(hr);
                if straddles { m.max(0.0) } else { m }
            } else {
                let m = hl.min(hr);
                if straddles { m.min(0.0) } else { m }
            };
        }
        total
    }

    /// One unclamped step of `w' = H_LF + growth * w`: forward Euler for
    /// first-order derivatives, TVD-RK3 for WENO5.
    pub fn advance(&self, w: &[f64], dt: f64, growth: f64, out: &mut [f64], scratch: &mut Scratch) {
        let len = w.len();
        scratch.ensure(len);
        match self.order {
            Order::First => {
                self.rhs(w, growth, &mut scratch.k);
                out.par_iter_mut()
                    .zip(w.par_iter().zip(scratch.k.par_iter()))
                    .for_each(|(o, (&v, &k))| *o = v + dt * k);
            }
            Order::Fifth => {
                let Scratch { k, s1, s2 } = scratch;
                self.rhs(w, growth, k);
                s1.par_iter_mut()
                    .zip(w.par_iter().zip(k.par_iter()))
                    .for_each(|(s, (&v, &k))| *s = v + dt * k);
                self.rhs(s1, growth, k);
                s2.par_iter_mut()
                    .zip(w.par_iter().zip(s1.par_iter().zip(k.par_iter())))
                    .for_each(|(s, (&v, (&a, &k)))| *s = 0.75 * v + 0.25 * (a + dt * k));
                self.rhs(s2, growth, k);
                out.par_iter_mut()
                    .zip(w.par_iter().zip(s2.par_iter().zip(k.par_iter())))
                    .for_each(|(o, (&v, (&b, &k)))| *o = v / 3.0 + 2.0 / 3.0 * (b + dt * k));
            }
        }
    }
}

#[derive(Default)]
pub(crate) struct Scratch {
    k: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Scratch {
    fn ensure(&mut self, len: usize) {
        for v in [&mut self.k, &mut self.s1, &mut self.s2] {
            if v.len() != len {
                v.resize(len, 0.0);
            }
        }
    }
}
