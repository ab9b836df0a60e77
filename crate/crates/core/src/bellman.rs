//! Semi-Lagrangian Bellman backup and value iteration.
//!
//! One backup over a step `dt` with inputs held constant:
//!
//! ```text
//! B[V](x) = max_d min_u min{ max(l(x), c(x)), max(e^{-gamma dt} V(x'), c(x)) }
//! ```
//!
//! where `x'` is the RK4 endpoint of the flow and `V(x')` is multilinear
//! interpolation. The operator is a contraction with modulus `e^{-gamma dt}`.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{flow, Dynamics};
use crate::error::{Error, Result};
use crate::grid::interp::{apply_stencil, stencil};
use crate::grid::{Grid, ScalarField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackupConfig {
    pub dt: f64,
    pub gamma: f64,
    /// Samples per control channel, box endpoints included.
    pub control_samples: usize,
    /// Samples per disturbance channel, box endpoints included.
    pub disturbance_samples: usize,
}

impl Default for BackupConfig {
    fn default() -> Self {
        BackupConfig {
            dt: 0.05,
            gamma: 0.1,
            control_samples: 3,
            disturbance_samples: 3,
        }
    }
}

impl BackupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain(format!("backup dt must be positive, got {}", self.dt)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.control_samples < 2 || self.disturbance_samples < 2 {
            return Err(Error::Domain("input sample counts must be at least 2".into()));
        }
        Ok(())
    }

    /// `e^{-gamma dt}`.
    pub fn modulus(&self) -> f64 {
        (-self.gamma * self.dt).exp()
    }
}

/// The backup with every flow endpoint and its interpolation stencil
/// computed once. Memory is `nodes x |U samples| x |D samples| x 2^n`
/// stencil entries, so this is meant for small grids.
pub struct BackupOperator {
    grid: Arc<Grid>,
    stop: Vec<f64>,
    c: Vec<f64>,
    n_u: usize,
    n_d: usize,
    /// Start of each (node, d, u) stencil in `entries`.
    offsets: Vec<usize>,
    entries: Vec<(usize, f64)>,
    discount: f64,
}

impl BackupOperator {
    pub fn new<D: Dynamics + ?Sized>(
        ell: &ScalarField,
        c: &ScalarField,
        dyn_: &D,
        cfg: &BackupConfig,
    ) -> Result<BackupOperator> {
        cfg.validate()?;
        ell.check_same_grid(c)?;
        let grid = ell.grid().clone();
        if dyn_.n_dims() != grid.n_dims() {
            return Err(Error::Domain(format!(
                "dynamics have {} states but grid has {} dimensions",
                dyn_.n_dims(),
                grid.n_dims()
            )));
        }
        let us = dyn_.controls().samples(&vec![cfg.control_samples; dyn_.controls().dim()]);
        let ds = dyn_.disturbances().samples(&vec![cfg.disturbance_samples; dyn_.disturbances().dim()]);
        let per_node: Vec<Vec<Vec<(usize, f64)>>> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let x = grid.node(i);
                let mut out = Vec::with_capacity(us.len() * ds.len());
                for d in &ds {
                    for u in &us {
                        let y = flow(dyn_, &x, u, d, cfg.dt);
                        out.push(stencil(&grid, &y).0.into_vec());
                    }
                }
                out
            })
            .collect();
        let mut offsets = Vec::with_capacity(grid.len() * us.len() * ds.len() + 1);
        let mut entries = Vec::new();
        for st in per_node.into_iter().flatten() {
            offsets.push(entries.len());
            entries.extend(st);
        }
        offsets.push(entries.len());
        Ok(BackupOperator {
            stop: ell.values().iter().zip(c.values()).map(|(l, c)| l.max(*c)).collect(),
            c: c.values().to_vec(),
            grid,
            n_u: us.len(),
            n_d: ds.len(),
            offsets,
            entries,
            discount: cfg.modulus(),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn modulus(&self) -> f64 {
        self.discount
    }

    pub fn apply(&self, v: &ScalarField) -> Result<ScalarField> {
        if **v.grid() != *self.grid {
            return Err(Error::GridMismatch);
        }
        let mut out = vec![0.0; v.len()];
        self.apply_into(v.values(), &mut out);
        Ok(v.with_values(out))
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let per_node = self.n_u * self.n_d;
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let (stop, c) = (self.stop[i], self.c[i]);
            let mut best_d = f64::NEG_INFINITY;
            for d in 0..self.n_d {
                let mut best_u = f64::INFINITY;
                for u in 0..self.n_u {
                    let k = i * per_node + d * self.n_u + u;
                    let st = &self.entries[self.offsets[k]..self.offsets[k + 1]];
                    let cont = (self.discount * apply_stencil(v, st)).max(c);
                    best_u = best_u.min(stop.min(cont));
                }
                best_d = best_d.max(best_u);
            }
            *o = best_d;
        });
    }
}

/// One backup of `v`.
pub fn bellman_backup<D: Dynamics + ?Sized>(
    v: &ScalarField,
    ell: &ScalarField,
    c: &ScalarField,
    dyn_: &D,
    cfg: &BackupConfig,
) -> Result<ScalarField> {
    v.check_same_grid(ell)?;
    BackupOperator::new(ell, c, dyn_, cfg)?.apply(v)
}

/// Iterates the backup from `v0` until the sup-norm change drops below
/// `tol`. Returns the final field and the per-iteration changes.
pub fn value_iteration<D: Dynamics + ?Sized>(
    v0: &ScalarField,
    ell: &ScalarField,
    c: &ScalarField,
    dyn_: &D,
    cfg: &BackupConfig,
    tol: f64,
    max_iters: usize,
) -> Result<(ScalarField, Vec<f64>)> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    v0.check_same_grid(ell)?;
    let op = BackupOperator::new(ell, c, dyn_, cfg)?;
    let mut v = v0.values().to_vec();
    let mut next = vec![0.0; v.len()];
    let mut deltas = Vec::new();
    for _ in 0..max_iters {
        op.apply_into(&v, &mut next);
        let delta = crate::grid::sup_diff(&next, &v);
        std::mem::swap(&mut v, &mut next);
        deltas.push(delta);
        if delta < tol {
            log::info!("value iteration converged after {} iterations", deltas.len());
            return Ok((v0.with_values(v), deltas));
        }
    }
    Err(Error::NoConvergence {
        reason: format!(
            "value iteration: delta {:.3e} after {max_iters} iterations",
            deltas.last().copied().unwrap_or(f64::NAN)
        ),
        partial: Some(Box::new(v0.with_values(v))),
    })
}

/// `(||B V1 - B V2||, e^{-gamma dt} ||V1 - V2||)`.
pub fn contraction_check<D: Dynamics + ?Sized>(
    v1: &ScalarField,
    v2: &ScalarField,
    ell: &ScalarField,
    c: &ScalarField,
    dyn_: &D,
    cfg: &BackupConfig,
) -> Result<(f64, f64)> {
    v1.check_same_grid(v2)?;
    v1.check_same_grid(ell)?;
    let op = BackupOperator::new(ell, c, dyn_, cfg)?;
    let lhs = op.apply(v1)?.sup_distance(&op.apply(v2)?)?;
    Ok((lhs, op.modulus() * v1.sup_distance(v2)?))
}

/// `delta_{k} / delta_{k-1}`, with `NaN` for the first entry.
pub fn delta_ratios(deltas: &[f64]) -> Vec<f64> {
    (0..deltas.len())
        .map(|k| if k == 0 { f64::NAN } else { deltas[k] / deltas[k - 1] })
        .collect()
}

/// CSV with columns `iteration,delta,ratio`; the first ratio is empty.
pub fn write_deltas_csv_to<W: Write>(deltas: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "iteration,delta,ratio")?;
    for (k, (d, r)) in deltas.iter().zip(delta_ratios(deltas)).enumerate() {
        if r.is_nan() {
            writeln!(w, "{},{:e},", k + 1, d)?;
        } else {
            writeln!(w, "{},{:e},{:e}", k + 1, d, r)?;
        }
    }
    Ok(())
}

pub fn write_deltas_csv(path: impl AsRef<Path>, deltas: &[f64]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_deltas_csv_to(deltas, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Integrator1d;
    use crate::geometry::sample_to_field;
    use crate::scenarios::integrator1d;

    fn cfg(gamma: f64, dt: f64) -> BackupConfig {
        BackupConfig {
            gamma,
            dt,
            ..Default::default()
        }
    }

    #[test]
    fn constant_fields_are_fixed() {
        let s = integrator1d(41);
        let m1 = ScalarField::constant(s.grid.clone(), -1.0);
        let out = bellman_backup(&m1, &m1, &m1, &s.dynamics, &cfg(0.1, 0.1)).unwrap();
        assert!(out.values().iter().all(|&v| v == -1.0));
    }

    #[test]
    fn constraint_dominates() {
        let s = integrator1d(41);
        let ell = ScalarField::from_fn(s.grid.clone(), |x| x[0].sin());
        let c = ScalarField::constant(s.grid.clone(), 2.0);
        let v = ScalarField::from_fn(s.grid.clone(), |x| -x[0]);
        let out = bellman_backup(&v, &ell, &c, &s.dynamics, &cfg(0.1, 0.1)).unwrap();
        assert!(out.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn deterministic_and_monotone() {
        let s = integrator1d(41);
        let ell = sample_to_field(&s.target, &s.grid).unwrap();
        let c = sample_to_field(&s.constraint, &s.grid).unwrap();
        let v1 = ScalarField::from_fn(s.grid.clone(), |x| (2.0 * x[0]).cos());
        let v2 = v1.map(|v| v + 0.3);
        let op = BackupOperator::new(&ell, &c, &s.dynamics, &cfg(0.5, 0.2)).unwrap();
        let (b1, b2) = (op.apply(&v1).unwrap(), op.apply(&v2).unwrap());
        assert_eq!(b1, op.apply(&v1.clone()).unwrap());
        assert!(b1.values().iter().zip(b2.values()).all(|(a, b)| a <= b));
        let (lhs, rhs) = contraction_check(&v1, &v2, &ell, &c, &s.dynamics, &cfg(0.5, 0.2)).unwrap();
        assert!(lhs <= rhs + 1e-12 && rhs <= 0.3 * (-0.1f64).exp() + 1e-12);
        let (z, _) = contraction_check(&v1, &v1, &ell, &c, &s.dynamics, &cfg(0.5, 0.2)).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn fixed_point_is_reached_in_one_iteration() {
        let s = integrator1d(41);
        let ell = sample_to_field(&s.target, &s.grid).unwrap();
        let c = sample_to_field(&s.constraint, &s.grid).unwrap();
        let v0 = ell.zip_map(&c, f64::max).unwrap();
        let (fixed, _) = value_iteration(&v0, &ell, &c, &s.dynamics, &cfg(0.5, 0.1), 1e-12, 100_000).unwrap();
        let (again, deltas) = value_iteration(&fixed, &ell, &c, &s.dynamics, &cfg(0.5, 0.1), 1e-10, 10).unwrap();
        assert_eq!(deltas.len(), 1);
        assert!(deltas[0] < 1e-10);
        assert!(again.sup_distance(&fixed).unwrap() < 1e-10);
    }

    #[test]
    fn non_convergence_returns_partial() {
        let s = integrator1d(41);
        let ell = sample_to_field(&s.target, &s.grid).unwrap();
        let c = sample_to_field(&s.constraint, &s.grid).unwrap();
        let v0 = ScalarField::constant(s.grid.clone(), 5.0);
        match value_iteration(&v0, &ell, &c, &s.dynamics, &cfg(0.1, 0.05), 1e-12, 3) {
            Err(Error::NoConvergence { partial: Some(p), .. }) => assert_eq!(p.len(), 41),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let s = integrator1d(41);
        let f = ScalarField::constant(s.grid.clone(), 0.0);
        let dyn_ = Integrator1d::default().build().unwrap();
        for bad in [
            cfg(0.1, 0.0),
            BackupConfig {
                control_samples: 1,
                ..Default::default()
            },
        ] {
            assert!(bellman_backup(&f, &f, &f, &dyn_, &bad).is_err());
        }
    }

    #[test]
    fn csv_has_ratio_column() {
        let mut buf = Vec::new();
        write_deltas_csv_to(&[1.0, 0.5], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "iteration,delta,ratio\n1,1e0,\n2,5e-1,5e-1\n");
    }
}
