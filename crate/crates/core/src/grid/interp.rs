use smallvec::SmallVec;

use super::{DimVec, Grid, ScalarField};

pub(crate) type Stencil = SmallVec<[(usize, f64); 8]>;

/// Multilinear interpolation stencil for `point`: up to `2^n` `(node, weight)`
/// pairs with weights summing to one. The flag is set when a non-periodic
/// coordinate had to be clamped into the box.
pub(crate) fn stencil(grid: &Grid, point: &[f64]) -> (Stencil, bool) {
    let n = grid.n_dims();
    let mut base: DimVec<usize> = SmallVec::with_capacity(n);
    let mut upper: DimVec<usize> = SmallVec::with_capacity(n);
    let mut frac: DimVec<f64> = SmallVec::with_capacity(n);
    let mut clamped = false;
    for d in 0..n {
        let count = grid.counts()[d];
        let mut s = (point[d] - grid.lower()[d]) / grid.spacing()[d];
        if grid.periodic()[d] {
            // wrap before scaling so whole-period shifts that are exact in
            // floating point give identical stencils
            let y = (point[d] - grid.lower()[d]).rem_euclid(grid.period(d));
            s = (y / grid.spacing()[d]).rem_euclid(count as f64);
            let mut i0 = s.floor() as usize;
            let mut t = s - i0 as f64;
            if i0 >= count {
                // rem_euclid can round up to exactly `count`
                i0 = 0;
                t = 0.0;
            }
            base.push(i0);
            upper.push((i0 + 1) % count);
            frac.push(t);
        } else {
            let last = (count - 1) as f64;
            if !(0.0..=last).contains(&s) {
                clamped = true;
                s = s.clamp(0.0, last);
            }
            let i0 = (s.floor() as usize).min(count - 2);
            base.push(i0);
            upper.push(i0 + 1);
            frac.push(s - i0 as f64);
        }
    }
    let mut out = Stencil::new();
    for corner in 0..(1usize << n) {
        let mut w = 1.0;
        let mut flat = 0;
        for d in 0..n {
            let hi = (corner >> d) & 1 == 1;
            let (i, wd) = if hi { (upper[d], frac[d]) } else { (base[d], 1.0 - frac[d]) };
            w *= wd;
            flat += i * grid.strides()[d];
        }
        if w != 0.0 {
            out.push((flat, w));
        }
    }
    if out.is_empty() {
        // every weight vanished only if the point is exactly a node
        let flat = (0..n).map(|d| base[d] * grid.strides()[d]).sum();
        out.push((flat, 1.0));
    }
    (out, clamped)
}

#[inline]
pub(crate) fn apply_stencil(values: &[f64], st: &[(usize, f64)]) -> f64 {
    st.iter().map(|&(i, w)| w * values[i]).sum()
}

/// Multilinear interpolation of `field` at `point`.
///
/// Periodic coordinates wrap; coordinates outside the box on other dimensions
/// are clamped to the boundary.
pub fn interpolate(field: &ScalarField, point: &[f64]) -> f64 {
    interpolate_flagged(field, point).0
}

/// Like [`interpolate`], also reporting whether the point was clamped.
pub fn interpolate_flagged(field: &ScalarField, point: &[f64]) -> (f64, bool) {
    let (st, clamped) = stencil(field.grid(), point);
    (apply_stencil(field.values(), &st), clamped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[test]
    fn reproduces_nodes() {
        let g = Arc::new(Grid::new(&[(0.0, 1.0), (0.0, 2.0)], &[5, 7], &[false, false]).unwrap());
        let f = ScalarField::from_fn(g.clone(), |x| (3.0 * x[0]).sin() + x[1] * x[1]);
        for i in 0..g.len() {
            let x = g.node(i);
            assert_eq!(interpolate(&f, &x), f.values()[i]);
        }
    }

    #[test]
    fn linear_field_is_exact() {
        let g = Arc::new(Grid::new(&[(0.0, 1.0)], &[5], &[false]).unwrap());
        let f = ScalarField::from_fn(g, |x| 2.0 * x[0]);
        assert!((interpolate(&f, &[0.3]) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn clamps_outside_box() {
        let g = Arc::new(Grid::new(&[(0.0, 1.0)], &[5], &[false]).unwrap());
        let f = ScalarField::from_fn(g, |x| x[0]);
        let (v, clamped) = interpolate_flagged(&f, &[1.7]);
        assert!(clamped);
        assert_eq!(v, 1.0);
        let (v, clamped) = interpolate_flagged(&f, &[-0.2]);
        assert!(clamped);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn periodic_seam_is_continuous() {
        let g = Arc::new(Grid::new(&[(-PI, PI)], &[40], &[true]).unwrap());
        let f = ScalarField::from_fn(g, |x| x[0].cos());
        let mut prev = f64::INFINITY;
        for k in 1..8 {
            let eps = 10f64.powi(-k);
            let a = interpolate(&f, &[PI - eps]);
            let b = interpolate(&f, &[-PI + eps]);
            let gap = (a - b).abs();
            assert!(gap <= prev + 1e-15);
            prev = gap;
        }
        assert!(prev < 1e-6);
    }
}
