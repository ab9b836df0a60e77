//! Implicit surfaces with the negative-inside convention, and their algebra.
//!
//! Surfaces are a small expression tree so they can be read from config
//! files. Union is the pointwise minimum, intersection the maximum, and
//! complement the negation.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImplicitSurface {
    Constant {
        value: f64,
    },
    /// `sum (x_i - c_i)^2 - r^2` over `dims` (quadratic, not a distance).
    Circle {
        center: Vec<f64>,
        radius: f64,
        dims: Vec<usize>,
    },
    /// `||x - c|| - r` over `dims`.
    Sphere {
        center: Vec<f64>,
        radius: f64,
        dims: Vec<usize>,
    },
    /// `1 - max_i |x_i - c_i| / h_i`: positive inside the box, so this is an
    /// obstacle function rather than a membership function.
    #[serde(rename = "box")]
    BoxObstacle {
        center: Vec<f64>,
        half_widths: Vec<f64>,
        dims: Vec<usize>,
    },
    /// Signed distance to an axis-aligned box, negative inside.
    Rectangle {
        center: Vec<f64>,
        half_widths: Vec<f64>,
        dims: Vec<usize>,
    },
    /// `normal . x - offset`.
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
    },
    /// `||x_dims - point|| - offset`.
    NormToPoint {
        point: Vec<f64>,
        dims: Vec<usize>,
        #[serde(default)]
        offset: f64,
    },
    Union {
        of: Vec<ImplicitSurface>,
    },
    Intersection {
        of: Vec<ImplicitSurface>,
    },
    Complement {
        of: Box<ImplicitSurface>,
    },
    /// `of(x) + by`.
    Offset {
        of: Box<ImplicitSurface>,
        by: f64,
    },
}

fn check_dims(what: &str, dims: &[usize], values: &[f64]) -> Result<()> {
    if dims.is_empty() || dims.len() != values.len() {
        return Err(Error::Domain(format!(
            "{what}: {} dims for {} coordinates",
            dims.len(),
            values.len()
        )));
    }
    Ok(())
}

impl ImplicitSurface {
    pub fn constant(value: f64) -> Self {
        ImplicitSurface::Constant { value }
    }

    pub fn circle(center: &[f64], radius: f64, dims: &[usize]) -> Result<Self> {
        let s = ImplicitSurface::Circle {
            center: center.to_vec(),
            radius,
            dims: dims.to_vec(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn sphere(center: &[f64], radius: f64, dims: &[usize]) -> Result<Self> {
        let s = ImplicitSurface::Sphere {
            center: center.to_vec(),
            radius,
            dims: dims.to_vec(),
        };
        s.validate()?;
        Ok(s)
    }

    /// Box obstacle function `1 - max_i |x_i - c_i| / h_i`.
    pub fn box_obstacle(center: &[f64], half_widths: &[f64], dims: &[usize]) -> Result<Self> {
        let s = ImplicitSurface::BoxObstacle {
            center: center.to_vec(),
            half_widths: half_widths.to_vec(),
            dims: dims.to_vec(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn rectangle(center: &[f64], half_widths: &[f64], dims: &[usize]) -> Result<Self> {
        let s = ImplicitSurface::Rectangle {
            center: center.to_vec(),
            half_widths: half_widths.to_vec(),
            dims: dims.to_vec(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn halfspace(normal: &[f64], offset: f64) -> Self {
        ImplicitSurface::Halfspace {
            normal: normal.to_vec(),
            offset,
        }
    }

    pub fn norm_to_point(point: &[f64], dims: &[usize], offset: f64) -> Result<Self> {
        let s = ImplicitSurface::NormToPoint {
            point: point.to_vec(),
            dims: dims.to_vec(),
            offset,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn union(self, other: ImplicitSurface) -> Self {
        ImplicitSurface::Union { of: vec![self, other] }
    }

    pub fn intersection(self, other: ImplicitSurface) -> Self {
        ImplicitSurface::Intersection { of: vec![self, other] }
    }

    pub fn complement(self) -> Self {
        ImplicitSurface::Complement { of: Box::new(self) }
    }

    pub fn offset(self, by: f64) -> Self {
        ImplicitSurface::Offset { of: Box::new(self), by }
    }

    /// Checks parameters recursively (positive radii and half-widths,
    /// consistent dimension lists).
    pub fn validate(&self) -> Result<()> {
        use ImplicitSurface::*;
        match self {
            Constant { value } if !value.is_finite() => Err(Error::Domain("constant surface must be finite".into())),
            Constant { .. } => Ok(()),
            Circle { center, radius, dims } | Sphere { center, radius, dims } => {
                check_dims("circle", dims, center)?;
                if !(*radius > 0.0) {
                    return Err(Error::Domain(format!("radius must be positive, got {radius}")));
                }
                Ok(())
            }
            BoxObstacle { center, half_widths, dims } | Rectangle { center, half_widths, dims } => {
                check_dims("box", dims, center)?;
                check_dims("box", dims, half_widths)?;
                if let Some(h) = half_widths.iter().find(|h| !(**h > 0.0)) {
                    return Err(Error::Domain(format!("half-widths must be positive, got {h}")));
                }
                Ok(())
            }
            Halfspace { normal, .. } if normal.is_empty() => Err(Error::Domain("halfspace normal is empty".into())),
            Halfspace { .. } => Ok(()),
            NormToPoint { point, dims, .. } => check_dims("norm_to_point", dims, point),
            Union { of } | Intersection { of } => {
                if of.is_empty() {
                    return Err(Error::Domain("union/intersection of nothing".into()));
                }
                of.iter().try_for_each(|s| s.validate())
            }
            Complement { of } | Offset { of, .. } => of.validate(),
        }
    }

    /// Highest state index referenced by the surface, if any.
    pub fn max_dim(&self) -> Option<usize> {
        use ImplicitSurface::*;
        match self {
            Constant { .. } => None,
            Circle { dims, .. }
            | Sphere { dims, .. }
            | BoxObstacle { dims, .. }
            | Rectangle { dims, .. }
            | NormToPoint { dims, .. } => dims.iter().copied().max(),
            Halfspace { normal, .. } => Some(normal.len() - 1),
            Union { of } | Intersection { of } => of.iter().filter_map(|s| s.max_dim()).max(),
            Complement { of } | Offset { of, .. } => of.max_dim(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        use ImplicitSurface::*;
        match self {
            Constant { value } => *value,
            Circle { center, radius, dims } => {
                dims.iter().zip(center).map(|(&d, c)| (x[d] - c).powi(2)).sum::<f64>() - radius * radius
            }
            Sphere { center, radius, dims } => {
                dims.iter().zip(center).map(|(&d, c)| (x[d] - c).powi(2)).sum::<f64>().sqrt() - radius
            }
            BoxObstacle {
                center,
                half_widths,
                dims,
            } => {
                let m = dims
                    .iter()
                    .zip(center.iter().zip(half_widths))
                    .map(|(&d, (c, h))| (x[d] - c).abs() / h)
                    .fold(f64::NEG_INFINITY, f64::max);
                1.0 - m
            }
            Rectangle {
                center,
                half_widths,
                dims,
            } => {
                let mut outside = 0.0;
                let mut inside = f64::NEG_INFINITY;
                for (&d, (c, h)) in dims.iter().zip(center.iter().zip(half_widths)) {
                    let q = (x[d] - c).abs() - h;
                    outside += q.max(0.0).powi(2);
                    inside = inside.max(q);
                }
                outside.sqrt() + inside.min(0.0)
            }
            Halfspace { normal, offset } => normal.iter().zip(x).map(|(n, v)| n * v).sum::<f64>() - offset,
            NormToPoint { point, dims, offset } => {
                dims.iter().zip(point).map(|(&d, p)| (x[d] - p).powi(2)).sum::<f64>().sqrt() - offset
            }
            Union { of } => of.iter().map(|s| s.evaluate(x)).fold(f64::INFINITY, f64::min),
            Intersection { of } => of.iter().map(|s| s.evaluate(x)).fold(f64::NEG_INFINITY, f64::max),
            Complement { of } => -of.evaluate(x),
            Offset { of, by } => of.evaluate(x) + by,
        }
    }

    /// True when `x` is inside the represented set (value < 0).
    pub fn contains(&self, x: &[f64]) -> bool {
        self.evaluate(x) < 0.0
    }
}

impl fmt::Display for ImplicitSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ImplicitSurface::*;
        match self {
            Constant { value } => write!(f, "const({value})"),
            Circle { center, radius, .. } => write!(f, "circle({center:?}, {radius})"),
            Sphere { center, radius, .. } => write!(f, "sphere({center:?}, {radius})"),
            BoxObstacle { center, half_widths, .. } => write!(f, "box({center:?}, {half_widths:?})"),
            Rectangle { center, half_widths, .. } => write!(f, "rect({center:?}, {half_widths:?})"),
            Halfspace { normal, offset } => write!(f, "halfspace({normal:?}, {offset})"),
            NormToPoint { point, offset, .. } => write!(f, "norm({point:?}) - {offset}"),
            Union { of } | Intersection { of } => {
                let op = if matches!(self, Union { .. }) { "union" } else { "intersection" };
                write!(f, "{op}(")?;
                for (i, s) in of.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{s}")?;
                }
                write!(f, ")")
            }
            Complement { of } => write!(f, "not({of})"),
            Offset { of, by } => write!(f, "({of}) + {by}"),
        }
    }
}

/// Evaluates `surface` at every node of `grid`.
pub fn sample_to_field(surface: &ImplicitSurface, grid: &Arc<Grid>) -> Result<ScalarField> {
    if let Some(d) = surface.max_dim() {
        if d >= grid.n_dims() {
            return Err(Error::Domain(format!(
                "surface {surface} references dimension {d} but grid has {}",
                grid.n_dims()
            )));
        }
    }
    let field = ScalarField::from_fn(grid.clone(), |x| surface.evaluate(x));
    if let Some(i) = field.first_non_finite() {
        return Err(Error::Domain(format!(
            "surface {surface} is not finite at node {:?}",
            grid.node(i)
        )));
    }
    Ok(field)
}

/// Largest finite-difference slope between neighbouring nodes: a numerical
/// Lipschitz estimate for a sampled surface.
pub fn max_slope(field: &ScalarField) -> f64 {
    let g = field.grid();
    let v = field.values();
    let mut slope: f64 = 0.0;
    for i in 0..g.len() {
        for d in 0..g.n_dims() {
            let idx = g.coord_index(i, d);
            let next = if idx + 1 < g.counts()[d] {
                i + g.strides()[d]
            } else if g.periodic()[d] {
                i - idx * g.strides()[d]
            } else {
                continue;
            };
            slope = slope.max((v[next] - v[i]).abs() / g.spacing()[d]);
        }
    }
    slope
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene_obstacles() -> [ImplicitSurface; 3] {
        let c1 = ImplicitSurface::circle(&[-2.0, -2.0], 1.0, &[0, 1]).unwrap().complement();
        let c2 = ImplicitSurface::circle(&[3.0, -3.0], 1.0, &[0, 1]).unwrap().complement();
        let c3 = ImplicitSurface::box_obstacle(&[1.0, 0.5], &[2.0, 1.5], &[0, 1]).unwrap();
        [c1, c2, c3]
    }

    #[test]
    fn circle_values() {
        let l = ImplicitSurface::circle(&[3.5, 3.5], 1.0, &[0, 1]).unwrap();
        assert_eq!(l.evaluate(&[3.5, 3.5, 0.0]), -1.0);
        assert_eq!(l.evaluate(&[4.5, 3.5, 0.0]), 0.0);
        assert_eq!(l.evaluate(&[0.0, 0.0, 0.0]), 23.5);
        assert!(matches!(ImplicitSurface::circle(&[0.0], 0.0, &[0]), Err(Error::Domain(_))));
    }

    #[test]
    fn box_values() {
        let b = ImplicitSurface::box_obstacle(&[1.0, 0.5], &[2.0, 1.5], &[0, 1]).unwrap();
        assert_eq!(b.evaluate(&[1.0, 0.5]), 1.0);
        assert_eq!(b.evaluate(&[3.0, 0.5]), 0.0);
        assert_eq!(b.evaluate(&[5.0, 0.5]), -1.0);
        assert!(ImplicitSurface::box_obstacle(&[0.0], &[-1.0], &[0]).is_err());
    }

    #[test]
    fn algebra() {
        let a = ImplicitSurface::sphere(&[0.0, 0.0], 1.0, &[0, 1]).unwrap();
        let b = ImplicitSurface::rectangle(&[1.0, 0.0], &[0.5, 2.0], &[0, 1]).unwrap();
        for x in [[0.0, 0.0], [1.2, 0.3], [-3.0, 2.0], [0.9, -1.9]] {
            assert_eq!(a.clone().union(a.clone()).evaluate(&x), a.evaluate(&x));
            assert_eq!(a.clone().complement().complement().evaluate(&x), a.evaluate(&x));
            let lhs = a.clone().union(b.clone()).complement().evaluate(&x);
            let rhs = a.clone().complement().intersection(b.clone().complement()).evaluate(&x);
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn union_of_obstacle_functions() {
        let [c1, c2, c3] = scene_obstacles();
        let x = [-2.0, -2.0];
        assert_eq!(c1.evaluate(&x), 1.0);
        assert_eq!(c2.evaluate(&x), -25.0);
        assert!((c3.evaluate(&x) - (-2.0 / 3.0)).abs() < 1e-15);
        let u = ImplicitSurface::Union {
            of: vec![c1, c2, c3],
        };
        assert_eq!(u.evaluate(&x), -25.0);
    }

    #[test]
    fn sign_convention_probes() {
        let disk = ImplicitSurface::circle(&[3.5, 3.5], 1.0, &[0, 1]).unwrap();
        assert!(disk.contains(&[3.5, 3.2]));
        assert!(!disk.contains(&[5.0, 3.5]));
        let rect = ImplicitSurface::rectangle(&[0.0, 0.0], &[1.0, 2.0], &[0, 1]).unwrap();
        assert!(rect.contains(&[0.9, -1.9]));
        assert!(!rect.contains(&[1.1, 0.0]));
        assert!((rect.evaluate(&[2.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((rect.evaluate(&[0.0, 0.0]) + 1.0).abs() < 1e-15);
        let half = ImplicitSurface::halfspace(&[1.0, 0.0], 2.0);
        assert!(half.contains(&[1.0, 100.0]));
        assert!(!half.contains(&[3.0, 0.0]));
    }

    #[test]
    fn sampling() {
        let g = Arc::new(Grid::new(&[(-1.0, 1.0), (-1.0, 1.0)], &[5, 5], &[false, false]).unwrap());
        let f = sample_to_field(&ImplicitSurface::constant(1.0), &g).unwrap();
        assert!(f.values().iter().all(|&v| v == 1.0));
        let circle = ImplicitSurface::circle(&[0.0, 0.0], 0.7, &[0, 1]).unwrap();
        let f = sample_to_field(&circle, &g).unwrap();
        assert_eq!(f.min_value(), -(0.7 * 0.7));
        let bad = ImplicitSurface::Halfspace {
            normal: vec![f64::NAN, 0.0],
            offset: 0.0,
        };
        assert!(matches!(sample_to_field(&bad, &g), Err(Error::Domain(_))));
        let too_high = ImplicitSurface::circle(&[0.0], 1.0, &[2]).unwrap();
        assert!(sample_to_field(&too_high, &g).is_err());
    }

    #[test]
    fn slope_of_sphere_is_one() {
        let g = Arc::new(Grid::new(&[(-1.0, 1.0), (-1.0, 1.0)], &[21, 21], &[false, false]).unwrap());
        let f = sample_to_field(&ImplicitSurface::sphere(&[0.0, 0.0], 0.5, &[0, 1]).unwrap(), &g).unwrap();
        assert!(max_slope(&f) <= 1.0 + 1e-12);
        assert!(max_slope(&f) > 0.9);
    }

    #[test]
    fn serde_tree() {
        let [c1, c2, c3] = scene_obstacles();
        let s = ImplicitSurface::Union { of: vec![c1, c2, c3] }.complement().offset(0.0);
        let text = serde_json::to_string(&s).unwrap();
        let back: ImplicitSurface = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert!(text.contains("\"kind\":\"box\""));
    }
}
