//! System dynamics `x' = f(x, u, d)` with box-bounded control and disturbance.
//!
//! [`DynamicsSpec`] covers control-affine systems
//! `f = drift(x) + B(x) u + E(x) d`, for which the game Hamiltonian
//! `max_d min_u p . f` and its optimizers have closed forms. [`SampledDynamics`]
//! is the fallback for general `f`: it grids the input boxes.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use smallvec::{smallvec, SmallVec};

use crate::error::{Error, Result};

type Buf = SmallVec<[f64; 24]>;

/// Axis-aligned box of admissible inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<InputBox> {
        if lower.len() != upper.len() {
            return Err(Error::Domain("input box bounds differ in length".into()));
        }
        if let Some(j) = (0..lower.len()).find(|&j| !(lower[j] <= upper[j])) {
            return Err(Error::Domain(format!(
                "input box channel {j} is empty: [{}, {}]",
                lower[j], upper[j]
            )));
        }
        Ok(InputBox { lower, upper })
    }

    /// Symmetric box `[-m, m]` per channel.
    pub fn symmetric(max: &[f64]) -> Result<InputBox> {
        InputBox::new(max.iter().map(|m| -m).collect(), max.to_vec())
    }

    pub fn empty() -> InputBox {
        InputBox {
            lower: vec![],
            upper: vec![],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn max_abs(&self, j: usize) -> f64 {
        self.lower[j].abs().max(self.upper[j].abs())
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim() && (0..self.dim()).all(|j| v[j] >= self.lower[j] && v[j] <= self.upper[j])
    }

    /// Projection of `v` onto the box.
    pub fn clamp(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|j| v[j].clamp(self.lower[j], self.upper[j])).collect()
    }

    /// Evenly spaced samples per channel (endpoints included), as the full
    /// Cartesian product. `counts[j] >= 2`.
    pub fn samples(&self, counts: &[usize]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![]];
        for j in 0..self.dim() {
            let n = counts[j].max(2);
            let pts: Vec<f64> = (0..n)
                .map(|k| {
                    if k == n - 1 {
                        self.upper[j]
                    } else {
                        self.lower[j] + (self.upper[j] - self.lower[j]) * k as f64 / (n - 1) as f64
                    }
                })
                .collect();
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    pts.iter().map(move |&p| {
                        let mut v = prefix.clone();
                        v.push(p);
                        v
                    })
                })
                .collect();
        }
        out
    }
}

/// A system the solvers can work with.
pub trait Dynamics: Send + Sync {
    fn n_dims(&self) -> usize;

    fn controls(&self) -> &InputBox;

    fn disturbances(&self) -> &InputBox;

    fn vector_field(&self, x: &[f64], u: &[f64], d: &[f64], out: &mut [f64]);

    /// `max_d min_u p . f(x, u, d)`.
    fn hamiltonian(&self, x: &[f64], p: &[f64]) -> f64;

    /// Optimal control and worst-case disturbance for costate `p`.
    fn optimal_inputs(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>);

    /// Componentwise bound on `|f_i(x, u, d)|` over the input boxes.
    fn dissipation_bounds(&self, x: &[f64], out: &mut [f64]);

    /// Lipschitz constant of `f` in `x`.
    fn lipschitz_estimate(&self) -> f64;

    /// State coordinates that are angles, wrapped to `[-pi, pi)` by [`flow`].
    fn angle_dims(&self) -> &[usize] {
        &[]
    }

    /// Whether `H(x, p) = sum_i H(x, p_i e_i)` at `x`, with each term
    /// piecewise linear in `p_i` and kinked only at zero.
    fn is_separable(&self, _x: &[f64]) -> bool {
        false
    }

    fn name(&self) -> &str {
        "custom"
    }
}

pub type StateFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Control-affine dynamics `f(x,u,d) = drift(x) + B(x) u + E(x) d`.
///
/// The Jacobian callbacks fill row-major `n x m` matrices.
#[derive(Clone)]
pub struct DynamicsSpec {
    name: String,
    n_dims: usize,
    controls: InputBox,
    disturbances: InputBox,
    drift: StateFn,
    control_jacobian: StateFn,
    disturbance_jacobian: StateFn,
    lipschitz: f64,
    angle_dims: Vec<usize>,
}

impl fmt::Debug for DynamicsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DynamicsSpec")
            .field("name", &self.name)
            .field("n_dims", &self.n_dims)
            .field("controls", &self.controls)
            .field("disturbances", &self.disturbances)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl DynamicsSpec {
    pub fn new(
        name: impl Into<String>,
        n_dims: usize,
        controls: InputBox,
        disturbances: InputBox,
        drift: StateFn,
        control_jacobian: StateFn,
        disturbance_jacobian: StateFn,
        lipschitz: f64,
    ) -> Result<DynamicsSpec> {
        if n_dims == 0 {
            return Err(Error::Domain("dynamics need at least one state".into()));
        }
        if !(lipschitz >= 0.0) {
            return Err(Error::Domain(format!("Lipschitz estimate must be nonnegative, got {lipschitz}")));
        }
        Ok(DynamicsSpec {
            name: name.into(),
            n_dims,
            controls,
            disturbances,
            drift,
            control_jacobian,
            disturbance_jacobian,
            lipschitz,
            angle_dims: vec![],
        })
    }

    pub fn with_angle_dims(mut self, dims: Vec<usize>) -> Self {
        self.angle_dims = dims;
        self
    }

    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn control_jacobian(&self, x: &[f64], out: &mut [f64]) {
        (self.control_jacobian)(x, out)
    }

    pub fn disturbance_jacobian(&self, x: &[f64], out: &mut [f64]) {
        (self.disturbance_jacobian)(x, out)
    }

    /// `p^T B(x)` and `p^T E(x)`.
    fn input_gains(&self, x: &[f64], p: &[f64]) -> (Buf, Buf) {
        let n = self.n_dims;
        let (mu, md) = (self.controls.dim(), self.disturbances.dim());
        let mut jac: Buf = smallvec![0.0; n * mu.max(md)];
        let mut gu: Buf = smallvec![0.0; mu];
        let mut gd: Buf = smallvec![0.0; md];
        if mu > 0 {
            self.control_jacobian(x, &mut jac[..n * mu]);
            for i in 0..n {
                for j in 0..mu {
                    gu[j] += p[i] * jac[i * mu + j];
                }
            }
        }
        if md > 0 {
            jac.iter_mut().for_each(|v| *v = 0.0);
            self.disturbance_jacobian(x, &mut jac[..n * md]);
            for i in 0..n {
                for k in 0..md {
                    gd[k] += p[i] * jac[i * md + k];
                }
            }
        }
        (gu, gd)
    }
}

impl Dynamics for DynamicsSpec {
    fn n_dims(&self) -> usize {
        self.n_dims
    }

    fn controls(&self) -> &InputBox {
        &self.controls
    }

    fn disturbances(&self) -> &InputBox {
        &self.disturbances
    }

    fn vector_field(&self, x: &[f64], u: &[f64], d: &[f64], out: &mut [f64]) {
        let n = self.n_dims;
        let (mu, md) = (self.controls.dim(), self.disturbances.dim());
        self.drift(x, out);
        let mut jac: Buf = smallvec![0.0; n * mu.max(md)];
        if mu > 0 {
            self.control_jacobian(x, &mut jac[..n * mu]);
            for i in 0..n {
                out[i] += (0..mu).map(|j| jac[i * mu + j] * u[j]).sum::<f64>();
            }
        }
        if md > 0 {
            jac.iter_mut().for_each(|v| *v = 0.0);
            self.disturbance_jacobian(x, &mut jac[..n * md]);
            for i in 0..n {
                out[i] += (0..md).map(|k| jac[i * md + k] * d[k]).sum::<f64>();
            }
        }
    }

    fn hamiltonian(&self, x: &[f64], p: &[f64]) -> f64 {
        let mut f0: Buf = smallvec![0.0; self.n_dims];
        self.drift(x, &mut f0);
        let mut h: f64 = p.iter().zip(&f0).map(|(a, b)| a * b).sum();
        let (gu, gd) = self.input_gains(x, p);
        for (j, &g) in gu.iter().enumerate() {
            h += if g > 0.0 { g * self.controls.lower[j] } else { g * self.controls.upper[j] };
        }
        for (k, &g) in gd.iter().enumerate() {
            h += if g > 0.0 { g * self.disturbances.upper[k] } else { g * self.disturbances.lower[k] };
        }
        h
    }

    fn optimal_inputs(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (gu, gd) = self.input_gains(x, p);
        let (c, d) = (&self.controls, &self.disturbances);
        let u = (0..c.dim())
            .map(|j| match gu[j] {
                g if g > TIE_TOL => c.lower[j],
                g if g < -TIE_TOL => c.upper[j],
                _ => 0.5 * (c.lower[j] + c.upper[j]),
            })
            .collect();
        let dist = (0..d.dim())
            .map(|k| match gd[k] {
                g if g > TIE_TOL => d.upper[k],
                g if g < -TIE_TOL => d.lower[k],
                _ => 0.5 * (d.lower[k] + d.upper[k]),
            })
            .collect();
        (u, dist)
    }

    fn dissipation_bounds(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n_dims;
        let (mu, md) = (self.controls.dim(), self.disturbances.dim());
        self.drift(x, out);
        out.iter_mut().for_each(|v| *v = v.abs());
        let mut jac: Buf = smallvec![0.0; n * mu.max(md)];
        if mu > 0 {
            self.control_jacobian(x, &mut jac[..n * mu]);
            for i in 0..n {
                out[i] += (0..mu).map(|j| jac[i * mu + j].abs() * self.controls.max_abs(j)).sum::<f64>();
            }
        }
        if md > 0 {
            jac.iter_mut().for_each(|v| *v = 0.0);
            self.disturbance_jacobian(x, &mut jac[..n * md]);
            for i in 0..n {
                out[i] += (0..md)
                    .map(|k| jac[i * md + k].abs() * self.disturbances.max_abs(k))
                    .sum::<f64>();
            }
        }
    }

    fn lipschitz_estimate(&self) -> f64 {
        self.lipschitz
    }

    fn angle_dims(&self) -> &[usize] {
        &self.angle_dims
    }

    /// True when every input channel drives at most one state coordinate.
    fn is_separable(&self, x: &[f64]) -> bool {
        let n = self.n_dims;
        let single = |m: usize, fill: &dyn Fn(&[f64], &mut [f64])| {
            let mut jac: Buf = smallvec![0.0; n * m];
            fill(x, &mut jac);
            (0..m).all(|j| (0..n).filter(|&i| jac[i * m + j] != 0.0).count() <= 1)
        };
        single(self.controls.dim(), &|x, o| self.control_jacobian(x, o))
            && single(self.disturbances.dim(), &|x, o| self.disturbance_jacobian(x, o))
    }

    fn name(&self) -> &str {
        &self.name
    }
}

pub type FieldFn = Arc<dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// General dynamics whose Hamiltonian is evaluated on a sampled input grid.
#[derive(Clone)]
pub struct SampledDynamics {
    n_dims: usize,
    controls: InputBox,
    disturbances: InputBox,
    f: FieldFn,
    u_samples: Vec<Vec<f64>>,
    d_samples: Vec<Vec<f64>>,
    lipschitz: f64,
}

impl SampledDynamics {
    /// `samples_per_channel >= 2`; endpoints are always included.
    pub fn new(
        n_dims: usize,
        controls: InputBox,
        disturbances: InputBox,
        f: FieldFn,
        samples_per_channel: usize,
        lipschitz: f64,
    ) -> SampledDynamics {
        let u_samples = controls.samples(&vec![samples_per_channel; controls.dim()]);
        let d_samples = disturbances.samples(&vec![samples_per_channel; disturbances.dim()]);
        SampledDynamics {
            n_dims,
            controls,
            disturbances,
            f,
            u_samples,
            d_samples,
            lipschitz,
        }
    }

    fn game(&self, x: &[f64], p: &[f64]) -> (f64, usize, usize) {
        let mut fx: Buf = smallvec![0.0; self.n_dims];
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for (kd, d) in self.d_samples.iter().enumerate() {
            let mut inner = (f64::INFINITY, 0);
            for (ku, u) in self.u_samples.iter().enumerate() {
                (self.f)(x, u, d, &mut fx);
                let v: f64 = p.iter().zip(&fx).map(|(a, b)| a * b).sum();
                if v < inner.0 {
                    inner = (v, ku);
                }
            }
            if inner.0 > best.0 {
                best = (inner.0, inner.1, kd);
            }
        }
        best
    }
}

impl Dynamics for SampledDynamics {
    fn n_dims(&self) -> usize {
        self.n_dims
    }

    fn controls(&self) -> &InputBox {
        &self.controls
    }

    fn disturbances(&self) -> &InputBox {
        &self.disturbances
    }

    fn vector_field(&self, x: &[f64], u: &[f64], d: &[f64], out: &mut [f64]) {
        (self.f)(x, u, d, out)
    }

    fn hamiltonian(&self, x: &[f64], p: &[f64]) -> f64 {
        self.game(x, p).0
    }

    fn optimal_inputs(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (_, ku, kd) = self.game(x, p);
        (self.u_samples[ku].clone(), self.d_samples[kd].clone())
    }

    fn dissipation_bounds(&self, x: &[f64], out: &mut [f64]) {
        let mut fx: Buf = smallvec![0.0; self.n_dims];
        out.iter_mut().for_each(|v| *v = 0.0);
        for d in &self.d_samples {
            for u in &self.u_samples {
                (self.f)(x, u, d, &mut fx);
                for i in 0..self.n_dims {
                    out[i] = out[i].max(fx[i].abs());
                }
            }
        }
    }

    fn lipschitz_estimate(&self) -> f64 {
        self.lipschitz
    }
}

/// Input gains at or below this size count as zero in
/// [`Dynamics::optimal_inputs`], which then returns the box midpoint.
pub const TIE_TOL: f64 = 1e-9;

fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// One classical RK4 step of `f` with `u`, `d` held constant. Angle
/// coordinates are wrapped to `[-pi, pi)`.
pub fn flow<D: Dynamics + ?Sized>(dyn_: &D, x: &[f64], u: &[f64], d: &[f64], dt: f64) -> Vec<f64> {
    let n = dyn_.n_dims();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    dyn_.vector_field(x, u, d, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    dyn_.vector_field(&tmp, u, d, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    dyn_.vector_field(&tmp, u, d, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    dyn_.vector_field(&tmp, u, d, &mut k4);
    let mut out: Vec<f64> = (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    for &a in dyn_.angle_dims() {
        out[a] = wrap_angle(out[a]);
    }
    out
}

/// Dubins car `x1' = v cos x3 + d1`, `x2' = v sin x3 + d2`, `x3' = u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dubins3d {
    pub speed: f64,
    pub turn_rate_max: f64,
    pub disturbance_max: f64,
}

impl Default for Dubins3d {
    fn default() -> Self {
        Dubins3d {
            speed: 1.0,
            turn_rate_max: PI,
            disturbance_max: 0.2,
        }
    }
}

impl Dubins3d {
    pub fn build(&self) -> Result<DynamicsSpec> {
        let v = self.speed;
        Ok(DynamicsSpec::new(
            "dubins3d",
            3,
            InputBox::symmetric(&[self.turn_rate_max])?,
            InputBox::symmetric(&[self.disturbance_max, self.disturbance_max])?,
            Arc::new(move |x, out| {
                out[0] = v * x[2].cos();
                out[1] = v * x[2].sin();
                out[2] = 0.0;
            }),
            Arc::new(|_, b| {
                b.copy_from_slice(&[0.0, 0.0, 1.0]);
            }),
            Arc::new(|_, e| {
                e.copy_from_slice(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
            }),
            v.abs(),
        )?
        .with_angle_dims(vec![2]))
    }
}

/// Single integrator `x' = u + d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Integrator1d {
    pub control_max: f64,
    pub disturbance_max: f64,
}

impl Default for Integrator1d {
    fn default() -> Self {
        Integrator1d {
            control_max: 1.0,
            disturbance_max: 0.2,
        }
    }
}

impl Integrator1d {
    pub fn build(&self) -> Result<DynamicsSpec> {
        let (mu, md) = (
            if self.control_max > 0.0 { 1 } else { 0 },
            if self.disturbance_max > 0.0 { 1 } else { 0 },
        );
        DynamicsSpec::new(
            "integrator1d",
            1,
            InputBox::symmetric(&vec![self.control_max; mu])?,
            InputBox::symmetric(&vec![self.disturbance_max; md])?,
            Arc::new(|_, out| out[0] = 0.0),
            Arc::new(|_, b| b.iter_mut().for_each(|v| *v = 1.0)),
            Arc::new(|_, e| e.iter_mut().for_each(|v| *v = 1.0)),
            0.0,
        )
    }
}

/// Double integrator `x1' = x2`, `x2' = u + d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DoubleIntegrator2d {
    pub control_max: f64,
    pub disturbance_max: f64,
}

impl Default for DoubleIntegrator2d {
    fn default() -> Self {
        DoubleIntegrator2d {
            control_max: 1.0,
            disturbance_max: 0.2,
        }
    }
}

impl DoubleIntegrator2d {
    pub fn build(&self) -> Result<DynamicsSpec> {
        DynamicsSpec::new(
            "double_integrator2d",
            2,
            InputBox::symmetric(&[self.control_max])?,
            InputBox::symmetric(&[self.disturbance_max])?,
            Arc::new(|x, out| {
                out[0] = x[1];
                out[1] = 0.0;
            }),
            Arc::new(|_, b| b.copy_from_slice(&[0.0, 1.0])),
            Arc::new(|_, e| e.copy_from_slice(&[0.0, 1.0])),
            1.0,
        )
    }
}

/// Linear system `x' = A x + b + B u + E d` from constant coefficient tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub offset: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub control_bounds: InputBox,
    pub disturbance_bounds: InputBox,
}

impl LinearSystem {
    pub fn build(&self) -> Result<DynamicsSpec> {
        let n = self.a.len();
        let mu = self.control_bounds.dim();
        let md = self.disturbance_bounds.dim();
        let rows_ok = |m: &Vec<Vec<f64>>, cols: usize| m.len() == n && m.iter().all(|r| r.len() == cols);
        if n == 0 || !rows_ok(&self.a, n) {
            return Err(Error::Domain("linear system: A must be square and nonempty".into()));
        }
        if !(rows_ok(&self.b, mu) || (mu == 0 && self.b.is_empty())) {
            return Err(Error::Domain(format!("linear system: B must be {n}x{mu}")));
        }
        if !(rows_ok(&self.e, md) || (md == 0 && self.e.is_empty())) {
            return Err(Error::Domain(format!("linear system: E must be {n}x{md}")));
        }
        let offset = if self.offset.is_empty() { vec![0.0; n] } else { self.offset.clone() };
        if offset.len() != n {
            return Err(Error::Domain("linear system: offset length differs from A".into()));
        }
        let lipschitz = self
            .a
            .iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let a = self.a.clone();
        let b: Vec<f64> = self.b.iter().flatten().copied().collect();
        let e: Vec<f64> = self.e.iter().flatten().copied().collect();
        DynamicsSpec::new(
            "linear",
            n,
            self.control_bounds.clone(),
            self.disturbance_bounds.clone(),
            Arc::new(move |x, out| {
                for i in 0..n {
                    out[i] = offset[i] + a[i].iter().zip(x).map(|(c, v)| c * v).sum::<f64>();
                }
            }),
            Arc::new(move |_, out| out.copy_from_slice(&b)),
            Arc::new(move |_, out| out.copy_from_slice(&e)),
            lipschitz,
        )
    }
}
