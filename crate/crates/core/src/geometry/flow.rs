use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{DriftField, ScaleFn};
use crate::error::{Error, Result};

/// A point in ambient (sphere, hyperboloid) or chart (torus, Euclidean) coordinates.
pub type Point = DVector<f64>;
/// A tangent vector, expressed in the same coordinates as [`Point`].
pub type Tangent = DVector<f64>;
/// `d` tangent vectors stored as the columns of an `ambient_dim x d` matrix.
pub type Frame = DMatrix<f64>;

/// Period of every torus axis in chart coordinates.
pub const TORUS_PERIOD: f64 = 2.0 * PI;
/// Points further than this from the constraint surface are rejected.
pub const MANIFOLD_TOL: f64 = 1e-9;
/// Tolerance on `u^T g_t u - I` accepted on entry to frame operations.
pub const FRAME_TOL: f64 = 1e-6;
pub const DEFAULT_EPS_HORIZON: f64 = 1e-3;
pub const DEFAULT_FD_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    /// `R^d` with metric `c(t) * I`.
    Euclidean,
    /// Unit sphere `S^d` in `R^{d+1}` with metric `c(t) * round`.
    Sphere,
    /// Hyperboloid model of `H^d` in `R^{d,1}` with metric `c(t) * hyperbolic`.
    Hyperbolic,
    /// Flat torus `R^d / (2 pi Z)^d` with metric `diag(a_1(t), ..., a_d(t))`.
    Torus,
}

/// A model manifold with a C^1 family of metrics `g_t` and a drift `Z_t`.
#[derive(Clone, Debug)]
pub struct MetricFlow {
    kind: FlowKind,
    dim: usize,
    scales: Vec<ScaleFn>,
    drift: DriftField,
    eps_horizon: f64,
    fd_step: f64,
}

impl MetricFlow {
    /// `scales` holds one conformal factor, or one factor per axis for a torus
    /// (a single torus factor is applied to every axis).
    pub fn new(kind: FlowKind, dim: usize, scales: Vec<ScaleFn>, drift: DriftField) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        let scales = match (kind, scales.len()) {
            (_, 0) => vec![ScaleFn::UNIT; if kind == FlowKind::Torus { dim } else { 1 }],
            (FlowKind::Torus, 1) => vec![scales[0]; dim],
            (FlowKind::Torus, n) if n == dim => scales,
            (FlowKind::Torus, n) => {
                return Err(Error::InvalidArgument(format!("torus needs {dim} axis factors, got {n}")))
            }
            (_, 1) => scales,
            (_, n) => return Err(Error::InvalidArgument(format!("conformal flow takes one factor, got {n}"))),
        };
        for s in &scales {
            s.validate().map_err(Error::InvalidArgument)?;
        }
        let flow = MetricFlow { kind, dim, scales, drift: DriftField::Zero, eps_horizon: DEFAULT_EPS_HORIZON, fd_step: DEFAULT_FD_STEP };
        flow.with_drift(drift)
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::new(FlowKind::Euclidean, dim, vec![ScaleFn::UNIT], DriftField::Zero).expect("valid flow")
    }

    pub fn sphere(dim: usize, scale: ScaleFn) -> Result<Self> {
        Self::new(FlowKind::Sphere, dim, vec![scale], DriftField::Zero)
    }

    pub fn static_sphere(dim: usize) -> Self {
        Self::sphere(dim, ScaleFn::UNIT).expect("valid flow")
    }

    /// Round sphere under Ricci flow: `c(t) = 1 - 2(d-1)t`.
    pub fn ricci_sphere(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument("Ricci flow on S^1 is static; use dim >= 2".into()));
        }
        Self::sphere(dim, ScaleFn::Linear { c0: 1.0, rate: -2.0 * (dim as f64 - 1.0) })
    }

    pub fn hyperbolic(dim: usize, scale: ScaleFn) -> Result<Self> {
        Self::new(FlowKind::Hyperbolic, dim, vec![scale], DriftField::Zero)
    }

    pub fn torus(axes: Vec<ScaleFn>) -> Result<Self> {
        let dim = axes.len();
        Self::new(FlowKind::Torus, dim, axes, DriftField::Zero)
    }

    /// Torus with `a_i(t) = exp(-2 lambda t)` on every axis, so `R^Z = lambda * I`.
    pub fn shrinking_torus(dim: usize, lambda: f64) -> Self {
        Self::new(FlowKind::Torus, dim, vec![ScaleFn::Exponential { c0: 1.0, rate: -2.0 * lambda }], DriftField::Zero)
            .expect("valid flow")
    }

    pub fn with_drift(mut self, drift: DriftField) -> Result<Self> {
        if matches!(drift, DriftField::LinearRadial { .. }) && self.kind != FlowKind::Euclidean {
            return Err(Error::Unsupported("linear radial drift is only defined on Euclidean flows".into()));
        }
        self.drift = drift;
        Ok(self)
    }

    pub fn with_horizon_margin(mut self, eps: f64) -> Self {
        self.eps_horizon = eps;
        self
    }

    pub fn with_fd_step(mut self, fd_step: f64) -> Self {
        self.fd_step = fd_step;
        self
    }

    pub fn kind(&self) -> FlowKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            FlowKind::Sphere | FlowKind::Hyperbolic => self.dim + 1,
            FlowKind::Euclidean | FlowKind::Torus => self.dim,
        }
    }

    pub fn drift(&self) -> &DriftField {
        &self.drift
    }

    pub fn scales(&self) -> &[ScaleFn] {
        &self.scales
    }

    pub fn eps_horizon(&self) -> f64 {
        self.eps_horizon
    }

    pub fn is_static(&self) -> bool {
        self.scales.iter().all(ScaleFn::is_static)
    }

    /// `T_c`: the first time a factor degenerates.
    pub fn horizon(&self) -> f64 {
        self.scales.iter().map(ScaleFn::horizon).fold(f64::INFINITY, f64::min)
    }

    /// Latest time simulations may reach: `T_c - eps_horizon`.
    pub fn usable_horizon(&self) -> f64 {
        let h = self.horizon();
        if h.is_finite() {
            h - self.eps_horizon
        } else {
            h
        }
    }

    /// Conformal factor `c(t)` (first axis factor for a torus).
    pub fn conformal_factor(&self, t: f64) -> f64 {
        self.scales[0].value(t)
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let limit = self.horizon();
        if !t.is_finite() || t >= limit {
            return Err(Error::HorizonExceeded { t, limit });
        }
        Ok(())
    }

    /// Simulation times must stay `eps_horizon` away from `T_c`.
    pub fn check_simulation_time(&self, t: f64) -> Result<()> {
        let limit = self.usable_horizon();
        if !t.is_finite() || t > limit + 1e-12 {
            return Err(Error::HorizonExceeded { t, limit });
        }
        Ok(())
    }

    pub fn fd_step_at(&self, x: &Point) -> f64 {
        self.fd_step * x.norm().max(1.0)
    }

    fn check_len(&self, v: &DVector<f64>, what: &str) -> Result<()> {
        if v.len() != self.ambient_dim() {
            return Err(Error::InvalidArgument(format!(
                "{what} has {} coordinates, expected {}",
                v.len(),
                self.ambient_dim()
            )));
        }
        Ok(())
    }

    pub fn check_point(&self, x: &Point) -> Result<()> {
        self.check_len(x, "point")?;
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::OffManifold { defect: f64::INFINITY });
        }
        let defect = match self.kind {
            FlowKind::Sphere => (x.norm() - 1.0).abs(),
            FlowKind::Hyperbolic => {
                if x[0] <= 0.0 {
                    f64::INFINITY
                } else {
                    (minkowski(x, x) + 1.0).abs() / x[0].max(1.0).powi(2)
                }
            }
            FlowKind::Euclidean | FlowKind::Torus => 0.0,
        };
        if defect > MANIFOLD_TOL {
            return Err(Error::OffManifold { defect });
        }
        Ok(())
    }

    /// Pull a nearby ambient point back onto the manifold (wraps torus charts).
    pub fn project_point(&self, x: &Point) -> Point {
        match self.kind {
            FlowKind::Sphere => x / x.norm(),
            FlowKind::Hyperbolic => {
                let mut y = x.clone();
                let spatial: f64 = y.iter().skip(1).map(|c| c * c).sum();
                y[0] = (1.0 + spatial).sqrt();
                y
            }
            FlowKind::Torus => x.map(wrap_angle),
            FlowKind::Euclidean => x.clone(),
        }
    }

    pub fn project_tangent(&self, x: &Point, v: &Tangent) -> Tangent {
        match self.kind {
            FlowKind::Sphere => v - x * x.dot(v),
            FlowKind::Hyperbolic => v + x * minkowski(v, x),
            FlowKind::Euclidean | FlowKind::Torus => v.clone(),
        }
    }

    /// Diagonal of `g_t` in ambient/chart coordinates.
    pub fn metric_weights(&self, t: f64) -> DVector<f64> {
        match self.kind {
            FlowKind::Euclidean | FlowKind::Sphere => DVector::from_element(self.ambient_dim(), self.scales[0].value(t)),
            FlowKind::Hyperbolic => {
                let c = self.scales[0].value(t);
                DVector::from_fn(self.ambient_dim(), |i, _| if i == 0 { -c } else { c })
            }
            FlowKind::Torus => DVector::from_iterator(self.dim, self.scales.iter().map(|s| s.value(t))),
        }
    }

    /// Diagonal of `d/dt g_t` in ambient/chart coordinates.
    pub fn metric_weight_derivatives(&self, t: f64) -> DVector<f64> {
        match self.kind {
            FlowKind::Euclidean | FlowKind::Sphere => {
                DVector::from_element(self.ambient_dim(), self.scales[0].derivative(t))
            }
            FlowKind::Hyperbolic => {
                let c = self.scales[0].derivative(t);
                DVector::from_fn(self.ambient_dim(), |i, _| if i == 0 { -c } else { c })
            }
            FlowKind::Torus => DVector::from_iterator(self.dim, self.scales.iter().map(|s| s.derivative(t))),
        }
    }

    /// `g_t` as an ambient Gram matrix: `g_t(v, w) = v^T G w` for tangent `v, w`.
    pub fn metric_at(&self, t: f64, x: &Point) -> Result<DMatrix<f64>> {
        self.check_time(t)?;
        self.check_point(x)?;
        Ok(DMatrix::from_diagonal(&self.metric_weights(t)))
    }

    /// `d/dt g_t` in the same representation as [`MetricFlow::metric_at`].
    pub fn metric_time_derivative(&self, t: f64, x: &Point) -> Result<DMatrix<f64>> {
        self.check_time(t)?;
        self.check_point(x)?;
        Ok(DMatrix::from_diagonal(&self.metric_weight_derivatives(t)))
    }

    /// `g_t(v, w)`.
    pub fn inner(&self, t: f64, v: &Tangent, w: &Tangent) -> f64 {
        match self.kind {
            FlowKind::Euclidean | FlowKind::Sphere => self.scales[0].value(t) * v.dot(w),
            FlowKind::Hyperbolic => self.scales[0].value(t) * minkowski(v, w),
            FlowKind::Torus => self.scales.iter().enumerate().map(|(i, s)| s.value(t) * v[i] * w[i]).sum(),
        }
    }

    /// `(d/dt g_t)(v, w)`.
    pub fn inner_time_derivative(&self, t: f64, v: &Tangent, w: &Tangent) -> f64 {
        match self.kind {
            FlowKind::Euclidean | FlowKind::Sphere => self.scales[0].derivative(t) * v.dot(w),
            FlowKind::Hyperbolic => self.scales[0].derivative(t) * minkowski(v, w),
            FlowKind::Torus => self.scales.iter().enumerate().map(|(i, s)| s.derivative(t) * v[i] * w[i]).sum(),
        }
    }

    pub fn norm(&self, t: f64, v: &Tangent) -> f64 {
        self.inner(t, v, v).max(0.0).sqrt()
    }

    /// Root of the conformal factor; converts round/hyperbolic lengths to `g_t` lengths.
    fn root_c(&self, t: f64) -> f64 {
        match self.kind {
            FlowKind::Sphere | FlowKind::Hyperbolic => self.scales[0].value(t).sqrt(),
            _ => 1.0,
        }
    }

    /// Riemannian exponential of `g_t`; all builtin flows use closed forms.
    pub fn exp_map(&self, t: f64, x: &Point, v: &Tangent) -> Result<Point> {
        self.check_time(t)?;
        self.check_point(x)?;
        self.check_len(v, "tangent")?;
        Ok(self.exp_unchecked(x, v))
    }

    pub(crate) fn exp_unchecked(&self, x: &Point, v: &Tangent) -> Point {
        match self.kind {
            FlowKind::Euclidean => x + v,
            FlowKind::Torus => (x + v).map(wrap_angle),
            FlowKind::Sphere => {
                let theta = v.norm();
                if theta < 1e-300 {
                    return x.clone();
                }
                let y = x * theta.cos() + v * (theta.sin() / theta);
                &y / y.norm()
            }
            FlowKind::Hyperbolic => {
                let theta = minkowski(v, v).max(0.0).sqrt();
                if theta < 1e-300 {
                    return x.clone();
                }
                let y = x * theta.cosh() + v * (theta.sinh() / theta);
                self.project_point(&y)
            }
        }
    }

    /// Geodesic `s -> exp_x(s v / |v|)` of length `|v|_t`.
    pub fn geodesic_from_velocity(&self, t: f64, x: &Point, v: &Tangent) -> Geodesic {
        let length = self.norm(t, v);
        let end = self.exp_unchecked(x, v);
        let velocity = if length > 0.0 { v / length } else { DVector::zeros(v.len()) };
        Geodesic { kind: self.kind, t, start: x.clone(), end, length, velocity, root_c: self.root_c(t) }
    }

    /// `rho_t(x, y)` with the minimal geodesic from `x` to `y`.
    pub fn distance(&self, t: f64, x: &Point, y: &Point) -> Result<(f64, Geodesic)> {
        self.check_time(t)?;
        self.check_point(x)?;
        self.check_point(y)?;
        let root_c = self.root_c(t);
        let (length, velocity) = match self.kind {
            FlowKind::Euclidean => {
                let d = y - x;
                let len = self.norm(t, &d);
                (len, if len > 0.0 { d / len } else { d })
            }
            FlowKind::Torus => {
                let mut d = DVector::zeros(self.dim);
                for i in 0..self.dim {
                    let delta = wrap_signed(y[i] - x[i]);
                    if (delta.abs() - PI).abs() < 1e-12 {
                        return Err(Error::CutLocusAmbiguity);
                    }
                    d[i] = delta;
                }
                let len = self.norm(t, &d);
                (len, if len > 0.0 { d / len } else { d })
            }
            FlowKind::Sphere => {
                let cos = x.dot(y).clamp(-1.0, 1.0);
                let w = y - x * cos;
                let sin = w.norm();
                if sin < 1e-12 {
                    if cos < 0.0 {
                        return Err(Error::CutLocusAmbiguity);
                    }
                    (0.0, DVector::zeros(x.len()))
                } else {
                    let theta = sin.atan2(cos);
                    (root_c * theta, w / (sin * root_c))
                }
            }
            FlowKind::Hyperbolic => {
                let a = -minkowski(x, y);
                let w = y - x * a;
                let sinh = minkowski(&w, &w).max(0.0).sqrt();
                if sinh < 1e-14 {
                    (0.0, DVector::zeros(x.len()))
                } else {
                    let theta = sinh.asinh();
                    (root_c * theta, w / (sinh * root_c))
                }
            }
        };
        let geo = Geodesic { kind: self.kind, t, start: x.clone(), end: y.clone(), length, velocity, root_c };
        Ok((length, geo))
    }

    /// `rho_t(x, y)` without building a geodesic; defined on the cut locus too.
    pub fn rho(&self, t: f64, x: &Point, y: &Point) -> f64 {
        match self.kind {
            FlowKind::Euclidean => self.scales[0].value(t).sqrt() * (y - x).norm(),
            FlowKind::Torus => (0..self.dim)
                .map(|i| self.scales[i].value(t) * wrap_signed(y[i] - x[i]).powi(2))
                .sum::<f64>()
                .sqrt(),
            FlowKind::Sphere => {
                let cos = x.dot(y).clamp(-1.0, 1.0);
                let sin = (y - x * cos).norm();
                self.root_c(t) * sin.atan2(cos)
            }
            FlowKind::Hyperbolic => {
                let a = -minkowski(x, y);
                let w = y - x * a;
                self.root_c(t) * minkowski(&w, &w).max(0.0).sqrt().asinh()
            }
        }
    }

    /// `log_x(y)` for `g_t`: the initial velocity of the minimal geodesic scaled by its length.
    pub fn log_map(&self, t: f64, x: &Point, y: &Point) -> Result<Tangent> {
        let (len, geo) = self.distance(t, x, y)?;
        Ok(geo.velocity * len)
    }

    /// `g_t`-parallel transport of `v` (tangent at the geodesic start) to its end.
    pub fn parallel_transport(&self, geo: &Geodesic, v: &Tangent) -> Tangent {
        if geo.length == 0.0 {
            return v.clone();
        }
        match geo.kind {
            FlowKind::Euclidean | FlowKind::Torus => v.clone(),
            FlowKind::Sphere => {
                let w = &geo.velocity * geo.root_c;
                let theta = geo.length / geo.root_c;
                let a = v.dot(&w);
                v + (&w * (theta.cos() - 1.0) - &geo.start * theta.sin()) * a
            }
            FlowKind::Hyperbolic => {
                let w = &geo.velocity * geo.root_c;
                let theta = geo.length / geo.root_c;
                let a = minkowski(v, &w);
                v + (&w * (theta.cosh() - 1.0) + &geo.start * theta.sinh()) * a
            }
        }
    }

    /// Mirror reflection `M v = P v - 2 <v, gamma'(0)>_t gamma'(rho)`; identity when `x = y`.
    pub fn mirror_map(&self, t: f64, x: &Point, y: &Point, v: &Tangent) -> Result<Tangent> {
        let (len, geo) = self.distance(t, x, y)?;
        if len == 0.0 {
            return Ok(v.clone());
        }
        Ok(self.mirror_along(&geo, v))
    }

    pub(crate) fn mirror_along(&self, geo: &Geodesic, v: &Tangent) -> Tangent {
        let a = self.inner(geo.t, v, &geo.velocity);
        self.parallel_transport(geo, v) - geo.end_velocity() * (2.0 * a)
    }

    /// Distance-to-cut-locus proxy; zero exactly on `Cut_t`.
    pub fn cut_margin(&self, t: f64, x: &Point, y: &Point) -> f64 {
        match self.kind {
            FlowKind::Euclidean | FlowKind::Hyperbolic => f64::INFINITY,
            FlowKind::Sphere => {
                let cos = x.dot(y).clamp(-1.0, 1.0);
                let sin = (y - x * cos).norm();
                self.root_c(t) * (PI - sin.atan2(cos)).max(0.0)
            }
            FlowKind::Torus => {
                let weights: Vec<f64> = self.scales.iter().map(|s| s.value(t)).collect();
                let deltas: Vec<f64> = (0..self.dim).map(|i| wrap_signed(y[i] - x[i]).abs()).collect();
                let rho2: f64 = deltas.iter().zip(&weights).map(|(d, a)| a * d * d).sum();
                let rho = rho2.sqrt();
                deltas
                    .iter()
                    .zip(&weights)
                    .map(|(d, a)| {
                        let alt = TORUS_PERIOD - d;
                        ((rho2 - a * d * d + a * alt * alt).max(0.0).sqrt() - rho).max(0.0)
                    })
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// `g_t`-gradient from an ambient differential `df` (a covector in the
    /// Euclidean pairing of ambient coordinates).
    pub fn gradient_from_differential(&self, t: f64, x: &Point, df: &DVector<f64>) -> Tangent {
        match self.kind {
            FlowKind::Euclidean => df / self.scales[0].value(t),
            FlowKind::Sphere => (df - x * x.dot(df)) / self.scales[0].value(t),
            FlowKind::Hyperbolic => {
                let mut v = df.clone();
                v[0] = -v[0];
                (&v + x * minkowski(&v, x)) / self.scales[0].value(t)
            }
            FlowKind::Torus => DVector::from_fn(self.dim, |i, _| df[i] / self.scales[i].value(t)),
        }
    }

    /// A `g_t`-orthonormal frame at `x`, smooth in `x` away from candidate switches.
    pub fn orthonormal_frame(&self, t: f64, x: &Point) -> Result<Frame> {
        self.check_time(t)?;
        self.check_point(x)?;
        let n = self.ambient_dim();
        for threshold in [0.1, 1e-8] {
            let mut cols: Vec<Tangent> = Vec::with_capacity(self.dim);
            for i in 0..n {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                let mut v = self.project_tangent(x, &e);
                for c in &cols {
                    let a = self.inner(t, &v, c);
                    v -= c * a;
                }
                let scale = self.norm(t, &v);
                let unscaled = match self.kind {
                    FlowKind::Torus => scale / self.scales[i].value(t).sqrt(),
                    _ => scale / self.scales[0].value(t).sqrt(),
                };
                if unscaled > threshold {
                    cols.push(v / scale);
                    if cols.len() == self.dim {
                        return Ok(Frame::from_columns(&cols));
                    }
                }
            }
        }
        Err(Error::DegenerateFrame)
    }

    /// Frame coordinates `u^{-1} v = (<u e_a, v>_t)_a` of a tangent vector.
    pub fn frame_coordinates(&self, t: f64, frame: &Frame, v: &Tangent) -> DVector<f64> {
        DVector::from_iterator(frame.ncols(), frame.column_iter().map(|c| self.inner(t, &c.clone_owned(), v)))
    }

    /// Largest entry of `|u^T g_t u - I|`.
    pub fn frame_defect(&self, t: f64, frame: &Frame) -> f64 {
        let cols: Vec<Tangent> = frame.column_iter().map(|c| c.clone_owned()).collect();
        let mut worst: f64 = 0.0;
        for a in 0..cols.len() {
            for b in a..cols.len() {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((self.inner(t, &cols[a], &cols[b]) - target).abs());
            }
        }
        worst
    }

    pub(crate) fn check_frame(&self, t: f64, frame: &Frame) -> Result<()> {
        if frame.nrows() != self.ambient_dim() || frame.ncols() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "frame must be {}x{}, got {}x{}",
                self.ambient_dim(),
                self.dim,
                frame.nrows(),
                frame.ncols()
            )));
        }
        let defect = self.frame_defect(t, frame);
        if !(defect <= FRAME_TOL) {
            return Err(Error::FrameNotOrthonormal { defect });
        }
        Ok(())
    }

    /// Modified Gram-Schmidt with respect to `g_t`; keeps the first column's direction.
    pub fn reorthonormalize(&self, t: f64, frame: &Frame) -> Result<Frame> {
        let mut cols: Vec<Tangent> = Vec::with_capacity(frame.ncols());
        for col in frame.column_iter() {
            let mut v = col.clone_owned();
            let before = self.norm(t, &v);
            for c in &cols {
                let a = self.inner(t, &v, c);
                v -= c * a;
            }
            let len = self.norm(t, &v);
            if !(len > 1e-10 * before.max(f64::MIN_POSITIVE)) || !len.is_finite() {
                return Err(Error::DegenerateFrame);
            }
            cols.push(v / len);
        }
        Ok(Frame::from_columns(&cols))
    }

    /// Constant sectional curvature of `g_t` (zero on flat flows).
    pub fn sectional_curvature(&self, t: f64) -> f64 {
        match self.kind {
            FlowKind::Sphere => 1.0 / self.scales[0].value(t),
            FlowKind::Hyperbolic => -1.0 / self.scales[0].value(t),
            FlowKind::Euclidean | FlowKind::Torus => 0.0,
        }
    }

    /// Ricci curvature as a multiple of `g_t`: `(d - 1) * kappa(t)`.
    pub fn ricci_factor(&self, t: f64) -> f64 {
        (self.dim as f64 - 1.0) * self.sectional_curvature(t)
    }
}

/// Minimal `g_t`-geodesic (or the geodesic of a given initial velocity).
#[derive(Clone, Debug)]
pub struct Geodesic {
    kind: FlowKind,
    pub t: f64,
    pub start: Point,
    pub end: Point,
    /// `g_t`-length.
    pub length: f64,
    /// Unit initial velocity (zero for a trivial geodesic).
    pub velocity: Tangent,
    root_c: f64,
}

impl Geodesic {
    /// Point at `g_t`-arclength `s`.
    pub fn sample(&self, s: f64) -> Point {
        match self.kind {
            FlowKind::Euclidean => &self.start + &self.velocity * s,
            FlowKind::Torus => (&self.start + &self.velocity * s).map(wrap_angle),
            FlowKind::Sphere => {
                let th = s / self.root_c;
                let w = &self.velocity * self.root_c;
                let y = &self.start * th.cos() + w * th.sin();
                &y / y.norm()
            }
            FlowKind::Hyperbolic => {
                let th = s / self.root_c;
                let w = &self.velocity * self.root_c;
                &self.start * th.cosh() + w * th.sinh()
            }
        }
    }

    /// Unit velocity at arclength `s`.
    pub fn velocity_at(&self, s: f64) -> Tangent {
        match self.kind {
            FlowKind::Euclidean | FlowKind::Torus => self.velocity.clone(),
            FlowKind::Sphere => {
                let th = s / self.root_c;
                let w = &self.velocity * self.root_c;
                (w * th.cos() - &self.start * th.sin()) / self.root_c
            }
            FlowKind::Hyperbolic => {
                let th = s / self.root_c;
                let w = &self.velocity * self.root_c;
                (w * th.cosh() + &self.start * th.sinh()) / self.root_c
            }
        }
    }

    pub fn end_velocity(&self) -> Tangent {
        self.velocity_at(self.length)
    }
}

/// Lorentzian product `-a_0 b_0 + sum_i a_i b_i`.
pub fn minkowski(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b) - 2.0 * a[0] * b[0]
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TORUS_PERIOD);
    if r >= TORUS_PERIOD {
        0.0
    } else {
        r
    }
}

/// Representative of `a` modulo the period in `[-pi, pi)`.
pub(crate) fn wrap_signed(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TORUS_PERIOD) - PI;
    if r >= PI {
        r - TORUS_PERIOD
    } else {
        r
    }
}
