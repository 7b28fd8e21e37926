use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{DriftField, FlowKind, Frame, MetricFlow, Point};
use crate::error::{Error, Result};

/// Horizontal-diffusion state: time, base point and a `g_t`-orthonormal frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePoint {
    pub t: f64,
    pub x: Point,
    pub frame: Frame,
}

impl FramePoint {
    pub fn new(t: f64, x: Point, frame: Frame) -> Self {
        FramePoint { t, x, frame }
    }

    /// State at `(t, x)` with the flow's canonical orthonormal frame.
    pub fn at(flow: &MetricFlow, t: f64, x: Point) -> Result<Self> {
        let frame = flow.orthonormal_frame(t, &x)?;
        Ok(FramePoint { t, x, frame })
    }
}

/// Lifted `G(t, u)_{ab} = (d/dt g_t)(u e_a, u e_b)`.
pub fn g_dot_matrix(flow: &MetricFlow, fp: &FramePoint) -> Result<DMatrix<f64>> {
    flow.check_time(fp.t)?;
    flow.check_frame(fp.t, &fp.frame)?;
    Ok(g_dot_unchecked(flow, fp.t, &fp.frame))
}

pub(crate) fn g_dot_unchecked(flow: &MetricFlow, t: f64, frame: &Frame) -> DMatrix<f64> {
    let d = frame.ncols();
    let mut g = DMatrix::zeros(d, d);
    let cols: Vec<_> = frame.column_iter().map(|c| c.clone_owned()).collect();
    for a in 0..d {
        for b in a..d {
            let v = flow.inner_time_derivative(t, &cols[a], &cols[b]);
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

/// Lifted `R^Z_t(u)_{ab} = Ric_t(u e_a, u e_b) - <grad_{u e_a} Z_t, u e_b>_t - 1/2 (d/dt g_t)(u e_a, u e_b)`.
///
/// The drift term is symmetrized; only its symmetric part enters the quadratic form.
pub fn rz_matrix(flow: &MetricFlow, fp: &FramePoint) -> Result<DMatrix<f64>> {
    flow.check_time(fp.t)?;
    flow.check_frame(fp.t, &fp.frame)?;
    Ok(rz_unchecked(flow, fp.t, &fp.x, &fp.frame))
}

pub(crate) fn rz_unchecked(flow: &MetricFlow, t: f64, x: &Point, frame: &Frame) -> DMatrix<f64> {
    let d = frame.ncols();
    let mut r = if flow.is_static() { DMatrix::zeros(d, d) } else { g_dot_unchecked(flow, t, frame) * -0.5 };
    let ric = flow.ricci_factor(t);
    for a in 0..d {
        r[(a, a)] += ric;
    }
    if !flow.drift().is_zero() {
        let cols: Vec<_> = frame.column_iter().map(|c| c.clone_owned()).collect();
        let grads: Vec<_> = cols.iter().map(|c| flow.drift().covariant_derivative(t, x, c)).collect();
        for a in 0..d {
            for b in 0..d {
                let sym = 0.5 * (flow.inner(t, &grads[a], &cols[b]) + flow.inner(t, &grads[b], &cols[a]));
                r[(a, b)] -= sym;
            }
        }
    }
    r
}

type TimeFn = dyn Fn(f64) -> f64 + Send + Sync;
type SpaceTimeFn = dyn Fn(f64, &Point) -> f64 + Send + Sync;

/// A lower bound `K(t, x)` for `R^Z_t`.
#[derive(Clone)]
pub enum CurvatureBound {
    Constant(f64),
    TimeOnly(Arc<TimeFn>),
    SpaceTime(Arc<SpaceTimeFn>),
}

impl CurvatureBound {
    pub fn time_only(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        CurvatureBound::TimeOnly(Arc::new(f))
    }

    pub fn space_time(f: impl Fn(f64, &Point) -> f64 + Send + Sync + 'static) -> Self {
        CurvatureBound::SpaceTime(Arc::new(f))
    }

    /// Closed-form optimal bound for a builtin flow; `None` for custom drifts.
    pub fn for_flow(flow: &MetricFlow) -> Option<Self> {
        let drift_shift = match flow.drift() {
            DriftField::Zero => 0.0,
            DriftField::LinearRadial { lambda } => *lambda,
            DriftField::Custom(_) => return None,
        };
        let f = flow.clone();
        let bound = match flow.kind() {
            FlowKind::Torus => {
                if flow.is_static() && drift_shift == 0.0 {
                    return Some(CurvatureBound::Constant(0.0));
                }
                CurvatureBound::time_only(move |t| {
                    f.scales().iter().map(|s| -0.5 * s.log_derivative(t)).fold(f64::INFINITY, f64::min)
                })
            }
            _ => {
                if flow.is_static() {
                    return Some(CurvatureBound::Constant(flow.ricci_factor(0.0) - drift_shift));
                }
                CurvatureBound::time_only(move |t| f.ricci_factor(t) - 0.5 * f.scales()[0].log_derivative(t) - drift_shift)
            }
        };
        Some(bound)
    }

    pub fn eval(&self, t: f64, x: &Point) -> f64 {
        match self {
            CurvatureBound::Constant(k) => *k,
            CurvatureBound::TimeOnly(f) => f(t),
            CurvatureBound::SpaceTime(f) => f(t, x),
        }
    }

    /// Time-only evaluation; fails for bounds that depend on space.
    pub fn eval_time(&self, t: f64) -> Result<f64> {
        match self {
            CurvatureBound::Constant(k) => Ok(*k),
            CurvatureBound::TimeOnly(f) => Ok(f(t)),
            CurvatureBound::SpaceTime(_) => {
                Err(Error::InvalidArgument("this check requires a time-only curvature bound".into()))
            }
        }
    }

    pub fn is_time_only(&self) -> bool {
        !matches!(self, CurvatureBound::SpaceTime(_))
    }

    /// `int_s^t K(r) dr` for time-only bounds (composite Gauss-Legendre).
    pub fn integrate(&self, s: f64, t: f64) -> Result<f64> {
        if let CurvatureBound::Constant(k) = self {
            return Ok(k * (t - s));
        }
        self.eval_time(s)?;
        Ok(crate::quadrature::integrate(|r| self.eval_time(r).unwrap_or(f64::NAN), s, t, 64))
    }

    /// `int_s^t exp(2 int_s^u K) du`, the Harnack/hypercontractivity time scale.
    pub fn exp2_integral(&self, s: f64, t: f64) -> Result<f64> {
        if let CurvatureBound::Constant(k) = self {
            let len = t - s;
            let z = 2.0 * k * len;
            return Ok(if z.abs() < 1e-8 { len * (1.0 + z / 2.0) } else { z.exp_m1() / (2.0 * k) });
        }
        self.eval_time(s)?;
        Ok(crate::quadrature::integrate(
            |u| (2.0 * self.integrate(s, u).unwrap_or(f64::NAN)).exp(),
            s,
            t,
            64,
        ))
    }
}

impl fmt::Debug for CurvatureBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurvatureBound::Constant(k) => write!(f, "CurvatureBound::Constant({k})"),
            CurvatureBound::TimeOnly(_) => write!(f, "CurvatureBound::TimeOnly(..)"),
            CurvatureBound::SpaceTime(_) => write!(f, "CurvatureBound::SpaceTime(..)"),
        }
    }
}
