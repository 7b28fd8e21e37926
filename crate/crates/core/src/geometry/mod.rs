//! Model manifolds carrying a time-dependent metric and a drift.

mod curvature;
mod drift;
mod flow;
mod scale;

pub use curvature::{g_dot_matrix, rz_matrix, CurvatureBound, FramePoint};
pub(crate) use curvature::{g_dot_unchecked, rz_unchecked};
pub use drift::{CustomDrift, DriftField};
pub use flow::{
    minkowski, FlowKind, Frame, Geodesic, MetricFlow, Point, Tangent, DEFAULT_EPS_HORIZON, DEFAULT_FD_STEP,
    FRAME_TOL, MANIFOLD_TOL, TORUS_PERIOD,
};
pub(crate) use flow::wrap_signed;
#[cfg(test)]
use flow::wrap_angle;
pub use scale::ScaleFn;

use crate::error::{Error, Result};
use crate::field::ScalarField;

/// Radius below which `exp_x` is injective for `g_t`.
pub fn injectivity_radius(flow: &MetricFlow, t: f64) -> f64 {
    match flow.kind() {
        FlowKind::Sphere => flow.conformal_factor(t).sqrt() * std::f64::consts::PI,
        FlowKind::Torus => {
            flow.scales().iter().map(|s| s.value(t).sqrt()).fold(f64::INFINITY, f64::min) * std::f64::consts::PI
        }
        FlowKind::Euclidean | FlowKind::Hyperbolic => f64::INFINITY,
    }
}

/// `L_t f(x) = Delta_t f(x) + Z_t f(x)` by central differences along
/// `g_t`-geodesics in the directions of an orthonormal frame.
pub fn apply_generator(flow: &MetricFlow, t: f64, f: &ScalarField, x: &Point) -> Result<f64> {
    let frame = flow.orthonormal_frame(t, x)?;
    let h = flow.fd_step_at(x);
    if !(h < 0.25 * injectivity_radius(flow, t)) {
        return Err(Error::StencilOutOfDomain);
    }
    let f0 = f.value(t, x);
    let mut lap = 0.0;
    for col in frame.column_iter() {
        let e = col.clone_owned();
        let fp = f.value(t, &flow.exp_map(t, x, &(&e * h))?);
        let fm = f.value(t, &flow.exp_map(t, x, &(&e * -h))?);
        lap += (fp - 2.0 * f0 + fm) / (h * h);
    }
    let z = flow.project_tangent(x, &flow.drift().value(t, x));
    let zn = flow.norm(t, &z);
    let mut drift_term = 0.0;
    if zn > 0.0 {
        let dir = &z / zn;
        let fp = f.value(t, &flow.exp_map(t, x, &(&dir * h))?);
        let fm = f.value(t, &flow.exp_map(t, x, &(&dir * -h))?);
        drift_term = zn * (fp - fm) / (2.0 * h);
    }
    Ok(lap + drift_term)
}
