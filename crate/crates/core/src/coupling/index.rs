use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{Geodesic, MetricFlow, Point};
use crate::quadrature::{gauss_legendre, integrate};

use super::CouplingDrift;

fn geodesic(flow: &MetricFlow, t: f64, x: &Point, y: &Point) -> Result<Geodesic> {
    let (len, geo) = flow.distance(t, x, y)?;
    if len == 0.0 {
        return Err(Error::InvalidArgument("index form needs distinct points".into()));
    }
    if flow.cut_margin(t, x, y) <= 0.0 {
        return Err(Error::CutLocusAmbiguity);
    }
    Ok(geo)
}

/// `Z_t rho_t(y, .)(x) + Z_t rho_t(x, .)(y)`.
fn drift_terms(flow: &MetricFlow, t: f64, geo: &Geodesic) -> f64 {
    let zx = flow.project_tangent(&geo.start, &flow.drift().value(t, &geo.start));
    let zy = flow.project_tangent(&geo.end, &flow.drift().value(t, &geo.end));
    flow.inner(t, &zy, &geo.end_velocity()) - flow.inner(t, &zx, &geo.velocity)
}

/// Boundary value `u(0) = u(rho) = 1` of `u'' + kappa u = 0`; returns `(u, u')` at `s`.
fn scalar_jacobi(kappa: f64, rho: f64, s: f64) -> Result<(f64, f64)> {
    if kappa > 0.0 {
        let k = kappa.sqrt();
        let den = (k * rho / 2.0).cos();
        if den <= 1e-12 {
            return Err(Error::CutLocusAmbiguity);
        }
        Ok(((k * (s - rho / 2.0)).cos() / den, -k * (k * (s - rho / 2.0)).sin() / den))
    } else if kappa < 0.0 {
        let k = (-kappa).sqrt();
        let den = (k * rho / 2.0).cosh();
        Ok(((k * (s - rho / 2.0)).cosh() / den, k * (k * (s - rho / 2.0)).sinh() / den))
    } else {
        Ok((1.0, 0.0))
    }
}

/// Index form `I_Z(t, x, y)`: the scalar Jacobi profile in each of the `d - 1` normal
/// directions integrated with an `n_quad`-point Gauss rule, plus the drift terms.
pub fn index_form(flow: &MetricFlow, t: f64, x: &Point, y: &Point, n_quad: usize) -> Result<f64> {
    let geo = geodesic(flow, t, x, y)?;
    let kappa = flow.sectional_curvature(t);
    let rho = geo.length;
    let rule = gauss_legendre(n_quad);
    let mut sum = 0.0;
    for (node, w) in rule.nodes.iter().zip(&rule.weights) {
        let s = 0.5 * rho * (node + 1.0);
        let (u, du) = scalar_jacobi(kappa, rho, s)?;
        sum += w * (du * du - kappa * u * u);
    }
    Ok((flow.dim() as f64 - 1.0) * 0.5 * rho * sum + drift_terms(flow, t, &geo))
}

/// Closed form `(d - 1)(u'(rho) - u'(0))` plus drift terms.
pub fn index_form_closed(flow: &MetricFlow, t: f64, x: &Point, y: &Point) -> Result<f64> {
    let geo = geodesic(flow, t, x, y)?;
    let kappa = flow.sectional_curvature(t);
    let rho = geo.length;
    let per_direction = scalar_jacobi(kappa, rho, rho)?.1 - scalar_jacobi(kappa, rho, 0.0)?.1;
    Ok((flow.dim() as f64 - 1.0) * per_direction + drift_terms(flow, t, &geo))
}

fn rk4_pair(
    kappa: &dyn Fn(f64) -> DMatrix<f64>,
    y: &mut DMatrix<f64>,
    dy: &mut DMatrix<f64>,
    s: f64,
    h: f64,
) {
    let acc = |s: f64, y: &DMatrix<f64>| -(kappa(s) * y);
    let k1y = dy.clone();
    let k1v = acc(s, y);
    let k2y = &*dy + &k1v * (h / 2.0);
    let k2v = acc(s + h / 2.0, &(&*y + &k1y * (h / 2.0)));
    let k3y = &*dy + &k2v * (h / 2.0);
    let k3v = acc(s + h / 2.0, &(&*y + &k2y * (h / 2.0)));
    let k4y = &*dy + &k3v * h;
    let k4v = acc(s + h, &(&*y + &k3y * h));
    *y += (k1y + &k2y * 2.0 + &k3y * 2.0 + k4y) * (h / 6.0);
    *dy += (k1v + &k2v * 2.0 + &k3v * 2.0 + k4v) * (h / 6.0);
}

/// Matrix Jacobi boundary problem `J'' = -K(s) J`, `J(0) = J(rho) = I`, integrated
/// by shooting (RK4) and evaluated with an `n_quad`-point Gauss rule:
/// `int tr(J'^T J' - J^T K J) ds`.
pub fn jacobi_index(kappa: &dyn Fn(f64) -> DMatrix<f64>, m: usize, rho: f64, n_quad: usize) -> Result<f64> {
    let rule = gauss_legendre(n_quad);
    let mut nodes: Vec<(f64, f64)> =
        rule.nodes.iter().zip(&rule.weights).map(|(x, w)| (0.5 * rho * (x + 1.0), 0.5 * rho * w)).collect();
    nodes.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nodes"));
    let fine = 4096usize;
    let h_max = rho / fine as f64;
    let id = DMatrix::<f64>::identity(m, m);
    let zero = DMatrix::<f64>::zeros(m, m);
    // fundamental solutions, marched node to node, then once more to rho
    let (mut y1, mut d1, mut y2, mut d2) = (id.clone(), zero.clone(), zero.clone(), id.clone());
    let mut s = 0.0;
    let mut at_nodes = Vec::with_capacity(nodes.len());
    let march = |target: f64, y1: &mut DMatrix<f64>, d1: &mut DMatrix<f64>, y2: &mut DMatrix<f64>, d2: &mut DMatrix<f64>, s: &mut f64| {
        let n = ((target - *s) / h_max).ceil().max(1.0) as usize;
        let h = (target - *s) / n as f64;
        for _ in 0..n {
            rk4_pair(kappa, y1, d1, *s, h);
            rk4_pair(kappa, y2, d2, *s, h);
            *s += h;
        }
        *s = target;
    };
    for &(node, _) in &nodes {
        march(node, &mut y1, &mut d1, &mut y2, &mut d2, &mut s);
        at_nodes.push((y1.clone(), d1.clone(), y2.clone(), d2.clone()));
    }
    march(rho, &mut y1, &mut d1, &mut y2, &mut d2, &mut s);
    let inv = y2.clone().try_inverse().ok_or(Error::CutLocusAmbiguity)?;
    if inv.amax() > 1e12 {
        return Err(Error::CutLocusAmbiguity);
    }
    let a = inv * (&id - &y1);
    let mut sum = 0.0;
    for ((node, w), (y1, d1, y2, d2)) in nodes.iter().zip(&at_nodes) {
        let j = y1 + y2 * &a;
        let dj = d1 + d2 * &a;
        sum += w * ((dj.transpose() * &dj).trace() - (j.transpose() * kappa(*node) * &j).trace());
    }
    Ok(sum)
}

/// [`index_form`] through the matrix Jacobi route (cross-check).
pub fn index_form_jacobi(flow: &MetricFlow, t: f64, x: &Point, y: &Point, n_quad: usize) -> Result<f64> {
    let geo = geodesic(flow, t, x, y)?;
    let kappa = flow.sectional_curvature(t);
    let m = flow.dim() - 1;
    let k = move |_: f64| DMatrix::identity(m, m) * kappa;
    Ok(jacobi_index(&k, m, geo.length, n_quad)? + drift_terms(flow, t, &geo))
}

/// Upper bound on the drift of `rho_t(X_t, X~_t)` under the mirror coupling:
/// `1/2 int_gamma d/dt g_t(gamma', gamma') + I_Z + <U, grad rho>`.
pub fn rho_drift_bound(flow: &MetricFlow, t: f64, x: &Point, y: &Point, drift_u: &CouplingDrift) -> Result<f64> {
    let geo = geodesic(flow, t, x, y)?;
    let metric_term = 0.5
        * integrate(
            |s| {
                let v = geo.velocity_at(s);
                flow.inner_time_derivative(t, &v, &v)
            },
            0.0,
            geo.length,
            64,
        );
    let u = drift_u.value(flow, t, &geo);
    let u_term = flow.inner(t, &u, &geo.end_velocity());
    Ok(metric_term + index_form(flow, t, x, y, 64)? + u_term)
}
