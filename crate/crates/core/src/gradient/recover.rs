use std::ops::Range;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::damped::DampedTracker;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::frame_sde::{PathCursor, TimeGrid};
use crate::geometry::{injectivity_radius, minkowski, wrap_signed, FlowKind, MetricFlow, Point, Tangent};
use crate::noise::NoiseStream;
use crate::quadrature::gaussian_expectation;
use crate::stats::{kahan_sum, par_collect, Estimate};

/// Default `n` in the shifted families `f_n = n + f`.
pub const DEFAULT_FN_SHIFT: f64 = 1e3;

fn bump(a: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else {
        (-1.0 / a).exp()
    }
}

/// Smooth step: one on `[0, 1/2]`, zero on `[1, inf)`. Returns `(chi, chi')`.
fn cutoff(u: f64) -> (f64, f64) {
    if u <= 0.5 {
        return (1.0, 0.0);
    }
    if u >= 1.0 {
        return (0.0, 0.0);
    }
    let v = 2.0 * (u - 0.5);
    let (a, b) = (bump(1.0 - v), bump(v));
    let chi = a / (a + b);
    let dv = -a * b * (1.0 / (1.0 - v).powi(2) + 1.0 / (v * v)) / ((a + b) * (a + b));
    (chi, 2.0 * dv)
}

/// `theta / sin(theta)` and `(sin - theta cos) / sin^3`, or their hyperbolic analogues.
fn radial_profile(theta: f64, hyperbolic: bool) -> (f64, f64) {
    if theta < 1e-3 {
        let t2 = theta * theta;
        return if hyperbolic {
            (1.0 - t2 / 6.0, -1.0 / 3.0 + 2.0 * t2 / 15.0)
        } else {
            (1.0 + t2 / 6.0, 1.0 / 3.0 + 2.0 * t2 / 15.0)
        };
    }
    let (s, c) = if hyperbolic { (theta.sinh(), theta.cosh()) } else { theta.sin_cos() };
    (theta / s, (s - theta * c) / (s * s * s))
}

fn minkowski_flip(v: &DVector<f64>) -> DVector<f64> {
    let mut w = v.clone();
    w[0] = -w[0];
    w
}

/// A compactly supported field with `grad^s f(x) = X` and vanishing Hessian at `x`:
/// `f(y) = <log_x y, X>_s chi(rho_s(x, y) / r_c)`.
pub fn normal_linear_field(flow: &MetricFlow, s: f64, x: &Point, v: &Tangent, r_c: f64) -> Result<ScalarField> {
    flow.check_time(s)?;
    flow.check_point(x)?;
    let v = flow.project_tangent(x, v);
    if !(flow.norm(s, &v) > 0.0) {
        return Err(Error::InvalidArgument("the prescribed gradient must be non-zero".into()));
    }
    let margin = injectivity_radius(flow, s);
    if !(r_c > 0.0) || r_c >= margin {
        return Err(Error::RadiusTooLarge { radius: r_c, margin });
    }
    let name = format!("normal_linear(s={s}, r_c={r_c})");
    let x = x.clone();
    let weights = flow.metric_weights(s);
    Ok(match flow.kind() {
        FlowKind::Euclidean => {
            let c = weights[0];
            let (xv, vv) = (x.clone(), v.clone());
            ScalarField::new(name, move |_, y| {
                let dy = y - &xv;
                c * dy.dot(&vv) * cutoff(c.sqrt() * dy.norm() / r_c).0
            })
            .with_differential(move |_, y| {
                let dy = y - &x;
                let rho = c.sqrt() * dy.norm();
                let (chi, dchi) = cutoff(rho / r_c);
                let mut df = &v * (c * chi);
                if dchi != 0.0 {
                    df += &dy * (c * dy.dot(&v) * dchi / r_c * c / rho);
                }
                df
            })
        }
        FlowKind::Torus => {
            let a = weights;
            let parts = move |x: &Point, y: &Point| {
                let delta = DVector::from_fn(x.len(), |i, _| wrap_signed(y[i] - x[i]));
                let rho = delta.iter().zip(a.iter()).map(|(d, w)| w * d * d).sum::<f64>().sqrt();
                (delta, rho)
            };
            let a2 = flow.metric_weights(s);
            let (xv, vv, a1) = (x.clone(), v.clone(), a2.clone());
            let p1 = parts.clone();
            ScalarField::new(name, move |_, y| {
                let (delta, rho) = p1(&xv, y);
                let lin: f64 = (0..delta.len()).map(|i| a1[i] * delta[i] * vv[i]).sum();
                lin * cutoff(rho / r_c).0
            })
            .with_differential(move |_, y| {
                let (delta, rho) = parts(&x, y);
                let lin: f64 = (0..delta.len()).map(|i| a2[i] * delta[i] * v[i]).sum();
                let (chi, dchi) = cutoff(rho / r_c);
                DVector::from_fn(delta.len(), |i, _| {
                    let mut g = a2[i] * v[i] * chi;
                    if dchi != 0.0 {
                        g += lin * dchi / r_c * a2[i] * delta[i] / rho;
                    }
                    g
                })
            })
        }
        FlowKind::Sphere | FlowKind::Hyperbolic => {
            let hyperbolic = flow.kind() == FlowKind::Hyperbolic;
            let c = flow.conformal_factor(s);
            let root_c = c.sqrt();
            // pairing `<a, b>` of the model (dot or Minkowski) and the matrix J turning it into a dot product
            let pair = move |a: &DVector<f64>, b: &DVector<f64>| if hyperbolic { minkowski(a, b) } else { a.dot(b) };
            let flip = move |a: &DVector<f64>| if hyperbolic { minkowski_flip(a) } else { a.clone() };
            let angle = move |x: &Point, y: &Point| {
                if hyperbolic {
                    let w = y - x * (-minkowski(x, y));
                    minkowski(&w, &w).max(0.0).sqrt().asinh()
                } else {
                    let cos = x.dot(y).clamp(-1.0, 1.0);
                    (y - x * cos).norm().atan2(cos)
                }
            };
            let (xv, vv) = (x.clone(), v.clone());
            ScalarField::new(name, move |_, y| {
                let theta = angle(&xv, y);
                let (g, _) = radial_profile(theta, hyperbolic);
                c * g * pair(y, &vv) * cutoff(root_c * theta / r_c).0
            })
            .with_differential(move |_, y| {
                let theta = angle(&x, y);
                let (g, k) = radial_profile(theta, hyperbolic);
                let (chi, dchi) = cutoff(root_c * theta / r_c);
                let yv = pair(y, &v);
                let jx = flip(&x);
                let mut df = (flip(&v) * g - &jx * (yv * k)) * (c * chi);
                if dchi != 0.0 {
                    let sin = if hyperbolic { theta.sinh() } else { theta.sin() };
                    df -= &jx * (c * g * yv * dchi * root_c / r_c / sin);
                }
                df
            })
        }
    })
}

/// Settings shared by the three curvature-recovery formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoveryConfig {
    /// Offset `t_1 - s`; the ensemble also records `t_1/2` and `t_2 = 2 t_1` offsets.
    pub t1: f64,
    pub n_paths: usize,
    pub step: f64,
    pub seed: u64,
    /// Shift `n` of `f_n = n + f`.
    pub n: f64,
    pub n_batches: usize,
    /// Support radius of the test function; `None` picks `min(3, 0.9 inj)`.
    pub cutoff: Option<f64>,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig { t1: 0.02, n_paths: 400_000, step: 1e-3, seed: 0, n: DEFAULT_FN_SHIFT, n_batches: 100, cutoff: None }
    }
}

/// Outcome of one recovery formula.
#[derive(Clone, Debug, Serialize)]
pub struct RecoveryResult {
    /// Richardson value `2 v(t_1) - v(t_2)`.
    pub estimate: Estimate,
    pub at_t1: Estimate,
    pub at_t2: Estimate,
    /// Richardson value on `(t_1/2, t_1)`.
    pub refined: Estimate,
    /// `value(2n) - value(n)` for the shifted families.
    pub n_sensitivity: Option<Estimate>,
    /// The 95% interval is wider than the magnitude of the estimate.
    pub signal_below_noise: bool,
}

const NODES: usize = 3;

/// Per-path records at the three node offsets `t_1/2, t_1, 2 t_1`.
#[derive(Clone, Debug)]
pub struct RecoverySamples {
    dim: usize,
    taus: [f64; NODES],
    /// Per path and node: `f(X)`, control variate, `|grad f(X)|`, then `Q* u^{-1} grad f(X)`.
    data: Vec<f64>,
    n_paths: usize,
    n_batches: usize,
    shift: f64,
}

impl RecoverySamples {
    fn width(&self) -> usize {
        3 + self.dim
    }

    fn record(&self, path: usize, node: usize) -> &[f64] {
        let w = self.width();
        let start = (path * NODES + node) * w;
        &self.data[start..start + w]
    }

    fn mean_over(&self, paths: &Range<usize>, node: usize, g: impl Fn(&[f64]) -> f64) -> f64 {
        kahan_sum(paths.clone().map(|i| g(self.record(i, node)))) / paths.len() as f64
    }

    fn gradient_mean(&self, paths: &Range<usize>, node: usize) -> DVector<f64> {
        DVector::from_fn(self.dim, |a, _| self.mean_over(paths, node, |r| r[3 + a]))
    }

    /// Expectation of `psi(f)` using `psi(Y)` as control variate, `Y ~ N(0, 2 tau)`.
    fn controlled(&self, paths: &Range<usize>, node: usize, psi: impl Fn(f64) -> f64) -> f64 {
        let tau = self.taus[node];
        self.mean_over(paths, node, |r| psi(r[0]) - psi(r[1])) + gaussian_expectation(&psi, 0.0, (2.0 * tau).sqrt())
    }

    fn grad_value(&self, paths: &Range<usize>, node: usize, p: f64) -> f64 {
        let tau = self.taus[node];
        let a = self.mean_over(paths, node, |r| r[2].powf(p));
        (a - self.gradient_mean(paths, node).norm().powf(p)) / (p * tau)
    }

    fn variance_value(&self, paths: &Range<usize>, node: usize, p: f64, n: f64) -> f64 {
        let tau = self.taus[node];
        let e = |q: f64| self.controlled(paths, node, move |f| (q * (f / n).ln_1p()).exp_m1());
        let (e2, ep) = (e(2.0), e(2.0 / p));
        let d = n * n * (e2 - (p * ep.ln_1p()).exp_m1());
        let m2 = self.gradient_mean(paths, node).norm_squared();
        (p * d / (4.0 * (p - 1.0) * tau) - m2) / tau
    }

    fn entropy_value(&self, paths: &Range<usize>, node: usize, n: f64) -> f64 {
        let tau = self.taus[node];
        let phi = |v: f64| (1.0 + v) * v.ln_1p();
        let e_phi = self.controlled(paths, node, move |f| phi(f / n));
        let m = self.mean_over(paths, node, |r| (r[0] - r[1]) / n);
        let m2 = self.gradient_mean(paths, node).norm_squared();
        (n * n * (1.0 + m) * (e_phi - phi(m)) - tau * m2) / (tau * tau)
    }

    /// Point value on all paths and a batch-means standard error.
    fn batched(&self, g: impl Fn(&Range<usize>) -> f64) -> Estimate {
        let b = self.n_batches.max(2);
        let size = self.n_paths / b;
        let batch: Vec<f64> = (0..b).map(|j| g(&(j * size..(j + 1) * size))).collect();
        let spread = Estimate::from_samples(&batch).map(|e| e.stderr).unwrap_or(f64::NAN);
        Estimate { mean: g(&(0..self.n_paths)), stderr: spread, n: self.n_paths }
    }

    fn assemble(&self, value: impl Fn(&Range<usize>, usize) -> f64 + Copy) -> (Estimate, Estimate, Estimate, Estimate) {
        let at1 = self.batched(|r| value(r, 1));
        let at2 = self.batched(|r| value(r, 2));
        let rich = self.batched(|r| 2.0 * value(r, 1) - value(r, 2));
        let refined = self.batched(|r| 2.0 * value(r, 0) - value(r, 1));
        (rich, at1, at2, refined)
    }

    fn result(&self, value: impl Fn(&Range<usize>, usize) -> f64 + Copy, sens: Option<Estimate>) -> RecoveryResult {
        let (estimate, at_t1, at_t2, refined) = self.assemble(value);
        let signal_below_noise = 2.0 * 1.96 * estimate.stderr > estimate.mean.abs();
        RecoveryResult { estimate, at_t1, at_t2, refined, n_sensitivity: sens, signal_below_noise }
    }

    /// Gradient formula: `(P|grad f|^p - |grad P f|^p) / (p (t - s))`.
    pub fn grad(&self, p: f64) -> Result<RecoveryResult> {
        if !(p > 0.0) {
            return Err(Error::InvalidArgument(format!("p must be positive, got {p}")));
        }
        Ok(self.result(move |r, k| self.grad_value(r, k, p), None))
    }

    /// `L^p`-variance formula with `f_n = n + f`.
    pub fn variance(&self, p: f64) -> Result<RecoveryResult> {
        if !(p > 1.0) {
            return Err(Error::InvalidArgument(format!("p must exceed 1, got {p}")));
        }
        let n = self.shift;
        let sens = self.batched(|r| {
            let v = |n: f64| 2.0 * self.variance_value(r, 1, p, n) - self.variance_value(r, 2, p, n);
            v(2.0 * n) - v(n)
        });
        Ok(self.result(move |r, k| self.variance_value(r, k, p, n), Some(sens)))
    }

    /// Entropy formula with `f_n = n + f`.
    pub fn entropy(&self) -> RecoveryResult {
        let n = self.shift;
        let sens = self.batched(|r| {
            let v = |n: f64| 2.0 * self.entropy_value(r, 1, n) - self.entropy_value(r, 2, n);
            v(2.0 * n) - v(n)
        });
        self.result(move |r, k| self.entropy_value(r, k, n), Some(sens))
    }
}

/// Simulates the ensemble shared by every recovery formula at `(s, x)` in direction `v`.
pub fn recovery_samples(flow: &MetricFlow, s: f64, x: &Point, v: &Tangent, cfg: &RecoveryConfig) -> Result<RecoverySamples> {
    if !(cfg.t1 > 0.0) || !(cfg.step > 0.0) || !(cfg.n >= 1.0) {
        return Err(Error::InvalidArgument("recovery needs t1 > 0, step > 0 and n >= 1".into()));
    }
    if cfg.n_paths < 2 * cfg.n_batches.max(2) {
        return Err(Error::InsufficientSamples(format!("{} paths for {} batches", cfg.n_paths, cfg.n_batches)));
    }
    let len = flow.norm(s, v);
    if (len - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("direction must be a unit vector, |X|_s = {len}")));
    }
    let r_c = cfg.cutoff.unwrap_or_else(|| 3.0f64.min(0.9 * injectivity_radius(flow, s)));
    let f = normal_linear_field(flow, s, x, v, r_c)?;
    let horizon = s + 2.0 * cfg.t1;
    flow.check_simulation_time(horizon)?;
    let quarter = ((2.0 * cfg.t1 / cfg.step) / 4.0 - 1e-9).ceil().max(1.0) as usize;
    let grid = TimeGrid::with_steps(s, horizon, 4 * quarter);
    let node_index = [quarter, 2 * quarter, 4 * quarter];
    let taus = node_index.map(|k| grid.time(k) - s);

    let frame0 = flow.orthonormal_frame(s, x)?;
    let e = flow.frame_coordinates(s, &frame0, v) * std::f64::consts::SQRT_2;
    let d = flow.dim();
    let width = 3 + d;
    let rows = par_collect(cfg.n_paths, |i| {
        let mut cursor = PathCursor::new(flow, x.clone(), Some(frame0.clone()), grid)?;
        let mut tracker = DampedTracker::new(flow, cursor.state());
        let mut noise = NoiseStream::new(cfg.seed, i).brownian();
        let mut cv = 0.0;
        let mut out = Vec::with_capacity(NODES * width);
        while !cursor.is_done() {
            let db = cursor.advance_with(&mut noise)?;
            cv += e.dot(&db);
            tracker.update(flow, cursor.state());
            if node_index.contains(&cursor.k()) {
                let st = cursor.state();
                let grad = f.gradient(flow, st.t, &st.x)?;
                let pulled = tracker.q.tr_mul(&flow.frame_coordinates(st.t, &st.frame, &grad));
                out.push(f.value(st.t, &st.x));
                out.push(cv);
                out.push(flow.norm(st.t, &grad));
                out.extend(pulled.iter());
            }
        }
        Ok(out)
    })?;
    Ok(RecoverySamples {
        dim: d,
        taus,
        data: rows.concat(),
        n_paths: cfg.n_paths,
        n_batches: cfg.n_batches,
        shift: cfg.n,
    })
}

/// Recovers `R^Z_s(X, X)` from the gradient formula with exponent `p`.
pub fn curvature_recover_grad(
    flow: &MetricFlow,
    s: f64,
    x: &Point,
    v: &Tangent,
    p: f64,
    cfg: &RecoveryConfig,
) -> Result<RecoveryResult> {
    recovery_samples(flow, s, x, v, cfg)?.grad(p)
}

pub fn curvature_recover_variance(
    flow: &MetricFlow,
    s: f64,
    x: &Point,
    v: &Tangent,
    p: f64,
    cfg: &RecoveryConfig,
) -> Result<RecoveryResult> {
    recovery_samples(flow, s, x, v, cfg)?.variance(p)
}

pub fn curvature_recover_entropy(
    flow: &MetricFlow,
    s: f64,
    x: &Point,
    v: &Tangent,
    cfg: &RecoveryConfig,
) -> Result<RecoveryResult> {
    Ok(recovery_samples(flow, s, x, v, cfg)?.entropy())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ScaleFn;
    use proptest::prelude::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn cases() -> Vec<(MetricFlow, Point, Tangent)> {
        let c2 = ScaleFn::Constant { value: 2.0 };
        vec![
            (MetricFlow::euclidean(2), dv(&[0.3, -0.2]), dv(&[0.6, 0.8])),
            (MetricFlow::static_sphere(2), dv(&[1.0, 0.0, 0.0]), dv(&[0.0, 0.6, 0.8])),
            (MetricFlow::sphere(3, c2).unwrap(), dv(&[0.0, 0.6, 0.0, 0.8]), dv(&[0.5, 0.0, 0.2, 0.0])),
            (
                MetricFlow::hyperbolic(2, c2).unwrap(),
                dv(&[(1.0f64 + 0.25 + 0.09).sqrt(), 0.5, 0.3]),
                dv(&[0.0, 0.3, -0.5]),
            ),
            (MetricFlow::shrinking_torus(2, 0.5), dv(&[1.0, 6.0]), dv(&[0.7, -0.4])),
        ]
    }

    fn tangent(flow: &MetricFlow, x: &Point, v: &Tangent) -> Tangent {
        flow.project_tangent(x, v)
    }

    #[test]
    fn cutoff_is_smooth_step() {
        assert_eq!(cutoff(0.3), (1.0, 0.0));
        assert_eq!(cutoff(1.2), (0.0, 0.0));
        assert!((cutoff(0.75).0 - 0.5).abs() < 1e-15);
        for u in [0.55, 0.7, 0.9, 0.99] {
            let h = 1e-6;
            let fd = (cutoff(u + h).0 - cutoff(u - h).0) / (2.0 * h);
            assert!((fd - cutoff(u).1).abs() < 1e-6, "u = {u}");
        }
    }

    #[test]
    fn gradient_at_base_point_is_prescribed() {
        for (flow, x, v) in cases() {
            let v = tangent(&flow, &x, &v);
            let f = normal_linear_field(&flow, 0.0, &x, &v, 1.0).unwrap();
            let g = f.gradient(&flow, 0.0, &x).unwrap();
            assert!((&g - &v).amax() < 1e-12, "{:?}", flow.kind());
            // finite differences along an orthonormal frame
            let frame = flow.orthonormal_frame(0.0, &x).unwrap();
            let h = 1e-5;
            for a in 0..flow.dim() {
                let e = frame.column(a).clone_owned();
                let up = f.value(0.0, &flow.exp_map(0.0, &x, &(&e * h)).unwrap());
                let dn = f.value(0.0, &flow.exp_map(0.0, &x, &(&e * -h)).unwrap());
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - flow.inner(0.0, &e, &v)).abs() < 1e-8, "{:?} axis {a}", flow.kind());
            }
        }
    }

    #[test]
    fn hessian_vanishes_at_base_point() {
        for (flow, x, v) in cases() {
            let v = tangent(&flow, &x, &v);
            let f = normal_linear_field(&flow, 0.0, &x, &v, 1.0).unwrap();
            let frame = flow.orthonormal_frame(0.0, &x).unwrap();
            let h = 1e-3;
            let at = |w: Tangent| f.value(0.0, &flow.exp_map(0.0, &x, &w).unwrap());
            for a in 0..flow.dim() {
                for b in 0..flow.dim() {
                    let (ea, eb) = (frame.column(a).clone_owned(), frame.column(b).clone_owned());
                    let second = (at((&ea + &eb) * h) - at((&ea - &eb) * h) - at((&eb - &ea) * h) + at((&ea + &eb) * -h))
                        / (4.0 * h * h);
                    assert!(second.abs() < 1e-6, "{:?} ({a},{b}) -> {second}", flow.kind());
                }
            }
        }
    }

    #[test]
    fn differential_matches_values_away_from_base_point() {
        for (flow, x, v) in cases() {
            let v = tangent(&flow, &x, &v);
            let f = normal_linear_field(&flow, 0.0, &x, &v, 1.0).unwrap();
            let frame = flow.orthonormal_frame(0.0, &x).unwrap();
            // a point inside the transition band of the cutoff
            let y = flow.exp_map(0.0, &x, &(frame.column(0).clone_owned() * 0.7 + frame.column(1) * 0.2)).unwrap();
            let g = f.gradient(&flow, 0.0, &y).unwrap();
            let fy = flow.orthonormal_frame(0.0, &y).unwrap();
            let h = 1e-5;
            for a in 0..flow.dim() {
                let e = fy.column(a).clone_owned();
                let fd = (f.value(0.0, &flow.exp_map(0.0, &y, &(&e * h)).unwrap())
                    - f.value(0.0, &flow.exp_map(0.0, &y, &(&e * -h)).unwrap()))
                    / (2.0 * h);
                assert!((fd - flow.inner(0.0, &e, &g)).abs() < 1e-7, "{:?}", flow.kind());
            }
        }
    }

    #[test]
    fn radius_checks() {
        let s = MetricFlow::static_sphere(2);
        let x = dv(&[0.0, 0.0, 1.0]);
        assert!(matches!(normal_linear_field(&s, 0.0, &x, &dv(&[1.0, 0.0, 0.0]), 3.2), Err(Error::RadiusTooLarge { .. })));
        assert!(matches!(normal_linear_field(&s, 0.0, &x, &dv(&[0.0, 0.0, 1.0]), 1.0), Err(Error::InvalidArgument(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn field_vanishes_outside_support(theta in 1.0f64..3.1, phi in 0.0f64..6.2) {
            let s = MetricFlow::static_sphere(2);
            let x = dv(&[0.0, 0.0, 1.0]);
            let f = normal_linear_field(&s, 0.0, &x, &dv(&[1.0, 0.0, 0.0]), 1.0).unwrap();
            let y = dv(&[theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]);
            prop_assert_eq!(f.value(0.0, &y), 0.0);
            prop_assert!(f.differential(0.0, &y).unwrap().amax() == 0.0);
        }
    }

    #[test]
    fn euclidean_recovery_is_zero() {
        let e = MetricFlow::euclidean(2);
        let cfg = RecoveryConfig { n_paths: 20_000, seed: 3, ..RecoveryConfig::default() };
        let samples = recovery_samples(&e, 0.0, &dv(&[0.0, 0.0]), &dv(&[1.0, 0.0]), &cfg).unwrap();
        // the field is exactly linear along every path; what is left is the O(1/n) shift bias
        for r in [samples.grad(2.0).unwrap(), samples.variance(2.0).unwrap(), samples.entropy()] {
            assert!(r.estimate.mean.abs() <= 3.0 * r.estimate.stderr + 1e-5, "{r:?}");
        }
    }

    #[test]
    fn sphere_recovery_small_ensemble() {
        let s = MetricFlow::static_sphere(2);
        let cfg = RecoveryConfig { n_paths: 40_000, seed: 4, ..RecoveryConfig::default() };
        let g = curvature_recover_grad(&s, 0.0, &dv(&[1.0, 0.0, 0.0]), &dv(&[0.0, 1.0, 0.0]), 2.0, &cfg).unwrap();
        assert!((g.estimate.mean - 1.0).abs() < 0.15, "{g:?}");
        assert!((g.estimate.mean - g.refined.mean).abs() < 3.0 * g.estimate.stderr.hypot(g.refined.stderr) + 0.05);
    }

    #[test]
    fn recovery_rejects_bad_input() {
        let s = MetricFlow::static_sphere(2);
        let cfg = RecoveryConfig { n_paths: 1000, n_batches: 10, ..RecoveryConfig::default() };
        let x = dv(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            curvature_recover_grad(&s, 0.0, &x, &dv(&[0.0, 2.0, 0.0]), 2.0, &cfg),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            curvature_recover_variance(&s, 0.0, &x, &dv(&[0.0, 1.0, 0.0]), 1.0, &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }
}
