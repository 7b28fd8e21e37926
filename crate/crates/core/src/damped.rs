//! Damped parallel transport `dQ/dr = -R^Z_r(u_r) Q`, `Q_{s,s} = I`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::Result;
use crate::frame_sde::PathSample;
use crate::geometry::{rz_unchecked, CurvatureBound, FramePoint, MetricFlow};

/// `Q_{s, t_k}` at every node of a path.
#[derive(Clone, Debug)]
pub struct DampedTransport {
    pub times: Vec<f64>,
    pub q: Vec<DMatrix<f64>>,
}

fn isotropic_value(r: &DMatrix<f64>) -> Option<f64> {
    let d = r.nrows();
    let a = r[(0, 0)];
    let tol = 1e-14 * a.abs().max(1.0);
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { a } else { 0.0 };
            if (r[(i, j)] - target).abs() > tol {
                return None;
            }
        }
    }
    Some(a)
}

/// `exp(-a)` for symmetric `a`.
pub fn expm_neg_symmetric(a: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(v) = isotropic_value(a) {
        return DMatrix::identity(a.nrows(), a.nrows()) * (-v).exp();
    }
    let eig = SymmetricEigen::new(a.clone());
    let diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (-l).exp()));
    &eig.eigenvectors * diag * eig.eigenvectors.transpose()
}

/// Operator norm (largest singular value).
pub fn operator_norm(q: &DMatrix<f64>) -> f64 {
    if let Some(v) = isotropic_value(q) {
        return v.abs();
    }
    (q.transpose() * q).symmetric_eigenvalues().max().max(0.0).sqrt()
}

/// Incremental `Q` along a path visited node by node; each step uses the
/// trapezoid average of the lifted curvature at both ends.
#[derive(Clone, Debug)]
pub struct DampedTracker {
    pub q: DMatrix<f64>,
    r_prev: DMatrix<f64>,
    t_prev: f64,
}

impl DampedTracker {
    pub fn new(flow: &MetricFlow, fp: &FramePoint) -> Self {
        let d = flow.dim();
        DampedTracker { q: DMatrix::identity(d, d), r_prev: rz_unchecked(flow, fp.t, &fp.x, &fp.frame), t_prev: fp.t }
    }

    pub fn update(&mut self, flow: &MetricFlow, fp: &FramePoint) {
        let r_next = rz_unchecked(flow, fp.t, &fp.x, &fp.frame);
        let h = fp.t - self.t_prev;
        let step = expm_neg_symmetric(&((&self.r_prev + &r_next) * (0.5 * h)));
        self.q = step * &self.q;
        self.r_prev = r_next;
        self.t_prev = fp.t;
    }
}

pub fn evolve_q(flow: &MetricFlow, path: &PathSample) -> Result<DampedTransport> {
    flow.check_frame(path.states[0].t, &path.states[0].frame)?;
    let mut tracker = DampedTracker::new(flow, &path.states[0]);
    let mut q = Vec::with_capacity(path.states.len());
    q.push(tracker.q.clone());
    for st in &path.states[1..] {
        flow.check_frame(st.t, &st.frame)?;
        tracker.update(flow, st);
        q.push(tracker.q.clone());
    }
    Ok(DampedTransport { times: path.times.clone(), q })
}

impl DampedTransport {
    /// `Q_{t_j, t_k} = Q_{s,t_k} Q_{s,t_j}^{-1}`.
    pub fn between(&self, j: usize, k: usize) -> Option<DMatrix<f64>> {
        self.q[j].clone().try_inverse().map(|inv| &self.q[k] * inv)
    }

    pub fn norms(&self) -> Vec<f64> {
        self.q.iter().map(operator_norm).collect()
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct QCertificate {
    /// `max_k ( ||Q_{s,t_k}|| - exp(-int_s^{t_k} K) )`, trapezoid in time.
    pub max_violation: f64,
    /// Largest `| ||Q|| - exp(-int K) |`; zero when the bound is attained.
    pub max_gap: f64,
    pub node: usize,
}

pub fn q_norm_certificate(path: &PathSample, dt: &DampedTransport, k: &CurvatureBound) -> QCertificate {
    let mut integral = 0.0;
    let mut prev = k.eval(path.states[0].t, &path.states[0].x);
    let mut cert = QCertificate { max_violation: f64::NEG_INFINITY, max_gap: 0.0, node: 0 };
    for (i, st) in path.states.iter().enumerate() {
        if i > 0 {
            let cur = k.eval(st.t, &st.x);
            integral += 0.5 * (prev + cur) * (st.t - path.states[i - 1].t);
            prev = cur;
        }
        let diff = operator_norm(&dt.q[i]) - (-integral).exp();
        if diff > cert.max_violation {
            cert.max_violation = diff;
            cert.node = i;
        }
        cert.max_gap = cert.max_gap.max(diff.abs());
    }
    cert
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame_sde::simulate_path;
    use crate::geometry::DriftField;
    use crate::noise::NoiseStream;
    use nalgebra::DVector;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn euclidean_q_is_identity() {
        let e = MetricFlow::euclidean(2);
        let p = simulate_path(&e, &dv(&[0.0, 0.0]), None, 0.0, 0.5, 0.01, &NoiseStream::new(1, 0), &[]).unwrap();
        let dt = evolve_q(&e, &p).unwrap();
        assert!(dt.q.iter().all(|q| *q == DMatrix::identity(2, 2)));
        let c = q_norm_certificate(&p, &dt, &CurvatureBound::Constant(0.0));
        assert_eq!(c.max_violation, 0.0);
    }

    #[test]
    fn static_sphere_q_is_exp_minus_t() {
        let s = MetricFlow::static_sphere(2);
        let p = simulate_path(&s, &dv(&[1.0, 0.0, 0.0]), None, 0.0, 0.5, 1e-3, &NoiseStream::new(2, 0), &[]).unwrap();
        let dt = evolve_q(&s, &p).unwrap();
        let last = dt.q.last().unwrap();
        assert!((last - DMatrix::identity(2, 2) * (-0.5f64).exp()).norm() < 1e-10);
        let c = q_norm_certificate(&p, &dt, &CurvatureBound::Constant(1.0));
        assert!(c.max_violation <= 1e-8 && c.max_gap <= 1e-8);
    }

    #[test]
    fn shrinking_torus_q_is_exp_minus_lambda_t() {
        let tor = MetricFlow::shrinking_torus(2, 0.7);
        let p = simulate_path(&tor, &dv(&[1.0, 1.0]), None, 0.0, 0.999, 1e-3, &NoiseStream::new(3, 0), &[]).unwrap();
        let dt = evolve_q(&tor, &p).unwrap();
        let expect = (-0.7f64 * 0.999).exp();
        assert!((dt.q.last().unwrap() - DMatrix::identity(2, 2) * expect).norm() < 1e-10);
    }

    #[test]
    fn ricci_sphere_bound_is_attained() {
        let r = MetricFlow::ricci_sphere(2).unwrap();
        let p = simulate_path(&r, &dv(&[0.0, 0.0, 1.0]), None, 0.0, 0.2, 1e-4, &NoiseStream::new(4, 0), &[]).unwrap();
        let dt = evolve_q(&r, &p).unwrap();
        let k = CurvatureBound::for_flow(&r).unwrap();
        let c = q_norm_certificate(&p, &dt, &k);
        assert!(c.max_violation <= 1e-6 && c.max_gap <= 1e-6, "{c:?}");
        // against the exact solution Q = (1 - 2t) I
        assert!((operator_norm(dt.q.last().unwrap()) - 0.6).abs() < 1e-6);
    }

    #[test]
    fn semiflow_property_on_grid() {
        let drift = DriftField::custom(
            "shear",
            |_, x: &DVector<f64>| dv(&[x[1], 0.0]),
            |_, _, v: &DVector<f64>| dv(&[v[1], 0.0]),
        );
        let e = MetricFlow::euclidean(2).with_drift(drift).unwrap();
        let p = simulate_path(&e, &dv(&[0.0, 0.0]), None, 0.0, 0.3, 0.01, &NoiseStream::new(5, 0), &[]).unwrap();
        let dt = evolve_q(&e, &p).unwrap();
        let n = dt.q.len() - 1;
        for r in [3usize, 10, 17] {
            let composed = dt.between(r, n).unwrap() * &dt.q[r];
            assert!((composed - &dt.q[n]).norm() < 1e-12);
        }
        // symmetric part of the shear is off-diagonal, so Q is a genuine matrix
        assert!(dt.q[n][(0, 1)].abs() > 1e-3);
        let k = CurvatureBound::Constant(-0.5);
        assert!(q_norm_certificate(&p, &dt, &k).max_violation <= 1e-12);
    }

    #[test]
    fn expm_matches_series() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, -0.2]);
        let mut series = DMatrix::identity(2, 2);
        let mut term = DMatrix::identity(2, 2);
        for k in 1..30 {
            term = &term * (-&a) / k as f64;
            series += &term;
        }
        assert!((expm_neg_symmetric(&a) - series).norm() < 1e-14);
    }
}
