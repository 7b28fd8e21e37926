//! Monte Carlo semigroups and Bismut-type derivative formulas.

mod kolmogorov;
mod local;
mod recover;

pub use kolmogorov::{kolmogorov_residual, KolmogorovResidual, DEFAULT_KOLMOGOROV_DELTA};
pub use local::{bismut_local, LocalConfig, LocalEstimate};
pub use recover::{
    curvature_recover_entropy, curvature_recover_grad, curvature_recover_variance, normal_linear_field,
    recovery_samples, RecoveryConfig, RecoveryResult, RecoverySamples, DEFAULT_FN_SHIFT,
};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::damped::DampedTracker;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::frame_sde::{PathCursor, TimeGrid};
use crate::geometry::{Frame, MetricFlow, Point};
use crate::noise::NoiseStream;
use crate::stats::{par_collect, Estimate, McConfig, VectorEstimate};

/// Weight `h` in the integrated derivative formula (`h(s) = 0`, `h(t) = 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HProfile {
    /// `h(r) = (r - s) / (t - s)`.
    Linear,
    /// Random time change localized to `{rho_r(x, .) <= radius}`; see [`bismut_local`].
    TimeChanged { radius: f64 },
    /// Piecewise-linear interpolation of `(time, value)` nodes.
    Custom { times: Vec<f64>, values: Vec<f64> },
}

impl HProfile {
    fn validate(&self, s: f64, t: f64) -> Result<()> {
        match self {
            HProfile::Linear => Ok(()),
            HProfile::TimeChanged { .. } => {
                Err(Error::InvalidArgument("time-changed profiles are path dependent; use bismut_local".into()))
            }
            HProfile::Custom { times, values } => {
                let ok = times.len() == values.len()
                    && times.len() >= 2
                    && times.windows(2).all(|w| w[1] > w[0])
                    && (times[0] - s).abs() < 1e-12
                    && (times[times.len() - 1] - t).abs() < 1e-12
                    && values[0] == 0.0
                    && values[values.len() - 1] == 1.0;
                if ok {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(
                        "custom h needs increasing times from s to t with h(s) = 0 and h(t) = 1".into(),
                    ))
                }
            }
        }
    }

    /// `h(r)` for deterministic profiles.
    pub fn value(&self, s: f64, t: f64, r: f64) -> f64 {
        match self {
            HProfile::Linear | HProfile::TimeChanged { .. } => ((r - s) / (t - s)).clamp(0.0, 1.0),
            HProfile::Custom { times, values } => {
                if r <= times[0] {
                    return values[0];
                }
                for w in 0..times.len() - 1 {
                    if r <= times[w + 1] {
                        let a = (r - times[w]) / (times[w + 1] - times[w]);
                        return values[w] + a * (values[w + 1] - values[w]);
                    }
                }
                values[values.len() - 1]
            }
        }
    }
}

fn start_frame(flow: &MetricFlow, s: f64, x: &Point, frame0: Option<&Frame>) -> Result<Frame> {
    match frame0 {
        Some(f) => {
            flow.check_frame(s, f)?;
            Ok(f.clone())
        }
        None => flow.orthonormal_frame(s, x),
    }
}

/// `P_{s,t} f(x) = E f(t, X_t)`.
pub fn semigroup(flow: &MetricFlow, f: &ScalarField, s: f64, t: f64, x: &Point, mc: &McConfig) -> Result<Estimate> {
    mc.validate()?;
    let grid = TimeGrid::uniform(s, t, mc.step)?;
    flow.check_simulation_time(t)?;
    let frame0 = flow.orthonormal_frame(s, x)?;
    let samples = par_collect(mc.n_paths, |i| {
        let cursor = PathCursor::new(flow, x.clone(), Some(frame0.clone()), grid)?;
        let end = cursor.run(&mut NoiseStream::new(mc.seed, i).brownian())?;
        Ok(f.value(t, &end.x))
    })?;
    Estimate::from_samples(&samples)
}

/// Per-path output of the joint Bismut ensemble.
struct BismutSample {
    pathwise: Option<DVector<f64>>,
    integrated: Option<DVector<f64>>,
}

/// Both global estimators from one ensemble, with their paired difference.
#[derive(Clone, Debug, Serialize)]
pub struct BismutPair {
    pub pathwise: VectorEstimate,
    pub integrated: VectorEstimate,
    /// `integrated - pathwise`, per path.
    pub difference: VectorEstimate,
}

#[allow(clippy::too_many_arguments)]
fn bismut_ensemble(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    t: f64,
    x: &Point,
    frame0: Option<&Frame>,
    h: &HProfile,
    mc: &McConfig,
    pathwise: bool,
    integrated: bool,
) -> Result<Vec<BismutSample>> {
    mc.validate()?;
    flow.check_simulation_time(t)?;
    if integrated {
        if t <= s {
            return Err(Error::DegenerateInterval(t - s));
        }
        h.validate(s, t)?;
    }
    if pathwise && !f.has_gradient() {
        return Err(Error::MissingGradient(f.name().to_string()));
    }
    let grid = TimeGrid::uniform(s, t, mc.step)?;
    let frame0 = start_frame(flow, s, x, frame0)?;
    let d = flow.dim();
    par_collect(mc.n_paths, |i| {
        let mut cursor = PathCursor::new(flow, x.clone(), Some(frame0.clone()), grid)?;
        let mut tracker = DampedTracker::new(flow, cursor.state());
        let mut noise = NoiseStream::new(mc.seed, i).brownian();
        let mut acc = DVector::zeros(d);
        while !cursor.is_done() {
            let k = cursor.k();
            let (t0, t1) = (grid.time(k), grid.time(k + 1));
            let db = cursor.advance_with(&mut noise)?;
            if integrated {
                let rate = (h.value(s, t, t1) - h.value(s, t, t0)) / (t1 - t0);
                acc += tracker.q.tr_mul(&db) * rate;
            }
            tracker.update(flow, cursor.state());
        }
        let end = cursor.state();
        let pw = if pathwise {
            let grad = f.gradient(flow, t, &end.x)?;
            Some(tracker.q.tr_mul(&flow.frame_coordinates(t, &end.frame, &grad)))
        } else {
            None
        };
        let int = if integrated { Some(acc * (f.value(t, &end.x) / std::f64::consts::SQRT_2)) } else { None };
        Ok(BismutSample { pathwise: pw, integrated: int })
    })
}

/// `u_s^{-1} grad^s P_{s,t} f(x)` as `E[Q*_{s,t} u_t^{-1} grad^t f(X_t)]`.
pub fn bismut_pathwise(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    t: f64,
    x: &Point,
    frame0: Option<&Frame>,
    mc: &McConfig,
) -> Result<VectorEstimate> {
    let samples = bismut_ensemble(flow, f, s, t, x, frame0, &HProfile::Linear, mc, true, false)?;
    let v: Vec<_> = samples.into_iter().map(|b| b.pathwise.expect("requested")).collect();
    VectorEstimate::from_samples(&v)
}

/// `u_s^{-1} grad^s P_{s,t} f(x)` as `E[f(X_t) int h'(r) Q*_{s,r} dB_r] / sqrt 2` (left-point sums).
#[allow(clippy::too_many_arguments)]
pub fn bismut_integrated(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    t: f64,
    x: &Point,
    frame0: Option<&Frame>,
    h: &HProfile,
    mc: &McConfig,
) -> Result<VectorEstimate> {
    let samples = bismut_ensemble(flow, f, s, t, x, frame0, h, mc, false, true)?;
    let v: Vec<_> = samples.into_iter().map(|b| b.integrated.expect("requested")).collect();
    VectorEstimate::from_samples(&v)
}

/// Pathwise and integrated estimators on shared paths.
#[allow(clippy::too_many_arguments)]
pub fn bismut_pair(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    t: f64,
    x: &Point,
    frame0: Option<&Frame>,
    h: &HProfile,
    mc: &McConfig,
) -> Result<BismutPair> {
    let samples = bismut_ensemble(flow, f, s, t, x, frame0, h, mc, true, true)?;
    let pw: Vec<_> = samples.iter().map(|b| b.pathwise.clone().expect("requested")).collect();
    let int: Vec<_> = samples.iter().map(|b| b.integrated.clone().expect("requested")).collect();
    let diff: Vec<_> = pw.iter().zip(&int).map(|(a, b)| b - a).collect();
    Ok(BismutPair {
        pathwise: VectorEstimate::from_samples(&pw)?,
        integrated: VectorEstimate::from_samples(&int)?,
        difference: VectorEstimate::from_samples(&diff)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FlowKind;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn semigroup_of_constant_is_exact() {
        let s = MetricFlow::static_sphere(2);
        let e = semigroup(&s, &ScalarField::constant(1.0), 0.0, 0.2, &dv(&[0.0, 0.0, 1.0]), &McConfig::new(200, 0.01, 1))
            .unwrap();
        assert_eq!((e.mean, e.stderr), (1.0, 0.0));
    }

    #[test]
    fn semigroup_gaussian_second_moment() {
        let e = MetricFlow::euclidean(1);
        let est =
            semigroup(&e, &ScalarField::squared_norm(), 0.0, 0.5, &dv(&[0.0]), &McConfig::new(20_000, 0.01, 2)).unwrap();
        assert!(est.within(1.0, 3.0), "{est:?}");
    }

    #[test]
    fn semigroup_sphere_eigenfunction() {
        let s = MetricFlow::static_sphere(2);
        let t = 0.3;
        let est = semigroup(&s, &ScalarField::coordinate(2), 0.0, t, &dv(&[0.0, 0.0, 1.0]), &McConfig::new(20_000, 1e-3, 3))
            .unwrap();
        // weak error of the scheme is O(step); allow it on top of the statistical band
        assert!((est.mean - (-2.0 * t).exp()).abs() < 3.0 * est.stderr + 2e-3, "{est:?}");
    }

    #[test]
    fn linear_field_gradient_is_exact_in_flat_space() {
        let e = MetricFlow::euclidean(2);
        let f = ScalarField::linear(vec![0.5, -1.5]);
        let mc = McConfig::new(500, 0.02, 4);
        let pw = bismut_pathwise(&e, &f, 0.0, 0.4, &dv(&[0.1, 0.2]), None, &mc).unwrap();
        assert_eq!(pw.mean, vec![0.5, -1.5]);
        assert_eq!(pw.stderr, vec![0.0, 0.0]);
        let int = bismut_integrated(&e, &f, 0.0, 0.4, &dv(&[0.1, 0.2]), None, &HProfile::Linear, &mc).unwrap();
        assert!(int.within(&[0.5, -1.5], 3.0), "{int:?}");
    }

    #[test]
    fn quadratic_gradient_in_one_dimension() {
        let e = MetricFlow::euclidean(1);
        let pair = bismut_pair(
            &e,
            &ScalarField::squared_norm(),
            0.0,
            0.5,
            &dv(&[1.0]),
            None,
            &HProfile::Linear,
            &McConfig::new(20_000, 0.01, 5),
        )
        .unwrap();
        assert!(pair.pathwise.within(&[2.0], 3.0), "{:?}", pair.pathwise);
        assert!(pair.integrated.within(&[2.0], 3.0), "{:?}", pair.integrated);
        assert!(pair.difference.within(&[0.0], 3.0));
    }

    #[test]
    fn integrated_estimator_of_constant_is_centered() {
        let s = MetricFlow::static_sphere(2);
        let est = bismut_integrated(
            &s,
            &ScalarField::constant(1.0),
            0.0,
            0.2,
            &dv(&[1.0, 0.0, 0.0]),
            None,
            &HProfile::Linear,
            &McConfig::new(4000, 0.01, 6),
        )
        .unwrap();
        assert!(est.within(&[0.0, 0.0], 3.0), "{est:?}");
    }

    #[test]
    fn custom_profile_matches_linear_target() {
        let e = MetricFlow::euclidean(1);
        let h = HProfile::Custom { times: vec![0.0, 0.25, 0.5], values: vec![0.0, 0.8, 1.0] };
        let est = bismut_integrated(&e, &ScalarField::squared_norm(), 0.0, 0.5, &dv(&[1.0]), None, &h, &McConfig::new(20_000, 0.01, 7))
            .unwrap();
        assert!(est.within(&[2.0], 3.0), "{est:?}");
        assert!((h.value(0.0, 0.5, 0.125) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let e = MetricFlow::euclidean(1);
        let no_grad = ScalarField::new("opaque", |_, x| x[0]);
        let mc = McConfig::new(10, 0.1, 0);
        assert!(matches!(
            bismut_pathwise(&e, &no_grad, 0.0, 0.5, &dv(&[0.0]), None, &mc),
            Err(Error::MissingGradient(_))
        ));
        assert!(matches!(
            bismut_integrated(&e, &no_grad, 0.5, 0.5, &dv(&[0.0]), None, &HProfile::Linear, &mc),
            Err(Error::DegenerateInterval(_))
        ));
        let r = MetricFlow::ricci_sphere(2).unwrap();
        assert_eq!(r.kind(), FlowKind::Sphere);
        assert!(matches!(
            semigroup(&r, &no_grad, 0.0, 0.6, &dv(&[0.0, 0.0, 1.0]), &mc),
            Err(Error::HorizonExceeded { .. })
        ));
    }

    #[test]
    fn estimators_are_thread_count_invariant() {
        let s = MetricFlow::static_sphere(2);
        let f = ScalarField::coordinate(2);
        let run = || {
            bismut_pair(&s, &f, 0.0, 0.1, &dv(&[1.0, 0.0, 0.0]), None, &HProfile::Linear, &McConfig::new(300, 0.01, 8))
                .unwrap()
        };
        let a = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
        let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(run);
        assert_eq!(a.pathwise, b.pathwise);
        assert_eq!(a.integrated, b.integrated);
    }
}
