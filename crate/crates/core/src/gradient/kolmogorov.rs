use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::frame_sde::{PathCursor, TimeGrid};
use crate::geometry::{apply_generator, Frame, FramePoint, MetricFlow, Point};
use crate::noise::NoiseStream;
use crate::stats::{par_collect, Estimate, McConfig};

pub const DEFAULT_KOLMOGOROV_DELTA: f64 = 1e-2;

const TAG_SURROGATE: &str = "surrogate";

#[derive(Clone, Debug, Serialize)]
pub struct KolmogorovResidual {
    /// `d/ds P_{s,t} f(x) + L_s P_{s,t} f(x)`.
    pub backward: Estimate,
    /// `d/dt P_{s,t} f(x) - P_{s,t}(L_t f)(x)`.
    pub forward: Estimate,
    pub delta: f64,
    /// The backward derivative used the one-sided stencil because `s < delta`.
    pub backward_one_sided: bool,
    pub forward_one_sided: bool,
}

/// Offsets and weights of a first-derivative stencil with spacing `delta`.
fn stencil(one_sided: bool) -> [(f64, f64); 3] {
    if one_sided {
        [(0.0, -1.5), (1.0, 2.0), (2.0, -0.5)]
    } else {
        [(-1.0, -0.5), (0.0, 0.0), (1.0, 0.5)]
    }
}

fn transported_frame(flow: &MetricFlow, s: f64, x: &Point, frame: &Frame, y: &Point) -> Result<Frame> {
    if (y - x).amax() == 0.0 {
        return Ok(frame.clone());
    }
    let (_, geo) = flow.distance(s, x, y)?;
    let cols: Vec<DVector<f64>> = frame.column_iter().map(|c| flow.parallel_transport(&geo, &c.clone_owned())).collect();
    flow.reorthonormalize(s, &Frame::from_columns(&cols))
}

/// `y -> f(X_t)` for the path started at `(s, y)` with frozen increments; frames at
/// nearby starting points are parallel transports of the frame at `x`.
fn surrogate(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    t: f64,
    x: &Point,
    frame: &Frame,
    increments: Vec<DVector<f64>>,
) -> ScalarField {
    let (flow, f, x, frame) = (flow.clone(), f.clone(), x.clone(), frame.clone());
    let grid = TimeGrid::with_steps(s, t, increments.len());
    ScalarField::new(format!("surrogate({})", f.name()), move |_, y| {
        let run = || -> Result<f64> {
            let fr = transported_frame(&flow, s, &x, &frame, y)?;
            let mut cursor = PathCursor::new(&flow, y.clone(), Some(fr), grid)?;
            for db in &increments {
                cursor.advance(db)?;
            }
            Ok(f.value(t, &cursor.state().x))
        };
        run().unwrap_or(f64::NAN)
    })
}

/// Residuals of the backward and forward Kolmogorov equations at `(s, t, x)`.
pub fn kolmogorov_residual(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    t: f64,
    x: &Point,
    delta: f64,
    mc: &McConfig,
) -> Result<KolmogorovResidual> {
    mc.validate()?;
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    if t - s < 2.0 * delta {
        return Err(Error::DegenerateInterval(t - s));
    }
    let back_one_sided = s < delta;
    let fwd_one_sided = t - delta < s;
    let back = stencil(back_one_sided);
    let fwd = stencil(fwd_one_sided);
    let t_max = t + fwd[2].0 * delta;
    flow.check_simulation_time(t_max)?;
    let fd_flow = flow.clone().with_fd_step(delta);
    let frame0 = flow.orthonormal_frame(s, x)?;
    let grid = TimeGrid::uniform(s, t, mc.step)?;

    let rows = par_collect(mc.n_paths, |i| {
        let stream = NoiseStream::new(mc.seed, i);
        // forward: one path visiting t + offset * delta at exact nodes
        let mut gauss = stream.brownian();
        let mut state = FramePoint::new(s, x.clone(), frame0.clone());
        let mut fwd_sum = 0.0;
        let mut lf = 0.0;
        for (offset, w) in fwd {
            let cursor = PathCursor::from_state(flow, state, t + offset * delta, mc.step)?;
            state = cursor.run(&mut gauss)?;
            fwd_sum += w * f.value(state.t, &state.x);
            if offset == 0.0 {
                lf = apply_generator(flow, t, f, &state.x)?;
            }
        }
        let forward = fwd_sum / delta - lf;

        // backward: start times s + offset * delta sharing the same increment source
        let mut back_sum = 0.0;
        for (offset, w) in back {
            if w == 0.0 {
                continue;
            }
            let start = s + offset * delta;
            let cursor = PathCursor::new(flow, x.clone(), None, TimeGrid::uniform(start, t, mc.step)?)?;
            let end = cursor.run(&mut stream.child(TAG_SURROGATE, 1).brownian())?;
            back_sum += w * f.value(t, &end.x);
        }
        let mut g = stream.child(TAG_SURROGATE, 0).brownian();
        let increments: Vec<DVector<f64>> = (0..grid.steps).map(|_| g.increment(flow.dim(), grid.h())).collect();
        let u = surrogate(flow, f, s, t, x, &frame0, increments);
        let lu = apply_generator(&fd_flow, s, &u, x)?;
        if !lu.is_finite() {
            return Err(Error::NumericalBlowup { step: 0 });
        }
        Ok((back_sum / delta + lu, forward))
    })?;
    let (b, fw): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    Ok(KolmogorovResidual {
        backward: Estimate::from_samples(&b)?,
        forward: Estimate::from_samples(&fw)?,
        delta,
        backward_one_sided: back_one_sided,
        forward_one_sided: fwd_one_sided,
    })
}
