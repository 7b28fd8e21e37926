use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::damped::DampedTracker;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::frame_sde::{PathCursor, TimeGrid};
use crate::geometry::{injectivity_radius, Frame, FramePoint, MetricFlow, Point};
use crate::noise::NoiseStream;
use crate::stats::{par_collect, Estimate, McConfig, VectorEstimate};

use super::start_frame;

const TAG_NESTED: &str = "nested";

/// Nested Monte Carlo settings for [`bismut_local`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalConfig {
    /// Inner paths per exiting outer path; `None` means `ceil(sqrt(n_paths))`.
    pub n_inner: Option<usize>,
    /// Cap on the total number of inner paths.
    pub max_inner_total: usize,
}

impl Default for LocalConfig {
    fn default() -> Self {
        LocalConfig { n_inner: None, max_inner_total: 5_000_000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalEstimate {
    pub estimate: VectorEstimate,
    /// Outer paths whose weight was completed because they left the domain.
    pub exits: usize,
    pub n_inner: usize,
    /// Mean inner standard error over exiting paths (zero without exits).
    pub inner_stderr: f64,
}

enum Terminal {
    Value(f64),
    Exited(FramePoint),
}

struct Outer {
    weight: DVector<f64>,
    terminal: Terminal,
}

#[allow(clippy::too_many_arguments)]
fn outer_path(
    flow: &MetricFlow,
    f: &ScalarField,
    x: &Point,
    frame0: &Frame,
    grid: TimeGrid,
    radius: f64,
    noise: NoiseStream,
) -> Result<Outer> {
    let (s, t) = (grid.s, grid.t);
    let mut cursor = PathCursor::new(flow, x.clone(), Some(frame0.clone()), grid)?;
    let mut tracker = DampedTracker::new(flow, cursor.state());
    let mut gauss = noise.brownian();
    let mut weight = DVector::zeros(flow.dim());
    let mut used = 0.0;
    let mut exited = false;
    while used < 1.0 && !cursor.is_done() {
        let h = cursor.next_h();
        let last = cursor.k() + 1 == grid.steps;
        let dh = if exited || last {
            1.0 - used
        } else {
            let st = cursor.state();
            let fc = (std::f64::consts::PI * flow.rho(st.t, x, &st.x) / (2.0 * radius)).cos();
            (h / ((t - s) * fc * fc)).min(1.0 - used)
        };
        let db = cursor.advance_with(&mut gauss)?;
        weight += tracker.q.tr_mul(&db) * (dh / h);
        used += dh;
        tracker.update(flow, cursor.state());
        if !exited {
            let st = cursor.state();
            exited = flow.rho(st.t, x, &st.x) >= radius;
        }
    }
    let terminal = if exited && !cursor.is_done() {
        Terminal::Exited(cursor.into_state())
    } else {
        let end = cursor.run(&mut gauss)?;
        Terminal::Value(f.value(t, &end.x))
    };
    Ok(Outer { weight, terminal })
}

/// Localized derivative formula on `D = {(r, y) : rho_r(x, y) <= radius}`.
///
/// The weight is `h(r) = (t - s)^{-1} int_s^r cos(pi rho_u / 2R)^{-2} du`, frozen once it
/// reaches one. A path that leaves `D` before that completes its weight on the following
/// step and is then stopped; its terminal value `P_{tau,t} f(X_tau)` comes from an inner
/// ensemble.
#[allow(clippy::too_many_arguments)]
pub fn bismut_local(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    t: f64,
    x: &Point,
    frame0: Option<&Frame>,
    radius: f64,
    mc: &McConfig,
    cfg: &LocalConfig,
) -> Result<LocalEstimate> {
    mc.validate()?;
    flow.check_simulation_time(t)?;
    if t <= s {
        return Err(Error::DegenerateInterval(t - s));
    }
    let margin = injectivity_radius(flow, s).min(injectivity_radius(flow, t));
    if !(radius > 0.0) || radius >= margin {
        return Err(Error::RadiusTooLarge { radius, margin });
    }
    let grid = TimeGrid::uniform(s, t, mc.step)?;
    let frame0 = start_frame(flow, s, x, frame0)?;
    let outer = par_collect(mc.n_paths, |i| {
        outer_path(flow, f, x, &frame0, grid, radius, NoiseStream::new(mc.seed, i))
    })?;

    let n_inner = cfg.n_inner.unwrap_or_else(|| (mc.n_paths as f64).sqrt().ceil() as usize).max(2);
    let exits = outer.iter().filter(|o| matches!(o.terminal, Terminal::Exited(_))).count();
    let requested = exits.saturating_mul(n_inner);
    if requested > cfg.max_inner_total {
        return Err(Error::NestedBudgetExceeded { requested, limit: cfg.max_inner_total });
    }

    let inner: Vec<(f64, f64)> = par_collect(mc.n_paths, |i| match &outer[i as usize].terminal {
        Terminal::Value(v) => Ok((*v, 0.0)),
        Terminal::Exited(fp) => {
            let parent = NoiseStream::new(mc.seed, i);
            let vals = (0..n_inner as u64)
                .map(|j| {
                    let cursor = PathCursor::from_state(flow, fp.clone(), t, mc.step)?;
                    let end = cursor.run(&mut parent.child(TAG_NESTED, j).brownian())?;
                    Ok(f.value(t, &end.x))
                })
                .collect::<Result<Vec<f64>>>()?;
            let e = Estimate::from_samples(&vals)?;
            Ok((e.mean, e.stderr))
        }
    })?;

    let samples: Vec<DVector<f64>> = outer
        .iter()
        .zip(&inner)
        .map(|(o, (value, _))| &o.weight * (value / std::f64::consts::SQRT_2))
        .collect();
    let inner_stderr = if exits > 0 {
        inner.iter().map(|p| p.1).sum::<f64>() / exits as f64
    } else {
        0.0
    };
    Ok(LocalEstimate { estimate: VectorEstimate::from_samples(&samples)?, exits, n_inner, inner_stderr })
}
