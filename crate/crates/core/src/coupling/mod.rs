//! Parallel-displacement and mirror couplings of two diffusions under one flow.

mod index;

pub use index::{index_form, index_form_closed, index_form_jacobi, jacobi_index, rho_drift_bound};

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_sde::{horizontal_step, TimeGrid};
use crate::geometry::{FlowKind, FramePoint, Geodesic, MetricFlow, Point, Tangent};
use crate::noise::{Gaussian, NoiseStream, TAG_BRIDGE, TAG_INDEPENDENT};
use crate::stats::{par_collect, Estimate, McConfig};

/// Pairs closer than this are merged.
pub const DEFAULT_DELTA_COUPLE: f64 = 1e-9;
/// Width of the regularization band around the cut locus, in units of the metric scale.
pub const DEFAULT_EPS_CUT: f64 = 0.1;
/// Upper bound on stored `rho` nodes per path.
pub const MAX_RECORDS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    Parallel,
    Mirror,
}

/// Extra drift `U(t, x, x~)` acting on the second marginal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingDrift {
    #[default]
    Zero,
    /// `-strength * grad_{x~} rho_t(x, x~)`.
    Toward { strength: f64 },
}

impl CouplingDrift {
    /// Value at the end of `geo` (the second point).
    pub fn value(&self, flow: &MetricFlow, _t: f64, geo: &Geodesic) -> Tangent {
        match *self {
            CouplingDrift::Zero => DVector::zeros(flow.ambient_dim()),
            CouplingDrift::Toward { strength } => {
                if geo.length == 0.0 {
                    DVector::zeros(flow.ambient_dim())
                } else {
                    geo.end_velocity() * -strength
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingOptions {
    pub mode: CouplingMode,
    pub drift_u: CouplingDrift,
    pub delta_couple: f64,
    pub eps_cut: f64,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        CouplingOptions {
            mode: CouplingMode::Mirror,
            drift_u: CouplingDrift::Zero,
            delta_couple: DEFAULT_DELTA_COUPLE,
            eps_cut: DEFAULT_EPS_CUT,
        }
    }
}

impl CouplingOptions {
    pub fn new(mode: CouplingMode) -> Self {
        CouplingOptions { mode, ..Default::default() }
    }

    pub fn with_drift(self, drift_u: CouplingDrift) -> Self {
        CouplingOptions { drift_u, ..self }
    }
}

/// Two frame points at a common time.
#[derive(Clone, Debug)]
pub struct CoupledPair {
    pub a: FramePoint,
    pub b: FramePoint,
    pub coupled: bool,
    pub opts: CouplingOptions,
}

impl CoupledPair {
    pub fn new(flow: &MetricFlow, t: f64, x: &Point, y: &Point, opts: CouplingOptions) -> Result<Self> {
        let a = FramePoint::at(flow, t, x.clone())?;
        let b = FramePoint::at(flow, t, y.clone())?;
        let coupled = flow.rho(t, x, y) <= opts.delta_couple;
        let b = if coupled { a.clone() } else { b };
        Ok(CoupledPair { a, b, coupled, opts })
    }

    pub fn t(&self) -> f64 {
        self.a.t
    }

    pub fn rho(&self, flow: &MetricFlow) -> f64 {
        if self.coupled {
            0.0
        } else {
            flow.rho(self.a.t, &self.a.x, &self.b.x)
        }
    }
}

/// Result of [`couple_step`].
#[derive(Clone, Debug)]
pub struct CoupleStep {
    pub pair: CoupledPair,
    /// The independent increment replaced the coupled one.
    pub regularized: bool,
    /// Probability that the mirrored distance hit zero inside the step
    /// (Brownian-bridge estimate); zero unless the mirror map was used.
    pub bridge_probability: f64,
}

fn band_width(flow: &MetricFlow, t: f64, eps: f64) -> f64 {
    match flow.kind() {
        FlowKind::Torus => eps * flow.scales().iter().map(|s| s.value(t).sqrt()).fold(f64::INFINITY, f64::min),
        FlowKind::Sphere => eps * flow.conformal_factor(t).sqrt(),
        FlowKind::Euclidean | FlowKind::Hyperbolic => 0.0,
    }
}

/// One step of the coupled pair: the first point follows `db`, the second the parallel
/// or mirror image of `db` (or `db_prime` inside the cut-locus band).
pub fn couple_step(
    flow: &MetricFlow,
    pair: &CoupledPair,
    db: &DVector<f64>,
    db_prime: &DVector<f64>,
    h: f64,
) -> Result<CoupleStep> {
    let t = pair.t();
    if pair.coupled {
        let a = horizontal_step(flow, &pair.a, db, h)?;
        return Ok(CoupleStep {
            pair: CoupledPair { b: a.clone(), a, coupled: true, opts: pair.opts },
            regularized: false,
            bridge_probability: 0.0,
        });
    }
    let opts = pair.opts;
    let geo = if flow.cut_margin(t, &pair.a.x, &pair.b.x) < band_width(flow, t, opts.eps_cut) {
        None
    } else {
        flow.distance(t, &pair.a.x, &pair.b.x).ok().map(|(_, g)| g)
    };
    let v = &pair.a.frame * db;
    let (mut db_tilde, regularized, signed) = match &geo {
        None => (db_prime.clone(), true, f64::INFINITY),
        Some(g) => {
            let mapped = match opts.mode {
                CouplingMode::Parallel => flow.parallel_transport(g, &v),
                CouplingMode::Mirror => flow.mirror_along(g, &v),
            };
            let along = flow.inner(t, &g.velocity, &v);
            let signed = match opts.mode {
                CouplingMode::Mirror => g.length - 2.0 * std::f64::consts::SQRT_2 * along,
                CouplingMode::Parallel => f64::INFINITY,
            };
            (flow.frame_coordinates(t, &pair.b.frame, &mapped), false, signed)
        }
    };
    if let Some(g) = &geo {
        let u = opts.drift_u.value(flow, t, g);
        if opts.drift_u != CouplingDrift::Zero {
            db_tilde += flow.frame_coordinates(t, &pair.b.frame, &u) * (h / std::f64::consts::SQRT_2);
        }
    }
    let a = horizontal_step(flow, &pair.a, db, h)?;
    let b = horizontal_step(flow, &pair.b, &db_tilde, h)?;
    let rho_next = flow.rho(a.t, &a.x, &b.x);
    let crossed = signed <= 0.0 || rho_next <= opts.delta_couple;
    let bridge_probability = match (&geo, opts.mode) {
        (Some(g), CouplingMode::Mirror) if !crossed => (-g.length * rho_next / (4.0 * h)).exp(),
        _ => 0.0,
    };
    let pair = if crossed {
        CoupledPair { b: a.clone(), a, coupled: true, opts }
    } else {
        CoupledPair { a, b, coupled: false, opts }
    };
    Ok(CoupleStep { pair, regularized, bridge_probability })
}

/// One coupled trajectory, `rho` recorded at strided grid nodes.
#[derive(Clone, Debug, Serialize)]
pub struct CouplingPath {
    pub record_steps: Vec<usize>,
    pub rho: Vec<f64>,
    /// Whether any step since the previous record was regularized.
    pub regularized_flags: Vec<bool>,
    /// First grid time at which the pair was merged.
    pub coupling_time: Option<f64>,
    pub regularized_steps: usize,
    #[serde(skip)]
    pub x_end: Point,
    #[serde(skip)]
    pub y_end: Point,
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingEnsemble {
    pub opts: CouplingOptions,
    pub grid_s: f64,
    pub grid_t: f64,
    pub steps: usize,
    pub paths: Vec<CouplingPath>,
}

fn run_pair(
    flow: &MetricFlow,
    x: &Point,
    y: &Point,
    grid: TimeGrid,
    opts: CouplingOptions,
    stream: NoiseStream,
    stride: usize,
) -> Result<CouplingPath> {
    let mut pair = CoupledPair::new(flow, grid.s, x, y, opts)?;
    let mut main = stream.brownian();
    let mut indep = Gaussian(stream.rng(TAG_INDEPENDENT));
    let mut bridge = Gaussian(stream.rng(TAG_BRIDGE));
    let d = flow.dim();
    let mut path = CouplingPath {
        record_steps: vec![0],
        rho: vec![pair.rho(flow)],
        regularized_flags: vec![false],
        coupling_time: pair.coupled.then_some(grid.s),
        regularized_steps: 0,
        x_end: x.clone(),
        y_end: y.clone(),
    };
    let mut flag = false;
    for k in 0..grid.steps {
        let h = grid.time(k + 1) - grid.time(k);
        let db = main.increment(d, h);
        let db_prime = indep.increment(d, h);
        let u = bridge.uniform();
        let out = couple_step(flow, &pair, &db, &db_prime, h)?;
        pair = out.pair;
        if out.regularized {
            path.regularized_steps += 1;
            flag = true;
        }
        if !pair.coupled && u < out.bridge_probability {
            pair = CoupledPair { b: pair.a.clone(), coupled: true, ..pair };
        }
        if pair.coupled && path.coupling_time.is_none() {
            path.coupling_time = Some(grid.time(k + 1));
        }
        if (k + 1) % stride == 0 || k + 1 == grid.steps {
            path.record_steps.push(k + 1);
            path.rho.push(pair.rho(flow));
            path.regularized_flags.push(flag);
            flag = false;
        }
    }
    path.x_end = pair.a.x.clone();
    path.y_end = pair.b.x.clone();
    Ok(path)
}

/// `n_paths` coupled trajectories from `(x, y)` at time `s` to `t`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_coupling(
    flow: &MetricFlow,
    x: &Point,
    y: &Point,
    s: f64,
    t: f64,
    opts: CouplingOptions,
    mc: &McConfig,
) -> Result<CouplingEnsemble> {
    mc.validate()?;
    flow.check_simulation_time(t)?;
    if t <= s {
        return Err(Error::DegenerateInterval(t - s));
    }
    let grid = TimeGrid::uniform(s, t, mc.step)?;
    let stride = grid.steps.div_ceil(MAX_RECORDS).max(1);
    let paths = par_collect(mc.n_paths, |i| run_pair(flow, x, y, grid, opts, NoiseStream::new(mc.seed, i), stride))?;
    Ok(CouplingEnsemble { opts, grid_s: s, grid_t: t, steps: grid.steps, paths })
}

impl CouplingEnsemble {
    pub fn grid(&self) -> TimeGrid {
        TimeGrid::with_steps(self.grid_s, self.grid_t, self.steps)
    }

    /// Times of the stored records (shared by every path).
    pub fn record_times(&self) -> Vec<f64> {
        let g = self.grid();
        self.paths[0].record_steps.iter().map(|&k| g.time(k)).collect()
    }

    /// Empirical `P(T_0 <= t)` with its binomial standard error.
    pub fn coupled_by(&self, t: f64) -> Result<Estimate> {
        let hits: Vec<f64> =
            self.paths.iter().map(|p| if p.coupling_time.is_some_and(|c| c <= t + 1e-12) { 1.0 } else { 0.0 }).collect();
        Estimate::from_samples(&hits)
    }

    /// Fraction of all steps that used the independent increment.
    pub fn regularized_fraction(&self) -> f64 {
        let total = (self.paths.len() * self.steps.max(1)) as f64;
        self.paths.iter().map(|p| p.regularized_steps).sum::<usize>() as f64 / total
    }

    /// `rho_t(X_t, X~_t)` at the final time.
    pub fn terminal_rho(&self) -> Vec<f64> {
        self.paths.iter().map(|p| *p.rho.last().expect("records are non-empty")).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["path_id", "k", "t", "rho", "coupled_flag", "regularized_flag"]).map_err(csv_err)?;
        let g = self.grid();
        for (i, p) in self.paths.iter().enumerate() {
            for (j, &k) in p.record_steps.iter().enumerate() {
                let t = g.time(k);
                let coupled = p.coupling_time.is_some_and(|c| c <= t + 1e-12);
                w.write_record([
                    i.to_string(),
                    k.to_string(),
                    format!("{t}"),
                    format!("{}", p.rho[j]),
                    u8::from(coupled).to_string(),
                    u8::from(p.regularized_flags[j]).to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Mean rate of change of `rho` over `[start, start + window]` among pairs still apart
/// at the start of the window; pairs merging inside it contribute their stopped value.
/// Both ends snap to recorded nodes.
pub fn empirical_rho_drift(ensemble: &CouplingEnsemble, start: f64, window: f64) -> Result<Estimate> {
    let times = ensemble.record_times();
    let nearest = |target: f64| {
        times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - target).abs().partial_cmp(&(b.1 - target).abs()).expect("finite"))
            .map(|(i, _)| i)
            .expect("records are non-empty")
    };
    let (i0, i1) = (nearest(start), nearest(start + window));
    if i1 <= i0 {
        return Err(Error::InsufficientSamples("window shorter than the record spacing".into()));
    }
    let dt = times[i1] - times[i0];
    let rates: Vec<f64> = ensemble
        .paths
        .iter()
        .filter(|p| p.coupling_time.is_none_or(|c| c > times[i0] + 1e-12))
        .map(|p| (p.rho[i1] - p.rho[i0]) / dt)
        .collect();
    Estimate::from_samples(&rates)
}

/// `(E rho_t^p)^{1/p}` over a coupled ensemble: an upper bound for `W_{p,t}(delta_x P, delta_y P)`.
#[allow(clippy::too_many_arguments)]
pub fn wasserstein_upper(
    flow: &MetricFlow,
    x: &Point,
    y: &Point,
    s: f64,
    t: f64,
    p: f64,
    opts: CouplingOptions,
    mc: &McConfig,
) -> Result<Estimate> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be at least 1, got {p}")));
    }
    let ens = simulate_coupling(flow, x, y, s, t, opts, mc)?;
    wasserstein_from(&ens, p)
}

/// [`wasserstein_upper`] on an existing ensemble.
pub fn wasserstein_from(ens: &CouplingEnsemble, p: f64) -> Result<Estimate> {
    let powered: Vec<f64> = ens.terminal_rho().iter().map(|r| r.powf(p)).collect();
    let m = Estimate::from_samples(&powered)?;
    if m.mean <= 0.0 {
        return Ok(Estimate { mean: 0.0, stderr: m.stderr, n: m.n });
    }
    let root = m.mean.powf(1.0 / p);
    Ok(Estimate { mean: root, stderr: m.stderr * root / (p * m.mean), n: m.n })
}
