//! Horizontal diffusion on the orthonormal frame bundle of a moving metric.
//!
//! One step moves the base point along the `g_t`-geodesic with initial
//! velocity `u(sqrt(2) dB + u^{-1} Z h)`, carries the frame by parallel
//! transport, applies the vertical correction `u (I - G h / 2)` and finally
//! re-orthonormalizes against `g_{t+h}`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{g_dot_unchecked, Frame, FramePoint, MetricFlow, Point};
use crate::noise::{coarsen, Gaussian, NoiseStream};
use crate::stats::Estimate;

/// Uniform grid `s = t_0 < ... < t_N = t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeGrid {
    pub s: f64,
    pub t: f64,
    pub steps: usize,
}

impl TimeGrid {
    /// Smallest uniform grid whose spacing does not exceed `step`.
    pub fn uniform(s: f64, t: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
        }
        if !(t >= s) {
            return Err(Error::InvalidArgument(format!("end time {t} precedes start {s}")));
        }
        let steps = if t == s { 0 } else { (((t - s) / step) - 1e-9).ceil().max(1.0) as usize };
        Ok(TimeGrid { s, t, steps })
    }

    pub fn with_steps(s: f64, t: f64, steps: usize) -> Self {
        TimeGrid { s, t, steps }
    }

    pub fn h(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            (self.t - self.s) / self.steps as f64
        }
    }

    /// `t_k`; the last node is `t` exactly.
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.t
        } else {
            self.s + (self.t - self.s) * (k as f64 / self.steps as f64)
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Same interval with `factor` times as many steps.
    pub fn refine(&self, factor: usize) -> Self {
        TimeGrid { steps: self.steps * factor, ..*self }
    }
}

/// Result of one step together with the frame defect measured before the
/// Gram-Schmidt fix.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: FramePoint,
    pub defect: f64,
}

/// One step of the horizontal diffusion.
pub fn horizontal_step(flow: &MetricFlow, fp: &FramePoint, db: &DVector<f64>, h: f64) -> Result<FramePoint> {
    horizontal_step_with_defect(flow, fp, db, h).map(|o| o.state)
}

pub fn horizontal_step_with_defect(
    flow: &MetricFlow,
    fp: &FramePoint,
    db: &DVector<f64>,
    h: f64,
) -> Result<StepOutcome> {
    flow.check_simulation_time(fp.t + h)?;
    flow.check_frame(fp.t, &fp.frame)?;
    if db.len() != flow.dim() {
        return Err(Error::InvalidArgument(format!("increment has {} entries, expected {}", db.len(), flow.dim())));
    }
    step_to(flow, fp, db, fp.t + h)
}

fn step_to(flow: &MetricFlow, fp: &FramePoint, db: &DVector<f64>, t_next: f64) -> Result<StepOutcome> {
    let t = fp.t;
    let h = t_next - t;
    let mut xi = db * std::f64::consts::SQRT_2;
    if !flow.drift().is_zero() {
        let z = flow.drift().value(t, &fp.x);
        xi += flow.frame_coordinates(t, &fp.frame, &z) * h;
    }
    let v = &fp.frame * xi;
    let geo = flow.geodesic_from_velocity(t, &fp.x, &v);
    let x_next = flow.project_point(&geo.end);
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(flow.dim());
    for c in fp.frame.column_iter() {
        let moved = flow.parallel_transport(&geo, &c.clone_owned());
        cols.push(flow.project_tangent(&x_next, &moved));
    }
    let mut frame = Frame::from_columns(&cols);
    if !flow.is_static() {
        let g = g_dot_unchecked(flow, t, &frame);
        let correction = DMatrix::identity(flow.dim(), flow.dim()) - g * (0.5 * h);
        frame *= correction;
    }
    let defect = flow.frame_defect(t_next, &frame);
    let frame = flow.reorthonormalize(t_next, &frame)?;
    Ok(StepOutcome { state: FramePoint { t: t_next, x: x_next, frame }, defect })
}

/// Gram-Schmidt against `g_t`, keeping the direction of the first column.
pub fn reorthonormalize(flow: &MetricFlow, t: f64, frame: &Frame) -> Result<Frame> {
    flow.reorthonormalize(t, frame)
}

/// Streams a single path over a grid; callers see every node without the
/// whole path being stored.
pub struct PathCursor<'a> {
    flow: &'a MetricFlow,
    grid: TimeGrid,
    k: usize,
    state: FramePoint,
    max_defect: f64,
}

impl<'a> PathCursor<'a> {
    pub fn new(flow: &'a MetricFlow, x0: Point, frame0: Option<Frame>, grid: TimeGrid) -> Result<Self> {
        flow.check_simulation_time(grid.t)?;
        flow.check_time(grid.s)?;
        flow.check_point(&x0)?;
        let frame = match frame0 {
            Some(f) => {
                flow.check_frame(grid.s, &f)?;
                f
            }
            None => flow.orthonormal_frame(grid.s, &x0)?,
        };
        Ok(PathCursor { flow, grid, k: 0, state: FramePoint { t: grid.s, x: x0, frame }, max_defect: 0.0 })
    }

    pub fn from_state(flow: &'a MetricFlow, fp: FramePoint, t: f64, step: f64) -> Result<Self> {
        let grid = TimeGrid::uniform(fp.t, t, step)?;
        PathCursor::new(flow, fp.x, Some(fp.frame), grid)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Index of the current node.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn state(&self) -> &FramePoint {
        &self.state
    }

    pub fn into_state(self) -> FramePoint {
        self.state
    }

    pub fn is_done(&self) -> bool {
        self.k >= self.grid.steps
    }

    /// Spacing of the next step.
    pub fn next_h(&self) -> f64 {
        self.grid.time(self.k + 1) - self.grid.time(self.k)
    }

    pub fn max_defect(&self) -> f64 {
        self.max_defect
    }

    /// Advance one node with the increment `db ~ N(0, h I)`; returns the pre-fix frame defect.
    pub fn advance(&mut self, db: &DVector<f64>) -> Result<f64> {
        if self.is_done() {
            return Err(Error::InvalidArgument("path already reached its final time".into()));
        }
        let t_next = self.grid.time(self.k + 1);
        let out = step_to(self.flow, &self.state, db, t_next)?;
        if out.state.x.iter().any(|c| !c.is_finite()) {
            return Err(Error::NumericalBlowup { step: self.k + 1 });
        }
        self.k += 1;
        self.max_defect = self.max_defect.max(out.defect);
        self.state = out.state;
        Ok(out.defect)
    }

    /// Draw the next increment from `noise` and advance; returns the increment.
    pub fn advance_with(&mut self, noise: &mut Gaussian) -> Result<DVector<f64>> {
        let db = noise.increment(self.flow.dim(), self.next_h());
        self.advance(&db)?;
        Ok(db)
    }

    /// Run to the end with the given source.
    pub fn run(mut self, noise: &mut Gaussian) -> Result<FramePoint> {
        while !self.is_done() {
            self.advance_with(noise)?;
        }
        Ok(self.state)
    }
}

/// A stored path.
#[derive(Clone, Debug)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub states: Vec<FramePoint>,
    /// `increments[k]` drives the step from node `k` to node `k + 1`.
    pub increments: Vec<DVector<f64>>,
    pub radii: Vec<f64>,
    /// First node index with `rho_{t_k}(x_0, x_k) >= n`, per radius `n`.
    pub exit_flags: Vec<Option<usize>>,
    /// Frame defect before re-orthonormalization, per step.
    pub frame_defects: Vec<f64>,
}

impl PathSample {
    pub fn terminal(&self) -> &FramePoint {
        self.states.last().expect("paths contain the initial node")
    }
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_path(
    flow: &MetricFlow,
    x0: &Point,
    frame0: Option<Frame>,
    s: f64,
    t: f64,
    step: f64,
    noise: &NoiseStream,
    radii: &[f64],
) -> Result<PathSample> {
    let grid = TimeGrid::uniform(s, t, step)?;
    let mut g = noise.brownian();
    let increments: Vec<DVector<f64>> =
        (0..grid.steps).map(|k| g.increment(flow.dim(), grid.time(k + 1) - grid.time(k))).collect();
    simulate_path_with_increments(flow, x0, frame0, grid, &increments, radii)
}

/// Deterministic path driven by supplied increments (common random numbers).
pub fn simulate_path_with_increments(
    flow: &MetricFlow,
    x0: &Point,
    frame0: Option<Frame>,
    grid: TimeGrid,
    increments: &[DVector<f64>],
    radii: &[f64],
) -> Result<PathSample> {
    if increments.len() != grid.steps {
        return Err(Error::InvalidArgument(format!("{} increments for {} steps", increments.len(), grid.steps)));
    }
    let mut cursor = PathCursor::new(flow, x0.clone(), frame0, grid)?;
    let mut states = Vec::with_capacity(grid.steps + 1);
    let mut defects = Vec::with_capacity(grid.steps);
    let mut exit_flags = vec![None; radii.len()];
    states.push(cursor.state().clone());
    for db in increments {
        defects.push(cursor.advance(db)?);
        let st = cursor.state();
        let rho = flow.rho(st.t, x0, &st.x);
        for (flag, n) in exit_flags.iter_mut().zip(radii) {
            if flag.is_none() && rho >= *n {
                *flag = Some(cursor.k());
            }
        }
        states.push(st.clone());
    }
    Ok(PathSample {
        times: grid.times(),
        states,
        increments: increments.to_vec(),
        radii: radii.to_vec(),
        exit_flags,
        frame_defects: defects,
    })
}

/// Terminal states of `n_paths` independent paths (path `i` uses substream `i`).
pub fn terminal_ensemble(
    flow: &MetricFlow,
    x0: &Point,
    s: f64,
    t: f64,
    step: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<FramePoint>> {
    let grid = TimeGrid::uniform(s, t, step)?;
    let frame0 = flow.orthonormal_frame(s, x0)?;
    crate::stats::par_collect(n_paths, |i| {
        let cursor = PathCursor::new(flow, x0.clone(), Some(frame0.clone()), grid)?;
        cursor.run(&mut NoiseStream::new(seed, i).brownian())
    })
}

/// CSV rows `path_id,k,t,x_0..x_{n-1},frame_defect` (defect 0 at the initial node).
pub fn write_paths_csv<W: Write>(out: W, paths: &[(u64, &PathSample)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let width = paths.first().map(|(_, p)| p.states[0].x.len()).unwrap_or(0);
    let mut header = vec!["path_id".to_string(), "k".into(), "t".into()];
    header.extend((0..width).map(|i| format!("x{i}")));
    header.push("frame_defect".into());
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for (id, p) in paths {
        for (k, st) in p.states.iter().enumerate() {
            let mut row = vec![id.to_string(), k.to_string(), st.t.to_string()];
            row.extend(st.x.iter().map(|c| c.to_string()));
            row.push(if k == 0 { 0.0 } else { p.frame_defects[k - 1] }.to_string());
            w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Step-halving study of the scheme with common random numbers.
#[derive(Clone, Debug, Serialize)]
pub struct StepStudy {
    /// Step counts, each twice the previous.
    pub steps: Vec<usize>,
    /// `E[phi]` on each grid.
    pub values: Vec<Estimate>,
    /// `E[phi(coarse) - phi(fine)]` for consecutive grids.
    pub weak_diffs: Vec<Estimate>,
    /// Largest pre-fix frame defect seen on each grid.
    pub max_defects: Vec<f64>,
}

/// Below this the defect is round-off and the transport is exact.
pub const EXACT_DEFECT: f64 = 1e-10;

/// Weighted least-squares slope of `log2 |y|` against the halving index; `weights`
/// are inverse variances of `log2 |y|`.
fn halving_order(y: &[f64], weights: &[f64]) -> f64 {
    let pts: Vec<(f64, f64, f64)> = y.iter().zip(weights).enumerate().map(|(i, (v, w))| (i as f64, v.abs().log2(), *w)).collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    -sxy / sxx
}

impl StepStudy {
    /// Observed weak order; `None` when every difference is below `3 * stderr + 1e-12`,
    /// so the scheme is exact for `phi`.
    pub fn weak_order(&self) -> Option<f64> {
        if self.weak_diffs.iter().all(|d| d.mean.abs() <= 3.0 * d.stderr + 1e-12) {
            return None;
        }
        let means: Vec<f64> = self.weak_diffs.iter().map(|d| d.mean).collect();
        let weights: Vec<f64> = self
            .weak_diffs
            .iter()
            .map(|d| if d.stderr > 0.0 { (d.mean * std::f64::consts::LN_2 / d.stderr).powi(2) } else { 1.0 })
            .collect();
        Some(halving_order(&means, &weights))
    }

    /// Observed order of the per-step frame defect; `None` when it is round-off.
    pub fn defect_order(&self) -> Option<f64> {
        if self.max_defects.iter().all(|&d| d < EXACT_DEFECT) {
            return None;
        }
        Some(halving_order(&self.max_defects, &vec![1.0; self.max_defects.len()]))
    }
}

/// Simulates `n_paths` paths on `coarsest_steps * 2^k` steps (`k < levels`) over `[s, t]`,
/// every grid driven by the same Brownian path, and records `phi` at the end.
#[allow(clippy::too_many_arguments)]
pub fn step_halving_study(
    flow: &MetricFlow,
    x0: &Point,
    s: f64,
    t: f64,
    coarsest_steps: usize,
    levels: usize,
    n_paths: usize,
    seed: u64,
    phi: impl Fn(&Point) -> f64 + Sync,
) -> Result<StepStudy> {
    if levels < 2 || coarsest_steps == 0 || !(t > s) {
        return Err(Error::InvalidArgument("a step study needs two levels, a positive step count and t > s".into()));
    }
    let steps: Vec<usize> = (0..levels).map(|k| coarsest_steps << k).collect();
    let fine = steps[levels - 1];
    let h = (t - s) / fine as f64;
    let frame0 = flow.orthonormal_frame(s, x0)?;
    let rows = crate::stats::par_collect(n_paths, |i| {
        let mut g = NoiseStream::new(seed, i).brownian();
        let inc: Vec<DVector<f64>> = (0..fine).map(|_| g.increment(flow.dim(), h)).collect();
        steps
            .iter()
            .map(|&m| {
                let grid = TimeGrid::with_steps(s, t, m);
                let p = simulate_path_with_increments(flow, x0, Some(frame0.clone()), grid, &coarsen(&inc, fine / m), &[])?;
                Ok((phi(&p.terminal().x), p.frame_defects.iter().copied().fold(0.0, f64::max)))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let column = |k: usize| rows.iter().map(|r| r[k].0).collect::<Vec<_>>();
    let values = (0..levels).map(|k| Estimate::from_samples(&column(k))).collect::<Result<Vec<_>>>()?;
    let weak_diffs = (0..levels - 1)
        .map(|k| Estimate::from_samples(&rows.iter().map(|r| r[k].0 - r[k + 1].0).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let max_defects = (0..levels).map(|k| rows.iter().map(|r| r[k].1).fold(0.0, f64::max)).collect();
    Ok(StepStudy { steps, values, weak_diffs, max_defects })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ScaleFn;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn grid_hits_end_exactly() {
        let g = TimeGrid::uniform(0.1, 0.7, 0.1).unwrap();
        assert_eq!(g.steps, 6);
        assert_eq!(g.time(6), 0.7);
        let g = TimeGrid::uniform(0.0, 1.0, 0.3).unwrap();
        assert_eq!(g.steps, 4);
        assert!(g.h() <= 0.3);
    }

    #[test]
    fn zero_increment_leaves_euclidean_state_unchanged() {
        let e = MetricFlow::euclidean(2);
        let fp = FramePoint::at(&e, 0.0, dv(&[0.2, -0.4])).unwrap();
        let out = horizontal_step(&e, &fp, &dv(&[0.0, 0.0]), 0.01).unwrap();
        assert_eq!(out.x, fp.x);
        assert_eq!(out.frame, fp.frame);
        assert!((out.t - 0.01).abs() < 1e-15);
    }

    #[test]
    fn unit_increment_shifts_by_root_two() {
        let e = MetricFlow::euclidean(2);
        let fp = FramePoint::at(&e, 0.0, dv(&[0.0, 0.0])).unwrap();
        let out = horizontal_step(&e, &fp, &dv(&[1.0, 0.0]), 0.01).unwrap();
        assert!((out.x - dv(&[2f64.sqrt(), 0.0])).norm() < 1e-15);
        assert_eq!(out.frame, fp.frame);
    }

    #[test]
    fn conformal_flow_rescales_frame() {
        let s = MetricFlow::sphere(2, ScaleFn::Linear { c0: 1.0, rate: -2.0 }).unwrap();
        let t = 0.1;
        let x = dv(&[0.0, 0.0, 1.0]);
        let frame = s.orthonormal_frame(t, &x).unwrap();
        let fp = FramePoint::new(t, x.clone(), frame.clone());
        let h = 1e-3;
        let out = horizontal_step_with_defect(&s, &fp, &dv(&[0.0, 0.0]), h).unwrap();
        assert!((&out.state.x - &x).norm() < 1e-15);
        let factor = (s.conformal_factor(t) / s.conformal_factor(t + h)).sqrt();
        assert!((&out.state.frame - frame * factor).norm() < 1e-12);
        assert!(out.defect < 10.0 * h * h);
    }

    #[test]
    fn step_rejects_bad_frame_and_horizon() {
        let s = MetricFlow::ricci_sphere(2).unwrap();
        let x = dv(&[0.0, 0.0, 1.0]);
        let fp = FramePoint::new(0.0, x.clone(), DMatrix::identity(3, 2) * 2.0);
        assert!(matches!(horizontal_step(&s, &fp, &dv(&[0.0, 0.0]), 0.01), Err(Error::FrameNotOrthonormal { .. })));
        let fp = FramePoint::at(&s, 0.49, x).unwrap();
        assert!(matches!(horizontal_step(&s, &fp, &dv(&[0.0, 0.0]), 0.01), Err(Error::HorizonExceeded { .. })));
    }

    #[test]
    fn one_step_path_equals_horizontal_step() {
        let s = MetricFlow::static_sphere(2);
        let x = dv(&[0.6, 0.0, 0.8]);
        let noise = NoiseStream::new(9, 1);
        let p = simulate_path(&s, &x, None, 0.0, 0.05, 0.05, &noise, &[]).unwrap();
        let fp = FramePoint::at(&s, 0.0, x).unwrap();
        let direct = horizontal_step(&s, &fp, &p.increments[0], 0.05).unwrap();
        assert_eq!(p.terminal(), &direct);
        assert_eq!(p.states.len(), 2);
    }

    #[test]
    fn path_is_reproducible() {
        let tor = MetricFlow::shrinking_torus(2, 0.5);
        let x = dv(&[1.0, 2.0]);
        let a = simulate_path(&tor, &x, None, 0.0, 0.3, 0.01, &NoiseStream::new(3, 17), &[10.0]).unwrap();
        let b = simulate_path(&tor, &x, None, 0.0, 0.3, 0.01, &NoiseStream::new(3, 17), &[10.0]).unwrap();
        assert_eq!(a.states, b.states);
        for (k, st) in a.states.iter().enumerate() {
            assert_eq!(st.t, a.times[k]);
        }
    }

    #[test]
    fn frames_stay_orthonormal_on_all_flows() {
        let flows = vec![
            (MetricFlow::euclidean(2), dv(&[0.0, 0.0])),
            (MetricFlow::ricci_sphere(2).unwrap(), dv(&[0.0, 0.6, 0.8])),
            (MetricFlow::hyperbolic(2, ScaleFn::Exponential { c0: 1.0, rate: 0.3 }).unwrap(), dv(&[1.0, 0.0, 0.0])),
            (MetricFlow::torus(vec![ScaleFn::Exponential { c0: 1.0, rate: -1.0 }, ScaleFn::UNIT]).unwrap(), dv(&[1.0, 1.0])),
        ];
        for (flow, x) in flows {
            let p = simulate_path(&flow, &x, None, 0.0, 0.2, 1e-3, &NoiseStream::new(1, 0), &[]).unwrap();
            for st in &p.states {
                assert!(flow.frame_defect(st.t, &st.frame) < 1e-12);
                flow.check_point(&st.x).unwrap();
            }
        }
    }

    #[test]
    fn euclidean_exit_flags() {
        let e = MetricFlow::euclidean(1);
        let p = simulate_path(&e, &dv(&[0.0]), None, 0.0, 1.0, 0.01, &NoiseStream::new(2, 0), &[1e-9, 20.0]).unwrap();
        assert_eq!(p.exit_flags[0], Some(1));
        assert_eq!(p.exit_flags[1], None);
    }

    #[test]
    fn euclidean_terminal_variance_is_two_t() {
        let e = MetricFlow::euclidean(2);
        let ends = terminal_ensemble(&e, &dv(&[0.0, 0.0]), 0.0, 1.0, 0.01, 4000, 5).unwrap();
        for i in 0..2 {
            let sq: Vec<f64> = ends.iter().map(|fp| fp.x[i] * fp.x[i]).collect();
            let e = Estimate::from_samples(&sq).unwrap();
            assert!(e.within(2.0, 4.0), "{e:?}");
        }
    }

    #[test]
    fn reorthonormalize_examples() {
        let s = MetricFlow::ricci_sphere(2).unwrap();
        let x = dv(&[0.0, 0.6, 0.8]);
        let f = s.orthonormal_frame(0.1, &x).unwrap();
        assert!((reorthonormalize(&s, 0.1, &f).unwrap() - &f).norm() < 1e-12);
        let doubled = reorthonormalize(&s, 0.1, &(&f * 2.0)).unwrap();
        assert!((doubled - &f).norm() < 1e-12);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
        let noise = DMatrix::from_fn(3, 2, |_, _| rand::Rng::gen_range(&mut rng, -1e-3..1e-3));
        let perturbed = &f + noise;
        let fixed = reorthonormalize(&s, 0.1, &perturbed).unwrap();
        assert!(s.frame_defect(0.1, &fixed) < 1e-12);
        assert!((fixed - perturbed).norm() <= 1e-2);
        let rank_one = DMatrix::from_columns(&[f.column(0).clone_owned(), f.column(0).clone_owned()]);
        assert!(matches!(reorthonormalize(&s, 0.1, &rank_one), Err(Error::DegenerateFrame)));
    }

    #[test]
    fn csv_dump_has_expected_columns() {
        let e = MetricFlow::euclidean(2);
        let p = simulate_path(&e, &dv(&[0.0, 0.0]), None, 0.0, 0.02, 0.01, &NoiseStream::new(1, 0), &[]).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, &[(4, &p)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path_id,k,t,x0,x1,frame_defect");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("4,0,0,"));
    }

    #[test]
    fn step_study_on_static_and_moving_flows() {
        let e = MetricFlow::euclidean(2);
        let study = step_halving_study(&e, &dv(&[0.0, 0.0]), 0.0, 0.5, 2, 3, 200, 1, |x| x.norm_squared()).unwrap();
        assert_eq!(study.steps, vec![2, 4, 8]);
        assert_eq!(study.weak_order(), None);
        assert_eq!(study.defect_order(), None);
        assert!(study.values[2].within(2.0, 4.0));

        let r = MetricFlow::ricci_sphere(2).unwrap();
        let study = step_halving_study(&r, &dv(&[0.0, 0.0, 1.0]), 0.0, 0.3, 4, 3, 2000, 2, |x| x[2]).unwrap();
        assert!(study.defect_order().unwrap() > 1.5, "{study:?}");
        assert!(study.weak_diffs.iter().all(|d| d.mean > 0.0));
        assert!(step_halving_study(&r, &dv(&[0.0, 0.0, 1.0]), 0.0, 0.3, 4, 1, 10, 2, |x| x[2]).is_err());
    }

    #[test]
    fn halving_order_of_geometric_sequence() {
        assert!((halving_order(&[8.0, 4.0, 2.0, 1.0], &[1.0; 4]) - 1.0).abs() < 1e-12);
        assert!((halving_order(&[16.0, 4.0, 1.0], &[1.0, 5.0, 2.0]) - 2.0).abs() < 1e-12);
        // an imprecise last point barely moves the fit
        assert!((halving_order(&[8.0, 4.0, 2.0, 3.0], &[1e6, 1e6, 1e6, 1e-6]) - 1.0).abs() < 1e-3);
    }
}
