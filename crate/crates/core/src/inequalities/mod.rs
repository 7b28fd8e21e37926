//! Monte Carlo checks of curvature-equivalent functional inequalities.
//!
//! Each verifier estimates both sides of one inequality and returns a
//! [`Verdict`]. A claim holds when `lhs <= rhs + 3 * sqrt(se_lhs^2 + se_rhs^2)`.

mod nonexplosion;
mod qrelation;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::coupling::{wasserstein_upper, CouplingMode, CouplingOptions};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::frame_sde::{PathCursor, TimeGrid};
use crate::geometry::{CurvatureBound, FramePoint, MetricFlow, Point};
use crate::gradient::{bismut_integrated, bismut_pathwise, HProfile};
use crate::noise::NoiseStream;
use crate::stats::{mean, par_collect, Estimate, McConfig, VectorEstimate};

pub use nonexplosion::{
    grigoryan_integral, nonexplosion_check, GrowthClass, GrowthReport, Hypothesis, NonexplosionReport, NonexplosionSpec,
    NonexplosionVariant, Profile,
};
pub use qrelation::{solve_q_relation, solve_r_relation, HyperboundConfig, HyperboundItem};

const TAG_NESTED: &str = "nested";
/// Seed offset for the ensemble started at the second point of a two-point claim.
const SECOND_POINT_SEED: u64 = 0x9E37_79B9_7F4A_7C15;

/// Outcome of one inequality check.
#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub name: String,
    /// The inequality in plain notation.
    pub claim: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// `rhs.mean - lhs.mean`.
    pub slack: f64,
    /// `sqrt(lhs.stderr^2 + rhs.stderr^2)`.
    pub stderr: f64,
    pub holds_with_ci: bool,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Extra numbers such as nested-MC bias probes.
    pub diagnostics: BTreeMap<String, f64>,
}

impl Verdict {
    pub fn new(name: &str, claim: &str, lhs: Estimate, rhs: Estimate, seed: u64, config: serde_json::Value) -> Self {
        let stderr = lhs.stderr.hypot(rhs.stderr);
        let slack = rhs.mean - lhs.mean;
        Verdict {
            name: name.to_string(),
            claim: claim.to_string(),
            lhs,
            rhs,
            slack,
            stderr,
            holds_with_ci: lhs.mean <= rhs.mean + 3.0 * stderr,
            seed,
            config,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with_diagnostic(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

/// Sizes of nested Monte Carlo runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NestedConfig {
    pub n_outer: usize,
    pub n_inner: usize,
    /// Nodes of the trapezoid rule in `u` (endpoints included).
    pub u_nodes: usize,
    pub max_inner_total: usize,
}

impl Default for NestedConfig {
    fn default() -> Self {
        NestedConfig { n_outer: 2000, n_inner: 500, u_nodes: 8, max_inner_total: 10_000_000 }
    }
}

impl NestedConfig {
    fn validate(&self) -> Result<()> {
        if self.n_outer < 2 || self.n_inner < 2 {
            return Err(Error::InsufficientSamples(format!(
                "nested run needs at least 2 outer and 2 inner paths (got {} and {})",
                self.n_outer, self.n_inner
            )));
        }
        if self.u_nodes < 2 {
            return Err(Error::InvalidArgument(format!("u_nodes must be at least 2, got {}", self.u_nodes)));
        }
        Ok(())
    }

    fn check_budget(&self, requested: usize) -> Result<()> {
        if requested > self.max_inner_total {
            return Err(Error::NestedBudgetExceeded { requested, limit: self.max_inner_total });
        }
        Ok(())
    }
}

/// Value and delta-method error of `g(column means)`.
///
/// The gradient of `g` is taken by central differences; the columns may be
/// correlated, since the error comes from the linearized per-sample values.
pub fn delta_estimate(columns: &[Vec<f64>], g: impl Fn(&[f64]) -> f64) -> Result<Estimate> {
    let n = columns.first().map_or(0, Vec::len);
    if n < 2 || columns.iter().any(|c| c.len() != n) {
        return Err(Error::InsufficientSamples(format!("{n} samples per column")));
    }
    let m: Vec<f64> = columns.iter().map(|c| mean(c)).collect();
    let value = g(&m);
    let constant = columns.iter().all(|c| c.iter().all(|&v| v == c[0]));
    if constant {
        return Ok(Estimate { mean: value, stderr: 0.0, n });
    }
    let mut grad = vec![0.0; m.len()];
    for j in 0..m.len() {
        let eps = 1e-6 * m[j].abs().max(1e-3);
        let mut up = m.clone();
        let mut dn = m.clone();
        up[j] += eps;
        dn[j] -= eps;
        grad[j] = (g(&up) - g(&dn)) / (2.0 * eps);
    }
    let lin: Vec<f64> = (0..n).map(|i| grad.iter().zip(columns).map(|(d, c)| d * c[i]).sum()).collect();
    let spread = Estimate::from_samples(&lin)?;
    Ok(Estimate { mean: value, stderr: spread.stderr, n })
}

/// One simulated path with the curvature bound sampled at every grid node.
struct KPath {
    end: Point,
    /// `K(t_k, X_{t_k})` for `k = 0..=steps`.
    k: Vec<f64>,
    /// States at the requested node indices.
    marks: Vec<FramePoint>,
}

impl KPath {
    /// `int_s^{t_j} K(r, X_r) dr` by the trapezoid rule, for every node `j`.
    fn cumulative(&self, h: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.k.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in self.k.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            out.push(acc);
        }
        out
    }

    /// `int_s^t exp(-2 int_u^t K(r, X_r) dr) du` by the trapezoid rule.
    fn decay_integral(&self, h: f64) -> f64 {
        let c = self.cumulative(h);
        let total = *c.last().expect("nonempty");
        let w: Vec<f64> = c.iter().map(|cj| (-2.0 * (total - cj)).exp()).collect();
        w.windows(2).map(|p| 0.5 * h * (p[0] + p[1])).sum()
    }
}

#[allow(clippy::too_many_arguments)]
fn k_paths(
    flow: &MetricFlow,
    s: f64,
    t: f64,
    x: &Point,
    k: &CurvatureBound,
    mc: &McConfig,
    n_paths: usize,
    mark_nodes: &[usize],
) -> Result<(TimeGrid, Vec<KPath>)> {
    mc.validate()?;
    flow.check_simulation_time(t)?;
    let grid = TimeGrid::uniform(s, t, mc.step)?;
    let frame0 = flow.orthonormal_frame(s, x)?;
    let paths = par_collect(n_paths, |i| {
        let mut cursor = PathCursor::new(flow, x.clone(), Some(frame0.clone()), grid)?;
        let mut gauss = NoiseStream::new(mc.seed, i).brownian();
        let mut kv = Vec::with_capacity(grid.steps + 1);
        let mut marks = Vec::with_capacity(mark_nodes.len());
        loop {
            let st = cursor.state();
            kv.push(k.eval(st.t, &st.x));
            if mark_nodes.contains(&cursor.k()) {
                marks.push(st.clone());
            }
            if cursor.is_done() {
                break;
            }
            cursor.advance_with(&mut gauss)?;
        }
        Ok(KPath { end: cursor.into_state().x, k: kv, marks })
    })?;
    Ok((grid, paths))
}

fn terminal_points(flow: &MetricFlow, s: f64, t: f64, x: &Point, mc: &McConfig) -> Result<Vec<Point>> {
    mc.validate()?;
    flow.check_simulation_time(t)?;
    let grid = TimeGrid::uniform(s, t, mc.step)?;
    let frame0 = flow.orthonormal_frame(s, x)?;
    par_collect(mc.n_paths, |i| {
        let cursor = PathCursor::new(flow, x.clone(), Some(frame0.clone()), grid)?;
        Ok(cursor.run(&mut NoiseStream::new(mc.seed, i).brownian())?.x)
    })
}

fn check_p(p: f64, strict: bool) -> Result<()> {
    let ok = if strict { p > 1.0 } else { p >= 1.0 };
    if !ok || !p.is_finite() {
        let bound = if strict { "greater than 1" } else { "at least 1" };
        return Err(Error::InvalidArgument(format!("p must be {bound}, got {p}")));
    }
    Ok(())
}

fn check_positive(values: &[f64]) -> Result<()> {
    let inf = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(inf > 0.0) {
        return Err(Error::NonPositiveField(inf));
    }
    Ok(())
}

fn check_nonnegative(values: &[f64]) -> Result<()> {
    let inf = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(inf >= 0.0) {
        return Err(Error::InvalidArgument(format!("field must be nonnegative (sampled infimum {inf})")));
    }
    Ok(())
}

/// `u_s^{-1} grad^s P_{s,t} f(x)`, pathwise when `f` has a gradient.
fn gradient_of_semigroup(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    t: f64,
    x: &Point,
    mc: &McConfig,
) -> Result<VectorEstimate> {
    if f.has_gradient() {
        bismut_pathwise(flow, f, s, t, x, None, mc)
    } else {
        bismut_integrated(flow, f, s, t, x, None, &HProfile::Linear, mc)
    }
}

fn power(e: Estimate, p: f64) -> Estimate {
    if e.stderr == 0.0 {
        return Estimate { mean: e.mean.powf(p), ..e };
    }
    Estimate { mean: e.mean.powf(p), stderr: p * e.mean.powf(p - 1.0).abs() * e.stderr, n: e.n }
}

fn grad_norm(flow: &MetricFlow, f: &ScalarField, t: f64, x: &Point) -> Result<f64> {
    Ok(flow.norm(t, &f.gradient(flow, t, x)?))
}

/// `|grad^s P_{s,t} f|^p(x) <= E[|grad^t f|_t^p(X_t) exp(-p int_s^t K(r, X_r) dr)]`.
#[allow(clippy::too_many_arguments)]
pub fn verify_gradient_inequality(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    t: f64,
    x: &Point,
    p: f64,
    k: &CurvatureBound,
    mc: &McConfig,
) -> Result<Verdict> {
    check_p(p, false)?;
    if !f.has_gradient() {
        return Err(Error::MissingGradient(f.name().to_string()));
    }
    let lhs = power(bismut_pathwise(flow, f, s, t, x, None, mc)?.norm(), p);
    let (grid, paths) = k_paths(flow, s, t, x, k, mc, mc.n_paths, &[])?;
    let samples = paths
        .iter()
        .map(|kp| {
            let total = *kp.cumulative(grid.h()).last().expect("nonempty");
            Ok(grad_norm(flow, f, t, &kp.end)?.powf(p) * (-p * total).exp())
        })
        .collect::<Result<Vec<f64>>>()?;
    let rhs = Estimate::from_samples(&samples)?;
    Ok(Verdict::new(
        "gradient_inequality",
        "|grad P_{s,t} f|^p <= E[|grad f|^p(X_t) exp(-p int K)]",
        lhs,
        rhs,
        mc.seed,
        json!({ "flow": format!("{:?}", flow.kind()), "f": f.name(), "s": s, "t": t, "x": x.as_slice(), "p": p, "mc": mc }),
    ))
}

/// Entropy-type bound with `q = min(p, 2)`:
/// `q [P f^2 - (P f^{2/q})^q] / (4(q-1)) <= E[|grad f|^2(X_t) int_s^t exp(-2 int_u^t K) du]`,
/// and for `p = 1` its limit `P(f^2 log f^2) - P f^2 log P f^2 <= 4 E[...]`.
#[allow(clippy::too_many_arguments)]
pub fn verify_entropy_bound(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    t: f64,
    x: &Point,
    p: f64,
    k: &CurvatureBound,
    mc: &McConfig,
) -> Result<Verdict> {
    check_p(p, false)?;
    if !f.has_gradient() {
        return Err(Error::MissingGradient(f.name().to_string()));
    }
    let q = p.min(2.0);
    let (grid, paths) = k_paths(flow, s, t, x, k, mc, mc.n_paths, &[])?;
    let values: Vec<f64> = paths.iter().map(|kp| f.value(t, &kp.end)).collect();
    let mut probe = values.clone();
    probe.push(f.value(s, x));
    check_positive(&probe)?;
    let weights = paths
        .iter()
        .map(|kp| Ok(grad_norm(flow, f, t, &kp.end)?.powi(2) * kp.decay_integral(grid.h())))
        .collect::<Result<Vec<f64>>>()?;
    let constant = values.iter().all(|&v| v == values[0]);
    let (lhs, rhs, claim) = if q == 1.0 {
        let lhs = if constant {
            Estimate::exact(0.0)
        } else {
            let a: Vec<f64> = values.iter().map(|v| v * v * (v * v).ln()).collect();
            let b: Vec<f64> = values.iter().map(|v| v * v).collect();
            delta_estimate(&[a, b], |m| m[0] - m[1] * m[1].ln())?
        };
        let rhs = Estimate::from_samples(&weights)?.map_linear(4.0, 0.0);
        (lhs, rhs, "P(f^2 log f^2) - P f^2 log P f^2 <= 4 E[|grad f|^2(X_t) int exp(-2 int_u^t K) du]")
    } else {
        let lhs = if constant {
            Estimate::exact(0.0)
        } else {
            let a: Vec<f64> = values.iter().map(|v| v * v).collect();
            let b: Vec<f64> = values.iter().map(|v| v.powf(2.0 / q)).collect();
            delta_estimate(&[a, b], |m| q * (m[0] - m[1].powf(q)) / (4.0 * (q - 1.0)))?
        };
        let rhs = Estimate::from_samples(&weights)?;
        (lhs, rhs, "q[P f^2 - (P f^{2/q})^q]/(4(q-1)) <= E[|grad f|^2(X_t) int exp(-2 int_u^t K) du]")
    };
    Ok(Verdict::new(
        "entropy_bound",
        claim,
        lhs,
        rhs,
        mc.seed,
        json!({ "flow": format!("{:?}", flow.kind()), "f": f.name(), "s": s, "t": t, "x": x.as_slice(), "p": p, "mc": mc }),
    ))
}

/// Reverse bound with `q = min(p, 2)`:
/// `|grad P f|^2 <= [P f^q - (P f)^q] / (q(q-1) int_s^t (E[(P_{u,t} f)^{2-q}(X_u) e^{-2 int_s^u K}])^{-1} du)`,
/// with the `P(f log f) - P f log P f` numerator and no `q(q-1)` factor at `p = 1`.
#[allow(clippy::too_many_arguments)]
pub fn verify_reverse_bound(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    t: f64,
    x: &Point,
    p: f64,
    k: &CurvatureBound,
    mc: &McConfig,
) -> Result<Verdict> {
    verify_reverse_bound_with(flow, f, s, t, x, p, k, mc, &NestedConfig::default())
}

/// [`verify_reverse_bound`] with explicit nested-run sizes.
#[allow(clippy::too_many_arguments)]
pub fn verify_reverse_bound_with(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    t: f64,
    x: &Point,
    p: f64,
    k: &CurvatureBound,
    mc: &McConfig,
    nested: &NestedConfig,
) -> Result<Verdict> {
    check_p(p, false)?;
    nested.validate()?;
    if t <= s {
        return Err(Error::DegenerateInterval(t - s));
    }
    let q = p.min(2.0);
    // q = 1 and q = 2 reduce to path functionals by the Markov property.
    let tower = q == 1.0 || q == 2.0;
    let grid = TimeGrid::uniform(s, t, mc.step)?;
    let m = nested.u_nodes.min(grid.steps + 1).max(2);
    let nodes: Vec<usize> = (0..m).map(|j| (j * grid.steps + (m - 1) / 2) / (m - 1)).collect();
    let n_outer = if tower { mc.n_paths } else { nested.n_outer.min(mc.n_paths) };
    if !tower {
        nested.check_budget(n_outer.saturating_mul(nested.n_inner).saturating_mul(m.saturating_sub(2)))?;
    }
    let (grid, paths) = k_paths(flow, s, t, x, k, mc, n_outer, &nodes)?;
    let values: Vec<f64> = paths.iter().map(|kp| f.value(t, &kp.end)).collect();
    let mut probe = values.clone();
    probe.push(f.value(s, x));
    check_positive(&probe)?;

    // inner semigroup values (P_{u,t} f)(X_u) at interior nodes, full and half inner samples
    let inner: Vec<Vec<(f64, f64)>> = if tower {
        Vec::new()
    } else {
        par_collect(n_outer, |i| {
            let parent = NoiseStream::new(mc.seed, i);
            let kp = &paths[i as usize];
            (1..m - 1)
                .map(|j| {
                    let vals = (0..nested.n_inner as u64)
                        .map(|l| {
                            let cursor = PathCursor::from_state(flow, kp.marks[j].clone(), t, mc.step)?;
                            let stream = parent.child(TAG_NESTED, (j as u64) << 32 | l);
                            Ok(f.value(t, &cursor.run(&mut stream.brownian())?.x))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Ok((mean(&vals), mean(&vals[..nested.n_inner / 2])))
                })
                .collect()
        })?
    };

    let h = grid.h();
    let times: Vec<f64> = nodes.iter().map(|&n| grid.time(n)).collect();
    let node_columns = |half: bool| -> Vec<Vec<f64>> {
        (0..m)
            .map(|j| {
                paths
                    .iter()
                    .enumerate()
                    .map(|(i, kp)| {
                        let w = (-2.0 * kp.cumulative(h)[nodes[j]]).exp();
                        let fv = values[i];
                        let y = if q == 2.0 {
                            1.0
                        } else if q == 1.0 {
                            fv
                        } else if j == m - 1 {
                            fv.powf(2.0 - q)
                        } else if j == 0 {
                            // placeholder; the start value uses the mean of f(X_t)
                            1.0
                        } else {
                            let (full, halfv) = inner[i][j - 1];
                            (if half { halfv } else { full }).powf(2.0 - q)
                        };
                        y * w
                    })
                    .collect()
            })
            .collect()
    };
    let build = |half: bool| -> (Vec<Vec<f64>>, usize) {
        let a: Vec<f64> =
            values.iter().map(|&v| if q == 1.0 { v * v.ln() } else { v.powf(q) }).collect();
        let mut cols = vec![a, values.clone()];
        cols.extend(node_columns(half));
        (cols, 2)
    };
    let rhs_of = |mm: &[f64]| -> f64 {
        let num = if q == 1.0 { mm[0] - mm[1] * mm[1].ln() } else { mm[0] - mm[1].powf(q) };
        let inv: Vec<f64> = (0..m)
            .map(|j| {
                let e = if q != 1.0 && q != 2.0 && j == 0 { mm[1].powf(2.0 - q) * mm[2] } else { mm[2 + j] };
                1.0 / e
            })
            .collect();
        let integral: f64 = inv.windows(2).zip(times.windows(2)).map(|(v, tt)| 0.5 * (tt[1] - tt[0]) * (v[0] + v[1])).sum();
        let factor = if q == 1.0 { 1.0 } else { q * (q - 1.0) };
        num / (factor * integral)
    };
    let constant = values.iter().all(|&v| v == values[0]);
    let (cols, _) = build(false);
    let rhs = if constant { Estimate::exact(0.0) } else { delta_estimate(&cols, rhs_of)? };

    let lhs = if constant {
        Estimate::exact(0.0)
    } else {
        power(gradient_of_semigroup(flow, f, s, t, x, mc)?.norm(), 2.0)
    };
    let mut verdict = Verdict::new(
        "reverse_bound",
        if q == 1.0 {
            "|grad P f|^2 <= [P(f log f) - P f log P f] / int (E[P_{u,t} f(X_u) e^{-2 int K}])^{-1} du"
        } else {
            "|grad P f|^2 <= [P f^q - (P f)^q] / (q(q-1) int (E[(P_{u,t} f)^{2-q}(X_u) e^{-2 int K}])^{-1} du)"
        },
        lhs,
        rhs,
        mc.seed,
        json!({ "flow": format!("{:?}", flow.kind()), "f": f.name(), "s": s, "t": t, "x": x.as_slice(), "p": p,
                "mc": mc, "nested": nested, "tower": tower }),
    );
    if !tower && !constant {
        let (half_cols, _) = build(true);
        let half = rhs_of(&half_cols.iter().map(|c| mean(c)).collect::<Vec<_>>());
        verdict = verdict.with_diagnostic("inner_doubling_delta", rhs.mean - half);
    }
    Ok(verdict)
}

fn rho_at(flow: &MetricFlow, s: f64, x: &Point, y: &Point) -> Result<f64> {
    if x == y {
        return Ok(0.0);
    }
    Ok(flow.distance(s, x, y)?.0)
}

/// Terminal values of `f` from `x` and from `y`; the same ensemble when `x == y`.
fn two_point_values(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    t: f64,
    x: &Point,
    y: &Point,
    mc: &McConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let vx: Vec<f64> = terminal_points(flow, s, t, x, mc)?.iter().map(|z| f.value(t, z)).collect();
    let vy = if x == y {
        vx.clone()
    } else {
        let other = mc.with_seed(mc.seed ^ SECOND_POINT_SEED);
        terminal_points(flow, s, t, y, &other)?.iter().map(|z| f.value(t, z)).collect()
    };
    Ok((vx, vy))
}

/// Harnack inequality `(P f)^p(x) <= P f^p(y) exp(p rho_s(x,y)^2 / (4(p-1) int_s^t e^{2 int_s^r K} dr))`.
#[allow(clippy::too_many_arguments)]
pub fn verify_harnack(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    t: f64,
    x: &Point,
    y: &Point,
    p: f64,
    k: &CurvatureBound,
    mc: &McConfig,
) -> Result<Verdict> {
    check_p(p, true)?;
    let scale = k.exp2_integral(s, t)?;
    let rho = rho_at(flow, s, x, y)?;
    let (vx, vy) = two_point_values(flow, f, s, t, x, y, mc)?;
    check_nonnegative(&vx)?;
    check_nonnegative(&vy)?;
    let factor = if rho == 0.0 { 1.0 } else { (p * rho * rho / (4.0 * (p - 1.0) * scale)).exp() };
    let lhs = power(Estimate::from_samples(&vx)?, p);
    let powered: Vec<f64> = vy.iter().map(|v| v.powf(p)).collect();
    let rhs = Estimate::from_samples(&powered)?.map_linear(factor, 0.0);
    Ok(Verdict::new(
        "harnack",
        "(P f)^p(x) <= P f^p(y) exp(p rho^2 / (4(p-1) int e^{2 int K}))",
        lhs,
        rhs,
        mc.seed,
        json!({ "flow": format!("{:?}", flow.kind()), "f": f.name(), "s": s, "t": t, "x": x.as_slice(),
                "y": y.as_slice(), "p": p, "rho": rho, "factor": factor, "mc": mc }),
    ))
}

/// Log-Harnack inequality `P log f(x) <= log P f(y) + rho_s(x,y)^2 / (4 int_s^t e^{2 int_s^r K} dr)`.
#[allow(clippy::too_many_arguments)]
pub fn verify_log_harnack(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    t: f64,
    x: &Point,
    y: &Point,
    k: &CurvatureBound,
    mc: &McConfig,
) -> Result<Verdict> {
    let scale = k.exp2_integral(s, t)?;
    let rho = rho_at(flow, s, x, y)?;
    let (vx, vy) = two_point_values(flow, f, s, t, x, y, mc)?;
    let inf = vx.iter().chain(&vy).copied().fold(f64::INFINITY, f64::min);
    if !(inf >= 1.0) {
        return Err(Error::FieldBelowOne(inf));
    }
    let penalty = rho * rho / (4.0 * scale);
    let logs: Vec<f64> = vx.iter().map(|v| v.ln()).collect();
    let lhs = Estimate::from_samples(&logs)?;
    let py = Estimate::from_samples(&vy)?;
    let rhs = Estimate { mean: py.mean.ln() + penalty, stderr: py.stderr / py.mean, n: py.n };
    Ok(Verdict::new(
        "log_harnack",
        "P log f(x) <= log P f(y) + rho^2 / (4 int e^{2 int K})",
        lhs,
        rhs,
        mc.seed,
        json!({ "flow": format!("{:?}", flow.kind()), "f": f.name(), "s": s, "t": t, "x": x.as_slice(),
                "y": y.as_slice(), "rho": rho, "penalty": penalty, "mc": mc }),
    ))
}

/// Semigroup values `P_{r,t} f` at the end points of `n_outer` paths from `(s, x)` to `r`,
/// each from `n_inner` inner paths; returns `(full, first-half)` inner means.
#[allow(clippy::too_many_arguments)]
fn nested_values(
    flow: &MetricFlow,
    f: &ScalarField,
    s: f64,
    r: f64,
    t: f64,
    x: &Point,
    mc: &McConfig,
    nested: &NestedConfig,
) -> Result<Vec<(f64, f64)>> {
    let n_outer = nested.n_outer;
    nested.check_budget(n_outer.saturating_mul(nested.n_inner))?;
    flow.check_simulation_time(t)?;
    let grid = TimeGrid::uniform(s, r, mc.step)?;
    let frame0 = flow.orthonormal_frame(s, x)?;
    par_collect(n_outer, |i| {
        let stream = NoiseStream::new(mc.seed, i);
        let cursor = PathCursor::new(flow, x.clone(), Some(frame0.clone()), grid)?;
        let mid = cursor.run(&mut stream.brownian())?;
        let vals = (0..nested.n_inner as u64)
            .map(|l| {
                let inner = PathCursor::from_state(flow, mid.clone(), t, mc.step)?;
                Ok(f.value(t, &inner.run(&mut stream.child(TAG_NESTED, l).brownian())?.x))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((mean(&vals), mean(&vals[..nested.n_inner / 2])))
    })
}

/// Hypercontractivity-type bound between `{P_{s,r}(P_{r,t} f)^{q2}}^{1/q2}` and
/// `(P_{s,t} f^{q1})^{1/q1}`; the direction follows [`HyperboundConfig::item`].
pub fn verify_hyperbound(flow: &MetricFlow, f: &ScalarField, x: &Point, cfg: &HyperboundConfig, mc: &McConfig) -> Result<Verdict> {
    verify_hyperbound_with(flow, f, x, cfg, mc, &NestedConfig::default())
}

/// [`verify_hyperbound`] with explicit nested-run sizes.
pub fn verify_hyperbound_with(
    flow: &MetricFlow,
    f: &ScalarField,
    x: &Point,
    cfg: &HyperboundConfig,
    mc: &McConfig,
    nested: &NestedConfig,
) -> Result<Verdict> {
    mc.validate()?;
    nested.validate()?;
    let item = cfg.validate()?;
    let (s, r, t, q1, q2) = (cfg.s, cfg.r, cfg.t, cfg.q1, cfg.q2);
    let direct: Vec<f64> = terminal_points(flow, s, t, x, mc)?.iter().map(|z| f.value(t, z)).collect();
    let inner = nested_values(flow, f, s, r, t, x, mc, nested)?;
    let sampled: Vec<f64> = direct.iter().copied().chain(inner.iter().map(|p| p.0)).collect();
    if q1 < 0.0 || q2 < 0.0 {
        check_positive(&sampled)?;
    } else {
        check_nonnegative(&sampled)?;
    }
    let root = |col: Vec<f64>, q: f64| -> Result<Estimate> { delta_estimate(&[col], |m| m[0].powf(1.0 / q)) };
    let single = root(direct.iter().map(|v| v.powf(q1)).collect(), q1)?;
    let composed = root(inner.iter().map(|p| p.0.powf(q2)).collect(), q2)?;
    let composed_half = mean(&inner.iter().map(|p| p.1.powf(q2)).collect::<Vec<_>>()).powf(1.0 / q2);
    let (lhs, rhs, claim) = match item {
        HyperboundItem::Contractive => (composed, single, "{P_{s,r}(P_{r,t} f)^{q2}}^{1/q2} <= (P_{s,t} f^{q1})^{1/q1}"),
        HyperboundItem::Reversed => (single, composed, "(P_{s,t} f^{q1})^{1/q1} <= {P_{s,r}(P_{r,t} f)^{q2}}^{1/q2}"),
    };
    Ok(Verdict::new(
        "hyperbound",
        claim,
        lhs,
        rhs,
        mc.seed,
        json!({ "flow": format!("{:?}", flow.kind()), "f": f.name(), "x": x.as_slice(), "s": s, "r": r, "t": t,
                "q1": q1, "q2": q2, "item": item, "mc": mc, "nested": nested }),
    )
    .with_diagnostic("inner_doubling_delta", composed.mean - composed_half))
}

/// `W_p(delta_x P_{s,t}, delta_y P_{s,t}) <= rho_s(x, y) exp(-int_s^t K)`, with the left side
/// bounded above by a parallel coupling.
#[allow(clippy::too_many_arguments)]
pub fn verify_contraction(
    flow: &MetricFlow,
    x: &Point,
    y: &Point,
    s: f64,
    t: f64,
    p: f64,
    k: &CurvatureBound,
    mc: &McConfig,
) -> Result<Verdict> {
    check_p(p, false)?;
    let decay = (-k.integrate(s, t)?).exp();
    let rho = rho_at(flow, s, x, y)?;
    let lhs = if rho == 0.0 {
        Estimate::exact(0.0)
    } else {
        wasserstein_upper(flow, x, y, s, t, p, CouplingOptions::new(CouplingMode::Parallel), mc)?
    };
    let rhs = Estimate::exact(rho * decay);
    Ok(Verdict::new(
        "contraction",
        "W_p(delta_x P, delta_y P) <= rho_s(x,y) exp(-int K)",
        lhs,
        rhs,
        mc.seed,
        json!({ "flow": format!("{:?}", flow.kind()), "x": x.as_slice(), "y": y.as_slice(), "s": s, "t": t, "p": p,
                "rho": rho, "mc": mc }),
    ))
}
