use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::quadrature::integrate;

const E: f64 = std::f64::consts::E;

/// Nonnegative radial (or temporal) profile functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    Constant { value: f64 },
    /// `coef * r^exponent`.
    Power { coef: f64, exponent: f64 },
    /// `coef * log(e + r)`.
    Log { coef: f64 },
    /// `coef * (1 + r) log(e + r)`.
    LinearLog { coef: f64 },
    /// `coef * (1 + r^2) log^2(e + r)`.
    QuadraticLogSquared { coef: f64 },
}

impl Profile {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => value,
            Profile::Power { coef, exponent } => coef * r.powf(exponent),
            Profile::Log { coef } => coef * (E + r).ln(),
            Profile::LinearLog { coef } => coef * (1.0 + r) * (E + r).ln(),
            Profile::QuadraticLogSquared { coef } => coef * (1.0 + r * r) * (E + r).ln().powi(2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthClass {
    DivergentTrend,
    ConvergentTrend,
}

/// `F(R) = int_1^R dt int_1^t exp(-int_r^t psi) dr` on a grid, with a heuristic tail label.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    /// Sampled `(R, F(R))` pairs, at most about a thousand rows.
    pub table: Vec<(f64, f64)>,
    pub r_max: f64,
    /// `F(R_max) / F(R_max / 2)`.
    pub tail_ratio: f64,
    /// `alpha` in a fitted tail `dF/dR ~ R^{-alpha}`, from the increments over
    /// `[R/4, R/2]` and `[R/2, R]`.
    pub tail_exponent: f64,
    /// Numerical trend only; the integral test is asymptotic and cannot be decided on a finite grid.
    pub classification: GrowthClass,
}

impl GrowthReport {
    pub fn value_at_max(&self) -> f64 {
        self.table.last().map_or(0.0, |p| p.1)
    }

    /// `R,F` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["R", "F"]).map_err(csv_error)?;
        for (r, f) in &self.table {
            w.write_record([r.to_string(), f.to_string()]).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> crate::Error {
    crate::Error::Io(e.to_string())
}

/// `(1 - e^{-z}) / z`, continuous at zero.
fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-10 {
        1.0 - z / 2.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// Evaluates `F` on `n_grid` uniform steps of `[1, r_max]`.
///
/// The inner integral `G(t) = int_1^t exp(-int_r^t psi) dr` solves `G' = 1 - psi G`, which is
/// advanced with an exponential integrator (exact for `psi` constant over a step), so large
/// `psi` does not force small steps. `F` is the trapezoid integral of `G`.
///
/// Labelled divergent when `F(R_max)/F(R_max/2) >= 1.5` or the fitted tail exponent is at most
/// 1.5; the slack over the sharp value 1 absorbs logarithmic corrections such as
/// `G ~ 1/(t log t)`.
pub fn grigoryan_integral(psi: impl Fn(f64) -> f64, r_max: f64, n_grid: usize) -> GrowthReport {
    let n = n_grid.max(8);
    let r_max = r_max.max(1.0 + 1e-9);
    let h = (r_max - 1.0) / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| if i == n { r_max } else { 1.0 + h * i as f64 }).collect();
    let psi_v: Vec<f64> = grid.iter().map(|&r| psi(r)).collect();
    let mut g = 0.0;
    let mut f = 0.0;
    let mut fv = Vec::with_capacity(n + 1);
    fv.push(0.0);
    for i in 0..n {
        let z = 0.5 * h * (psi_v[i] + psi_v[i + 1]);
        let g_next = g * (-z).exp() + h * phi1(z);
        f += 0.5 * h * (g + g_next);
        g = g_next;
        fv.push(f);
    }
    let at = |r: f64| -> f64 {
        let x = ((r - 1.0) / h).clamp(0.0, n as f64);
        let i = (x.floor() as usize).min(n - 1);
        let w = x - i as f64;
        fv[i] * (1.0 - w) + fv[i + 1] * w
    };
    let (fr, fh, fq) = (at(r_max), at(0.5 * r_max), at(0.25 * r_max));
    let tail_ratio = if fh > 0.0 { fr / fh } else { f64::INFINITY };
    let (d2, d1) = (fr - fh, fh - fq);
    let tail_exponent = if d1 > 0.0 && d2 > 0.0 { 1.0 - (d2 / d1).log2() } else { f64::INFINITY };
    let classification = if tail_ratio >= 1.5 || tail_exponent <= 1.5 {
        GrowthClass::DivergentTrend
    } else {
        GrowthClass::ConvergentTrend
    };
    let stride = n.div_ceil(1000).max(1);
    let mut table: Vec<(f64, f64)> = (0..=n).step_by(stride).map(|i| (grid[i], fv[i])).collect();
    if table.last().map(|p| p.0) != Some(r_max) {
        table.push((r_max, fv[n]));
    }
    GrowthReport { table, r_max, tail_ratio, tail_exponent, classification }
}

/// Which non-explosion criterion to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonexplosionVariant {
    /// `psi` is given directly and only the growth integral is tested.
    Direct,
    /// `R^Z >= -h(t) phi(rho)`: `psi(s) = int_0^s phi`.
    CurvatureGrowth,
    /// `Ric >= -h(t) phi(rho)` with a radial drift bound and the comparison inequality
    /// `drift(rho) + sqrt((d-1) phi) coth(sqrt(phi/(d-1)) rho) <= h(t) psi(rho)`.
    Comparison,
}

fn default_h() -> Profile {
    Profile::Constant { value: 1.0 }
}
fn default_dim() -> usize {
    2
}
fn default_t_max() -> f64 {
    1.0
}
fn default_r_max() -> f64 {
    1000.0
}
fn default_n_grid() -> usize {
    100_000
}
fn default_samples() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonexplosionSpec {
    pub variant: NonexplosionVariant,
    #[serde(default)]
    pub psi: Option<Profile>,
    #[serde(default)]
    pub phi: Option<Profile>,
    /// Time factor, evaluated at `t`.
    #[serde(default = "default_h")]
    pub h: Profile,
    /// Bound on `d rho/dt + <Z, grad rho>` as a function of `rho` (comparison variant).
    #[serde(default)]
    pub radial_drift: Option<Profile>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Times are sampled in `[0, t_max)`.
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default = "default_n_grid")]
    pub n_grid: usize,
    /// Sample count per axis for the pointwise checks.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl NonexplosionSpec {
    pub fn new(variant: NonexplosionVariant) -> Self {
        NonexplosionSpec {
            variant,
            psi: None,
            phi: None,
            h: default_h(),
            radial_drift: None,
            dim: default_dim(),
            t_max: default_t_max(),
            r_max: default_r_max(),
            n_grid: default_n_grid(),
            samples: default_samples(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Hypothesis {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct NonexplosionReport {
    pub variant: NonexplosionVariant,
    pub hypotheses: Vec<Hypothesis>,
    pub growth: Option<GrowthReport>,
    /// Every sampled hypothesis holds and the growth integral trends to infinity.
    pub criterion_established: bool,
}

fn hyp(name: &str, holds: bool, detail: impl Into<String>) -> Hypothesis {
    Hypothesis { name: name.to_string(), holds, detail: detail.into() }
}

fn samples(a: f64, b: f64, n: usize, include_end: bool) -> Vec<f64> {
    let n = n.max(2);
    let denom = if include_end { (n - 1) as f64 } else { n as f64 };
    (0..n).map(|i| a + (b - a) * i as f64 / denom).collect()
}

fn min_value(p: &Profile, xs: &[f64]) -> f64 {
    xs.iter().map(|&x| p.eval(x)).fold(f64::INFINITY, f64::min)
}

fn non_decreasing(p: &Profile, xs: &[f64]) -> bool {
    xs.windows(2).all(|w| p.eval(w[1]) >= p.eval(w[0]) - 1e-12 * p.eval(w[0]).abs().max(1.0))
}

/// `sqrt((d-1) phi) coth(sqrt(phi/(d-1)) rho)`, the Laplacian comparison bound.
fn comparison_term(d: usize, phi: f64, rho: f64) -> f64 {
    if d <= 1 {
        return 0.0;
    }
    let m = (d - 1) as f64;
    let k = (phi / m).sqrt();
    if k * rho < 1e-8 {
        m / rho
    } else {
        (m * phi).sqrt() / (k * rho).tanh()
    }
}

/// Report on the sampled hypotheses of the chosen criterion and on the growth integral.
pub fn nonexplosion_check(spec: &NonexplosionSpec) -> NonexplosionReport {
    let radii = samples(0.0, spec.r_max, spec.samples, true);
    let times = samples(0.0, spec.t_max, spec.samples, false);
    let mut hyps = Vec::new();

    let mut nonneg = vec![("h", min_value(&spec.h, &times))];
    for (name, p) in [("psi", &spec.psi), ("phi", &spec.phi), ("radial_drift", &spec.radial_drift)] {
        if let Some(p) = p {
            nonneg.push((name, min_value(p, &radii)));
        }
    }
    let bad: Vec<String> = nonneg.iter().filter(|(_, m)| !(*m >= 0.0)).map(|(n, m)| format!("{n} (min {m})")).collect();
    hyps.push(hyp(
        "nonnegative",
        bad.is_empty(),
        if bad.is_empty() { "all profiles nonnegative on the samples".to_string() } else { bad.join(", ") },
    ));

    let psi: Option<Box<dyn Fn(f64) -> f64>> = match spec.variant {
        NonexplosionVariant::Direct => {
            hyps.push(hyp("psi given", spec.psi.is_some(), "psi is required"));
            spec.psi.clone().map(|p| Box::new(move |r: f64| p.eval(r)) as Box<dyn Fn(f64) -> f64>)
        }
        NonexplosionVariant::CurvatureGrowth => {
            hyps.push(hyp("phi given", spec.phi.is_some(), "psi(s) = int_0^s phi(r) dr"));
            spec.phi.clone().map(|p| Box::new(move |s: f64| integrate(|r| p.eval(r), 0.0, s, 64)) as Box<dyn Fn(f64) -> f64>)
        }
        NonexplosionVariant::Comparison => {
            let present = spec.phi.is_some() && spec.psi.is_some();
            hyps.push(hyp("phi and psi given", present, "phi, psi are required"));
            if let (Some(phi), Some(psi)) = (&spec.phi, &spec.psi) {
                let mono = non_decreasing(&spec.h, &times) && non_decreasing(phi, &radii) && non_decreasing(psi, &radii);
                hyps.push(hyp("non-decreasing", mono, "h, phi and psi sampled"));
                let drift = spec.radial_drift.clone().unwrap_or(Profile::Zero);
                // the comparison is only used for rho >= 1
                let rhos = samples(1.0, spec.r_max.max(1.0), spec.samples, true);
                let mut worst = f64::NEG_INFINITY;
                let mut at = (0.0, 0.0);
                for &t in &times {
                    for &r in &rhos {
                        let lhs = drift.eval(r) + comparison_term(spec.dim, phi.eval(r), r);
                        let gap = lhs - spec.h.eval(t) * psi.eval(r);
                        if gap > worst {
                            worst = gap;
                            at = (t, r);
                        }
                    }
                }
                hyps.push(hyp(
                    "comparison inequality",
                    worst <= 0.0,
                    format!("largest lhs - rhs = {worst:.4e} at t = {}, rho = {}", at.0, at.1),
                ));
            }
            spec.psi.clone().map(|p| Box::new(move |r: f64| p.eval(r)) as Box<dyn Fn(f64) -> f64>)
        }
    };
    let growth = psi.map(|p| grigoryan_integral(p, spec.r_max, spec.n_grid));
    let established = hyps.iter().all(|h| h.holds)
        && growth.as_ref().is_some_and(|g| g.classification == GrowthClass::DivergentTrend);
    NonexplosionReport { variant: spec.variant, hypotheses: hyps, growth, criterion_established: established }
}
