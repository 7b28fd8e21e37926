use std::path::PathBuf;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::coupling::{CouplingDrift, CouplingMode};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{CurvatureBound, DriftField, FlowKind, MetricFlow, Point, ScaleFn};
use crate::gradient::{HProfile, LocalConfig, RecoveryConfig};
use crate::inequalities::{NestedConfig, NonexplosionSpec};
use crate::stats::McConfig;

/// Schema version accepted by [`ExperimentConfig::parse`].
pub const CONFIG_VERSION: u32 = 1;
/// Smallest accepted path count.
pub const MIN_PATHS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub flow: FlowSpec,
    pub mc: McConfig,
    #[serde(default)]
    pub output: OutputSpec,
    pub task: TaskSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub kind: FlowKind,
    pub dim: usize,
    /// One conformal factor, or one per torus axis; empty means static unit metric.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scales: Vec<ScaleFn>,
    #[serde(default)]
    pub drift: DriftSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_horizon: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    #[default]
    Zero,
    LinearRadial {
        lambda: f64,
    },
}

impl FlowSpec {
    pub fn build(&self) -> Result<MetricFlow> {
        let drift = match self.drift {
            DriftSpec::Zero => DriftField::Zero,
            DriftSpec::LinearRadial { lambda } => DriftField::LinearRadial { lambda },
        };
        let mut flow = MetricFlow::new(self.kind, self.dim, self.scales.clone(), drift)?;
        if let Some(eps) = self.eps_horizon {
            flow = flow.with_horizon_margin(eps);
        }
        Ok(flow)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "svg" => Ok(Format::Svg),
            other => Err(Error::ConfigInvalid(vec![format!("output.formats: unknown format `{other}`")])),
        }
    }
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: None, formats: default_formats() }
    }
}

/// Builtin scalar fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant { value: f64 },
    Coordinate { index: usize },
    Linear { coeffs: Vec<f64> },
    SquaredNorm,
    SinCoordinate { index: usize },
    GaussianBump { center: Vec<f64>, width: f64 },
    ExpTruncated { index: usize, cap: f64 },
    /// `base + by`.
    Shifted { base: Box<FieldSpec>, by: f64 },
}

impl FieldSpec {
    pub fn build(&self) -> ScalarField {
        match self {
            FieldSpec::Constant { value } => ScalarField::constant(*value),
            FieldSpec::Coordinate { index } => ScalarField::coordinate(*index),
            FieldSpec::Linear { coeffs } => ScalarField::linear(coeffs.clone()),
            FieldSpec::SquaredNorm => ScalarField::squared_norm(),
            FieldSpec::SinCoordinate { index } => ScalarField::sin_coordinate(*index),
            FieldSpec::GaussianBump { center, width } => ScalarField::gaussian_bump(center.clone(), *width),
            FieldSpec::ExpTruncated { index, cap } => ScalarField::exp_coordinate_truncated(*index, *cap),
            FieldSpec::Shifted { base, by } => base.build().shifted(*by),
        }
    }

    fn check(&self, ambient: usize, at: &str, errs: &mut Vec<String>) {
        match self {
            FieldSpec::Coordinate { index } | FieldSpec::SinCoordinate { index } | FieldSpec::ExpTruncated { index, .. }
                if *index >= ambient =>
            {
                errs.push(format!("{at}.index: {index} is out of range for {ambient} coordinates"))
            }
            FieldSpec::Linear { coeffs } if coeffs.len() != ambient => {
                errs.push(format!("{at}.coeffs: expected {ambient} entries, got {}", coeffs.len()))
            }
            FieldSpec::GaussianBump { center, width } => {
                if center.len() != ambient {
                    errs.push(format!("{at}.center: expected {ambient} entries, got {}", center.len()));
                }
                if !(*width > 0.0) {
                    errs.push(format!("{at}.width: must be positive"));
                }
            }
            FieldSpec::Shifted { base, .. } => base.check(ambient, &format!("{at}.base"), errs),
            _ => {}
        }
    }
}

/// Curvature lower bound used by the verifiers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurvatureSpec {
    /// The closed-form optimal bound of the configured flow.
    #[default]
    Flow,
    Constant {
        value: f64,
    },
}

impl CurvatureSpec {
    pub fn build(&self, flow: &MetricFlow) -> Result<CurvatureBound> {
        match self {
            CurvatureSpec::Constant { value } => Ok(CurvatureBound::Constant(*value)),
            CurvatureSpec::Flow => CurvatureBound::for_flow(flow)
                .ok_or_else(|| Error::Unsupported("no closed-form curvature bound for this flow".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientEstimator {
    Pathwise,
    Integrated,
    #[default]
    Pair,
    Local,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn default_record_paths() -> usize {
    20
}

/// One inequality check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    Gradient {
        f: FieldSpec,
        x: Vec<f64>,
        s: f64,
        t: f64,
        p: f64,
        #[serde(default)]
        k: CurvatureSpec,
    },
    Entropy {
        f: FieldSpec,
        x: Vec<f64>,
        s: f64,
        t: f64,
        p: f64,
        #[serde(default)]
        k: CurvatureSpec,
    },
    Reverse {
        f: FieldSpec,
        x: Vec<f64>,
        s: f64,
        t: f64,
        p: f64,
        #[serde(default)]
        k: CurvatureSpec,
        #[serde(default)]
        nested: NestedConfig,
    },
    Harnack {
        f: FieldSpec,
        x: Vec<f64>,
        y: Vec<f64>,
        s: f64,
        t: f64,
        p: f64,
        #[serde(default)]
        k: CurvatureSpec,
    },
    LogHarnack {
        f: FieldSpec,
        x: Vec<f64>,
        y: Vec<f64>,
        s: f64,
        t: f64,
        #[serde(default)]
        k: CurvatureSpec,
    },
    /// Give exactly one of `r` and `q2`.
    Hyperbound {
        f: FieldSpec,
        x: Vec<f64>,
        s: f64,
        t: f64,
        q1: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q2: Option<f64>,
        #[serde(default)]
        k: CurvatureSpec,
        #[serde(default)]
        nested: NestedConfig,
    },
    Contraction {
        x: Vec<f64>,
        y: Vec<f64>,
        s: f64,
        t: f64,
        #[serde(default = "one")]
        p: f64,
        #[serde(default)]
        k: CurvatureSpec,
    },
}

impl CheckSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CheckSpec::Gradient { .. } => "gradient_inequality",
            CheckSpec::Entropy { .. } => "entropy_bound",
            CheckSpec::Reverse { .. } => "reverse_bound",
            CheckSpec::Harnack { .. } => "harnack",
            CheckSpec::LogHarnack { .. } => "log_harnack",
            CheckSpec::Hyperbound { .. } => "hyperbound",
            CheckSpec::Contraction { .. } => "contraction",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    Simulate {
        x: Vec<f64>,
        s: f64,
        t: f64,
        /// Paths kept whole for CSV/SVG output.
        #[serde(default = "default_record_paths")]
        record_paths: usize,
    },
    Gradient {
        f: FieldSpec,
        x: Vec<f64>,
        s: f64,
        t: f64,
        #[serde(default)]
        estimator: GradientEstimator,
        #[serde(default = "linear_h")]
        h: HProfile,
        /// Domain radius of the local estimator.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
        #[serde(default)]
        local: LocalConfig,
    },
    Couple {
        x: Vec<f64>,
        y: Vec<f64>,
        s: f64,
        t: f64,
        #[serde(default = "mirror")]
        mode: CouplingMode,
        #[serde(default)]
        drift_u: CouplingDrift,
        #[serde(default = "one")]
        p: f64,
    },
    Verify {
        checks: Vec<CheckSpec>,
    },
    Recover {
        x: Vec<f64>,
        /// Unit tangent direction at `x`.
        v: Vec<f64>,
        s: f64,
        #[serde(default = "two")]
        p: f64,
        #[serde(default)]
        recovery: RecoverOptions,
    },
    Nonexplosion {
        spec: NonexplosionSpec,
    },
}

/// Recovery settings; path count, step and seed come from `mc`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverOptions {
    pub t1: f64,
    pub n: f64,
    pub n_batches: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        let d = RecoveryConfig::default();
        RecoverOptions { t1: d.t1, n: d.n, n_batches: d.n_batches, cutoff: d.cutoff }
    }
}

impl RecoverOptions {
    pub fn with_mc(&self, mc: &McConfig) -> RecoveryConfig {
        RecoveryConfig {
            t1: self.t1,
            n_paths: mc.n_paths,
            step: mc.step,
            seed: mc.seed,
            n: self.n,
            n_batches: self.n_batches,
            cutoff: self.cutoff,
        }
    }
}

fn linear_h() -> HProfile {
    HProfile::Linear
}
fn mirror() -> CouplingMode {
    CouplingMode::Mirror
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Simulate { .. } => "simulate",
            TaskSpec::Gradient { .. } => "gradient",
            TaskSpec::Couple { .. } => "couple",
            TaskSpec::Verify { .. } => "verify",
            TaskSpec::Recover { .. } => "recover",
            TaskSpec::Nonexplosion { .. } => "nonexplosion",
        }
    }
}

pub(crate) fn point(v: &[f64]) -> Point {
    DVector::from_column_slice(v)
}

struct Checker<'a> {
    flow: Option<&'a MetricFlow>,
    errs: Vec<String>,
}

impl Checker<'_> {
    fn point(&mut self, at: &str, v: &[f64]) {
        let Some(flow) = self.flow else { return };
        if v.len() != flow.ambient_dim() {
            self.errs.push(format!("{at}: expected {} coordinates, got {}", flow.ambient_dim(), v.len()));
        } else if let Err(e) = flow.check_point(&point(v)) {
            self.errs.push(format!("{at}: {e}"));
        }
    }

    fn times(&mut self, at: &str, s: f64, t: f64) {
        if !(s >= 0.0) {
            self.errs.push(format!("{at}.s: must be nonnegative, got {s}"));
        }
        if !(t > s) {
            self.errs.push(format!("{at}.t: must exceed s = {s}, got {t}"));
        }
        if let Some(flow) = self.flow {
            let limit = flow.usable_horizon();
            if !(t < limit) {
                self.errs.push(format!("{at}.t: {t} is not below the usable horizon {limit}"));
            }
        }
    }

    fn field(&mut self, at: &str, f: &FieldSpec) {
        if let Some(flow) = self.flow {
            f.check(flow.ambient_dim(), at, &mut self.errs);
        }
    }

    fn p(&mut self, at: &str, p: f64, strict: bool) {
        if !(p >= 1.0) || (strict && p == 1.0) || !p.is_finite() {
            self.errs.push(format!("{at}.p: must be {} 1, got {p}", if strict { ">" } else { ">=" }));
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML document and validates it.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::ConfigInvalid(vec![e.message().to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Io(e.to_string()))
    }

    /// Field-level validation; every problem found is reported.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.version != CONFIG_VERSION {
            errs.push(format!("version: expected {CONFIG_VERSION}, got {}", self.version));
        }
        if self.mc.n_paths < MIN_PATHS {
            errs.push(format!("mc.n_paths: must be at least {MIN_PATHS}, got {}", self.mc.n_paths));
        }
        if !(self.mc.step > 0.0) || !self.mc.step.is_finite() {
            errs.push(format!("mc.step: must be positive, got {}", self.mc.step));
        }
        let flow = match self.flow.build() {
            Ok(f) => Some(f),
            Err(e) => {
                errs.push(format!("flow: {e}"));
                None
            }
        };
        let mut c = Checker { flow: flow.as_ref(), errs };
        match &self.task {
            TaskSpec::Simulate { x, s, t, .. } => {
                c.point("task.x", x);
                c.times("task", *s, *t);
            }
            TaskSpec::Gradient { f, x, s, t, estimator, radius, .. } => {
                c.field("task.f", f);
                c.point("task.x", x);
                c.times("task", *s, *t);
                if *estimator == GradientEstimator::Local && radius.is_none() {
                    c.errs.push("task.radius: required by the local estimator".into());
                }
            }
            TaskSpec::Couple { x, y, s, t, p, .. } => {
                c.point("task.x", x);
                c.point("task.y", y);
                c.times("task", *s, *t);
                c.p("task", *p, false);
            }
            TaskSpec::Verify { checks } => {
                if checks.is_empty() {
                    c.errs.push("task.checks: at least one check is required".into());
                }
                for (i, check) in checks.iter().enumerate() {
                    let at = format!("task.checks[{i}]");
                    match check {
                        CheckSpec::Gradient { f, x, s, t, p, .. }
                        | CheckSpec::Entropy { f, x, s, t, p, .. }
                        | CheckSpec::Reverse { f, x, s, t, p, .. } => {
                            c.field(&format!("{at}.f"), f);
                            c.point(&format!("{at}.x"), x);
                            c.times(&at, *s, *t);
                            c.p(&at, *p, false);
                        }
                        CheckSpec::Harnack { f, x, y, s, t, p, .. } => {
                            c.field(&format!("{at}.f"), f);
                            c.point(&format!("{at}.x"), x);
                            c.point(&format!("{at}.y"), y);
                            c.times(&at, *s, *t);
                            c.p(&at, *p, true);
                        }
                        CheckSpec::LogHarnack { f, x, y, s, t, .. } => {
                            c.field(&format!("{at}.f"), f);
                            c.point(&format!("{at}.x"), x);
                            c.point(&format!("{at}.y"), y);
                            c.times(&at, *s, *t);
                        }
                        CheckSpec::Hyperbound { f, x, s, t, r, q2, .. } => {
                            c.field(&format!("{at}.f"), f);
                            c.point(&format!("{at}.x"), x);
                            c.times(&at, *s, *t);
                            if r.is_some() == q2.is_some() {
                                c.errs.push(format!("{at}: give exactly one of r and q2"));
                            }
                        }
                        CheckSpec::Contraction { x, y, s, t, p, .. } => {
                            c.point(&format!("{at}.x"), x);
                            c.point(&format!("{at}.y"), y);
                            c.times(&at, *s, *t);
                            c.p(&at, *p, false);
                        }
                    }
                }
            }
            TaskSpec::Recover { x, v, s, p, recovery } => {
                c.point("task.x", x);
                if let Some(flow) = c.flow {
                    if v.len() != flow.ambient_dim() {
                        c.errs.push(format!("task.v: expected {} coordinates, got {}", flow.ambient_dim(), v.len()));
                    }
                }
                c.times("task", *s, s + 2.0 * recovery.t1);
                c.p("task", *p, false);
            }
            TaskSpec::Nonexplosion { spec } => {
                if !(spec.r_max > 1.0) {
                    c.errs.push(format!("task.spec.r_max: must exceed 1, got {}", spec.r_max));
                }
                if !(spec.t_max > 0.0) {
                    c.errs.push(format!("task.spec.t_max: must be positive, got {}", spec.t_max));
                }
            }
        }
        if c.errs.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(c.errs))
        }
    }
}
