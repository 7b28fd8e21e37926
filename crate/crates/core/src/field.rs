use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::{MetricFlow, Point, Tangent};

type ValueFn = dyn Fn(f64, &Point) -> f64 + Send + Sync;
type DifferentialFn = dyn Fn(f64, &Point) -> DVector<f64> + Send + Sync;

/// A real function on the manifold, optionally with its ambient differential.
///
/// The differential is a covector in ambient/chart coordinates; the flow turns
/// it into the `g_t`-gradient, so one field works for every metric in a flow.
#[derive(Clone)]
pub struct ScalarField {
    name: String,
    value: Arc<ValueFn>,
    differential: Option<Arc<DifferentialFn>>,
}

impl ScalarField {
    pub fn new(name: impl Into<String>, value: impl Fn(f64, &Point) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField { name: name.into(), value: Arc::new(value), differential: None }
    }

    pub fn with_differential(mut self, df: impl Fn(f64, &Point) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.differential = Some(Arc::new(df));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, t: f64, x: &Point) -> f64 {
        (self.value)(t, x)
    }

    pub fn has_gradient(&self) -> bool {
        self.differential.is_some()
    }

    pub fn differential(&self, t: f64, x: &Point) -> Option<DVector<f64>> {
        self.differential.as_ref().map(|df| df(t, x))
    }

    /// `grad^t f(x)` for the metric `g_t` of `flow`.
    pub fn gradient(&self, flow: &MetricFlow, t: f64, x: &Point) -> Result<Tangent> {
        let df = self.differential(t, x).ok_or_else(|| Error::MissingGradient(self.name.clone()))?;
        Ok(flow.gradient_from_differential(t, x, &df))
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::new(format!("const({c})"), move |_, _| c).with_differential(|_, x| DVector::zeros(x.len()))
    }

    /// `x_i`: ambient coordinate on sphere/hyperboloid, chart coordinate otherwise.
    pub fn coordinate(i: usize) -> Self {
        ScalarField::new(format!("x{i}"), move |_, x| x[i]).with_differential(move |_, x| {
            let mut d = DVector::zeros(x.len());
            d[i] = 1.0;
            d
        })
    }

    /// `<a, x>`.
    pub fn linear(a: Vec<f64>) -> Self {
        let coeffs = DVector::from_vec(a);
        let c2 = coeffs.clone();
        ScalarField::new(format!("linear({:?})", coeffs.as_slice()), move |_, x| coeffs.dot(x))
            .with_differential(move |_, _| c2.clone())
    }

    /// `|x|^2` in ambient coordinates.
    pub fn squared_norm() -> Self {
        ScalarField::new("|x|^2", |_, x| x.norm_squared()).with_differential(|_, x| x * 2.0)
    }

    /// `sin(x_i)`; periodic, so smooth on the torus.
    pub fn sin_coordinate(i: usize) -> Self {
        ScalarField::new(format!("sin(x{i})"), move |_, x| x[i].sin()).with_differential(move |_, x| {
            let mut d = DVector::zeros(x.len());
            d[i] = x[i].cos();
            d
        })
    }

    /// `exp(-|x - center|^2 / (2 width^2))`.
    pub fn gaussian_bump(center: Vec<f64>, width: f64) -> Self {
        let c = DVector::from_vec(center);
        let c2 = c.clone();
        let w2 = width * width;
        ScalarField::new(format!("bump(w={width})"), move |_, x| (-(x - &c).norm_squared() / (2.0 * w2)).exp())
            .with_differential(move |_, x| {
                let d = x - &c2;
                let v = (-d.norm_squared() / (2.0 * w2)).exp();
                d * (-v / w2)
            })
    }

    /// `exp(cap * tanh(x_i / cap))`: behaves like `e^{x_i}` near zero, bounded by `e^cap`.
    pub fn exp_coordinate_truncated(i: usize, cap: f64) -> Self {
        ScalarField::new(format!("exp_trunc(x{i},{cap})"), move |_, x| (cap * (x[i] / cap).tanh()).exp())
            .with_differential(move |_, x| {
                let th = (x[i] / cap).tanh();
                let mut d = DVector::zeros(x.len());
                d[i] = (cap * th).exp() * (1.0 - th * th);
                d
            })
    }

    /// `g(f)` with `g'` supplied for the chain rule.
    pub fn map(
        &self,
        name: impl Into<String>,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dg: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let inner = self.clone();
        let inner2 = self.clone();
        let g = Arc::new(g);
        let mut out = ScalarField::new(name, move |t, x| g(inner.value(t, x)));
        if self.differential.is_some() {
            out = out.with_differential(move |t, x| {
                let v = inner2.value(t, x);
                inner2.differential(t, x).expect("checked") * dg(v)
            });
        }
        out
    }

    /// `f + c`.
    pub fn shifted(&self, c: f64) -> Self {
        self.map(format!("{}+{}", self.name, c), move |v| v + c, |_| 1.0)
    }

    /// `k * f`.
    pub fn scaled(&self, k: f64) -> Self {
        self.map(format!("{}*{}", k, self.name), move |v| k * v, move |_| k)
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField").field("name", &self.name).field("gradient", &self.has_gradient()).finish()
    }
}
