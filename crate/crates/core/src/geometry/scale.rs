use serde::{Deserialize, Serialize};

/// A positive, C^1 time profile used as a conformal factor `c(t)` or as a
/// per-axis torus factor `a_i(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScaleFn {
    Constant { value: f64 },
    /// `c0 + rate * t`; reaches zero at `-c0 / rate` when `rate < 0`.
    Linear { c0: f64, rate: f64 },
    /// `c0 * exp(rate * t)`.
    Exponential { c0: f64, rate: f64 },
}

impl ScaleFn {
    pub const UNIT: ScaleFn = ScaleFn::Constant { value: 1.0 };

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            ScaleFn::Constant { value } => value,
            ScaleFn::Linear { c0, rate } => c0 + rate * t,
            ScaleFn::Exponential { c0, rate } => c0 * (rate * t).exp(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            ScaleFn::Constant { .. } => 0.0,
            ScaleFn::Linear { rate, .. } => rate,
            ScaleFn::Exponential { c0, rate } => c0 * rate * (rate * t).exp(),
        }
    }

    /// Logarithmic derivative `c'(t) / c(t)`.
    pub fn log_derivative(&self, t: f64) -> f64 {
        match *self {
            ScaleFn::Constant { .. } => 0.0,
            ScaleFn::Linear { c0, rate } => rate / (c0 + rate * t),
            ScaleFn::Exponential { rate, .. } => rate,
        }
    }

    /// First time at which the factor degenerates (`+inf` if never).
    pub fn horizon(&self) -> f64 {
        match *self {
            ScaleFn::Linear { c0, rate } if rate < 0.0 => -c0 / rate,
            _ => f64::INFINITY,
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, ScaleFn::Constant { .. })
            || matches!(self, ScaleFn::Linear { rate, .. } if *rate == 0.0)
            || matches!(self, ScaleFn::Exponential { rate, .. } if *rate == 0.0)
    }

    /// Positive at `t = 0`.
    pub(crate) fn validate(&self) -> Result<(), String> {
        let c0 = self.value(0.0);
        if !(c0.is_finite() && c0 > 0.0) {
            return Err(format!("scale factor must be positive at t = 0, got {c0}"));
        }
        Ok(())
    }
}

impl Default for ScaleFn {
    fn default() -> Self {
        ScaleFn::UNIT
    }
}
