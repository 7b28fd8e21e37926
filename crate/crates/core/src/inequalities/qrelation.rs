use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CurvatureBound;

/// Which direction of the hypercontractivity-type bound a configuration checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperboundItem {
    /// `1 < q1 <= q2`: the composed norm is the smaller side.
    Contractive,
    /// `0 < q2 <= q1` or `q2 <= q1 < 0`: the composed norm is the larger side.
    Reversed,
}

/// Times, exponents and a time-only curvature bound tied by
/// `(q2 - 1)/(q1 - 1) = int_s^t e^{2 int_s^u K} du / int_s^r e^{2 int_s^u K} du`.
#[derive(Clone, Debug)]
pub struct HyperboundConfig {
    pub s: f64,
    pub r: f64,
    pub t: f64,
    pub q1: f64,
    pub q2: f64,
    pub k: CurvatureBound,
}

const RELATION_TOL: f64 = 1e-10;

fn ratio(k: &CurvatureBound, s: f64, r: f64, t: f64) -> Result<f64> {
    if !(s < r && r < t) {
        return Err(Error::NoSolution(format!("need s < r < t, got s = {s}, r = {r}, t = {t}")));
    }
    let inner = k.exp2_integral(s, r)?;
    if !(inner > 0.0) {
        return Err(Error::NoSolution(format!("degenerate time scale on [{s}, {r}]")));
    }
    Ok(k.exp2_integral(s, t)? / inner)
}

/// `q2` such that the exponent relation holds for the given `r`.
pub fn solve_q_relation(s: f64, t: f64, r: f64, q1: f64, k: &CurvatureBound) -> Result<f64> {
    if q1 == 1.0 || !q1.is_finite() {
        return Err(Error::NoSolution(format!("q1 = {q1} leaves the relation undefined")));
    }
    Ok(1.0 + (q1 - 1.0) * ratio(k, s, r, t)?)
}

/// `r` in `(s, t)` such that the exponent relation holds for the given `q1`, `q2`.
pub fn solve_r_relation(s: f64, t: f64, q1: f64, q2: f64, k: &CurvatureBound) -> Result<f64> {
    if q1 == 1.0 || !q1.is_finite() || !q2.is_finite() {
        return Err(Error::NoSolution(format!("q1 = {q1}, q2 = {q2} leave the relation undefined")));
    }
    let target = (q2 - 1.0) / (q1 - 1.0);
    if !(target > 1.0) {
        return Err(Error::NoSolution(format!(
            "(q2 - 1)/(q1 - 1) = {target} must exceed 1 for some r strictly inside (s, t)"
        )));
    }
    let total = k.exp2_integral(s, t)?;
    let want = total / target;
    // exp2_integral(s, .) is increasing, so bisection brackets the root
    let (mut lo, mut hi) = (s, t);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if k.exp2_integral(s, mid)? < want {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * t.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

impl HyperboundConfig {
    /// Configuration with `q2` solved from `r`.
    pub fn from_r(s: f64, r: f64, t: f64, q1: f64, k: CurvatureBound) -> Result<Self> {
        let q2 = solve_q_relation(s, t, r, q1, &k)?;
        Ok(HyperboundConfig { s, r, t, q1, q2, k })
    }

    /// Configuration with `r` solved from `q1`, `q2`.
    pub fn from_exponents(s: f64, t: f64, q1: f64, q2: f64, k: CurvatureBound) -> Result<Self> {
        let r = solve_r_relation(s, t, q1, q2, &k)?;
        Ok(HyperboundConfig { s, r, t, q1, q2, k })
    }

    /// `|(q2-1)/(q1-1) - ratio|`.
    pub fn residual(&self) -> Result<f64> {
        Ok(((self.q2 - 1.0) / (self.q1 - 1.0) - ratio(&self.k, self.s, self.r, self.t)?).abs())
    }

    /// Checks the relation and the exponent ranges; returns the bound's direction.
    pub fn validate(&self) -> Result<HyperboundItem> {
        if !self.k.is_time_only() {
            return Err(Error::InvalidArgument("the curvature bound must depend on time only".into()));
        }
        let res = self.residual()?;
        let scale = ((self.q2 - 1.0) / (self.q1 - 1.0)).abs().max(1.0);
        if !(res <= RELATION_TOL * scale) {
            return Err(Error::NoSolution(format!("exponent relation violated by {res:.3e}")));
        }
        let (q1, q2) = (self.q1, self.q2);
        if 1.0 < q1 && q1 <= q2 {
            Ok(HyperboundItem::Contractive)
        } else if (0.0 < q2 && q2 <= q1) || (q2 <= q1 && q1 < 0.0) {
            Ok(HyperboundItem::Reversed)
        } else {
            Err(Error::NoSolution(format!("exponents q1 = {q1}, q2 = {q2} fit neither direction")))
        }
    }
}
