use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

type DriftValueFn = dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync;
type DriftDerivFn = dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;

/// User supplied drift. The covariant derivative must be given explicitly;
/// nothing is differentiated automatically.
pub struct CustomDrift {
    pub name: String,
    pub value: Box<DriftValueFn>,
    pub covariant_derivative: Box<DriftDerivFn>,
}

/// Time-dependent vector field `Z_t` added to the Laplacian in the generator.
#[derive(Clone, Default)]
pub enum DriftField {
    #[default]
    Zero,
    /// `Z(x) = lambda * x` on Euclidean flows, so `grad_X Z = lambda * X`.
    LinearRadial { lambda: f64 },
    Custom(Arc<CustomDrift>),
}

impl DriftField {
    pub fn custom<V, D>(name: impl Into<String>, value: V, covariant_derivative: D) -> Self
    where
        V: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        D: Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        DriftField::Custom(Arc::new(CustomDrift {
            name: name.into(),
            value: Box::new(value),
            covariant_derivative: Box::new(covariant_derivative),
        }))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, DriftField::Zero) || matches!(self, DriftField::LinearRadial { lambda } if *lambda == 0.0)
    }

    pub fn value(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        match self {
            DriftField::Zero => DVector::zeros(x.len()),
            DriftField::LinearRadial { lambda } => x * *lambda,
            DriftField::Custom(c) => (c.value)(t, x),
        }
    }

    pub fn covariant_derivative(&self, t: f64, x: &DVector<f64>, dir: &DVector<f64>) -> DVector<f64> {
        match self {
            DriftField::Zero => DVector::zeros(dir.len()),
            DriftField::LinearRadial { lambda } => dir * *lambda,
            DriftField::Custom(c) => (c.covariant_derivative)(t, x, dir),
        }
    }

    pub fn name(&self) -> String {
        match self {
            DriftField::Zero => "zero".into(),
            DriftField::LinearRadial { lambda } => format!("linear_radial({lambda})"),
            DriftField::Custom(c) => c.name.clone(),
        }
    }
}

impl fmt::Debug for DriftField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DriftField({})", self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_drift_is_zero() {
        let z = DriftField::Zero;
        let x = DVector::from_vec(vec![0.3, -1.0]);
        let v = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(z.value(0.1, &x).norm(), 0.0);
        assert_eq!(z.covariant_derivative(0.1, &x, &v).norm(), 0.0);
    }

    proptest! {
        #[test]
        fn covariant_derivative_is_linear(
            a in -3.0f64..3.0, b in -3.0f64..3.0,
            u in proptest::collection::vec(-2.0f64..2.0, 3),
            w in proptest::collection::vec(-2.0f64..2.0, 3),
        ) {
            let z = DriftField::LinearRadial { lambda: -0.7 };
            let x = DVector::from_vec(vec![0.5, 0.1, -0.2]);
            let u = DVector::from_vec(u);
            let w = DVector::from_vec(w);
            let lhs = z.covariant_derivative(0.0, &x, &(&u * a + &w * b));
            let rhs = z.covariant_derivative(0.0, &x, &u) * a + z.covariant_derivative(0.0, &x, &w) * b;
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
