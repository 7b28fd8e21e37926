//! Gauss rules built by Golub-Welsch on the Jacobi matrix.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of a Gauss rule.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn golub_welsch(n: usize, offdiag: impl Fn(usize) -> f64, mu0: f64) -> Rule {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = offdiag(k);
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    golub_welsch(n, |k| k as f64 / ((4 * k * k - 1) as f64).sqrt(), 2.0)
}

/// `n`-point Gauss-Hermite rule for the weight `exp(-x^2)`.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1);
    golub_welsch(n, |k| (k as f64 / 2.0).sqrt(), std::f64::consts::PI.sqrt())
}

fn legendre_64() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(64))
}

fn hermite_48() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| gauss_hermite(48))
}

/// `int_a^b f` with an `n`-point Gauss-Legendre rule (64 points are cached).
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let owned;
    let rule = if n == 64 {
        legendre_64()
    } else {
        owned = gauss_legendre(n);
        &owned
    };
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// `E g(mean + sd * N(0, 1))` by 48-point Gauss-Hermite.
pub fn gaussian_expectation(g: impl Fn(f64) -> f64, mean: f64, sd: f64) -> f64 {
    let rule = hermite_48();
    let scale = std::f64::consts::SQRT_2 * sd;
    rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * g(mean + scale * x)).sum::<f64>()
        / std::f64::consts::PI.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let v = integrate(|x| x.powi(7) - 3.0 * x * x + 1.0, -1.0, 2.0, 5);
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0) + 3.0;
        assert!((v - exact).abs() < 1e-12, "{v} vs {exact}");
    }

    #[test]
    fn hermite_moments() {
        let m2 = gaussian_expectation(|z| z * z, 1.0, 2.0);
        assert!((m2 - 5.0).abs() < 1e-12);
        let m4 = gaussian_expectation(|z| z.powi(4), 0.0, 1.0);
        assert!((m4 - 3.0).abs() < 1e-12);
        let mgf = gaussian_expectation(f64::exp, 0.0, 0.5);
        assert!((mgf - (0.125f64).exp()).abs() < 1e-12);
    }
}
