//! Orthonormal Gegenbauer polynomials and their Gauss rules.
//!
//! The weight is (1 - x^2)^(lambda - 1/2) on [-1, 1]; lambda = (m - 1)/2 gives
//! the polar density of the unit sphere S^m, lambda = 1/2 is Gauss-Legendre.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

#[derive(Clone, Debug)]
pub struct Gegenbauer {
    lambda: f64,
    p0: f64,
    /// b[k] couples degrees k and k - 1 (b[0] unused).
    b: Vec<f64>,
}

impl Gegenbauer {
    pub fn new(lambda: f64, max_degree: usize) -> Self {
        let mut b = vec![0.0; max_degree + 2];
        for (k, bk) in b.iter_mut().enumerate().skip(1) {
            let kf = k as f64;
            *bk = (kf * (kf + 2.0 * lambda - 1.0) / (4.0 * (kf + lambda) * (kf + lambda - 1.0)))
                .sqrt();
        }
        let h0 = (0.5 * PI.ln() + ln_gamma(lambda + 0.5) - ln_gamma(lambda + 1.0)).exp();
        Self {
            lambda,
            p0: 1.0 / h0.sqrt(),
            b,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn max_degree(&self) -> usize {
        self.b.len() - 2
    }

    /// Values, first and second derivatives of p_0..p_{count-1} at x.
    pub fn eval(&self, x: f64, count: usize, p: &mut [f64], dp: &mut [f64], d2p: &mut [f64]) {
        assert!(count < self.b.len());
        if count == 0 {
            return;
        }
        p[0] = self.p0;
        dp[0] = 0.0;
        d2p[0] = 0.0;
        if count == 1 {
            return;
        }
        p[1] = x * self.p0 / self.b[1];
        dp[1] = self.p0 / self.b[1];
        d2p[1] = 0.0;
        for k in 1..count - 1 {
            let (bk, bk1) = (self.b[k], self.b[k + 1]);
            p[k + 1] = (x * p[k] - bk * p[k - 1]) / bk1;
            dp[k + 1] = (p[k] + x * dp[k] - bk * dp[k - 1]) / bk1;
            d2p[k + 1] = (2.0 * dp[k] + x * d2p[k] - bk * d2p[k - 1]) / bk1;
        }
    }

    pub fn values(&self, x: f64, count: usize) -> Vec<f64> {
        let mut p = vec![0.0; count];
        let mut dp = vec![0.0; count];
        let mut d2 = vec![0.0; count];
        self.eval(x, count, &mut p, &mut dp, &mut d2);
        p
    }
}

type Rule = Arc<(Vec<f64>, Vec<f64>)>;

fn cache() -> &'static Mutex<HashMap<(u64, usize), Rule>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), Rule>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss rule with `q` nodes (ascending in x) for the Gegenbauer weight.
/// Exact for polynomials of degree < 2q.
pub fn gauss_gegenbauer(lambda: f64, q: usize) -> Rule {
    let key = (lambda.to_bits(), q);
    if let Some(r) = cache().lock().unwrap().get(&key) {
        return r.clone();
    }
    let rule = Arc::new(compute_rule(lambda, q));
    cache().lock().unwrap().insert(key, rule.clone());
    rule
}

fn compute_rule(lambda: f64, q: usize) -> (Vec<f64>, Vec<f64>) {
    let poly = Gegenbauer::new(lambda, q + 1);
    // Golub-Welsch: the nodes are the eigenvalues of the Jacobi matrix
    let mut jac = DMatrix::<f64>::zeros(q, q);
    for k in 1..q {
        jac[(k, k - 1)] = poly.b[k];
        jac[(k - 1, k)] = poly.b[k];
    }
    let mut x: Vec<f64> = jac.symmetric_eigenvalues().iter().cloned().collect();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut p = vec![0.0; q + 1];
    let mut dp = vec![0.0; q + 1];
    let mut d2 = vec![0.0; q + 1];
    // Newton polish on p_q, then Christoffel weights
    for xi in x.iter_mut() {
        for _ in 0..3 {
            poly.eval(*xi, q + 1, &mut p, &mut dp, &mut d2);
            if dp[q] != 0.0 {
                *xi -= p[q] / dp[q];
            }
        }
    }
    let w = x
        .iter()
        .map(|&xi| {
            poly.eval(xi, q, &mut p, &mut dp, &mut d2);
            1.0 / p[..q].iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    (x, w)
}

/// Gauss-Legendre nodes and weights on [a, b].
pub fn gauss_legendre(q: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let rule = gauss_gegenbauer(0.5, q);
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    let x = rule.0.iter().map(|t| mid + half * t).collect();
    let w = rule.1.iter().map(|w| half * w).collect();
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_monomials() {
        let (x, w) = gauss_legendre(12, -1.0, 1.0);
        for d in 0..24 {
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d)).sum();
            let exact = if d % 2 == 1 {
                0.0
            } else {
                2.0 / (d as f64 + 1.0)
            };
            assert!((s - exact).abs() < 1e-14, "degree {d}: {s} vs {exact}");
        }
    }

    #[test]
    fn gegenbauer_orthonormal() {
        let lambda = 2.0;
        let rule = gauss_gegenbauer(lambda, 40);
        let poly = Gegenbauer::new(lambda, 40);
        let vals: Vec<Vec<f64>> = rule.0.iter().map(|&x| poly.values(x, 30)).collect();
        for i in 0..30 {
            for j in 0..30 {
                let g: f64 = vals.iter().zip(&rule.1).map(|(v, w)| w * v[i] * v[j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g - e).abs() < 1e-12, "({i},{j}) -> {g}");
            }
        }
    }
}
