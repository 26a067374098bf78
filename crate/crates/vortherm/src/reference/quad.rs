//! Gauss-Legendre quadrature on the unit segment and, via the Duffy
//! (collapsed-square) transform, on the reference triangle.
//!
//! A rule of requested polynomial exactness `degree` integrates every
//! polynomial of that total degree exactly; requests above
//! [`MAX_DEGREE`] are rejected so callers notice silent accuracy loss.

use crate::{Error, Result};

/// Largest supported exactness degree.
pub const MAX_DEGREE: usize = 12;

/// Quadrature rule on the reference triangle; weights sum to 1/2.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// Quadrature rule on the unit segment [0,1]; weights sum to 1.
#[derive(Debug, Clone)]
pub struct SegmentRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Nodes are the roots of the degree-`n` Legendre polynomial, found by
/// Newton iteration from the Chebyshev-like initial guesses; the classical
/// weight formula `2 / ((1 - x^2) P_n'(x)^2)` follows.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n and P_n' by the three-term recurrence.
            let mut p_prev = 1.0;
            let mut p = x;
            for k in 2..=n {
                let kf = k as f64;
                let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
                p_prev = p;
                p = p_next;
            }
            dp = (n as f64) * (x * p - p_prev) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // cos is decreasing, so the loop produces descending nodes; flip them.
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Gauss-Legendre rule transplanted to [0, 1].
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|t| 0.5 * t).collect(),
    )
}

/// Rule on [0, 1] exact for polynomials up to `degree`.
pub fn segment_quadrature(degree: usize) -> Result<SegmentRule> {
    if degree > MAX_DEGREE {
        return Err(Error::Unsupported {
            what: "segment quadrature degree",
            requested: degree,
            max: MAX_DEGREE,
        });
    }
    let n = degree / 2 + 1; // 2n - 1 >= degree
    let (points, weights) = gauss_legendre_01(n);
    Ok(SegmentRule { points, weights })
}

/// Rule on the reference triangle exact for total degree up to `degree`.
///
/// Built by collapsing a tensor Gauss rule on the unit square through
/// `(u, v) -> (u, v (1 - u))` with Jacobian `1 - u`. An integrand of total
/// degree d becomes degree d+1 in u and d in v, so n Gauss points per
/// direction suffice when 2n - 1 >= d + 1.
pub fn quadrature(degree: usize) -> Result<TriangleRule> {
    if degree > MAX_DEGREE {
        return Err(Error::Unsupported {
            what: "triangle quadrature degree",
            requested: degree,
            max: MAX_DEGREE,
        });
    }
    let n = (degree + 2).div_ceil(2);
    let (x, w) = gauss_legendre_01(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            points.push([x[i], x[j] * (1.0 - x[i])]);
            weights.push(w[i] * w[j] * (1.0 - x[i]));
        }
    }
    Ok(TriangleRule { points, weights })
}

impl TriangleRule {
    /// Apply the rule to `f` on the reference triangle.
    pub fn integrate(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(*p))
            .sum()
    }
}

impl SegmentRule {
    /// Apply the rule to `f` on [0, 1].
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * f(*t))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    /// Exact integral of x^a y^b over the reference triangle.
    fn monomial_exact(a: usize, b: usize) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn triangle_weights_sum_to_half() {
        for d in 0..=MAX_DEGREE {
            let rule = quadrature(d).unwrap();
            let total: f64 = rule.weights.iter().sum();
            assert!((total - 0.5).abs() < 1e-14, "degree {d}: sum {total}");
        }
    }

    #[test]
    fn triangle_monomials_exact() {
        for d in 0..=MAX_DEGREE {
            let rule = quadrature(d).unwrap();
            for a in 0..=d {
                for b in 0..=(d - a) {
                    let approx =
                        rule.integrate(|p| p[0].powi(a as i32) * p[1].powi(b as i32));
                    let exact = monomial_exact(a, b);
                    assert!(
                        (approx - exact).abs() <= 1e-13 * exact.max(1.0),
                        "degree {d}, x^{a} y^{b}: {approx} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn degree_two_rule_integrates_xy() {
        let rule = quadrature(2).unwrap();
        let value = rule.integrate(|p| p[0] * p[1]);
        assert!((value - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn segment_monomials_exact() {
        for d in 0..=MAX_DEGREE {
            let rule = segment_quadrature(d).unwrap();
            let total: f64 = rule.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-14);
            for a in 0..=d {
                let approx = rule.integrate(|t| t.powi(a as i32));
                let exact = 1.0 / (a as f64 + 1.0);
                assert!(
                    (approx - exact).abs() < 1e-14,
                    "degree {d}, t^{a}: {approx} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn gauss_nodes_symmetric() {
        for n in 1..=7 {
            let (x, w) = gauss_legendre(n);
            for i in 0..n {
                assert!((x[i] + x[n - 1 - i]).abs() < 1e-14);
                assert!((w[i] - w[n - 1 - i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn degree_cap_reported() {
        let err = quadrature(MAX_DEGREE + 1).unwrap_err();
        match err {
            Error::Unsupported { requested, max, .. } => {
                assert_eq!(requested, MAX_DEGREE + 1);
                assert_eq!(max, MAX_DEGREE);
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert!(segment_quadrature(MAX_DEGREE + 1).is_err());
    }
}
