//! Gauss rules on the unit interval and the reference triangle
//! `{(x, y) : x, y >= 0, x + y <= 1}`.
//!
//! Triangle rules of degree 0 and 1 are the one-point centroid rule. Higher
//! degrees use the collapsed (Duffy) tensor product of Gauss-Legendre rules,
//! which has positive weights and is exact for any requested degree.

use crate::error::{Error, Result};

/// Highest exactness degree accepted by [`quadrature_rule`].
pub const MAX_DEGREE: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureKind {
    Triangle,
    Edge,
}

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    /// Polynomial degree integrated exactly.
    pub degree: usize,
    /// Reference coordinates; edge rules use `[s, 0.0]` with `s` in `[0, 1]`.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Barycentric coordinates `(1 - x - y, x, y)` of triangle point `q`.
    pub fn barycentric(&self, q: usize) -> [f64; 3] {
        let [x, y] = self.points[q];
        [1.0 - x - y, x, y]
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] to [0, 1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Returns a rule of the given kind exact for polynomials up to `degree`.
pub fn quadrature_rule(kind: QuadratureKind, degree: usize) -> Result<QuadratureRule> {
    if degree > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "quadrature degree {degree} outside supported range 0..={MAX_DEGREE}"
        )));
    }
    let (points, weights) = match kind {
        QuadratureKind::Edge => {
            let (x, w) = gauss_legendre(degree / 2 + 1);
            (x.into_iter().map(|s| [s, 0.0]).collect(), w)
        }
        QuadratureKind::Triangle if degree <= 1 => (vec![[1.0 / 3.0, 1.0 / 3.0]], vec![0.5]),
        QuadratureKind::Triangle => {
            // the collapsed direction carries one extra degree from the Jacobian
            let n = (degree + 2).div_ceil(2);
            let (x, w) = gauss_legendre(n);
            let mut points = Vec::with_capacity(n * n);
            let mut weights = Vec::with_capacity(n * n);
            for (&u, &wu) in x.iter().zip(&w) {
                for (&v, &wv) in x.iter().zip(&w) {
                    points.push([u, (1.0 - u) * v]);
                    weights.push(wu * wv * (1.0 - u));
                }
            }
            (points, weights)
        }
    };
    Ok(QuadratureRule {
        kind,
        degree,
        points,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact integral of `x^a y^b` over the reference triangle: `a! b! / (a+b+2)!`.
    fn monomial_triangle(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn centroid_rule() {
        let r = quadrature_rule(QuadratureKind::Triangle, 1).unwrap();
        assert_eq!(r.points, vec![[1.0 / 3.0, 1.0 / 3.0]]);
        assert_eq!(r.weights, vec![0.5]);
    }

    #[test]
    fn two_point_gauss() {
        let r = quadrature_rule(QuadratureKind::Edge, 3).unwrap();
        assert_eq!(r.len(), 2);
        for &w in &r.weights {
            assert!((w - 0.5).abs() < 1e-15);
        }
        let x3: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(3)).sum();
        assert!((x3 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn triangle_monomials_exact() {
        for d in 0..=20usize {
            let r = quadrature_rule(QuadratureKind::Triangle, d).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    let q: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = monomial_triangle(a, b);
                    assert!((q - exact).abs() <= 1e-13 * exact, "d={d} a={a} b={b}: {q} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn edge_monomials_exact() {
        for d in 0..=MAX_DEGREE {
            let r = quadrature_rule(QuadratureKind::Edge, d).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for a in 0..=d as i32 {
                let q: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(a)).sum();
                let exact = 1.0 / (a as f64 + 1.0);
                assert!((q - exact).abs() <= 1e-13 * exact, "d={d} a={a}");
            }
        }
    }

    #[test]
    fn unsupported_degree() {
        assert!(quadrature_rule(QuadratureKind::Triangle, MAX_DEGREE + 1).is_err());
    }
}
