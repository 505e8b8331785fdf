//! Lagrange shape functions of arbitrary degree on triangles, written in
//! barycentric coordinates.
//!
//! Node `(a0, a1, a2)` with `a0 + a1 + a2 = p` sits at `lambda = a / p` and its
//! shape function is `prod_m P_{a_m}(lambda_m)` with
//! `P_a(x) = prod_{r < a} (p x - r) / (r + 1)`.
//!
//! Local ordering: the three vertices, then `p - 1` nodes on each edge `i`
//! (opposite vertex `i`, walking from vertex `i+1` to vertex `i+2`), then the
//! interior nodes in lexicographic order.

use crate::mesh::ElementGeometry;

#[derive(Clone, Debug)]
pub struct LagrangeBasis {
    degree: usize,
    nodes: Vec<[usize; 3]>,
}

/// Shape function values and barycentric derivatives at one point.
#[derive(Clone, Debug, Default)]
pub struct Tabulation {
    pub values: Vec<f64>,
    /// `d phi / d lambda_m`, treating the three coordinates as independent.
    pub dlambda: Vec<[f64; 3]>,
    /// Second barycentric derivatives.
    pub d2lambda: Vec<[[f64; 3]; 3]>,
}

impl Tabulation {
    /// Physical gradient of shape function `i`.
    pub fn gradient(&self, i: usize, geo: &ElementGeometry) -> [f64; 2] {
        let d = &self.dlambda[i];
        let g = &geo.grad_lambda;
        [
            d[0] * g[0][0] + d[1] * g[1][0] + d[2] * g[2][0],
            d[0] * g[0][1] + d[1] * g[1][1] + d[2] * g[2][1],
        ]
    }

    /// Physical Hessian of shape function `i`.
    pub fn hessian(&self, i: usize, geo: &ElementGeometry) -> [[f64; 2]; 2] {
        let d2 = &self.d2lambda[i];
        let g = &geo.grad_lambda;
        let mut h = [[0.0; 2]; 2];
        for m in 0..3 {
            for n in 0..3 {
                if d2[m][n] == 0.0 {
                    continue;
                }
                for r in 0..2 {
                    for s in 0..2 {
                        h[r][s] += d2[m][n] * g[m][r] * g[n][s];
                    }
                }
            }
        }
        h
    }
}

impl LagrangeBasis {
    pub fn new(degree: usize) -> Self {
        assert!(degree >= 1, "Lagrange basis needs degree >= 1");
        let p = degree;
        let mut nodes = Vec::with_capacity((p + 1) * (p + 2) / 2);
        for i in 0..3 {
            let mut a = [0; 3];
            a[i] = p;
            nodes.push(a);
        }
        for i in 0..3 {
            for k in 1..p {
                let mut a = [0; 3];
                a[(i + 1) % 3] = p - k;
                a[(i + 2) % 3] = k;
                nodes.push(a);
            }
        }
        for a0 in 1..p {
            for a1 in 1..p - a0 {
                let a2 = p - a0 - a1;
                if a2 >= 1 {
                    nodes.push([a0, a1, a2]);
                }
            }
        }
        debug_assert_eq!(nodes.len(), (p + 1) * (p + 2) / 2);
        Self { degree, nodes }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `dim P^p = (p + 1)(p + 2) / 2`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[[usize; 3]] {
        &self.nodes
    }

    pub fn num_interior(&self) -> usize {
        let p = self.degree;
        if p < 3 {
            0
        } else {
            (p - 1) * (p - 2) / 2
        }
    }

    /// Barycentric coordinates of local node `i`.
    pub fn node_barycentric(&self, i: usize) -> [f64; 3] {
        let p = self.degree as f64;
        let a = self.nodes[i];
        [a[0] as f64 / p, a[1] as f64 / p, a[2] as f64 / p]
    }

    /// Values, first and second barycentric derivatives at `lambda`.
    pub fn tabulate(&self, lambda: [f64; 3]) -> Tabulation {
        let mut tab = Tabulation::default();
        self.tabulate_into(lambda, &mut tab);
        tab
    }

    pub fn tabulate_into(&self, lambda: [f64; 3], tab: &mut Tabulation) {
        let p = self.degree;
        let pf = p as f64;
        // factor[a][m] = (P_a, P_a', P_a'') at lambda_m
        let mut factor = vec![[[0.0; 3]; 3]; p + 1];
        for m in 0..3 {
            let x = lambda[m];
            let (mut v, mut d1, mut d2) = (1.0, 0.0, 0.0);
            factor[0][m] = [v, d1, d2];
            for a in 0..p {
                let c = 1.0 / (a as f64 + 1.0);
                let lin = pf * x - a as f64;
                d2 = (d2 * lin + 2.0 * d1 * pf) * c;
                d1 = (d1 * lin + v * pf) * c;
                v = v * lin * c;
                factor[a + 1][m] = [v, d1, d2];
            }
        }
        let n = self.nodes.len();
        tab.values.resize(n, 0.0);
        tab.dlambda.resize(n, [0.0; 3]);
        tab.d2lambda.resize(n, [[0.0; 3]; 3]);
        for (i, a) in self.nodes.iter().enumerate() {
            let f = [factor[a[0]][0], factor[a[1]][1], factor[a[2]][2]];
            tab.values[i] = f[0][0] * f[1][0] * f[2][0];
            for m in 0..3 {
                let mut d = f[m][1];
                for k in 0..3 {
                    if k != m {
                        d *= f[k][0];
                    }
                }
                tab.dlambda[i][m] = d;
                for q in 0..3 {
                    let mut h = 1.0;
                    for k in 0..3 {
                        h *= match (k == m, k == q) {
                            (true, true) => f[k][2],
                            (true, false) | (false, true) => f[k][1],
                            (false, false) => f[k][0],
                        };
                    }
                    tab.d2lambda[i][m][q] = h;
                }
            }
        }
    }
}
