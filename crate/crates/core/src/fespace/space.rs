use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, PointLocator};
use crate::sparse::{CsrMatrix, TripletBuilder};

use super::basis::{LagrangeBasis, Tabulation};
use super::quadrature::{quadrature_rule, QuadratureKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Continuity {
    /// Element-private dofs (the dG test space).
    Broken,
    /// Dofs shared across element boundaries (the trial space).
    Continuous,
}

/// A Lagrange space of degree `p` on a mesh.
///
/// Broken dofs are numbered element-major: `t * dim(P^p) + i`. Continuous
/// dofs are numbered vertices first, then `p - 1` nodes per face (walking
/// from the lower to the higher vertex index), then element interiors.
#[derive(Clone, Debug)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    basis: LagrangeBasis,
    continuity: Continuity,
    dofs: Vec<usize>,
    ndofs: usize,
}

/// Shape function values and physical gradients at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisValues {
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 2]>,
}

impl FunctionSpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize, continuity: Continuity) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidArgument("polynomial degree must be >= 1".into()));
        }
        let basis = LagrangeBasis::new(degree);
        let nloc = basis.len();
        let ne = mesh.num_elements();
        let (dofs, ndofs) = match continuity {
            Continuity::Broken => ((0..ne * nloc).collect(), ne * nloc),
            Continuity::Continuous => {
                let p = degree;
                let nv = mesh.num_vertices();
                let edge_base = nv;
                let interior_base = nv + mesh.num_faces() * (p - 1);
                let nint = basis.num_interior();
                let mut dofs = Vec::with_capacity(ne * nloc);
                for (t, tri) in mesh.elements().iter().enumerate() {
                    dofs.extend_from_slice(tri);
                    let faces = mesh.element_faces(t);
                    for i in 0..3 {
                        let forward = tri[(i + 1) % 3] < tri[(i + 2) % 3];
                        for k in 1..p {
                            let kg = if forward { k } else { p - k };
                            dofs.push(edge_base + faces[i] * (p - 1) + kg - 1);
                        }
                    }
                    for j in 0..nint {
                        dofs.push(interior_base + t * nint + j);
                    }
                }
                (dofs, interior_base + ne * nint)
            }
        };
        Ok(Self {
            mesh,
            basis,
            continuity,
            dofs,
            ndofs,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn basis(&self) -> &LagrangeBasis {
        &self.basis
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn continuity(&self) -> Continuity {
        self.continuity
    }

    pub fn ndofs(&self) -> usize {
        self.ndofs
    }

    /// Number of shape functions per element.
    pub fn local_dim(&self) -> usize {
        self.basis.len()
    }

    /// Global dof indices of element `t`, in local basis order.
    pub fn element_dofs(&self, t: usize) -> &[usize] {
        let n = self.basis.len();
        &self.dofs[t * n..(t + 1) * n]
    }

    /// Values and physical gradients of the local shape functions at the
    /// reference point `(x, y)` of element `t`.
    pub fn eval_basis(&self, t: usize, point: [f64; 2]) -> Result<BasisValues> {
        if t >= self.mesh.num_elements() {
            return Err(Error::InvalidArgument(format!("element {t} out of range")));
        }
        let tab = self.basis.tabulate([1.0 - point[0] - point[1], point[0], point[1]]);
        let geo = self.mesh.geometry(t);
        Ok(BasisValues {
            gradients: (0..tab.values.len()).map(|i| tab.gradient(i, geo)).collect(),
            values: tab.values,
        })
    }

    /// Physical coordinates of every global dof.
    pub fn dof_points(&self) -> Vec<Point> {
        let mut pts = vec![[f64::NAN; 2]; self.ndofs];
        for t in 0..self.mesh.num_elements() {
            for (i, &d) in self.element_dofs(t).iter().enumerate() {
                pts[d] = self.mesh.map_to_physical(t, self.basis.node_barycentric(i));
            }
        }
        pts
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(self: &Arc<Self>, f: impl Fn(Point) -> f64) -> DiscreteFunction {
        let coefficients = self.dof_points().into_iter().map(f).collect();
        DiscreteFunction {
            space: Arc::clone(self),
            coefficients,
        }
    }

    pub fn zero(self: &Arc<Self>) -> DiscreteFunction {
        DiscreteFunction {
            space: Arc::clone(self),
            coefficients: vec![0.0; self.ndofs],
        }
    }
}

/// The embedding `E` of a continuous space into the broken space of the same
/// degree on the same mesh: `(E c)_j = c_{map(j)}`, one unit entry per row.
pub fn trial_to_test_embedding(trial: &FunctionSpace, test: &FunctionSpace) -> Result<CsrMatrix> {
    if !Arc::ptr_eq(trial.mesh(), test.mesh()) {
        return Err(Error::InvalidArgument("trial and test spaces live on different meshes".into()));
    }
    if trial.degree() != test.degree() {
        return Err(Error::InvalidArgument(format!(
            "trial degree {} differs from test degree {}",
            trial.degree(),
            test.degree()
        )));
    }
    if test.continuity() != Continuity::Broken {
        return Err(Error::InvalidArgument("embedding target must be the broken space".into()));
    }
    let mut b = TripletBuilder::with_capacity(test.ndofs(), trial.ndofs(), test.ndofs());
    for t in 0..test.mesh().num_elements() {
        for (&row, &col) in test.element_dofs(t).iter().zip(trial.element_dofs(t)) {
            b.push(row, col, 1.0);
        }
    }
    Ok(b.build())
}

/// A finite element function: a space plus its coefficient vector.
#[derive(Clone, Debug)]
pub struct DiscreteFunction {
    space: Arc<FunctionSpace>,
    coefficients: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(space: Arc<FunctionSpace>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != space.ndofs() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for a space with {} dofs",
                coefficients.len(),
                space.ndofs()
            )));
        }
        Ok(Self { space, coefficients })
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    /// Local coefficients on element `t`.
    pub fn local(&self, t: usize) -> impl Iterator<Item = f64> + '_ {
        self.space.element_dofs(t).iter().map(|&d| self.coefficients[d])
    }

    /// Value at barycentric coordinates `lambda` of element `t`.
    pub fn value(&self, t: usize, lambda: [f64; 3]) -> f64 {
        let tab = self.space.basis().tabulate(lambda);
        self.value_tab(t, &tab)
    }

    pub fn value_tab(&self, t: usize, tab: &Tabulation) -> f64 {
        self.local(t).zip(&tab.values).map(|(c, v)| c * v).sum()
    }

    pub fn gradient(&self, t: usize, lambda: [f64; 3]) -> [f64; 2] {
        let tab = self.space.basis().tabulate(lambda);
        self.gradient_tab(t, &tab)
    }

    pub fn gradient_tab(&self, t: usize, tab: &Tabulation) -> [f64; 2] {
        let geo = self.space.mesh().geometry(t);
        self.local(t).enumerate().fold([0.0; 2], |acc, (i, c)| {
            let g = tab.gradient(i, geo);
            [acc[0] + c * g[0], acc[1] + c * g[1]]
        })
    }

    /// Value at a physical point, if it lies in the mesh. For broken
    /// functions on an element boundary the first containing element wins.
    pub fn evaluate(&self, p: Point) -> Option<f64> {
        self.space.mesh().locate(p).map(|(t, l)| self.value(t, l))
    }

    /// Values at many physical points using a bucket locator.
    pub fn evaluate_many(&self, points: &[Point]) -> Vec<Option<f64>> {
        let locator = PointLocator::new(self.space.mesh());
        points
            .iter()
            .map(|&p| locator.locate(p).map(|(t, l)| self.value(t, l)))
            .collect()
    }

    /// Smallest and largest value over the Lagrange nodes and the degree
    /// `2p + 2` quadrature nodes of every element.
    pub fn sampled_range(&self) -> (f64, f64) {
        let basis = self.space.basis();
        let rule = quadrature_rule(QuadratureKind::Triangle, 2 * basis.degree() + 2).expect("supported degree");
        let tabs: Vec<Tabulation> = (0..basis.len())
            .map(|i| basis.node_barycentric(i))
            .chain((0..rule.len()).map(|q| rule.barycentric(q)))
            .map(|l| basis.tabulate(l))
            .collect();
        let mut range = (f64::INFINITY, f64::NEG_INFINITY);
        for t in 0..self.space.mesh().num_elements() {
            for tab in &tabs {
                let v = self.value_tab(t, tab);
                range = (range.0.min(v), range.1.max(v));
            }
        }
        range
    }

    /// Nodal interpolation onto `target`, a space on a refinement of this
    /// function's mesh with `parent[t]` the coarse element containing `t`.
    pub fn prolong(&self, target: &Arc<FunctionSpace>, parent: &[usize]) -> Result<DiscreteFunction> {
        let fine = target.mesh();
        let coarse = self.space.mesh();
        if parent.len() != fine.num_elements() || parent.iter().any(|&p| p >= coarse.num_elements()) {
            return Err(Error::InvalidArgument("parent map does not match the meshes".into()));
        }
        let basis = target.basis();
        let mut coefficients = vec![0.0; target.ndofs()];
        for t in 0..fine.num_elements() {
            for (i, &d) in target.element_dofs(t).iter().enumerate() {
                let x = fine.map_to_physical(t, basis.node_barycentric(i));
                coefficients[d] = self.value(parent[t], coarse.barycentric(parent[t], x));
            }
        }
        DiscreteFunction::new(Arc::clone(target), coefficients)
    }

    /// Broken representation `E c` of a continuous function.
    pub fn to_broken(&self, broken: &Arc<FunctionSpace>) -> Result<DiscreteFunction> {
        let e = trial_to_test_embedding(&self.space, broken)?;
        DiscreteFunction::new(Arc::clone(broken), e.mul_vec(&self.coefficients))
    }
}
