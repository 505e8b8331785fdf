//! Conforming triangulations of polygonal domains in 2D.
//!
//! Every element is stored counterclockwise as `[peak, a, b]`: the edge
//! `(a, b)` opposite the peak vertex is the refinement edge used by
//! newest-vertex bisection. Local edge `i` of an element is the edge opposite
//! local vertex `i`, so local edge 0 is always the refinement edge.
//!
//! Faces are numbered in order of first appearance while sweeping the
//! elements. For an interior face the element with the lower index is
//! `T-`, and `n_F` points from `T-` into `T+`. Boundary faces carry the
//! outward normal of their single owner.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fespace::QuadratureRule;

pub type Point = [f64; 2];

/// Axis-aligned rectangle `(x0, x1) x (y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rectangle {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rectangle {
    pub const UNIT_SQUARE: Rectangle = Rectangle {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };

    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// One side of a face: the element and the local edge index within it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FaceSide {
    pub element: usize,
    pub local_edge: usize,
}

#[derive(Clone, Debug)]
pub struct Face {
    /// Endpoints in the counterclockwise order seen from `minus`.
    pub vertices: [usize; 2],
    pub minus: FaceSide,
    /// `None` on the boundary.
    pub plus: Option<FaceSide>,
    /// Unit normal pointing out of `minus`.
    pub normal: [f64; 2],
    pub length: f64,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.plus.is_none()
    }

    /// Point on the face at parameter `s` in `[0, 1]`, measured from `vertices[0]`.
    pub fn point(&self, mesh: &Mesh, s: f64) -> Point {
        let a = mesh.vertices[self.vertices[0]];
        let b = mesh.vertices[self.vertices[1]];
        [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
    }
}

/// Affine data of a single triangle.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    /// Physical gradients of the three barycentric coordinates.
    pub grad_lambda: [[f64; 2]; 3],
    pub area: f64,
    /// Longest edge length.
    pub diameter: f64,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    faces: Vec<Face>,
    element_faces: Vec<[usize; 3]>,
    geometry: Vec<ElementGeometry>,
    interior_faces: Vec<usize>,
    boundary_faces: Vec<usize>,
}

/// A refined mesh together with the parent of every new element.
#[derive(Clone, Debug)]
pub struct Refined {
    pub mesh: Mesh,
    /// `parent[t]` is the element of the coarse mesh that contains child `t`.
    pub parent: Vec<usize>,
}

fn sorted_pair(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn signed_area(p: Point, q: Point, r: Point) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

fn dist(p: Point, q: Point) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn midpoint(p: Point, q: Point) -> Point {
    [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
}

impl Mesh {
    /// Builds a mesh from vertices and triangles whose first vertex is the
    /// peak (newest vertex). Clockwise triangles are flipped by swapping the
    /// two base vertices, which keeps the refinement edge.
    pub fn new(vertices: Vec<Point>, elements: Vec<[usize; 3]>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidArgument("mesh has no elements".into()));
        }
        let mut elements = elements;
        for (t, tri) in elements.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidArgument(format!(
                    "element {t} references a vertex out of range"
                )));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area.abs() <= f64::EPSILON * 1e-3 {
                return Err(Error::InvalidArgument(format!("element {t} is degenerate")));
            }
            if area < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut faces: Vec<Face> = Vec::with_capacity(elements.len() * 2);
        let mut element_faces = vec![[usize::MAX; 3]; elements.len()];
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(elements.len() * 2);
        for (t, tri) in elements.iter().enumerate() {
            for i in 0..3 {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                let key = sorted_pair(a, b);
                match lookup.get(&key) {
                    Some(&f) => {
                        let face = &mut faces[f];
                        if face.plus.is_some() {
                            return Err(Error::InvalidArgument(format!(
                                "edge ({a}, {b}) is shared by more than two elements"
                            )));
                        }
                        if face.vertices != [b, a] {
                            return Err(Error::InvalidArgument(format!(
                                "elements sharing edge ({a}, {b}) have inconsistent orientation"
                            )));
                        }
                        face.plus = Some(FaceSide {
                            element: t,
                            local_edge: i,
                        });
                        element_faces[t][i] = f;
                    }
                    None => {
                        let (pa, pb) = (vertices[a], vertices[b]);
                        let length = dist(pa, pb);
                        let normal = [(pb[1] - pa[1]) / length, -(pb[0] - pa[0]) / length];
                        lookup.insert(key, faces.len());
                        element_faces[t][i] = faces.len();
                        faces.push(Face {
                            vertices: [a, b],
                            minus: FaceSide {
                                element: t,
                                local_edge: i,
                            },
                            plus: None,
                            normal,
                            length,
                        });
                    }
                }
            }
        }

        let geometry = elements
            .iter()
            .map(|tri| element_geometry(&vertices, tri))
            .collect();
        let interior_faces = (0..faces.len()).filter(|&f| !faces[f].is_boundary()).collect();
        let boundary_faces = (0..faces.len()).filter(|&f| faces[f].is_boundary()).collect();
        Ok(Self {
            vertices,
            elements,
            faces,
            element_faces,
            geometry,
            interior_faces,
            boundary_faces,
        })
    }

    /// Builds a mesh choosing each triangle's refinement edge as its longest
    /// edge; ties go to the edge with the lexicographically smallest sorted
    /// vertex pair.
    pub fn with_longest_edge_refinement(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let elements = triangles
            .into_iter()
            .map(|tri| orient_longest_edge(&vertices, tri))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vertices, elements)
    }

    /// `nx * ny` grid cells, each split along its lower-left to upper-right
    /// diagonal into two triangles.
    pub fn structured(nx: usize, ny: usize, domain: Rectangle) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument("cell counts must be positive".into()));
        }
        if !(domain.x1 > domain.x0 && domain.y1 > domain.y0) {
            return Err(Error::InvalidArgument(format!(
                "domain {domain:?} has no positive area"
            )));
        }
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            let y = domain.y0 + (domain.y1 - domain.y0) * j as f64 / ny as f64;
            for i in 0..=nx {
                let x = domain.x0 + (domain.x1 - domain.x0) * i as f64 / nx as f64;
                vertices.push([x, y]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        Self::with_longest_edge_refinement(vertices, triangles)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face(&self, f: usize) -> &Face {
        &self.faces[f]
    }

    pub fn interior_faces(&self) -> &[usize] {
        &self.interior_faces
    }

    pub fn boundary_faces(&self) -> &[usize] {
        &self.boundary_faces
    }

    /// Face indices of an element, indexed by local edge.
    pub fn element_faces(&self, t: usize) -> [usize; 3] {
        self.element_faces[t]
    }

    pub fn geometry(&self, t: usize) -> &ElementGeometry {
        &self.geometry[t]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn element_vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.elements[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn diameter(&self, t: usize) -> f64 {
        self.geometry[t].diameter
    }

    pub fn area(&self, t: usize) -> f64 {
        self.geometry[t].area
    }

    /// `h = max_T h_T`.
    pub fn h(&self) -> f64 {
        self.geometry.iter().map(|g| g.diameter).fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }

    /// Physical point of barycentric coordinates `lambda` in element `t`.
    pub fn map_to_physical(&self, t: usize, lambda: [f64; 3]) -> Point {
        let v = self.element_vertices(t);
        [
            lambda[0] * v[0][0] + lambda[1] * v[1][0] + lambda[2] * v[2][0],
            lambda[0] * v[0][1] + lambda[1] * v[1][1] + lambda[2] * v[2][1],
        ]
    }

    /// Barycentric coordinates of `p` relative to element `t` (may lie outside).
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let v = self.element_vertices(t);
        let g = &self.geometry[t].grad_lambda;
        let l1 = g[1][0] * (p[0] - v[0][0]) + g[1][1] * (p[1] - v[0][1]);
        let l2 = g[2][0] * (p[0] - v[0][0]) + g[2][1] * (p[1] - v[0][1]);
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn centroid(&self, t: usize) -> Point {
        self.map_to_physical(t, [1.0 / 3.0; 3])
    }

    /// Smallest interior angle of element `t`, in radians.
    pub fn min_angle(&self, t: usize) -> f64 {
        let v = self.element_vertices(t);
        (0..3)
            .map(|i| {
                let p = v[i];
                let q = v[(i + 1) % 3];
                let r = v[(i + 2) % 3];
                let (ax, ay) = (q[0] - p[0], q[1] - p[1]);
                let (bx, by) = (r[0] - p[0], r[1] - p[1]);
                (ax * by - ay * bx).abs().atan2(ax * bx + ay * by)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Barycentric coordinates, within element `side.element`, of the point
    /// at face parameter `s`.
    pub fn face_barycentric(&self, face: &Face, side: FaceSide, s: f64) -> [f64; 3] {
        let tri = self.elements[side.element];
        let i = side.local_edge;
        let start = tri[(i + 1) % 3];
        let mut lambda = [0.0; 3];
        if start == face.vertices[0] {
            lambda[(i + 1) % 3] = 1.0 - s;
            lambda[(i + 2) % 3] = s;
        } else {
            lambda[(i + 1) % 3] = s;
            lambda[(i + 2) % 3] = 1.0 - s;
        }
        lambda
    }

    /// Splits every triangle into four congruent children through its edge
    /// midpoints. Refinement edges of the children are reset to their
    /// longest edges.
    pub fn refine_uniform_red(&self) -> Refined {
        let mut vertices = self.vertices.clone();
        let mut mids = vec![usize::MAX; self.faces.len()];
        for (f, face) in self.faces.iter().enumerate() {
            mids[f] = vertices.len();
            vertices.push(midpoint(self.vertices[face.vertices[0]], self.vertices[face.vertices[1]]));
        }
        let mut triangles = Vec::with_capacity(4 * self.elements.len());
        let mut parent = Vec::with_capacity(4 * self.elements.len());
        for (t, &[v0, v1, v2]) in self.elements.iter().enumerate() {
            let ef = self.element_faces[t];
            // local edge i is opposite vertex i
            let m12 = mids[ef[0]];
            let m20 = mids[ef[1]];
            let m01 = mids[ef[2]];
            triangles.extend_from_slice(&[[v0, m01, m20], [m01, v1, m12], [m20, m12, v2], [m12, m20, m01]]);
            parent.extend_from_slice(&[t; 4]);
        }
        let mesh = Self::with_longest_edge_refinement(vertices, triangles)
            .expect("red refinement of a valid mesh is valid");
        Refined { mesh, parent }
    }

    /// Newest-vertex bisection of the marked elements plus the closure
    /// needed to keep the mesh conforming.
    pub fn bisect_marked(&self, marks: &[usize]) -> Result<Refined> {
        if let Some(&t) = marks.iter().find(|&&t| t >= self.elements.len()) {
            return Err(Error::InvalidArgument(format!("marked element {t} out of range")));
        }
        if marks.is_empty() {
            return Ok(Refined {
                mesh: self.clone(),
                parent: (0..self.elements.len()).collect(),
            });
        }

        let mut marked_face = vec![false; self.faces.len()];
        let mut queue = Vec::new();
        for &t in marks {
            let f = self.element_faces[t][0];
            if !marked_face[f] {
                marked_face[f] = true;
                queue.push(f);
            }
        }
        while let Some(f) = queue.pop() {
            let face = &self.faces[f];
            for side in std::iter::once(face.minus).chain(face.plus) {
                let r = self.element_faces[side.element][0];
                if !marked_face[r] {
                    marked_face[r] = true;
                    queue.push(r);
                }
            }
        }

        let mut vertices = self.vertices.clone();
        let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
        for (f, face) in self.faces.iter().enumerate() {
            if marked_face[f] {
                let [a, b] = face.vertices;
                mids.insert(sorted_pair(a, b), vertices.len());
                vertices.push(midpoint(self.vertices[a], self.vertices[b]));
            }
        }

        let mut elements = Vec::with_capacity(self.elements.len() + 2 * mids.len());
        let mut parent = Vec::with_capacity(elements.capacity());
        let mut stack = Vec::new();
        for (t, &tri) in self.elements.iter().enumerate() {
            stack.push(tri);
            while let Some([p, a, b]) = stack.pop() {
                match mids.get(&sorted_pair(a, b)) {
                    Some(&m) => {
                        // pushed in reverse so the child containing `a` comes first
                        stack.push([m, b, p]);
                        stack.push([m, p, a]);
                    }
                    None => {
                        elements.push([p, a, b]);
                        parent.push(t);
                    }
                }
            }
        }
        let mesh = Self::new(vertices, elements)?;
        Ok(Refined { mesh, parent })
    }

    /// Locates the element containing `p`, returning it with the barycentric
    /// coordinates of `p`. Linear scan; use [`PointLocator`] for many queries.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        (0..self.elements.len()).find_map(|t| {
            let l = self.barycentric(t, p);
            l.iter().all(|&x| x >= -1e-12).then_some((t, l))
        })
    }

    /// Writes the plain-text mesh format:
    ///
    /// ```text
    /// vertices <n>
    /// <x> <y>            (n lines)
    /// elements <m>
    /// <peak> <a> <b>     (m lines, counterclockwise, 0-based)
    /// ```
    ///
    /// Lines starting with `#` are comments. Coordinates use the shortest
    /// round-trip decimal form, so a write/read cycle is exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:?} {:?}", v[0], v[1]);
        }
        let _ = writeln!(out, "elements {}", self.elements.len());
        for e in &self.elements {
            let _ = writeln!(out, "{} {} {}", e[0], e[1], e[2]);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let nv = read_header(&mut lines, "vertices")?;
        let vertices = (0..nv)
            .map(|_| {
                let xy: Vec<f64> = read_row(&mut lines, "vertex")?;
                match xy[..] {
                    [x, y] => Ok([x, y]),
                    _ => Err(parse_error("vertex rows need two coordinates".into())),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let ne = read_header(&mut lines, "elements")?;
        let elements = (0..ne)
            .map(|_| {
                let ids: Vec<usize> = read_row(&mut lines, "element")?;
                match ids[..] {
                    [a, b, c] => Ok([a, b, c]),
                    _ => Err(parse_error("element rows need three indices".into())),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(vertices, elements)
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_error(message: String) -> Error {
    Error::Parse {
        what: "mesh".into(),
        message,
    }
}

fn read_header<'a>(lines: &mut impl Iterator<Item = &'a str>, name: &str) -> Result<usize> {
    let line = lines
        .next()
        .ok_or_else(|| parse_error(format!("missing `{name}` header")))?;
    let mut it = line.split_whitespace();
    if it.next() != Some(name) {
        return Err(parse_error(format!("expected `{name} <count>`, found `{line}`")));
    }
    it.next()
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| parse_error(format!("bad count in `{line}`")))
}

fn read_row<'a, T: std::str::FromStr>(lines: &mut impl Iterator<Item = &'a str>, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let line = lines
        .next()
        .ok_or_else(|| parse_error(format!("truncated {what} list")))?;
    line.split_whitespace()
        .map(|s| s.parse::<T>().map_err(|e| parse_error(format!("`{s}`: {e}"))))
        .collect()
}

fn element_geometry(vertices: &[Point], tri: &[usize; 3]) -> ElementGeometry {
    let [p0, p1, p2] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
    let (ax, ay) = (p1[0] - p0[0], p1[1] - p0[1]);
    let (bx, by) = (p2[0] - p0[0], p2[1] - p0[1]);
    let det = ax * by - ay * bx;
    // rows of the inverse Jacobian are the gradients of lambda_1, lambda_2
    let g1 = [by / det, -bx / det];
    let g2 = [-ay / det, ax / det];
    let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
    let diameter = dist(p0, p1).max(dist(p1, p2)).max(dist(p2, p0));
    ElementGeometry {
        grad_lambda: [g0, g1, g2],
        area: 0.5 * det.abs(),
        diameter,
    }
}

fn orient_longest_edge(vertices: &[Point], tri: [usize; 3]) -> Result<[usize; 3]> {
    if tri.iter().any(|&v| v >= vertices.len()) {
        return Err(Error::InvalidArgument("triangle references a vertex out of range".into()));
    }
    // candidate i: refinement edge opposite local vertex i
    let best = (0..3)
        .max_by(|&i, &j| {
            let ei = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
            let ej = (tri[(j + 1) % 3], tri[(j + 2) % 3]);
            let li = dist(vertices[ei.0], vertices[ei.1]);
            let lj = dist(vertices[ej.0], vertices[ej.1]);
            li.total_cmp(&lj)
                .then_with(|| sorted_pair(ej.0, ej.1).cmp(&sorted_pair(ei.0, ei.1)))
        })
        .unwrap();
    Ok([tri[best], tri[(best + 1) % 3], tri[(best + 2) % 3]])
}

/// Bucket grid over element bounding boxes for repeated point location.
pub struct PointLocator<'a> {
    mesh: &'a Mesh,
    origin: Point,
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in &mesh.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        let n = ((mesh.num_elements() as f64).sqrt().ceil() as usize).max(1);
        let dims = [n, n];
        let cell = [
            ((hi[0] - lo[0]) / n as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / n as f64).max(f64::MIN_POSITIVE),
        ];
        let mut buckets = vec![Vec::new(); n * n];
        for t in 0..mesh.num_elements() {
            let v = mesh.element_vertices(t);
            let bmin = [v.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min), v.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min)];
            let bmax = [v.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max), v.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max)];
            let i0 = Self::index(bmin[0], lo[0], cell[0], n);
            let i1 = Self::index(bmax[0], lo[0], cell[0], n);
            let j0 = Self::index(bmin[1], lo[1], cell[1], n);
            let j1 = Self::index(bmax[1], lo[1], cell[1], n);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * n + i].push(t);
                }
            }
        }
        Self {
            mesh,
            origin: lo,
            cell,
            dims,
            buckets,
        }
    }

    fn index(x: f64, lo: f64, h: f64, n: usize) -> usize {
        (((x - lo) / h).floor().max(0.0) as usize).min(n - 1)
    }

    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let i = Self::index(p[0], self.origin[0], self.cell[0], self.dims[0]);
        let j = Self::index(p[1], self.origin[1], self.cell[1], self.dims[1]);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j * self.dims[0] + i] {
            let l = self.mesh.barycentric(t, p);
            let worst = l.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= 0.0 {
                return Some((t, l));
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((t, l, worst));
            }
        }
        best.filter(|b| b.2 >= -1e-10).map(|b| (b.0, b.1))
    }
}

/// Boundary flow class of a point: the sign of `beta . n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FlowClass {
    Inflow,
    Characteristic,
    Outflow,
}

/// Classifies a normal flux value with the characteristic band `|beta . n| <= tol`.
pub fn classify_flux(beta_n: f64, tol: f64) -> FlowClass {
    if beta_n < -tol {
        FlowClass::Inflow
    } else if beta_n > tol {
        FlowClass::Outflow
    } else {
        FlowClass::Characteristic
    }
}

/// Pointwise inflow/characteristic/outflow labels for every boundary face.
#[derive(Clone, Debug)]
pub struct BoundaryClass {
    /// Face parameters of the sample points (quadrature nodes on `[0, 1]`).
    pub points: Vec<f64>,
    /// `labels[k][q]` is the class of point `q` on `mesh.boundary_faces()[k]`.
    pub labels: Vec<Vec<FlowClass>>,
    /// `beta . n` at each sample point.
    pub flux: Vec<Vec<f64>>,
    /// Characteristic tolerance `1e-12 * max |beta|` over the sample points.
    pub tolerance: f64,
}

impl BoundaryClass {
    /// Label of a single boundary face if all of its points agree.
    pub fn face_class(&self, k: usize) -> Option<FlowClass> {
        let first = self.labels[k][0];
        self.labels[k].iter().all(|&c| c == first).then_some(first)
    }
}

/// Labels every boundary quadrature point by the sign of `beta . n`.
pub fn classify_boundary_faces(
    mesh: &Mesh,
    beta: &(dyn Fn(Point) -> [f64; 2] + Sync),
    rule: &QuadratureRule,
) -> BoundaryClass {
    let points: Vec<f64> = rule.points.iter().map(|p| p[0]).collect();
    let mut beta_max = 0.0_f64;
    let flux: Vec<Vec<f64>> = mesh
        .boundary_faces()
        .iter()
        .map(|&f| {
            let face = mesh.face(f);
            points
                .iter()
                .map(|&s| {
                    let b = beta(face.point(mesh, s));
                    beta_max = beta_max.max(b[0].hypot(b[1]));
                    b[0] * face.normal[0] + b[1] * face.normal[1]
                })
                .collect()
        })
        .collect();
    let tolerance = 1e-12 * beta_max;
    let labels = flux
        .iter()
        .map(|row| row.iter().map(|&bn| classify_flux(bn, tolerance)).collect())
        .collect();
    BoundaryClass {
        points,
        labels,
        flux,
        tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{quadrature_rule, QuadratureKind};

    fn edges(mesh: &Mesh) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = mesh.faces().iter().map(|f| sorted_pair(f.vertices[0], f.vertices[1])).collect();
        e.sort_unstable();
        e
    }

    fn assert_valid(mesh: &Mesh, area: f64) {
        assert!((mesh.total_area() - area).abs() <= 1e-12 * area);
        for face in mesh.faces() {
            assert!((face.normal[0].hypot(face.normal[1]) - 1.0).abs() < 1e-12);
            if let Some(plus) = face.plus {
                // n_F from T- equals minus the outward normal of T+
                let other = mesh.face(mesh.element_faces(plus.element)[plus.local_edge]);
                assert!(std::ptr::eq(other, face));
                let c_minus = mesh.centroid(face.minus.element);
                let c_plus = mesh.centroid(plus.element);
                let d = [c_plus[0] - c_minus[0], c_plus[1] - c_minus[1]];
                assert!(d[0] * face.normal[0] + d[1] * face.normal[1] > 0.0);
            } else {
                let c = mesh.centroid(face.minus.element);
                let m = face.point(mesh, 0.5);
                assert!((m[0] - c[0]) * face.normal[0] + (m[1] - c[1]) * face.normal[1] > 0.0);
            }
        }
        // conformity: every element edge is a face and every vertex is a corner
        let mut used = vec![false; mesh.num_vertices()];
        for t in 0..mesh.num_elements() {
            for &v in &mesh.elements()[t] {
                used[v] = true;
            }
            assert!(mesh.geometry(t).area > 0.0);
        }
        assert!(used.iter().all(|&u| u));
        let boundary_len: f64 = mesh.boundary_faces().iter().map(|&f| mesh.face(f).length).sum();
        assert!(boundary_len > 0.0);
        // no hanging vertex: no vertex lies in the interior of a face
        for face in mesh.faces() {
            let a = mesh.vertices()[face.vertices[0]];
            let b = mesh.vertices()[face.vertices[1]];
            for (v, p) in mesh.vertices().iter().enumerate() {
                if face.vertices.contains(&v) {
                    continue;
                }
                let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                let along = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / (face.length * face.length);
                assert!(!(cross.abs() < 1e-12 && along > 1e-9 && along < 1.0 - 1e-9), "hanging vertex {v}");
            }
        }
    }

    #[test]
    fn structured_counts() {
        let m = Mesh::structured(4, 4, Rectangle::new(0.0, 1.0, -1.0, 1.0)).unwrap();
        assert_eq!(m.num_elements(), 32);
        assert_eq!(m.num_vertices(), 25);
        assert_valid(&m, 2.0);

        let m = Mesh::structured(1, 1, Rectangle::UNIT_SQUARE).unwrap();
        assert_eq!((m.num_elements(), m.num_vertices(), m.interior_faces().len()), (2, 4, 1));
        // diagonal from lower left to upper right
        let f = m.face(m.interior_faces()[0]);
        assert_eq!(sorted_pair(f.vertices[0], f.vertices[1]), (0, 3));
    }

    #[test]
    fn structured_2x2_faces() {
        let m = Mesh::structured(2, 2, Rectangle::UNIT_SQUARE).unwrap();
        assert_eq!(m.num_elements(), 8);
        // 8 triangles: 3*8 = 2*interior + boundary, boundary = 8 edges
        assert_eq!(m.boundary_faces().len(), 8);
        assert_eq!(m.interior_faces().len(), 8);
        assert_eq!(edges(&m).windows(2).filter(|w| w[0] == w[1]).count(), 0);
        for &f in m.interior_faces() {
            let face = m.face(f);
            assert!(face.minus.element < face.plus.unwrap().element);
        }
        assert_valid(&m, 1.0);
    }

    #[test]
    fn structured_rejects_bad_input() {
        assert!(Mesh::structured(0, 3, Rectangle::UNIT_SQUARE).is_err());
        assert!(Mesh::structured(2, 2, Rectangle::new(0.0, 0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn refinement_edge_is_longest() {
        let m = Mesh::structured(3, 2, Rectangle::new(0.0, 3.0, 0.0, 1.0)).unwrap();
        for t in 0..m.num_elements() {
            let f = m.face(m.element_faces(t)[0]);
            assert!((f.length - m.diameter(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn boundary_classes_unit_square() {
        let m = Mesh::structured(2, 2, Rectangle::UNIT_SQUARE).unwrap();
        let rule = quadrature_rule(QuadratureKind::Edge, 5).unwrap();
        let s = 10f64.sqrt();
        let bc = classify_boundary_faces(&m, &|_| [3.0 / s, 1.0 / s], &rule);
        for (k, &f) in m.boundary_faces().iter().enumerate() {
            let mid = m.face(f).point(&m, 0.5);
            let expected = if mid[0] == 0.0 || mid[1] == 0.0 {
                FlowClass::Inflow
            } else {
                FlowClass::Outflow
            };
            assert_eq!(bc.face_class(k), Some(expected));
        }
        let bc = classify_boundary_faces(&m, &|_| [0.0, 0.0], &rule);
        assert!(bc.labels.iter().flatten().all(|&c| c == FlowClass::Characteristic));
    }

    #[test]
    fn boundary_classes_rotating_flow() {
        let m = Mesh::structured(4, 4, Rectangle::new(0.0, 1.0, -1.0, 1.0)).unwrap();
        let rule = quadrature_rule(QuadratureKind::Edge, 5).unwrap();
        let bc = classify_boundary_faces(&m, &|p| [-p[1], p[0]], &rule);
        for (k, &f) in m.boundary_faces().iter().enumerate() {
            let mid = m.face(f).point(&m, 0.5);
            if mid[0] == 0.0 {
                let expected = if mid[1] < 0.0 { FlowClass::Inflow } else { FlowClass::Outflow };
                assert_eq!(bc.face_class(k), Some(expected));
            }
        }
    }

    #[test]
    fn red_refinement() {
        let m = Mesh::structured(1, 1, Rectangle::UNIT_SQUARE).unwrap();
        let r = m.refine_uniform_red();
        assert_eq!(r.mesh.num_elements(), 8);
        assert!((r.mesh.h() - 0.5 * m.h()).abs() < 1e-15);
        let m32 = Mesh::structured(4, 4, Rectangle::UNIT_SQUARE).unwrap();
        let r = m32.refine_uniform_red();
        assert_eq!(r.mesh.num_elements(), 128);
        assert_valid(&r.mesh, 1.0);
        for (t, &p) in r.parent.iter().enumerate() {
            let c = r.mesh.centroid(t);
            assert!(m32.barycentric(p, c).iter().all(|&l| l > 0.0));
        }
    }

    #[test]
    fn bisect_all_and_one() {
        let m = Mesh::structured(2, 2, Rectangle::UNIT_SQUARE).unwrap();
        let all: Vec<usize> = (0..m.num_elements()).collect();
        let r = m.bisect_marked(&all).unwrap();
        let mut children = vec![0; m.num_elements()];
        for &p in &r.parent {
            children[p] += 1;
        }
        assert!(children.iter().all(|&c| c >= 2));
        assert_valid(&r.mesh, 1.0);

        // element 3 touches the centre of the square
        let r = m.bisect_marked(&[3]).unwrap();
        assert_valid(&r.mesh, 1.0);
        let mut children = vec![0; m.num_elements()];
        for &p in &r.parent {
            children[p] += 1;
        }
        assert!(children[3] >= 2);
        // its diagonal partner must split too, everybody else only if needed
        assert!(r.mesh.num_elements() < 2 * m.num_elements());

        let same = m.bisect_marked(&[]).unwrap();
        assert_eq!(same.mesh.num_elements(), m.num_elements());
        assert!(m.bisect_marked(&[99]).is_err());
    }

    #[test]
    fn repeated_bisection_keeps_angles() {
        let mut m = Mesh::structured(2, 2, Rectangle::UNIT_SQUARE).unwrap();
        let initial = (0..m.num_elements()).map(|t| m.min_angle(t)).fold(f64::INFINITY, f64::min);
        let target = [0.3, 0.3];
        for _ in 0..20 {
            let (t, _) = m.locate(target).unwrap();
            m = m.bisect_marked(&[t]).unwrap().mesh;
        }
        assert_valid(&m, 1.0);
        let worst = (0..m.num_elements()).map(|t| m.min_angle(t)).fold(f64::INFINITY, f64::min);
        // right isosceles triangles stay in one similarity class under bisection
        assert!((worst - initial).abs() < 1e-12, "{worst} vs {initial}");
        assert!(m.locate(target).map(|(t, _)| m.diameter(t)).unwrap() < 0.01);
    }

    #[test]
    fn untouched_elements_keep_their_size() {
        let m = Mesh::structured(4, 4, Rectangle::UNIT_SQUARE).unwrap();
        let r = m.bisect_marked(&[0]).unwrap();
        for (t, &p) in r.parent.iter().enumerate() {
            assert!(r.mesh.diameter(t) <= m.diameter(p) + 1e-15);
        }
    }

    #[test]
    fn text_round_trip() {
        let m = Mesh::structured(3, 2, Rectangle::new(0.1, 0.7, -0.3, 0.9))
            .unwrap()
            .bisect_marked(&[1, 4])
            .unwrap()
            .mesh;
        let back = Mesh::from_text(&m.to_text()).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.elements(), m.elements());
        assert!(Mesh::from_text("vertices 1\n0 0\nelements 1\n0 0 0\n").is_err());
        assert!(Mesh::from_text("elements 0\n").is_err());
    }

    #[test]
    fn point_locator_agrees_with_scan() {
        let m = Mesh::structured(5, 3, Rectangle::new(0.0, 1.0, -1.0, 1.0)).unwrap();
        let loc = PointLocator::new(&m);
        for i in 0..=20 {
            for j in 0..=20 {
                let p = [i as f64 / 20.0, -1.0 + j as f64 / 10.0];
                let (t, l) = loc.locate(p).unwrap();
                assert!(l.iter().all(|&x| x >= -1e-12));
                let q = m.map_to_physical(t, l);
                assert!((q[0] - p[0]).abs() < 1e-12 && (q[1] - p[1]).abs() < 1e-12);
            }
        }
        assert!(loc.locate([2.0, 0.0]).is_none());
    }
}
