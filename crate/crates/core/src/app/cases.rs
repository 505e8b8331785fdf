//! Built-in problems.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forms::{Bounds, Diffusion, ExactSolution, ProblemSpec};
use crate::mesh::{Mesh, Point, Rectangle};

/// How `run` treats a case.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    /// One solve on the initial mesh.
    Uniform,
    /// Adaptive refinement from the initial mesh.
    Adaptive,
}

/// Width of the layers in the three experiments.
pub const LAYER_WIDTH: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaseDefaults {
    pub domain: Rectangle,
    /// Cells per direction of the initial structured mesh.
    pub cells: (usize, usize),
    pub degree: usize,
    pub gamma0: f64,
    pub tol: f64,
    pub bounds: Bounds,
    pub pipeline: Pipeline,
    /// Refinement levels for `run` (adaptive) and `study`.
    pub levels: usize,
    /// Dörfler fraction for adaptive runs.
    pub theta_mark: f64,
    /// Segment sampled for the cross-section output.
    pub cross_section: Option<(Point, Point)>,
}

/// Switches that change the data of a case.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CaseOptions {
    /// Use `tanh(eps (r - 0.35))` in the rotating-flow inflow ramp instead of
    /// `tanh((r - 0.35) / eps)`.
    pub verbatim_ramp: bool,
}

#[derive(Clone)]
pub struct CaseDefinition {
    pub name: &'static str,
    pub description: &'static str,
    pub defaults: CaseDefaults,
    build: fn(&CaseOptions) -> (ProblemSpec, Option<ExactSolution>),
}

impl std::fmt::Debug for CaseDefinition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CaseDefinition")
            .field("name", &self.name)
            .field("defaults", &self.defaults)
            .finish_non_exhaustive()
    }
}

impl CaseDefinition {
    /// Problem data with the default bounds and `gamma0`, plus the exact
    /// solution when one is known.
    pub fn problem(&self, options: &CaseOptions) -> (ProblemSpec, Option<ExactSolution>) {
        let (p, exact) = (self.build)(options);
        (
            p.with_bounds(self.defaults.bounds).with_gamma0(self.defaults.gamma0),
            exact,
        )
    }

    pub fn initial_mesh(&self) -> Result<Mesh> {
        let (nx, ny) = self.defaults.cells;
        Mesh::structured(nx, ny, self.defaults.domain)
    }
}

/// Layer profile of the advection-over-a-square experiment.
pub fn tanh_layer(x: Point) -> f64 {
    0.5 * (((x[1] - x[0] / 3.0 - 0.25) / LAYER_WIDTH).tanh() + 1.0)
}

fn tanh_layer_gradient(x: Point) -> [f64; 2] {
    let s = (x[1] - x[0] / 3.0 - 0.25) / LAYER_WIDTH;
    let d = 0.5 / (LAYER_WIDTH * s.cosh().powi(2));
    [-d / 3.0, d]
}

fn advection_square(_: &CaseOptions) -> (ProblemSpec, Option<ExactSolution>) {
    let s = 10f64.sqrt();
    let p = ProblemSpec::default()
        .with_constant_velocity([3.0 / s, 1.0 / s])
        .with_dirichlet(tanh_layer);
    let exact = ExactSolution {
        value: Arc::new(tanh_layer),
        gradient: Arc::new(tanh_layer_gradient),
    };
    (p, Some(exact))
}

/// Inflow ramp of the rotating flow as a function of the distance `r` to
/// the rotation centre.
pub fn rotating_ramp(r: f64, verbatim: bool) -> f64 {
    let scale = |d: f64| if verbatim { LAYER_WIDTH * d } else { d / LAYER_WIDTH };
    if r < 0.5 {
        0.5 * (1.0 + scale(r - 0.35).tanh())
    } else {
        0.5 * (1.0 + scale(0.65 - r).tanh())
    }
}

fn rotating_ramp_derivative(r: f64) -> f64 {
    let (arg, sign) = if r < 0.5 { ((r - 0.35) / LAYER_WIDTH, 1.0) } else { ((0.65 - r) / LAYER_WIDTH, -1.0) };
    sign * 0.5 / (LAYER_WIDTH * arg.cosh().powi(2))
}

/// Boundary datum: the ramp on the inflow segment `{0} x (-1, 0)`, zero on
/// the rest of the boundary.
fn rotating_dirichlet(verbatim: bool) -> impl Fn(Point) -> f64 + Send + Sync + 'static {
    move |x: Point| {
        if x[0] <= 1e-12 && x[1] < 0.0 {
            rotating_ramp(-x[1], verbatim)
        } else {
            0.0
        }
    }
}

fn rotating_flow(o: &CaseOptions) -> (ProblemSpec, Option<ExactSolution>) {
    let verbatim = o.verbatim_ramp;
    let p = ProblemSpec::default()
        .with_velocity(|x| [-x[1], x[0]])
        .with_velocity_divergence(|_| 0.0)
        .with_dirichlet(rotating_dirichlet(verbatim));
    // characteristics are circles about the origin; those with r >= 1 enter
    // through boundary parts where g = 0
    let value = move |x: Point| {
        let r = x[0].hypot(x[1]);
        if r < 1.0 {
            rotating_ramp(r, verbatim)
        } else {
            0.0
        }
    };
    let exact = (!verbatim).then(|| ExactSolution {
        value: Arc::new(value),
        gradient: Arc::new(|x: Point| {
            let r = x[0].hypot(x[1]);
            if r < 1.0 && r > 0.0 {
                let d = rotating_ramp_derivative(r);
                [d * x[0] / r, d * x[1] / r]
            } else {
                [0.0, 0.0]
            }
        }),
    });
    (p, exact)
}

fn rotating_diffusion(o: &CaseOptions) -> (ProblemSpec, Option<ExactSolution>) {
    let (p, _) = rotating_flow(o);
    (p.with_diffusion(Diffusion::Scalar(1e-3)), None)
}

fn sine(x: Point) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).sin()
}

fn manufactured(_: &CaseOptions) -> (ProblemSpec, Option<ExactSolution>) {
    // u = sin(pi x) sin(pi y), K = 1, beta = (1, 1), sigma = 1
    let grad = |x: Point| {
        [
            PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
            PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
        ]
    };
    let p = ProblemSpec::default()
        .with_constant_velocity([1.0, 1.0])
        .with_diffusion(Diffusion::Scalar(1.0))
        .with_reaction(|_| 1.0)
        .with_source(move |x| {
            let g = grad(x);
            (2.0 * PI * PI + 1.0) * sine(x) + g[0] + g[1]
        });
    let exact = ExactSolution {
        value: Arc::new(sine),
        gradient: Arc::new(grad),
    };
    (p, Some(exact))
}

const CASES: [CaseDefinition; 4] = [
    CaseDefinition {
        name: "case1",
        description: "pure advection of a tanh layer on the unit square, quasi-uniform mesh",
        defaults: CaseDefaults {
            domain: Rectangle::UNIT_SQUARE,
            cells: (11, 11),
            degree: 1,
            gamma0: 1e-5,
            tol: 1e-5,
            bounds: Bounds {
                lower: Some(0.0),
                upper: Some(1.0),
            },
            pipeline: Pipeline::Uniform,
            levels: 4,
            theta_mark: 0.5,
            cross_section: Some(([0.5 + 5.0 / 36.0, 0.0], [0.5 - 7.0 / 36.0, 1.0])),
        },
        build: advection_square,
    },
    CaseDefinition {
        name: "case2",
        description: "rotating flow with an inner layer, adaptive refinement",
        defaults: CaseDefaults {
            domain: Rectangle {
                x0: 0.0,
                x1: 1.0,
                y0: -1.0,
                y1: 1.0,
            },
            cells: (4, 4),
            degree: 1,
            gamma0: 1e-5,
            tol: 1e-5,
            bounds: Bounds {
                lower: Some(0.0),
                upper: Some(1.0),
            },
            pipeline: Pipeline::Adaptive,
            levels: 20,
            theta_mark: 0.9,
            cross_section: Some(([0.0, 0.0], [1.0, 1.0])),
        },
        build: rotating_flow,
    },
    CaseDefinition {
        name: "case3",
        description: "rotating flow with diffusion K = 1e-3 and a boundary layer at x = 0, adaptive refinement",
        defaults: CaseDefaults {
            domain: Rectangle {
                x0: 0.0,
                x1: 1.0,
                y0: -1.0,
                y1: 1.0,
            },
            cells: (4, 4),
            degree: 1,
            gamma0: 1e-4,
            tol: 1e-5,
            bounds: Bounds {
                lower: Some(0.0),
                upper: Some(1.0),
            },
            pipeline: Pipeline::Adaptive,
            levels: 16,
            theta_mark: 0.9,
            cross_section: Some(([0.0, 0.0], [1.0, 1.0])),
        },
        build: rotating_diffusion,
    },
    CaseDefinition {
        name: "manufactured",
        description: "smooth solution sin(pi x) sin(pi y) with K = 1, beta = (1, 1), sigma = 1",
        defaults: CaseDefaults {
            domain: Rectangle::UNIT_SQUARE,
            cells: (4, 4),
            degree: 1,
            gamma0: 1e-4,
            tol: 1e-8,
            bounds: Bounds {
                lower: None,
                upper: None,
            },
            pipeline: Pipeline::Uniform,
            levels: 5,
            theta_mark: 0.5,
            cross_section: Some(([0.0, 0.0], [1.0, 1.0])),
        },
        build: manufactured,
    },
];

pub fn cases() -> &'static [CaseDefinition] {
    &CASES
}

pub fn find_case(name: &str) -> Result<&'static CaseDefinition> {
    CASES.iter().find(|c| c.name == name).ok_or_else(|| Error::UnknownCase {
        name: name.to_string(),
        available: CASES.iter().map(|c| c.name).collect::<Vec<_>>().join(", "),
    })
}
