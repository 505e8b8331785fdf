//! Error indicators from the residual representative, Dörfler marking and
//! the solve, estimate, mark, refine loop.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fespace::{Continuity, DiscreteFunction, FunctionSpace};
use crate::forms::{ExactSolution, FormContext, FormParams, ProblemSpec};
use crate::mesh::Mesh;
use crate::penalty::{Penalty, PenaltyConfig, UpperSign};
use crate::solver::{Discretization, NewtonOptions, ResminSolution};

/// Per-element indicators with `sum eta_T^2 = |eps_h|_{V_h}^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorIndicators {
    pub values: Vec<f64>,
}

impl ErrorIndicators {
    pub fn total_squared(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn estimate(&self) -> f64 {
        self.total_squared().sqrt()
    }
}

/// Localizes `|eps_h|_{V_h}^2`: volume terms of `T`, its boundary faces and
/// half of each interior face it touches.
pub fn error_indicators(ctx: &FormContext, eps: &DiscreteFunction) -> Result<ErrorIndicators> {
    if !Arc::ptr_eq(eps.space().mesh(), ctx.test.mesh()) || eps.space().continuity() != Continuity::Broken {
        return Err(Error::InvalidArgument("eps_h must live in the test space".into()));
    }
    let values = ctx
        .local_norms_squared(eps.coefficients())
        .into_iter()
        .map(|s| s.max(0.0).sqrt())
        .collect();
    Ok(ErrorIndicators { values })
}

/// Smallest set, chosen greedily by decreasing indicator, carrying at least
/// `theta^2` of the total squared estimate. Empty when all indicators vanish.
pub fn dorfler_mark(ind: &ErrorIndicators, theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("marking fraction {theta} not in (0, 1]")));
    }
    let total = ind.total_squared();
    if total == 0.0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..ind.values.len()).collect();
    order.sort_by(|&a, &b| ind.values[b].total_cmp(&ind.values[a]).then(a.cmp(&b)));
    let goal = theta * theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for t in order {
        if ind.values[t] == 0.0 {
            break;
        }
        marked.push(t);
        acc += ind.values[t] * ind.values[t];
        // relative slack keeps theta = 1 from failing on summation order
        if acc >= goal * (1.0 - 1e-14) {
            break;
        }
    }
    Ok(marked)
}

#[derive(Clone, Debug)]
pub struct AdaptOptions {
    pub degree: usize,
    pub theta_mark: f64,
    pub max_levels: usize,
    /// Stop refining once the test space has at least this many dofs.
    pub max_dofs: usize,
    pub params: FormParams,
    /// `None` solves the linear problem only.
    pub penalty: Option<UpperSign>,
    pub newton: NewtonOptions,
    /// Prolong the previous level's solution as the Newton start.
    pub warm_start: bool,
    /// Also solve the unpenalized problem on every level.
    pub track_linear: bool,
    pub exact: Option<ExactSolution>,
}

impl Default for AdaptOptions {
    fn default() -> Self {
        Self {
            degree: 1,
            theta_mark: 0.5,
            max_levels: 10,
            max_dofs: usize::MAX,
            params: FormParams::default(),
            penalty: Some(UpperSign::Restoring),
            newton: NewtonOptions::default(),
            warm_start: true,
            track_linear: false,
            exact: None,
        }
    }
}

/// One row of the per-level table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptRecord {
    pub level: usize,
    pub elements: usize,
    pub trial_dofs: usize,
    pub test_dofs: usize,
    pub eps_norm: f64,
    pub estimate: f64,
    pub l2_error: Option<f64>,
    pub vh_error: Option<f64>,
    pub u_min: f64,
    pub u_max: f64,
    pub undershoot: f64,
    pub overshoot: f64,
    pub linear_undershoot: Option<f64>,
    pub linear_overshoot: Option<f64>,
    pub newton_iterations: usize,
    pub newton_retries: usize,
    pub warm_started: bool,
    /// `gamma_T` and the inflow labels were rebuilt for this mesh.
    pub recomputed: bool,
    pub marked: usize,
}

/// Data of a finished level, handed to the observer of the loop.
pub struct LevelView<'l> {
    pub level: usize,
    pub mesh: &'l Arc<Mesh>,
    pub solution: &'l ResminSolution,
    pub linear: Option<&'l ResminSolution>,
    pub indicators: &'l ErrorIndicators,
    pub record: &'l AdaptRecord,
}

#[derive(Debug)]
pub struct AdaptOutcome {
    pub records: Vec<AdaptRecord>,
    pub mesh: Arc<Mesh>,
    pub solution: Option<ResminSolution>,
    pub linear: Option<ResminSolution>,
    /// Set when a level failed; earlier records are kept.
    pub failure: Option<Error>,
    /// The residual representative vanished, so nothing was left to refine.
    pub exact: bool,
}

impl AdaptOutcome {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        write_records(&self.records, w)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub fn write_records<R: Serialize>(records: &[R], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn violations(range: (f64, f64), problem: &ProblemSpec) -> (f64, f64) {
    let under = problem.bounds.lower.map_or(0.0, |lo| (lo - range.0).max(0.0));
    let over = problem.bounds.upper.map_or(0.0, |hi| (range.1 - hi).max(0.0));
    (under, over)
}

/// Solves on `mesh0`, then refines by Dörfler marking and newest vertex
/// bisection until `max_levels` or `max_dofs` is reached.
pub fn adaptive_solve_loop(
    problem: &ProblemSpec,
    mesh0: Arc<Mesh>,
    opts: &AdaptOptions,
    mut observer: impl FnMut(&LevelView),
) -> Result<AdaptOutcome> {
    problem.validate()?;
    if opts.max_levels == 0 {
        return Err(Error::InvalidConfiguration("max_levels must be positive".into()));
    }
    if opts.penalty.is_some() && problem.bounds.is_empty() {
        return Err(Error::InvalidConfiguration("a penalized loop needs bounds".into()));
    }
    let mut outcome = AdaptOutcome {
        records: Vec::new(),
        mesh: mesh0.clone(),
        solution: None,
        linear: None,
        failure: None,
        exact: false,
    };
    let mut mesh = mesh0;
    let mut previous: Option<(DiscreteFunction, Vec<usize>)> = None;
    for level in 0..opts.max_levels {
        let trial = Arc::new(FunctionSpace::new(mesh.clone(), opts.degree, Continuity::Continuous)?);
        let test = Arc::new(FunctionSpace::new(mesh.clone(), opts.degree, Continuity::Broken)?);
        let step = solve_level(problem, &trial, &test, opts, previous.take());
        let (solution, linear, warm_started, indicators, recomputed, errors) = match step {
            Ok(s) => s,
            Err(e) => {
                outcome.failure = Some(e);
                break;
            }
        };
        let range = solution.u.sampled_range();
        let (undershoot, overshoot) = violations(range, problem);
        let lin_viol = linear.as_ref().map(|l| violations(l.u.sampled_range(), problem));
        let newton = solution.newton.as_ref();
        let last = level + 1 == opts.max_levels || test.ndofs() >= opts.max_dofs;
        let marked = if last { Vec::new() } else { dorfler_mark(&indicators, opts.theta_mark)? };
        let record = AdaptRecord {
            level,
            elements: mesh.num_elements(),
            trial_dofs: trial.ndofs(),
            test_dofs: test.ndofs(),
            eps_norm: solution.eps_norm,
            estimate: indicators.estimate(),
            l2_error: errors.map(|e| e.l2),
            vh_error: errors.map(|e| e.vh),
            u_min: range.0,
            u_max: range.1,
            undershoot,
            overshoot,
            linear_undershoot: lin_viol.map(|v| v.0),
            linear_overshoot: lin_viol.map(|v| v.1),
            newton_iterations: newton.map_or(0, |n| n.iterations()),
            newton_retries: newton.map_or(0, |n| n.total_retries()),
            warm_started,
            recomputed,
            marked: marked.len(),
        };
        observer(&LevelView {
            level,
            mesh: &mesh,
            solution: &solution,
            linear: linear.as_ref(),
            indicators: &indicators,
            record: &record,
        });
        outcome.records.push(record);
        let exact = indicators.total_squared() == 0.0;
        let next = if last || exact {
            None
        } else {
            Some(mesh.bisect_marked(&marked)?)
        };
        outcome.mesh = mesh.clone();
        outcome.exact = exact;
        if let Some(refined) = next {
            previous = Some((solution.u.clone(), refined.parent.clone()));
            mesh = Arc::new(refined.mesh);
            outcome.solution = Some(solution);
            outcome.linear = linear;
        } else {
            outcome.solution = Some(solution);
            outcome.linear = linear;
            break;
        }
    }
    Ok(outcome)
}

type LevelResult = (
    ResminSolution,
    Option<ResminSolution>,
    bool,
    ErrorIndicators,
    bool,
    Option<crate::forms::ErrorNorms>,
);

fn solve_level(
    problem: &ProblemSpec,
    trial: &Arc<FunctionSpace>,
    test: &Arc<FunctionSpace>,
    opts: &AdaptOptions,
    previous: Option<(DiscreteFunction, Vec<usize>)>,
) -> Result<LevelResult> {
    let disc = Discretization::new(problem, trial, test, opts.params)?;
    let mesh = test.mesh();
    let recomputed = disc.ctx.boundary.labels.len() == mesh.boundary_faces().len();
    let mut linear = None;
    let mut warm_started = false;
    let (solution, recomputed) = match opts.penalty {
        None => (disc.solve_linear()?, recomputed),
        Some(sign) => {
            let cfg = PenaltyConfig::from_problem(problem, sign);
            let fresh = Penalty::new(&disc.ctx, cfg)?.gamma().len() == mesh.num_elements();
            let warm = match (&previous, opts.warm_start) {
                (Some((u_old, parent)), true) => {
                    let u0 = u_old.prolong(trial, parent)?;
                    disc.newton_from(cfg, opts.newton, vec![0.0; test.ndofs()], u0.into_coefficients())
                        .ok()
                }
                _ => None,
            };
            let sol = match warm {
                Some(s) => {
                    warm_started = true;
                    s
                }
                None => {
                    let lin = disc.solve_linear()?;
                    let s = disc.newton_from(
                        cfg,
                        opts.newton,
                        lin.eps.coefficients().to_vec(),
                        lin.u.coefficients().to_vec(),
                    )?;
                    linear = Some(lin);
                    s
                }
            };
            (sol, recomputed && fresh)
        }
    };
    if opts.track_linear && opts.penalty.is_some() && linear.is_none() {
        linear = Some(disc.solve_linear()?);
    }
    let indicators = error_indicators(&disc.ctx, &solution.eps)?;
    let errors = match &opts.exact {
        Some(exact) => Some(disc.ctx.error_norms(&solution.u, exact)?),
        None => None,
    };
    Ok((solution, linear.filter(|_| opts.track_linear), warm_started, indicators, recomputed, errors))
}
