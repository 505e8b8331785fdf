//! The `run` pipeline: solve a case and write its outputs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::adapt::{adaptive_solve_loop, AdaptOptions, AdaptRecord};
use crate::error::{Error, Result};
use crate::fespace::{Continuity, DiscreteFunction, FunctionSpace};
use crate::mesh::Mesh;
use crate::penalty::PenaltyConfig;
use crate::solver::{Discretization, NewtonReport, ResminSolution};

use super::cases::{find_case, Pipeline};
use super::report::{bound_violation_report, export_vtk, write_cross_section, RunMetadata, ViolationReport};
use super::settings::{ResolvedCase, RunSettings};

/// Points sampled along the cross-section.
pub const CROSS_SECTION_POINTS: usize = 1001;

#[derive(Debug)]
pub struct RunSummary {
    pub case: String,
    pub pipeline: Pipeline,
    pub mesh: Arc<Mesh>,
    /// Penalized solution if the penalty ran, otherwise the linear one.
    pub solution: ResminSolution,
    /// The unpenalized solution on the same mesh, when the penalty ran.
    pub linear: Option<ResminSolution>,
    pub violations: Option<ViolationReport>,
    pub linear_violations: Option<ViolationReport>,
    pub newton: Option<NewtonReport>,
    /// Adaptive runs only.
    pub levels: Vec<AdaptRecord>,
    /// Sampled values along the cross-section, one vector per field in
    /// `cross_section_fields` order.
    pub cross_section: Vec<Vec<f64>>,
    pub cross_section_fields: Vec<String>,
    pub files: Vec<PathBuf>,
    pub adapt_failure: Option<String>,
}

/// Solves `name` with `settings` and writes all outputs to
/// `settings.out_dir/<name>`.
pub fn run_case(name: &str, settings: &RunSettings) -> Result<RunSummary> {
    let case = find_case(name)?;
    let resolved = settings.resolve(case)?;
    let dir = settings.out_dir.join(name);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut summary = match case.defaults.pipeline {
        Pipeline::Uniform => run_uniform(&resolved, settings)?,
        Pipeline::Adaptive => run_adaptive(&resolved, settings)?,
    };
    summary.case = name.to_string();
    write_outputs(&resolved, settings, &dir, &mut summary)?;
    Ok(summary)
}

fn run_uniform(case: &ResolvedCase, settings: &RunSettings) -> Result<RunSummary> {
    let mesh = Arc::new(case.case.initial_mesh()?);
    let trial = Arc::new(FunctionSpace::new(mesh.clone(), case.degree, Continuity::Continuous)?);
    let test = Arc::new(FunctionSpace::new(mesh.clone(), case.degree, Continuity::Broken)?);
    let disc = Discretization::new(&case.problem, &trial, &test, case.params)?;
    let lin = disc.solve_linear()?;
    let (solution, linear) = if case.penalized {
        let cfg = PenaltyConfig::from_problem(&case.problem, settings.upper_sign);
        let pen = disc.newton_from(cfg, case.newton, lin.eps.coefficients().to_vec(), lin.u.coefficients().to_vec())?;
        (pen, Some(lin))
    } else {
        (lin, None)
    };
    Ok(summary(Pipeline::Uniform, mesh, solution, linear, Vec::new(), None))
}

fn run_adaptive(case: &ResolvedCase, settings: &RunSettings) -> Result<RunSummary> {
    let opts = AdaptOptions {
        degree: case.degree,
        theta_mark: case.theta_mark,
        max_levels: case.levels,
        max_dofs: settings.max_dofs.unwrap_or(usize::MAX),
        penalty: case.penalized.then_some(settings.upper_sign),
        newton: case.newton,
        track_linear: case.penalized,
        exact: case.exact.clone(),
        params: case.params,
        ..AdaptOptions::default()
    };
    let mesh0 = Arc::new(case.case.initial_mesh()?);
    let outcome = adaptive_solve_loop(&case.problem, mesh0, &opts, |_| {})?;
    let failure = outcome.failure.as_ref().map(|e| e.to_string());
    let solution = match outcome.solution {
        Some(s) => s,
        None => return Err(outcome.failure.unwrap_or(Error::InvalidProblem("no level was solved".into()))),
    };
    Ok(summary(Pipeline::Adaptive, outcome.mesh, solution, outcome.linear, outcome.records, failure))
}

fn summary(
    pipeline: Pipeline,
    mesh: Arc<Mesh>,
    solution: ResminSolution,
    linear: Option<ResminSolution>,
    levels: Vec<AdaptRecord>,
    adapt_failure: Option<String>,
) -> RunSummary {
    RunSummary {
        case: String::new(),
        pipeline,
        mesh,
        newton: solution.newton.clone(),
        solution,
        linear,
        violations: None,
        linear_violations: None,
        levels,
        cross_section: Vec::new(),
        cross_section_fields: Vec::new(),
        files: Vec::new(),
        adapt_failure,
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(file))
}

fn write_outputs(case: &ResolvedCase, settings: &RunSettings, dir: &Path, s: &mut RunSummary) -> Result<()> {
    let bounds = case.problem.bounds;
    if !bounds.is_empty() {
        s.violations = Some(bound_violation_report(&s.solution.u, &bounds)?);
        s.linear_violations = s.linear.as_ref().map(|l| bound_violation_report(&l.u, &bounds)).transpose()?;
        let path = dir.join("violations.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["solution", "min", "max", "undershoot", "overshoot", "undershoot_percent", "overshoot_percent"])?;
        let label = if case.penalized { "penalized" } else { "linear" };
        let rows = std::iter::once((label, s.violations))
            .chain(std::iter::once(("linear", s.linear_violations)))
            .filter_map(|(l, v)| v.map(|v| (l, v)));
        for (label, v) in rows {
            let pct = |p: Option<f64>| p.map_or(String::new(), |x| x.to_string());
            w.write_record([
                label.to_string(),
                v.min.to_string(),
                v.max.to_string(),
                v.undershoot.to_string(),
                v.overshoot.to_string(),
                pct(v.undershoot_percent),
                pct(v.overshoot_percent),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        s.files.push(path);
    }

    let mut fields: Vec<(String, &DiscreteFunction)> = vec![("u_h".into(), &s.solution.u)];
    if let Some(l) = &s.linear {
        fields.push(("u_linear".into(), &l.u));
    }
    let exact_field = case.exact.as_ref().map(|e| s.solution.u.space().interpolate(|x| (e.value)(x)));
    if let Some(e) = &exact_field {
        fields.push(("u_exact".into(), e));
    }
    if let Some((a, b)) = case.case.defaults.cross_section {
        let path = dir.join("cross_section.csv");
        let named: Vec<(&str, &DiscreteFunction)> = fields.iter().map(|(n, f)| (n.as_str(), *f)).collect();
        s.cross_section = write_cross_section(create(&path)?, a, b, CROSS_SECTION_POINTS, &named)?;
        s.cross_section_fields = fields.iter().map(|(n, _)| n.clone()).collect();
        s.files.push(path);
    }
    let path = dir.join("solution.vtk");
    let mut vtk: Vec<(&str, &DiscreteFunction)> = fields.iter().map(|(n, f)| (n.as_str(), *f)).collect();
    vtk.push(("eps_h", &s.solution.eps));
    export_vtk(&s.mesh, &vtk, &path)?;
    s.files.push(path);

    if let Some(n) = &s.newton {
        let path = dir.join("newton_log.csv");
        n.save_csv(&path)?;
        s.files.push(path);
    }
    if !s.levels.is_empty() {
        let path = dir.join("levels.csv");
        crate::adapt::write_records(&s.levels, create(&path)?)?;
        s.files.push(path);
    }

    let mut m = RunMetadata::default();
    m.push("case", &s.case);
    m.push("pipeline", format!("{:?}", s.pipeline).to_lowercase());
    m.push("degree", case.degree);
    m.push("gamma0", case.problem.gamma0);
    m.push("tol", case.newton.tol);
    m.push("penalty", case.penalized);
    m.push("upper_sign", settings.upper_sign);
    m.push("inflow", format!("{:?}", case.params.inflow).to_lowercase());
    m.push("theta_mark", case.theta_mark);
    m.push("levels", if s.levels.is_empty() { 1 } else { s.levels.len() });
    m.push("lower", fmt_opt(bounds.lower));
    m.push("upper", fmt_opt(bounds.upper));
    m.push("verbatim_ramp", settings.verbatim_ramp);
    m.push("threads", rayon::current_num_threads());
    m.push("seed", settings.seed);
    m.push("elements", s.mesh.num_elements());
    m.push("trial_dofs", s.solution.u.space().ndofs());
    m.push("test_dofs", s.solution.eps.space().ndofs());
    m.push("eps_norm", s.solution.eps_norm);
    if let Some(l) = &s.linear {
        m.push("linear_eps_norm", l.eps_norm);
    }
    if let Some(n) = &s.newton {
        m.push("newton_converged", n.converged);
        m.push("newton_iterations", n.iterations());
        m.push("newton_retries", n.total_retries());
    }
    if let Some(v) = &s.violations {
        m.push("max_violation", v.worst());
    }
    if let Some(v) = &s.linear_violations {
        m.push("linear_max_violation", v.worst());
    }
    if let Some(f) = &s.adapt_failure {
        m.push("adapt_failure", f);
    }
    let path = dir.join("metadata.txt");
    m.save(&path)?;
    s.files.push(path);
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("none".into(), |x| x.to_string())
}

/// Sizes the global rayon pool. Later calls after the pool exists are ignored.
pub fn configure_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
