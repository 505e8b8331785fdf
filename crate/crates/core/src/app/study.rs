//! Convergence studies on sequences of meshes.

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::adapt::{adaptive_solve_loop, write_records, AdaptOptions};
use crate::error::{Error, Result};
use crate::fespace::{Continuity, FunctionSpace};
use crate::mesh::Mesh;
use crate::penalty::{PenaltyConfig, UpperSign};
use crate::solver::Discretization;

use super::report::RunMetadata;
use super::settings::ResolvedCase;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyMode {
    /// Red refinement of every element.
    Uniform,
    /// Dörfler marking and bisection.
    Adaptive,
}

impl std::str::FromStr for StudyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "adaptive" => Ok(Self::Adaptive),
            _ => Err(Error::Parse {
                what: "study mode".into(),
                message: format!("expected `uniform` or `adaptive`, got `{s}`"),
            }),
        }
    }
}

/// One mesh of a study. Unprefixed columns belong to the unpenalized
/// solution, `pen_` columns to the penalized one.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StudyRow {
    pub level: usize,
    pub h: f64,
    pub elements: usize,
    pub trial_dofs: usize,
    pub test_dofs: usize,
    pub l2_error: Option<f64>,
    pub vh_error: Option<f64>,
    pub eps_norm: f64,
    pub undershoot: f64,
    pub overshoot: f64,
    pub pen_l2_error: Option<f64>,
    pub pen_vh_error: Option<f64>,
    pub pen_eps_norm: Option<f64>,
    /// Linear residual `|r(u_pen)|_{V_h'}` of the penalized solution.
    pub pen_linear_residual: Option<f64>,
    pub pen_undershoot: Option<f64>,
    pub pen_overshoot: Option<f64>,
    pub newton_iterations: Option<usize>,
}

/// Least-squares slopes of `log(error)` against `log(h)` (uniform) or
/// `log(N^{-1/2})` with `N` trial dofs (adaptive).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Slopes {
    pub l2: Option<f64>,
    pub vh: Option<f64>,
    pub eps: Option<f64>,
    pub pen_l2: Option<f64>,
    pub pen_vh: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct StudyOutcome {
    pub mode: StudyMode,
    pub rows: Vec<StudyRow>,
    pub slopes: Slopes,
}

impl StudyOutcome {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let path = dir.join("study.csv");
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_records(&self.rows, std::io::BufWriter::new(file))?;
        let mut m = RunMetadata::default();
        let fmt = |s: Option<f64>| s.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        m.push("slope_l2", fmt(self.slopes.l2));
        m.push("slope_vh", fmt(self.slopes.vh));
        m.push("slope_eps", fmt(self.slopes.eps));
        m.push("slope_pen_l2", fmt(self.slopes.pen_l2));
        m.push("slope_pen_vh", fmt(self.slopes.pen_vh));
        m.save(dir.join("slopes.txt"))
    }
}

/// Slope of the least-squares line through `(ln x, ln y)`. Pairs with a
/// non-positive entry are skipped; fewer than two points give `None`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn slopes(mode: StudyMode, rows: &[StudyRow]) -> Slopes {
    let x: Vec<f64> = match mode {
        StudyMode::Uniform => rows.iter().map(|r| r.h).collect(),
        StudyMode::Adaptive => rows.iter().map(|r| (r.trial_dofs as f64).powf(-0.5)).collect(),
    };
    let col = |f: &dyn Fn(&StudyRow) -> Option<f64>| -> Option<f64> {
        let y: Vec<f64> = rows.iter().map(|r| f(r).unwrap_or(f64::NAN)).collect();
        fit_slope(&x, &y)
    };
    Slopes {
        l2: col(&|r| r.l2_error),
        vh: col(&|r| r.vh_error),
        eps: col(&|r| Some(r.eps_norm)),
        pen_l2: col(&|r| r.pen_l2_error),
        pen_vh: col(&|r| r.pen_vh_error),
    }
}

/// Runs `levels` meshes of a case. With `with_penalty` (and bounds present)
/// every mesh is also solved with the penalty.
pub fn convergence_study(
    case: &ResolvedCase,
    levels: usize,
    mode: StudyMode,
    with_penalty: bool,
    sign: UpperSign,
    theta_mark: f64,
) -> Result<StudyOutcome> {
    if levels == 0 {
        return Err(Error::InvalidConfiguration("levels must be positive".into()));
    }
    let with_penalty = with_penalty && !case.problem.bounds.is_empty();
    let mesh0 = Arc::new(case.case.initial_mesh()?);
    let rows = match mode {
        StudyMode::Uniform => {
            let mut rows = Vec::with_capacity(levels);
            let mut mesh = mesh0;
            for level in 0..levels {
                if level > 0 {
                    mesh = Arc::new(mesh.refine_uniform_red().mesh);
                }
                rows.push(uniform_row(case, &mesh, level, with_penalty, sign)?);
            }
            rows
        }
        StudyMode::Adaptive => adaptive_rows(case, mesh0, levels, with_penalty, sign, theta_mark)?,
    };
    Ok(StudyOutcome {
        mode,
        slopes: slopes(mode, &rows),
        rows,
    })
}

fn uniform_row(case: &ResolvedCase, mesh: &Arc<Mesh>, level: usize, with_penalty: bool, sign: UpperSign) -> Result<StudyRow> {
    let p = case.degree;
    let trial = Arc::new(FunctionSpace::new(mesh.clone(), p, Continuity::Continuous)?);
    let test = Arc::new(FunctionSpace::new(mesh.clone(), p, Continuity::Broken)?);
    let disc = Discretization::new(&case.problem, &trial, &test, case.params)?;
    let lin = disc.solve_linear()?;
    let errors = match &case.exact {
        Some(e) => Some(disc.ctx.error_norms(&lin.u, e)?),
        None => None,
    };
    let (under, over) = violations(case, lin.u.sampled_range());
    let mut row = StudyRow {
        level,
        h: mesh.h(),
        elements: mesh.num_elements(),
        trial_dofs: trial.ndofs(),
        test_dofs: test.ndofs(),
        l2_error: errors.map(|e| e.l2),
        vh_error: errors.map(|e| e.vh),
        eps_norm: lin.eps_norm,
        undershoot: under,
        overshoot: over,
        ..StudyRow::default()
    };
    if with_penalty {
        let cfg = PenaltyConfig::from_problem(&case.problem, sign);
        let pen = disc.newton_from(cfg, case.newton, lin.eps.coefficients().to_vec(), lin.u.coefficients().to_vec())?;
        let errors = match &case.exact {
            Some(e) => Some(disc.ctx.error_norms(&pen.u, e)?),
            None => None,
        };
        let (under, over) = violations(case, pen.u.sampled_range());
        row.pen_l2_error = errors.map(|e| e.l2);
        row.pen_vh_error = errors.map(|e| e.vh);
        row.pen_eps_norm = Some(pen.eps_norm);
        row.pen_linear_residual = Some(disc.linear_residual_norm(&pen.u)?);
        row.pen_undershoot = Some(under);
        row.pen_overshoot = Some(over);
        row.newton_iterations = pen.newton.as_ref().map(|n| n.iterations());
    }
    Ok(row)
}

fn violations(case: &ResolvedCase, range: (f64, f64)) -> (f64, f64) {
    let b = &case.problem.bounds;
    (
        b.lower.map_or(0.0, |lo| (lo - range.0).max(0.0)),
        b.upper.map_or(0.0, |hi| (range.1 - hi).max(0.0)),
    )
}

fn adaptive_rows(
    case: &ResolvedCase,
    mesh0: Arc<Mesh>,
    levels: usize,
    with_penalty: bool,
    sign: UpperSign,
    theta_mark: f64,
) -> Result<Vec<StudyRow>> {
    let opts = AdaptOptions {
        degree: case.degree,
        theta_mark,
        max_levels: levels,
        penalty: with_penalty.then_some(sign),
        newton: case.newton,
        track_linear: with_penalty,
        exact: case.exact.clone(),
        params: case.params,
        ..AdaptOptions::default()
    };
    let mut rows = Vec::new();
    let mut extra: Result<()> = Ok(());
    let outcome = adaptive_solve_loop(&case.problem, mesh0, &opts, |view| {
        if extra.is_err() {
            return;
        }
        let r = view.record;
        let mut row = StudyRow {
            level: r.level,
            h: view.mesh.h(),
            elements: r.elements,
            trial_dofs: r.trial_dofs,
            test_dofs: r.test_dofs,
            ..StudyRow::default()
        };
        let unpenalized = view.linear.unwrap_or(view.solution);
        let mut fill = || -> Result<()> {
            let test = unpenalized.eps.space().clone();
            let disc = Discretization::new(&case.problem, unpenalized.u.space(), &test, opts.params)?;
            let errors = match &case.exact {
                Some(e) => Some(disc.ctx.error_norms(&unpenalized.u, e)?),
                None => None,
            };
            row.l2_error = errors.map(|e| e.l2);
            row.vh_error = errors.map(|e| e.vh);
            row.eps_norm = unpenalized.eps_norm;
            (row.undershoot, row.overshoot) = violations(case, unpenalized.u.sampled_range());
            if with_penalty {
                row.pen_l2_error = r.l2_error;
                row.pen_vh_error = r.vh_error;
                row.pen_eps_norm = Some(r.eps_norm);
                row.pen_linear_residual = Some(disc.linear_residual_norm(&view.solution.u)?);
                row.pen_undershoot = Some(r.undershoot);
                row.pen_overshoot = Some(r.overshoot);
                row.newton_iterations = Some(r.newton_iterations);
            }
            Ok(())
        };
        extra = fill();
        rows.push(row);
    })?;
    extra?;
    if let Some(e) = outcome.failure {
        if rows.is_empty() {
            return Err(e);
        }
    }
    Ok(rows)
}
