//! Bound-penalized solve of the advected tanh layer with the damped Newton
//! iteration, compared with the unpenalized solution.
//!
//! `cargo run --example penalized_newton -- [gamma0]`

use std::sync::Arc;

use dg_resmin::app::report::bound_violation_report;
use dg_resmin::app::{find_case, RunSettings};
use dg_resmin::fespace::{Continuity, FunctionSpace};
use dg_resmin::penalty::{PenaltyConfig, UpperSign};
use dg_resmin::solver::Discretization;

fn main() -> dg_resmin::Result<()> {
    let gamma0 = std::env::args().nth(1).and_then(|s| s.parse().ok());
    let settings = RunSettings {
        gamma0,
        ..RunSettings::default()
    };
    let case = settings.resolve(find_case("case1")?)?;
    let mesh = Arc::new(case.case.initial_mesh()?);
    let trial = Arc::new(FunctionSpace::new(mesh.clone(), case.degree, Continuity::Continuous)?);
    let test = Arc::new(FunctionSpace::new(mesh, case.degree, Continuity::Broken)?);
    let disc = Discretization::new(&case.problem, &trial, &test, case.params)?;

    let linear = disc.solve_linear()?;
    let cfg = PenaltyConfig::from_problem(&case.problem, UpperSign::Restoring);
    let pen = disc.newton_solve(cfg, case.newton)?;
    let report = pen.newton.as_ref().expect("penalized solves carry a report");

    println!("{:>3} {:>12} {:>10} {:>10} {:>12}", "k", "|R|", "t", "zeta", "|du|");
    for r in &report.log {
        println!("{:>3} {:>12.4e} {:>10.3e} {:>10.1e} {:>12.4e}", r.k, r.residual_norm, r.t, r.zeta, r.increment_norm);
    }
    println!("converged = {} ({})", report.converged, report.reason);
    let bounds = case.problem.bounds;
    let vl = bound_violation_report(&linear.u, &bounds)?;
    let vp = bound_violation_report(&pen.u, &bounds)?;
    println!("unpenalized: range [{:.4}, {:.4}], violation {:.3e}", vl.min, vl.max, vl.worst());
    println!("penalized:   range [{:.4}, {:.4}], violation {:.3e}", vp.min, vp.max, vp.worst());
    println!("linear residual: {:.4e} -> {:.4e}", linear.eps_norm, disc.linear_residual_norm(&pen.u)?);
    Ok(())
}
