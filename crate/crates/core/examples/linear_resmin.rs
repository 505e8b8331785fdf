//! Unpenalized residual minimization on the smooth manufactured problem.
//!
//! `cargo run --example linear_resmin -- [n] [p]`

use std::sync::Arc;

use dg_resmin::app::{find_case, RunSettings};
use dg_resmin::fespace::{Continuity, FunctionSpace};
use dg_resmin::mesh::{Mesh, Rectangle};
use dg_resmin::solver::Discretization;

fn main() -> dg_resmin::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().ok());
    let n = args.next().flatten().unwrap_or(16);
    let p = args.next().flatten().unwrap_or(1);
    let case = RunSettings::default().resolve(find_case("manufactured")?)?;
    let exact = case.exact.as_ref().expect("manufactured case has an exact solution");

    let mesh = Arc::new(Mesh::structured(n, n, Rectangle::UNIT_SQUARE)?);
    let trial = Arc::new(FunctionSpace::new(mesh.clone(), p, Continuity::Continuous)?);
    let test = Arc::new(FunctionSpace::new(mesh, p, Continuity::Broken)?);
    let disc = Discretization::new(&case.problem, &trial, &test, case.params)?;
    let sol = disc.solve_linear()?;
    let err = disc.ctx.error_norms(&sol.u, exact)?;

    println!("n = {n}, p = {p}: {} trial dofs, {} test dofs", trial.ndofs(), test.ndofs());
    println!("|eps_h|_V = {:.6e}", sol.eps_norm);
    println!("|u - u_h|_L2 = {:.6e}, |u - u_h|_V = {:.6e}", err.l2, err.vh);
    println!("u_h(0.5, 0.5) = {:.6}", sol.u.evaluate([0.5, 0.5]).unwrap_or(f64::NAN));
    Ok(())
}
