//! Cross-section CSV and VTK export of a solution.
//!
//! `cargo run --example export_outputs -- [out_dir]`

use std::path::PathBuf;
use std::sync::Arc;

use dg_resmin::app::report::{export_vtk, write_cross_section};
use dg_resmin::app::{find_case, RunSettings};
use dg_resmin::fespace::{Continuity, FunctionSpace};
use dg_resmin::solver::Discretization;

fn main() -> dg_resmin::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out/export"));
    std::fs::create_dir_all(&dir).map_err(|e| dg_resmin::Error::io(&dir, e))?;
    let case = RunSettings::default().resolve(find_case("case1")?)?;
    let mesh = Arc::new(case.case.initial_mesh()?.refine_uniform_red().mesh);
    let trial = Arc::new(FunctionSpace::new(mesh.clone(), case.degree, Continuity::Continuous)?);
    let test = Arc::new(FunctionSpace::new(mesh.clone(), case.degree, Continuity::Broken)?);
    let sol = Discretization::new(&case.problem, &trial, &test, case.params)?.solve_linear()?;
    let exact = case.exact.as_ref().map(|e| trial.interpolate(|x| (e.value)(x)));

    let mut fields = vec![("u_h", &sol.u)];
    if let Some(e) = &exact {
        fields.push(("u_exact", e));
    }
    let (a, b) = case.case.defaults.cross_section.unwrap_or(([0.0, 0.0], [1.0, 1.0]));
    let csv_path = dir.join("cross_section.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| dg_resmin::Error::io(&csv_path, e))?;
    let values = write_cross_section(file, a, b, 201, &fields)?;
    let peak = values[0].iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    println!("wrote {} (max u_h along the line {peak:.4})", csv_path.display());

    fields.push(("eps_h", &sol.eps));
    let vtk_path = dir.join("solution.vtk");
    export_vtk(&mesh, &fields, &vtk_path)?;
    println!("wrote {}", vtk_path.display());
    Ok(())
}
