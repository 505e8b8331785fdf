//! Adaptive refinement of the rotating flow with diffusion, driven by the
//! residual representative.
//!
//! `cargo run --release --example adaptive_loop -- [levels] [theta]`

use std::sync::Arc;

use dg_resmin::adapt::{adaptive_solve_loop, AdaptOptions};
use dg_resmin::app::{find_case, RunSettings};
use dg_resmin::penalty::UpperSign;

fn main() -> dg_resmin::Result<()> {
    let mut args = std::env::args().skip(1);
    let levels = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let theta = args.next().and_then(|s| s.parse().ok());
    let settings = RunSettings {
        theta_mark: theta,
        ..RunSettings::default()
    };
    let case = settings.resolve(find_case("case3")?)?;
    let opts = AdaptOptions {
        degree: case.degree,
        theta_mark: case.theta_mark,
        max_levels: levels,
        penalty: Some(UpperSign::Restoring),
        newton: case.newton,
        params: case.params,
        track_linear: true,
        ..AdaptOptions::default()
    };
    println!("{:>5} {:>8} {:>8} {:>11} {:>10} {:>10} {:>7}", "level", "elems", "dofs", "estimate", "viol", "lin viol", "newton");
    let out = adaptive_solve_loop(&case.problem, Arc::new(case.case.initial_mesh()?), &opts, |view| {
        let r = view.record;
        let lin = r.linear_undershoot.zip(r.linear_overshoot).map_or(f64::NAN, |(a, b)| a.max(b));
        println!(
            "{:>5} {:>8} {:>8} {:>11.4e} {:>10.3e} {:>10.3e} {:>7}",
            r.level,
            r.elements,
            r.trial_dofs + r.test_dofs,
            r.estimate,
            r.undershoot.max(r.overshoot),
            lin,
            r.newton_iterations
        );
    })?;
    if let Some(e) = out.failure {
        println!("stopped early: {e}");
    }
    let mesh = &out.mesh;
    let near = (0..mesh.num_elements()).filter(|&t| mesh.centroid(t)[0] <= 0.05).count();
    println!("{near} of {} elements have centroids within 0.05 of x = 0", mesh.num_elements());
    Ok(())
}
