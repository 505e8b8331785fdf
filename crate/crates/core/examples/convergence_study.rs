//! Uniform and adaptive convergence studies with fitted slopes.
//!
//! `cargo run --release --example convergence_study -- [levels]`

use dg_resmin::app::{convergence_study, find_case, RunSettings, StudyMode};
use dg_resmin::penalty::UpperSign;

fn main() -> dg_resmin::Result<()> {
    let levels = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let case = RunSettings::default().resolve(find_case("manufactured")?)?;
    for mode in [StudyMode::Uniform, StudyMode::Adaptive] {
        let out = convergence_study(&case, levels, mode, false, UpperSign::Restoring, case.theta_mark)?;
        println!("{mode:?}");
        for r in &out.rows {
            println!(
                "  {:>2} h = {:.4e} N = {:>6} L2 {:.4e} V_h {:.4e} eps {:.4e}",
                r.level,
                r.h,
                r.trial_dofs,
                r.l2_error.unwrap_or(f64::NAN),
                r.vh_error.unwrap_or(f64::NAN),
                r.eps_norm
            );
        }
        let s = out.slopes;
        println!(
            "  slopes: L2 {:.3}, V_h {:.3}, eps {:.3}",
            s.l2.unwrap_or(f64::NAN),
            s.vh.unwrap_or(f64::NAN),
            s.eps.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
