//! The `run` pipeline driven by a TOML configuration, as the CLI does it.
//!
//! `cargo run --example configured_run -- [out_dir]`

use std::path::PathBuf;

use dg_resmin::app::{run_case, RunSettings};

const CONFIG: &str = r#"
p = 1
tol = 1e-5
threads = 1

[bounds]
lower = 0.0
upper = 1.0

[penalty]
gamma0 = 1e-5
upper_sign = "restoring"
"#;

fn main() -> dg_resmin::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
    let mut settings = RunSettings::default().merge_toml(CONFIG)?;
    settings.out_dir = out;
    let s = run_case("case1", &settings)?;
    if let (Some(p), Some(l)) = (&s.violations, &s.linear_violations) {
        println!("violation {:.3e} penalized, {:.3e} unpenalized", p.worst(), l.worst());
    }
    for f in &s.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
