use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dg_resmin::app::{self, RunSettings, StudyMode};
use dg_resmin::forms::InflowSign;
use dg_resmin::penalty::UpperSign;
use dg_resmin::Result;

#[derive(Parser)]
#[command(name = "dg-resmin", version, about = "Bound-preserving DG residual minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a case and write its outputs.
    Run {
        case: String,
        #[command(flatten)]
        opts: Opts,
    },
    /// Convergence study over a sequence of meshes.
    Study {
        case: String,
        /// `uniform` (red refinement) or `adaptive`.
        #[arg(long, default_value = "uniform")]
        mode: StudyMode,
        #[command(flatten)]
        opts: Opts,
    },
    /// List the built-in cases.
    List,
}

#[derive(Args)]
struct Opts {
    /// TOML file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Polynomial degree.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    gamma0: Option<f64>,
    /// Newton tolerance on the L2 step.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    theta_mark: Option<f64>,
    #[arg(long)]
    no_penalty: bool,
    /// `restoring` or `printed`.
    #[arg(long)]
    upper_sign: Option<UpperSign>,
    /// Inflow boundary sign: `printed` or `coercive`.
    #[arg(long)]
    inflow: Option<InflowSign>,
    #[arg(long, allow_hyphen_values = true)]
    lower: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    upper: Option<f64>,
    /// Stop adaptive refinement at this many test dofs.
    #[arg(long)]
    max_dofs: Option<usize>,
    /// Use the inflow ramp exactly as printed, tanh(eps (r - 0.35)).
    #[arg(long)]
    verbatim_ramp: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Opts {
    fn settings(&self) -> Result<RunSettings> {
        let mut s = RunSettings::default();
        if let Some(path) = &self.config {
            s = s.merge_file(path)?;
        }
        s.degree = self.p.or(s.degree);
        s.gamma0 = self.gamma0.or(s.gamma0);
        s.tol = self.tol.or(s.tol);
        s.levels = self.levels.or(s.levels);
        s.theta_mark = self.theta_mark.or(s.theta_mark);
        s.penalty &= !self.no_penalty;
        s.upper_sign = self.upper_sign.unwrap_or(s.upper_sign);
        s.inflow = self.inflow.unwrap_or(s.inflow);
        s.lower = self.lower.or(s.lower);
        s.upper = self.upper.or(s.upper);
        s.max_dofs = self.max_dofs.or(s.max_dofs);
        s.verbatim_ramp |= self.verbatim_ramp;
        s.out_dir = self.out_dir.clone().unwrap_or(s.out_dir);
        s.threads = self.threads.or(s.threads);
        s.seed = self.seed.unwrap_or(s.seed);
        s.validate()?;
        Ok(s)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::List => {
            for c in app::cases() {
                println!("{:<13} {}", c.name, c.description);
            }
        }
        Command::Run { case, opts } => {
            let settings = opts.settings()?;
            app::configure_threads(settings.threads);
            let s = app::run_case(&case, &settings)?;
            println!(
                "{}: {} elements, {} trial dofs, eps_norm = {:.6e}",
                s.case,
                s.mesh.num_elements(),
                s.solution.u.space().ndofs(),
                s.solution.eps_norm
            );
            if let Some(n) = &s.newton {
                println!("newton: converged = {}, {} iterations, {} retries", n.converged, n.iterations(), n.total_retries());
            }
            if let Some(v) = &s.violations {
                println!("violation: {:.3e} (min {:.6}, max {:.6})", v.worst(), v.min, v.max);
            }
            if let Some(v) = &s.linear_violations {
                println!("unpenalized violation: {:.3e}", v.worst());
            }
            if let Some(f) = &s.adapt_failure {
                println!("refinement stopped early: {f}");
            }
            for f in &s.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Study { case, mode, opts } => {
            let settings = opts.settings()?;
            app::configure_threads(settings.threads);
            let def = app::find_case(&case)?;
            let resolved = settings.resolve(def)?;
            let levels = resolved.levels;
            let out = app::convergence_study(&resolved, levels, mode, settings.penalty, settings.upper_sign, resolved.theta_mark)?;
            let dir = settings.out_dir.join(&case);
            std::fs::create_dir_all(&dir).map_err(|e| dg_resmin::Error::Io { path: dir.clone(), source: e })?;
            out.save(&dir)?;
            println!("{:>5} {:>10} {:>9} {:>12} {:>12} {:>12}", "level", "h", "dofs", "l2", "vh", "eps");
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4e}"));
            for r in &out.rows {
                println!(
                    "{:>5} {:>10.4e} {:>9} {:>12} {:>12} {:>12.4e}",
                    r.level, r.h, r.trial_dofs, fmt(r.l2_error), fmt(r.vh_error), r.eps_norm
                );
            }
            println!("slopes: l2 {}, vh {}, eps {}", fmt(out.slopes.l2), fmt(out.slopes.vh), fmt(out.slopes.eps));
            println!("wrote {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
