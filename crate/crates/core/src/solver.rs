//! Residual minimization as a saddle-point problem and the damped Newton
//! method for its penalized version.
//!
//! Unknowns are ordered `x = (eps, u)`: the residual representative over the
//! broken test space first, then the trial coefficients. The block Jacobian
//! is `[[G, B], [B^T, 0]]`.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{DiscreteFunction, FunctionSpace};
use crate::forms::{vh_norm, FormContext, FormParams, ProblemSpec};
use crate::penalty::{Penalty, PenaltyConfig};
use crate::sparse::{norm2, CsrMatrix, SparseLu, TripletBuilder};

/// Relative residual required of every block solve.
pub const LINEAR_RTOL: f64 = 1e-10;

/// Block system of one linear or Newton step.
#[derive(Clone, Debug)]
pub struct SaddleSystem<'s> {
    pub gram: &'s CsrMatrix,
    /// `b_h`, or its penalized derivative at the current iterate.
    pub b_u: CsrMatrix,
    pub load: &'s [f64],
    /// `b_h(u, .)` plus the penalty residual at the current iterate.
    pub nonlinear: Vec<f64>,
}

impl SaddleSystem<'_> {
    pub fn jacobian(&self) -> CsrMatrix {
        let nv = self.gram.nrows();
        let nu = self.b_u.ncols();
        let mut t = TripletBuilder::with_capacity(nv + nu, nv + nu, self.gram.nnz() + 2 * self.b_u.nnz());
        for (r, c, v) in self.gram.triplets() {
            t.push(r, c, v);
        }
        for (r, c, v) in self.b_u.triplets() {
            t.push(r, nv + c, v);
            t.push(nv + c, r, v);
        }
        t.build()
    }

    /// `[L - G eps - N(u); -B^T eps]`.
    pub fn residual(&self, eps: &[f64]) -> Vec<f64> {
        let ge = self.gram.mul_vec(eps);
        let mut r: Vec<f64> = self
            .load
            .iter()
            .zip(&ge)
            .zip(&self.nonlinear)
            .map(|((l, g), n)| l - g - n)
            .collect();
        r.extend(self.b_u.mul_transpose_vec(eps).into_iter().map(|v| -v));
        r
    }
}

/// Damped Newton settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Slope threshold of the acceptance test.
    pub omega: f64,
    /// Stop once the accepted (damped) step satisfies `|u^{k+1} - u^k|_{L^2} < tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Damping retries allowed within one iteration.
    pub max_retries: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            omega: 0.5,
            tol: 1e-5,
            max_iter: 100,
            max_retries: 20,
        }
    }
}

impl NewtonOptions {
    fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega < 1.0) || !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidConfiguration(format!("bad Newton options {self:?}")));
        }
        Ok(())
    }
}

/// Damping bookkeeping of the damped Newton iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonState {
    pub k: usize,
    pub zeta: f64,
    pub residual_norm: f64,
}

impl NewtonState {
    /// `t = 1 / (1 + zeta |R|)`.
    pub fn step_length(&self) -> f64 {
        1.0 / (1.0 + self.zeta * self.residual_norm)
    }

    /// Whether a trial step with new residual norm `r_new` passes
    /// `(1/t)(1 - r_new/|R|) >= omega`.
    pub fn accepts(&self, r_new: f64, omega: f64) -> bool {
        let t = self.step_length();
        (1.0 - r_new / self.residual_norm) / t >= omega
    }

    pub fn reject(&mut self) {
        self.zeta = if self.zeta == 0.0 { 1.0 } else { 10.0 * self.zeta };
    }

    pub fn accept(&mut self, r_new: f64) {
        self.zeta /= 10.0;
        self.residual_norm = r_new;
        self.k += 1;
    }
}

/// One accepted Newton iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonRecord {
    pub k: usize,
    /// `|R^k|` before the step.
    pub residual_norm: f64,
    pub t: f64,
    pub zeta: f64,
    /// `|u^{k+1} - u^k|_{L^2}`.
    pub increment_norm: f64,
    pub retries: usize,
    /// Relative asymmetry of the block Jacobian used for the step.
    pub jacobian_asymmetry: f64,
}

#[derive(Clone, Debug, Default)]
pub struct NewtonReport {
    pub converged: bool,
    pub reason: String,
    pub log: Vec<NewtonRecord>,
    /// Coefficients of the last accepted iterate.
    pub u: Vec<f64>,
    pub eps: Vec<f64>,
    pub final_residual_norm: f64,
}

impl NewtonReport {
    /// Accepted Newton steps.
    pub fn iterations(&self) -> usize {
        self.log.len()
    }

    pub fn total_retries(&self) -> usize {
        self.log.iter().map(|r| r.retries).sum()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "residual_norm", "t", "zeta", "increment_norm"])?;
        for r in &self.log {
            out.write_record([
                r.k.to_string(),
                format!("{:e}", r.residual_norm),
                format!("{:e}", r.t),
                format!("{:e}", r.zeta),
                format!("{:e}", r.increment_norm),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Result of a residual-minimization solve.
#[derive(Clone, Debug)]
pub struct ResminSolution {
    pub u: DiscreteFunction,
    pub eps: DiscreteFunction,
    /// `|eps|_{V_h}`.
    pub eps_norm: f64,
    /// Present for penalized solves.
    pub newton: Option<NewtonReport>,
}

/// Assembled operators of one discretization `(U_h, V_h)`.
pub struct Discretization<'a> {
    pub ctx: FormContext<'a>,
    pub trial: Arc<FunctionSpace>,
    pub test: Arc<FunctionSpace>,
    pub gram: CsrMatrix,
    pub bh: CsrMatrix,
    pub load: Vec<f64>,
}

impl<'a> Discretization<'a> {
    pub fn new(
        problem: &'a ProblemSpec,
        trial: &Arc<FunctionSpace>,
        test: &'a Arc<FunctionSpace>,
        params: FormParams,
    ) -> Result<Self> {
        let ctx = FormContext::new(problem, test, params)?;
        let bh = ctx.assemble_bh(trial)?;
        let gram = ctx.assemble_gram();
        let load = ctx.assemble_load();
        Ok(Self {
            ctx,
            trial: trial.clone(),
            test: test.clone(),
            gram,
            bh,
            load,
        })
    }

    pub fn load_norm(&self) -> f64 {
        norm2(&self.load)
    }

    fn split(&self, x: &[f64]) -> Result<(DiscreteFunction, DiscreteFunction)> {
        let nv = self.test.ndofs();
        let eps = DiscreteFunction::new(self.test.clone(), x[..nv].to_vec())?;
        let u = DiscreteFunction::new(self.trial.clone(), x[nv..].to_vec())?;
        Ok((eps, u))
    }

    /// The unpenalized saddle system `(eps, v) + b_h(u, v) = l_h(v)`,
    /// `b_h(z, eps) = 0`.
    pub fn solve_linear(&self) -> Result<ResminSolution> {
        let sys = SaddleSystem {
            gram: &self.gram,
            b_u: self.bh.clone(),
            load: &self.load,
            nonlinear: vec![0.0; self.load.len()],
        };
        let mut rhs = self.load.clone();
        rhs.resize(self.test.ndofs() + self.trial.ndofs(), 0.0);
        let x = SparseLu::new(sys.jacobian())?.solve(&rhs, LINEAR_RTOL)?;
        let (eps, u) = self.split(&x)?;
        let eps_norm = vh_norm(eps.coefficients(), &self.gram)?;
        Ok(ResminSolution {
            u,
            eps,
            eps_norm,
            newton: None,
        })
    }

    /// Newton system at `(eps, u)`: `B_u = b_h + dP(u)`, `N(u) = b_h(u, .) + P(u)`.
    pub fn newton_system(&self, penalty: Option<&Penalty>, u: &DiscreteFunction) -> Result<SaddleSystem<'_>> {
        let mut nonlinear = self.bh.mul_vec(u.coefficients());
        let b_u = match penalty {
            Some(p) => {
                for (n, r) in nonlinear.iter_mut().zip(p.residual(u)?) {
                    *n += r;
                }
                self.bh.add_scaled(1.0, &p.jacobian(u, &self.trial)?)
            }
            None => self.bh.clone(),
        };
        Ok(SaddleSystem {
            gram: &self.gram,
            b_u,
            load: &self.load,
            nonlinear,
        })
    }

    /// Damped Newton from the linear resmin solution.
    pub fn newton_solve(&self, cfg: PenaltyConfig, opts: NewtonOptions) -> Result<ResminSolution> {
        let start = self.solve_linear()?;
        self.newton_from(cfg, opts, start.eps.coefficients().to_vec(), start.u.coefficients().to_vec())
    }

    /// Damped Newton from a given iterate.
    pub fn newton_from(&self, cfg: PenaltyConfig, opts: NewtonOptions, eps0: Vec<f64>, u0: Vec<f64>) -> Result<ResminSolution> {
        opts.validate()?;
        let penalty = Penalty::new(&self.ctx, cfg)?;
        let nv = self.test.ndofs();
        let mut eps = eps0;
        let mut u = DiscreteFunction::new(self.trial.clone(), u0)?;
        let mut sys = self.newton_system(Some(&penalty), &u)?;
        let mut res = sys.residual(&eps);
        let mut state = NewtonState {
            k: 0,
            zeta: 0.0,
            residual_norm: norm2(&res),
        };
        let mut report = NewtonReport::default();
        let fail = |mut report: NewtonReport, reason: String, eps: &[f64], u: &DiscreteFunction, r: f64| {
            report.reason = reason;
            report.eps = eps.to_vec();
            report.u = u.coefficients().to_vec();
            report.final_residual_norm = r;
            Err(Error::NonConvergence(Box::new(report)))
        };
        loop {
            if state.k >= opts.max_iter {
                let reason = format!("no convergence after {} iterations", opts.max_iter);
                return fail(report, reason, &eps, &u, state.residual_norm);
            }
            let jac = sys.jacobian();
            let asym = jac.asymmetry() / jac.max_abs().max(f64::MIN_POSITIVE);
            let dx = SparseLu::new(jac)?.solve(&res, LINEAR_RTOL)?;
            let floor = 1e-12 * (self.load_norm() + norm2(&sys.nonlinear));
            let mut retries = 0;
            let (t, zeta, eps_new, u_new, sys_new, res_new) = loop {
                let t = state.step_length();
                let eps_new: Vec<f64> = eps.iter().zip(&dx[..nv]).map(|(a, d)| a + t * d).collect();
                let u_coef: Vec<f64> = u.coefficients().iter().zip(&dx[nv..]).map(|(a, d)| a + t * d).collect();
                let u_new = DiscreteFunction::new(self.trial.clone(), u_coef)?;
                let sys_new = self.newton_system(Some(&penalty), &u_new)?;
                let res_new = sys_new.residual(&eps_new);
                let r_new = norm2(&res_new);
                if r_new <= floor || state.residual_norm <= floor || state.accepts(r_new, opts.omega) {
                    break (t, state.zeta, eps_new, u_new, sys_new, res_new);
                }
                if retries == opts.max_retries {
                    let reason = format!(
                        "damping retry cap {} reached at iteration {} (|R| = {:e})",
                        opts.max_retries, state.k, state.residual_norm
                    );
                    return fail(report, reason, &eps, &u, state.residual_norm);
                }
                retries += 1;
                state.reject();
            };
            let diff: Vec<f64> = u_new
                .coefficients()
                .iter()
                .zip(u.coefficients())
                .map(|(a, b)| a - b)
                .collect();
            let increment_norm = self.ctx.l2_norm(&DiscreteFunction::new(self.trial.clone(), diff)?);
            report.log.push(NewtonRecord {
                k: state.k,
                residual_norm: state.residual_norm,
                t,
                zeta,
                increment_norm,
                retries,
                jacobian_asymmetry: asym,
            });
            state.accept(norm2(&res_new));
            eps = eps_new;
            u = u_new;
            sys = sys_new;
            res = res_new;
            if !increment_norm.is_finite() {
                return fail(report, "non-finite iterate".into(), &eps, &u, state.residual_norm);
            }
            if increment_norm < opts.tol {
                break;
            }
        }
        report.converged = true;
        report.reason = format!("converged in {} iterations", report.iterations());
        report.final_residual_norm = state.residual_norm;
        report.eps = eps.clone();
        report.u = u.coefficients().to_vec();
        let eps = DiscreteFunction::new(self.test.clone(), eps)?;
        let eps_norm = vh_norm(eps.coefficients(), &self.gram)?;
        Ok(ResminSolution {
            u,
            eps,
            eps_norm,
            newton: Some(report),
        })
    }

    /// `|G^{-1}(L - B u)|_{V_h}`, the linear residual of any trial function.
    pub fn linear_residual_norm(&self, u: &DiscreteFunction) -> Result<f64> {
        let bu = self.bh.mul_vec(u.coefficients());
        let r: Vec<f64> = self.load.iter().zip(&bu).map(|(l, b)| l - b).collect();
        dual_norm(&self.gram, &r)
    }
}

/// `sqrt(r^T G^{-1} r)` for a symmetric positive definite `G`.
pub fn dual_norm(gram: &CsrMatrix, r: &[f64]) -> Result<f64> {
    let llt = gram
        .to_faer()
        .sp_cholesky(faer::Side::Lower)
        .map_err(|e| Error::NumericalBreakdown(format!("Gram matrix is not positive definite: {e:?}")))?;
    use faer::prelude::*;
    let rhs = faer::Col::<f64>::from_fn(r.len(), |i| r[i]);
    let z = llt.solve(&rhs);
    let q: f64 = (0..r.len()).map(|i| r[i] * z[i]).sum();
    Ok(q.max(0.0).sqrt())
}

pub fn solve_linear_resmin(
    problem: &ProblemSpec,
    trial: &Arc<FunctionSpace>,
    test: &Arc<FunctionSpace>,
    params: FormParams,
) -> Result<ResminSolution> {
    Discretization::new(problem, trial, test, params)?.solve_linear()
}

pub fn newton_solve(
    problem: &ProblemSpec,
    trial: &Arc<FunctionSpace>,
    test: &Arc<FunctionSpace>,
    params: FormParams,
    cfg: PenaltyConfig,
    opts: NewtonOptions,
) -> Result<ResminSolution> {
    Discretization::new(problem, trial, test, params)?.newton_solve(cfg, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::Continuity;
    use crate::forms::{Bounds, Diffusion};
    use crate::mesh::{Mesh, Rectangle};
    use crate::penalty::UpperSign;

    fn spaces(n: usize, p: usize) -> (Arc<FunctionSpace>, Arc<FunctionSpace>) {
        let mesh = Arc::new(Mesh::structured(n, n, Rectangle::UNIT_SQUARE).unwrap());
        (
            Arc::new(FunctionSpace::new(mesh.clone(), p, Continuity::Continuous).unwrap()),
            Arc::new(FunctionSpace::new(mesh, p, Continuity::Broken).unwrap()),
        )
    }

    fn linear_problem() -> ProblemSpec {
        // u* = x
        ProblemSpec::default()
            .with_constant_velocity([1.0, 0.0])
            .with_reaction(|_| 1.0)
            .with_source(|x| 1.0 + x[0])
            .with_dirichlet(|x| x[0])
    }

    #[test]
    fn step_length_and_acceptance() {
        let mut s = NewtonState {
            k: 0,
            zeta: 0.0,
            residual_norm: 9.0,
        };
        assert_eq!(s.step_length(), 1.0);
        s.reject();
        assert_eq!(s.zeta, 1.0);
        assert!((s.step_length() - 0.1).abs() < 1e-15);
        s.reject();
        assert_eq!(s.zeta, 10.0);
        s.accept(1.0);
        assert_eq!((s.k, s.zeta, s.residual_norm), (1, 1.0, 1.0));
        let full = NewtonState {
            k: 0,
            zeta: 0.0,
            residual_norm: 1.0,
        };
        assert!(full.accepts(0.5, 0.5));
        assert!(!full.accepts(0.51, 0.5));
    }

    #[test]
    fn reproduces_linear_solution() {
        let (u, v) = spaces(4, 1);
        let problem = linear_problem();
        let sol = solve_linear_resmin(&problem, &u, &v, FormParams::default()).unwrap();
        let exact = u.interpolate(|x| x[0]);
        let err = sol
            .u
            .coefficients()
            .iter()
            .zip(exact.coefficients())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        assert!(sol.eps_norm < 1e-10);
    }

    #[test]
    fn zero_data_gives_zero() {
        let (u, v) = spaces(3, 2);
        let problem = ProblemSpec::default()
            .with_velocity(|x| [-x[1], x[0]])
            .with_diffusion(Diffusion::Scalar(1e-2));
        let sol = solve_linear_resmin(&problem, &u, &v, FormParams::default()).unwrap();
        assert!(sol.u.coefficients().iter().all(|&c| c == 0.0));
        assert_eq!(sol.eps_norm, 0.0);
    }

    #[test]
    fn orthogonality_and_riesz_identity() {
        let (u, v) = spaces(5, 1);
        let problem = ProblemSpec::default()
            .with_velocity(|x| [1.0, 0.3 + x[0]])
            .with_diffusion(Diffusion::Scalar(1e-2))
            .with_source(|x| (4.0 * x[0]).sin() + x[1])
            .with_dirichlet(|x| x[1] * x[1]);
        let disc = Discretization::new(&problem, &u, &v, FormParams::default()).unwrap();
        let sol = disc.solve_linear().unwrap();
        let bt = disc.bh.mul_transpose_vec(sol.eps.coefficients());
        assert!(bt.iter().fold(0.0_f64, |m, x| m.max(x.abs())) <= 1e-10 * disc.load_norm());
        let dual = disc.linear_residual_norm(&sol.u).unwrap();
        assert!(sol.eps_norm > 0.0);
        assert!((dual - sol.eps_norm).abs() <= 1e-8 * sol.eps_norm);
    }

    #[test]
    fn inactive_bounds_converge_in_one_step() {
        let (u, v) = spaces(4, 1);
        let problem = linear_problem().with_bounds(Bounds::new(-10.0, 10.0)).with_gamma0(0.01);
        let disc = Discretization::new(&problem, &u, &v, FormParams::default()).unwrap();
        let cfg = PenaltyConfig::from_problem(&problem, UpperSign::Restoring);
        let sol = disc.newton_solve(cfg, NewtonOptions::default()).unwrap();
        let report = sol.newton.unwrap();
        assert_eq!(report.iterations(), 1);
        assert!(report.converged);
        let lin = disc.solve_linear().unwrap();
        let diff = sol
            .u
            .coefficients()
            .iter()
            .zip(lin.u.coefficients())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn penalized_solve_respects_bounds_better() {
        let (u, v) = spaces(8, 1);
        let eps = 0.02;
        let problem = ProblemSpec::default()
            .with_constant_velocity([3.0 / 10f64.sqrt(), 1.0 / 10f64.sqrt()])
            .with_dirichlet(move |x| 0.5 * (((x[1] - x[0] / 3.0 - 0.25) / eps).tanh() + 1.0))
            .with_bounds(Bounds::new(0.0, 1.0))
            .with_gamma0(1e-5);
        let disc = Discretization::new(&problem, &u, &v, FormParams::default()).unwrap();
        let lin = disc.solve_linear().unwrap();
        let cfg = PenaltyConfig::from_problem(&problem, UpperSign::Restoring);
        let sol = disc.newton_solve(cfg, NewtonOptions::default()).unwrap();
        let violation = |c: &[f64]| c.iter().map(|&x| (-x).max(x - 1.0).max(0.0)).fold(0.0, f64::max);
        let vl = violation(lin.u.coefficients());
        let vp = violation(sol.u.coefficients());
        assert!(vl > 1e-2, "{vl}");
        assert!(vp < 0.1 * vl, "{vp} vs {vl}");
        let report = sol.newton.as_ref().unwrap();
        for r in &report.log {
            assert!(r.jacobian_asymmetry <= 1e-12);
        }
        // accepted residuals decrease
        for w in report.log.windows(2) {
            assert!(w[1].residual_norm < w[0].residual_norm);
        }
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("k,residual_norm,t,zeta,increment_norm\n"));
        assert_eq!(text.lines().count(), report.iterations() + 1);
        // the penalized minimizer pays in the linear residual
        assert!(disc.linear_residual_norm(&sol.u).unwrap() >= lin.eps_norm - 1e-12);
    }

    #[test]
    fn saddle_residual_vanishes_at_solution() {
        let (u, v) = spaces(4, 2);
        let problem = linear_problem().with_diffusion(Diffusion::Scalar(0.1)).with_source(|x| 1.0 + x[0]);
        let disc = Discretization::new(&problem, &u, &v, FormParams::default()).unwrap();
        let sol = disc.solve_linear().unwrap();
        let sys = disc.newton_system(None, &sol.u).unwrap();
        let r = sys.residual(sol.eps.coefficients());
        assert!(norm2(&r) <= 1e-10 * disc.load_norm());
    }
}
