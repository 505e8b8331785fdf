//! Consistent bound penalty `<gamma^-1 xi(u_h), v_h>_h` and its derivative.
//!
//! `xi_min = [(u - u_min) - gamma (A u - f)]_-` and
//! `xi_max = [(u_max - u) - gamma (A u - f)]_-`, where `A` is the strong
//! advection-diffusion-reaction operator applied elementwise. The penalty
//! vanishes wherever `A u = f` and the bounds hold, so the scheme stays
//! consistent.

use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fespace::{DiscreteFunction, FunctionSpace, Tabulation};
use crate::forms::{FormContext, ProblemSpec};
use crate::mesh::Mesh;
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Sign of the upper-bound term in `b_h^gamma`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UpperSign {
    /// `b_h + <xi_min, v> - <xi_max, v>`: overshoots are pulled back down.
    #[default]
    Restoring,
    /// `b_h + <xi_min, v> + <xi_max, v>`.
    Printed,
}

impl UpperSign {
    fn factor(self) -> f64 {
        match self {
            UpperSign::Restoring => -1.0,
            UpperSign::Printed => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UpperSign::Restoring => "restoring",
            UpperSign::Printed => "printed",
        }
    }
}

impl FromStr for UpperSign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "restoring" => Ok(UpperSign::Restoring),
            "printed" => Ok(UpperSign::Printed),
            other => Err(Error::InvalidConfiguration(format!(
                "upper_sign must be `printed` or `restoring`, got `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for UpperSign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyConfig {
    pub gamma0: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub upper_sign: UpperSign,
}

impl PenaltyConfig {
    /// Bounds and `gamma0` taken from the problem.
    pub fn from_problem(problem: &ProblemSpec, upper_sign: UpperSign) -> Self {
        Self {
            gamma0: problem.gamma0,
            lower: problem.bounds.lower,
            upper: problem.bounds.upper,
            upper_sign,
        }
    }

    pub fn is_active(&self) -> bool {
        self.lower.is_some() || self.upper.is_some()
    }
}

/// `x_- = (x - |x|) / 2`.
pub fn negative_part(x: f64) -> f64 {
    0.5 * (x - x.abs())
}

/// Jacobian indicator `(1 - sgn x) / 2` with `sgn 0 = 0`.
fn indicator(x: f64) -> f64 {
    if x < 0.0 {
        1.0
    } else if x > 0.0 {
        0.0
    } else {
        0.5
    }
}

/// `gamma_T = gamma0 (|beta|_inf,T / h_T + |K| / h_T^2 + |sigma|_inf,T)^-1`.
///
/// Suprema over `T` are sampled at the vertices and at `samples`
/// (barycentric points, usually the volume quadrature nodes).
pub fn compute_gamma(problem: &ProblemSpec, mesh: &Mesh, t: usize, gamma0: f64, samples: &[[f64; 3]]) -> Result<f64> {
    let h = mesh.diameter(t);
    let mut beta_max = 0.0_f64;
    let mut sigma_max = 0.0_f64;
    let vertices = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for l in vertices.iter().chain(samples) {
        let x = mesh.map_to_physical(t, *l);
        let b = (problem.velocity)(x);
        beta_max = beta_max.max(b[0].hypot(b[1]));
        sigma_max = sigma_max.max((problem.reaction)(x).abs());
    }
    let scale = beta_max / h + problem.diffusion.magnitude() / (h * h) + sigma_max;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidProblem(format!(
            "gamma is undefined on element {t}: velocity, diffusion and reaction all vanish"
        )));
    }
    Ok(gamma0 / scale)
}

/// The bound penalty on a fixed mesh, with per-element `gamma_T`.
pub struct Penalty<'c, 'a> {
    ctx: &'c FormContext<'a>,
    cfg: PenaltyConfig,
    gamma: Vec<f64>,
    second_order: bool,
}

impl<'c, 'a> Penalty<'c, 'a> {
    pub fn new(ctx: &'c FormContext<'a>, cfg: PenaltyConfig) -> Result<Self> {
        if !cfg.is_active() {
            return Err(Error::InvalidConfiguration("the penalty needs at least one bound".into()));
        }
        if !(cfg.gamma0 > 0.0 && cfg.gamma0 < 1.0) {
            return Err(Error::InvalidConfiguration(format!("gamma0 = {} must lie in (0, 1)", cfg.gamma0)));
        }
        if let (Some(lo), Some(hi)) = (cfg.lower, cfg.upper) {
            if lo >= hi {
                return Err(Error::InvalidConfiguration(format!("lower bound {lo} is not below upper bound {hi}")));
            }
        }
        let mesh = ctx.mesh();
        let samples: Vec<[f64; 3]> = (0..ctx.volume_rule.len()).map(|q| ctx.volume_rule.barycentric(q)).collect();
        let gamma = (0..mesh.num_elements())
            .into_par_iter()
            .map(|t| compute_gamma(ctx.problem, mesh, t, cfg.gamma0, &samples))
            .collect::<Result<Vec<_>>>()?;
        let second_order = ctx.test.degree() >= 2 && !ctx.problem.diffusion.is_zero();
        Ok(Self {
            ctx,
            cfg,
            gamma,
            second_order,
        })
    }

    pub fn config(&self) -> &PenaltyConfig {
        &self.cfg
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// `A phi_i` for every shape function at one point of element `t`.
    fn strong_operator(&self, t: usize, tab: &Tabulation, x: [f64; 2], out: &mut [f64]) {
        let problem = self.ctx.problem;
        let geo = self.ctx.mesh().geometry(t);
        let beta = (problem.velocity)(x);
        let sigma = (problem.reaction)(x);
        let k = problem.diffusion.matrix();
        for (i, a) in out.iter_mut().enumerate() {
            let g = tab.gradient(i, geo);
            *a = beta[0] * g[0] + beta[1] * g[1] + sigma * tab.values[i];
            if self.second_order {
                let h = tab.hessian(i, geo);
                *a -= k[0][0] * h[0][0] + k[0][1] * h[1][0] + k[1][0] * h[0][1] + k[1][1] * h[1][1];
            }
        }
    }

    /// `A u_h - f` at barycentric point `q` of the volume rule on element `t`.
    pub fn strong_residual(&self, uh: &DiscreteFunction, t: usize, q: usize) -> f64 {
        let tab = &self.ctx.volume_tabs[q];
        let x = self.ctx.mesh().map_to_physical(t, self.ctx.volume_rule.barycentric(q));
        let mut a = vec![0.0; tab.values.len()];
        self.strong_operator(t, tab, x, &mut a);
        uh.local(t).zip(&a).map(|(c, ai)| c * ai).sum::<f64>() - (self.ctx.problem.source)(x)
    }

    fn check(&self, uh: &DiscreteFunction) -> Result<()> {
        let s = uh.space();
        if !std::sync::Arc::ptr_eq(s.mesh(), self.ctx.test.mesh()) || s.degree() != self.ctx.test.degree() {
            return Err(Error::InvalidArgument("u_h must live on the test mesh with the test degree".into()));
        }
        Ok(())
    }

    /// Pointwise data at every volume point of `t`: weight, `A phi`, the
    /// arguments of both negative parts.
    fn element_points<F: FnMut(f64, &Tabulation, &[f64], Option<f64>, Option<f64>)>(
        &self,
        uh: &DiscreteFunction,
        t: usize,
        mut visit: F,
    ) {
        let mesh = self.ctx.mesh();
        let rule = &self.ctx.volume_rule;
        let gamma = self.gamma[t];
        let coeffs: Vec<f64> = uh.local(t).collect();
        let mut a = vec![0.0; coeffs.len()];
        for (q, tab) in self.ctx.volume_tabs.iter().enumerate() {
            let x = mesh.map_to_physical(t, rule.barycentric(q));
            self.strong_operator(t, tab, x, &mut a);
            let u: f64 = coeffs.iter().zip(&tab.values).map(|(c, v)| c * v).sum();
            let r: f64 = coeffs.iter().zip(&a).map(|(c, ai)| c * ai).sum::<f64>() - (self.ctx.problem.source)(x);
            let arg_min = self.cfg.lower.map(|lo| (u - lo) - gamma * r);
            let arg_max = self.cfg.upper.map(|hi| (hi - u) - gamma * r);
            let w = rule.weights[q] * 2.0 * mesh.area(t);
            visit(w, tab, &a, arg_min, arg_max);
        }
    }

    /// Entries `<gamma^-1 xi(u_h), psi_i>_h` over the test dofs.
    pub fn residual(&self, uh: &DiscreteFunction) -> Result<Vec<f64>> {
        self.check(uh)?;
        let mesh = self.ctx.mesh();
        let sign = self.cfg.upper_sign.factor();
        let local: Vec<Vec<f64>> = (0..mesh.num_elements())
            .into_par_iter()
            .map(|t| {
                let inv_gamma = 1.0 / self.gamma[t];
                let mut r = vec![0.0; uh.space().local_dim()];
                self.element_points(uh, t, |w, tab, _, arg_min, arg_max| {
                    let xi = arg_min.map_or(0.0, negative_part) + sign * arg_max.map_or(0.0, negative_part);
                    if xi != 0.0 {
                        for (ri, v) in r.iter_mut().zip(&tab.values) {
                            *ri += w * inv_gamma * xi * v;
                        }
                    }
                });
                r
            })
            .collect();
        let test = self.ctx.test;
        let mut out = vec![0.0; test.ndofs()];
        for (t, r) in local.iter().enumerate() {
            for (&d, v) in test.element_dofs(t).iter().zip(r) {
                out[d] += v;
            }
        }
        Ok(out)
    }

    /// Gateaux derivative of [`Self::residual`]: rows are test dofs, columns
    /// dofs of `trial`.
    pub fn jacobian(&self, uh: &DiscreteFunction, trial: &FunctionSpace) -> Result<CsrMatrix> {
        self.check(uh)?;
        if !std::sync::Arc::ptr_eq(trial.mesh(), self.ctx.test.mesh()) || trial.degree() != self.ctx.test.degree() {
            return Err(Error::InvalidArgument("trial space must share the test mesh and degree".into()));
        }
        let mesh = self.ctx.mesh();
        let sign = self.cfg.upper_sign.factor();
        let n = trial.local_dim();
        let local: Vec<Vec<f64>> = (0..mesh.num_elements())
            .into_par_iter()
            .map(|t| {
                let gamma = self.gamma[t];
                let mut m = vec![0.0; n * n];
                self.element_points(uh, t, |w, tab, a, arg_min, arg_max| {
                    let c_min = arg_min.map_or(0.0, indicator);
                    let c_max = sign * arg_max.map_or(0.0, indicator);
                    if c_min == 0.0 && c_max == 0.0 {
                        return;
                    }
                    for j in 0..n {
                        let dz = c_min * (tab.values[j] - gamma * a[j]) + c_max * (-tab.values[j] - gamma * a[j]);
                        let s = w * dz / gamma;
                        for i in 0..n {
                            m[i * n + j] += s * tab.values[i];
                        }
                    }
                });
                m
            })
            .collect();
        let test = self.ctx.test;
        let mut b = TripletBuilder::with_capacity(test.ndofs(), trial.ndofs(), n * n * mesh.num_elements());
        for (t, m) in local.iter().enumerate() {
            if m.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (i, &r) in test.element_dofs(t).iter().enumerate() {
                for (j, &c) in trial.element_dofs(t).iter().enumerate() {
                    b.push(r, c, m[i * n + j]);
                }
            }
        }
        Ok(b.build())
    }
}

pub fn assemble_penalty_residual(ctx: &FormContext, uh: &DiscreteFunction, cfg: PenaltyConfig) -> Result<Vec<f64>> {
    Penalty::new(ctx, cfg)?.residual(uh)
}

pub fn assemble_penalty_jacobian(
    ctx: &FormContext,
    uh: &DiscreteFunction,
    trial: &FunctionSpace,
    cfg: PenaltyConfig,
) -> Result<CsrMatrix> {
    Penalty::new(ctx, cfg)?.jacobian(uh, trial)
}
