//! Run settings: defaults, a TOML configuration file and overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::forms::{Bounds, ExactSolution, FormParams, InflowSign, ProblemSpec};
use crate::penalty::UpperSign;
use crate::solver::NewtonOptions;

use super::cases::{CaseDefinition, CaseOptions};

/// Everything a user can override. `None` means "use the case default".
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub degree: Option<usize>,
    pub gamma0: Option<f64>,
    pub tol: Option<f64>,
    pub levels: Option<usize>,
    pub theta_mark: Option<f64>,
    pub penalty: bool,
    pub upper_sign: UpperSign,
    pub inflow: InflowSign,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Stop adaptive refinement once the test space reaches this size.
    pub max_dofs: Option<usize>,
    pub verbatim_ramp: bool,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    /// Recorded in the metadata; the pipelines themselves are deterministic.
    pub seed: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            degree: None,
            gamma0: None,
            tol: None,
            levels: None,
            theta_mark: None,
            penalty: true,
            upper_sign: UpperSign::Restoring,
            inflow: InflowSign::Printed,
            lower: None,
            upper: None,
            max_dofs: None,
            verbatim_ramp: false,
            out_dir: PathBuf::from("out"),
            threads: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    p: Option<usize>,
    tol: Option<f64>,
    levels: Option<usize>,
    theta_mark: Option<f64>,
    no_penalty: Option<bool>,
    max_dofs: Option<usize>,
    verbatim_ramp: Option<bool>,
    out_dir: Option<PathBuf>,
    threads: Option<usize>,
    seed: Option<u64>,
    bounds: Option<BoundsSection>,
    penalty: Option<PenaltySection>,
    forms: Option<FormsSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsSection {
    lower: Option<f64>,
    upper: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PenaltySection {
    gamma0: Option<f64>,
    upper_sign: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FormsSection {
    inflow: Option<String>,
}

/// Case data after applying the settings.
#[derive(Clone, Debug)]
pub struct ResolvedCase {
    pub case: &'static CaseDefinition,
    pub problem: ProblemSpec,
    pub exact: Option<ExactSolution>,
    pub degree: usize,
    pub levels: usize,
    pub theta_mark: f64,
    pub params: FormParams,
    pub newton: NewtonOptions,
    /// The penalty runs only if enabled and some bound is set.
    pub penalized: bool,
}

impl RunSettings {
    /// Applies a TOML file on top of `self`. Keys: `p`, `tol`, `levels`,
    /// `theta_mark`, `no_penalty`, `max_dofs`, `verbatim_ramp`, `out_dir`,
    /// `threads`, `seed`, `bounds.lower`, `bounds.upper`, `penalty.gamma0`,
    /// `penalty.upper_sign`, `forms.inflow`.
    pub fn merge_toml(mut self, text: &str) -> Result<Self> {
        let cfg: FileConfig = toml::from_str(text).map_err(|e| Error::Parse {
            what: "configuration".into(),
            message: e.to_string(),
        })?;
        self.degree = cfg.p.or(self.degree);
        self.tol = cfg.tol.or(self.tol);
        self.levels = cfg.levels.or(self.levels);
        self.theta_mark = cfg.theta_mark.or(self.theta_mark);
        if let Some(off) = cfg.no_penalty {
            self.penalty = !off;
        }
        self.max_dofs = cfg.max_dofs.or(self.max_dofs);
        self.verbatim_ramp = cfg.verbatim_ramp.unwrap_or(self.verbatim_ramp);
        self.out_dir = cfg.out_dir.unwrap_or(self.out_dir);
        self.threads = cfg.threads.or(self.threads);
        self.seed = cfg.seed.unwrap_or(self.seed);
        if let Some(b) = cfg.bounds {
            self.lower = b.lower.or(self.lower);
            self.upper = b.upper.or(self.upper);
        }
        if let Some(p) = cfg.penalty {
            self.gamma0 = p.gamma0.or(self.gamma0);
            if let Some(sign) = p.upper_sign {
                self.upper_sign = sign.parse()?;
            }
        }
        if let Some(inflow) = cfg.forms.and_then(|f| f.inflow) {
            self.inflow = inflow.parse()?;
        }
        Ok(self)
    }

    pub fn merge_file(self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.merge_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.degree {
            if !(1..=8).contains(&p) {
                return Err(Error::InvalidConfiguration(format!("degree {p} outside 1..=8")));
            }
        }
        if let Some(t) = self.theta_mark {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidConfiguration(format!("theta_mark {t} not in (0, 1]")));
            }
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Error::InvalidConfiguration(format!("tol {t} must be positive")));
            }
        }
        if self.levels == Some(0) {
            return Err(Error::InvalidConfiguration("levels must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfiguration("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, case: &'static CaseDefinition) -> Result<ResolvedCase> {
        self.validate()?;
        let d = &case.defaults;
        let (problem, exact) = case.problem(&CaseOptions {
            verbatim_ramp: self.verbatim_ramp,
        });
        let bounds = Bounds {
            lower: self.lower.or(d.bounds.lower),
            upper: self.upper.or(d.bounds.upper),
        };
        let problem = problem.with_bounds(bounds).with_gamma0(self.gamma0.unwrap_or(d.gamma0));
        problem.validate()?;
        Ok(ResolvedCase {
            case,
            penalized: self.penalty && !bounds.is_empty(),
            problem,
            exact,
            degree: self.degree.unwrap_or(d.degree),
            levels: self.levels.unwrap_or(d.levels),
            theta_mark: self.theta_mark.unwrap_or(d.theta_mark),
            params: FormParams {
                inflow: self.inflow,
                ..FormParams::default()
            },
            newton: NewtonOptions {
                tol: self.tol.unwrap_or(d.tol),
                ..NewtonOptions::default()
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app::cases::find_case;

    #[test]
    fn toml_overrides() {
        let s = RunSettings::default()
            .merge_toml(
                "p = 2\nbounds.lower = -0.5\npenalty.gamma0 = 0.001\npenalty.upper_sign = \"printed\"\nno_penalty = true\nforms.inflow = \"coercive\"\n",
            )
            .unwrap();
        assert_eq!(s.degree, Some(2));
        assert_eq!(s.lower, Some(-0.5));
        assert_eq!(s.gamma0, Some(1e-3));
        assert_eq!(s.upper_sign, UpperSign::Printed);
        assert!(!s.penalty);
        let r = s.resolve(find_case("case1").unwrap()).unwrap();
        assert_eq!(r.problem.bounds, Bounds::new(-0.5, 1.0));
        assert_eq!(r.degree, 2);
        assert!(!r.penalized);
        assert_eq!(r.params.inflow, InflowSign::Coercive);
        assert!(RunSettings::default().merge_toml("unknown = 1").is_err());
        assert!(RunSettings::default().merge_toml("penalty.upper_sign = \"up\"").is_err());
    }

    #[test]
    fn defaults_follow_case() {
        let r = RunSettings::default().resolve(find_case("case3").unwrap()).unwrap();
        assert_eq!(r.problem.gamma0, 1e-4);
        assert_eq!(r.newton.tol, 1e-5);
        assert!(r.penalized);
        let m = RunSettings::default().resolve(find_case("manufactured").unwrap()).unwrap();
        assert!(!m.penalized);
        let bad = RunSettings {
            theta_mark: Some(0.0),
            ..RunSettings::default()
        };
        assert!(bad.resolve(find_case("case1").unwrap()).is_err());
    }
}
