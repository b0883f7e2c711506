//! Experiment configuration, read from TOML.
//!
//! ```toml
//! scenario = "rotation"
//! solver = "representation"   # or "pushforward", "fv"
//! n = 128
//! dt = 0.1
//!
//! [certify]
//! pair = "representation-fv"
//! levels = [64, 128, 256]
//! ```
//!
//! A scenario name that is not built in must come with a `[custom]` table
//! of expressions. A field written as `@name` is taken from the built-in
//! scenario `name`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{mollify, mollify_vector, DivergenceDecomposition, Domain, Growth, ScalarField, VectorField};
use crate::scenarios::{self, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Representation,
    Pushforward,
    Fv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: String,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default = "default_solver")]
    pub solver: Solver,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Output time step; must divide the horizon.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// RK4 step for characteristics.
    #[serde(default = "default_flow_dt")]
    pub flow_dt: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Particles per axis and cell for the pushforward solver.
    #[serde(default = "default_per_axis")]
    pub per_axis: usize,
    /// Output times; all grid times when empty.
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub custom: Option<CustomScenario>,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub bmo: BmoConfig,
    #[serde(default)]
    pub certify: CertifyConfig,
}

fn default_solver() -> Solver {
    Solver::Representation
}
fn default_n() -> usize {
    64
}
fn default_dt() -> f64 {
    0.1
}
fn default_flow_dt() -> f64 {
    0.01
}
fn default_cfl() -> f64 {
    0.9
}
fn default_per_axis() -> usize {
    2
}

/// A scenario given by expressions over `t`, `x1..xd` and `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomScenario {
    pub dim: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// One expression per component, or a single `@name`.
    pub b: Vec<String>,
    #[serde(default)]
    pub div_b: Option<String>,
    #[serde(default = "zero_expr")]
    pub c: String,
    pub u0: String,
    #[serde(default = "zero_expr")]
    pub b1: String,
    #[serde(default)]
    pub b2: f64,
    #[serde(default = "zero_expr")]
    pub d1: String,
    #[serde(default = "zero_expr")]
    pub d2: String,
    #[serde(default)]
    pub exact: Option<String>,
    /// Mollification radius applied to `b` and `c`.
    #[serde(default)]
    pub mollify: Option<f64>,
}

fn default_half_width() -> f64 {
    2.0
}
fn default_horizon() -> f64 {
    1.0
}
fn zero_expr() -> String {
    "0".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub levels: Vec<usize>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { levels: vec![32, 64, 128] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BmoConfig {
    /// `d2`, `div` or an expression.
    pub field: String,
    pub n: usize,
    pub depth: usize,
    /// Half width of the analysis box; the scenario's when absent.
    #[serde(default)]
    pub half_width: Option<f64>,
}

impl Default for BmoConfig {
    fn default() -> Self {
        Self { field: "d2".into(), n: 512, depth: crate::bmo::DEFAULT_DEPTH, half_width: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pair {
    /// Representation against finite volumes from the same datum.
    RepresentationFv,
    /// Finite volumes against the same run with a bump injected.
    Bump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    pub pair: Pair,
    /// Resolutions for the noise fit; the certificate uses the last.
    pub levels: Vec<usize>,
    /// `L²` noise level; fitted over `levels` when absent.
    #[serde(default)]
    pub noise: Option<f64>,
    pub bump_mass: f64,
    /// Injection time as a fraction of the horizon.
    pub bump_time: f64,
    #[serde(default)]
    pub bump_center: Option<Vec<f64>>,
    #[serde(default)]
    pub lambda_factors: Option<Vec<f64>>,
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            pair: Pair::RepresentationFv,
            levels: vec![64, 128, 256],
            noise: None,
            bump_mass: 1.0,
            bump_time: 0.5,
            bump_center: None,
            lambda_factors: None,
            radii: None,
            deltas: None,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Configuration for a built-in scenario with every other key defaulted.
    pub fn for_scenario(name: &str) -> Self {
        Self::from_toml(&format!("scenario = {name:?}")).expect("minimal configuration is valid")
    }

    fn check(&self) -> Result<()> {
        if self.scenario.trim().is_empty() {
            return Err(Error::Config("scenario name is empty".into()));
        }
        if self.n < 2 || self.per_axis == 0 {
            return Err(Error::Config("n must be at least 2 and per_axis positive".into()));
        }
        for (what, v) in [("dt", self.dt), ("flow_dt", self.flow_dt), ("cfl", self.cfl)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{what} must be positive")));
            }
        }
        if self.certify.levels.is_empty() || self.convergence.levels.len() < 2 {
            return Err(Error::Config("certify needs a level and convergence at least two".into()));
        }
        Ok(())
    }

    /// Resolves the scenario, built in or custom.
    pub fn scenario(&self) -> Result<Scenario> {
        if scenarios::BUILTIN.iter().any(|(n, _)| *n == self.scenario) {
            if self.custom.is_some() {
                return Err(Error::Config(format!("{} is built in; drop the [custom] table", self.scenario)));
            }
            return scenarios::builtin(&self.scenario, self.dim);
        }
        let custom = self
            .custom
            .as_ref()
            .ok_or_else(|| Error::Config(format!("unknown scenario {:?} and no [custom] table", self.scenario)))?;
        custom.build(&self.scenario)
    }
}

fn reference(name: &str, dim: usize) -> Result<Scenario> {
    scenarios::builtin(name, Some(dim))
}

impl CustomScenario {
    fn scalar(&self, src: &str, pick: impl Fn(&Scenario) -> ScalarField) -> Result<ScalarField> {
        match src.trim().strip_prefix('@') {
            Some(name) => Ok(pick(&reference(name, self.dim)?)),
            None => Ok(Expr::parse(src, self.dim)?.into_field()),
        }
    }

    fn build(&self, name: &str) -> Result<Scenario> {
        let d = self.dim;
        let domain = Domain::new(d, self.half_width, self.horizon)?;
        let mut b = match self.b.as_slice() {
            [one] if one.trim().starts_with('@') => reference(one.trim().trim_start_matches('@'), d)?.b,
            comps if comps.len() == d => {
                let exprs: Vec<Expr> = comps.iter().map(|s| Expr::parse(s, d)).collect::<Result<_>>()?;
                let autonomous = exprs.iter().all(|e| !e.uses_time());
                let field = VectorField::new(d, move |t, x, out| {
                    for (o, e) in out.iter_mut().zip(&exprs) {
                        *o = e.eval(t, x);
                    }
                });
                if autonomous { field.autonomous() } else { field }
            }
            comps => {
                return Err(Error::Config(format!("b needs {d} components, got {}", comps.len())));
            }
        };
        if let Some(div) = &self.div_b {
            b = b.with_divergence(Expr::parse(div, d)?.into_field());
        }
        let b2 = self.b2;
        if !(b2 >= 0.0) {
            return Err(Error::Config("b2 must be nonnegative".into()));
        }
        b = b.with_growth(Growth::new(self.scalar(&self.b1, |s| s.b.growth().map_or_else(ScalarField::zero, |g| g.b1.clone()))?, move |_| b2));
        let mut c = self.scalar(&self.c, |s| s.c.clone())?;
        if let Some(eps) = self.mollify {
            let growth = b.growth().cloned();
            b = mollify_vector(&b, eps)?;
            if let Some(g) = growth {
                b = b.with_growth(g);
            }
            c = mollify(&c, d, eps)?;
        }
        let exact = match &self.exact {
            Some(src) => {
                let e = Expr::parse(src, d)?;
                let f: scenarios::Solution = std::sync::Arc::new(move |t, x| e.eval(t, x));
                Some(f)
            }
            None => None,
        };
        Ok(Scenario {
            name: name.to_string(),
            domain,
            b,
            c,
            u0: self.scalar(&self.u0, |s| s.u0.clone())?,
            dec: DivergenceDecomposition::new(
                self.scalar(&self.d1, |s| s.dec.d1.clone())?,
                self.scalar(&self.d2, |s| s.dec.d2.clone())?,
            ),
            exact,
            mollify: self.mollify,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_builtin() {
        let cfg = Config::for_scenario("rotation");
        assert_eq!(cfg.solver, Solver::Representation);
        assert_eq!(cfg.scenario().unwrap().dim(), 2);
        let back = Config::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_tables_keep_defaults() {
        let cfg = Config::from_toml("scenario = \"rotation\"\n[bmo]\nn = 64\n[certify]\nlevels = [32]\n").unwrap();
        assert_eq!(cfg.bmo.n, 64);
        assert_eq!(cfg.bmo.field, "d2");
        assert_eq!(cfg.certify.pair, Pair::RepresentationFv);
        assert_eq!(cfg.certify.levels, vec![32]);
        assert!(Config::from_toml("scenario = \"rotation\"\n[bmo]\nbogus = 1\n").is_err());
    }

    #[test]
    fn custom_scenario_from_expressions() {
        let cfg = Config::from_toml(
            r#"
            scenario = "drift"
            solver = "fv"
            [custom]
            dim = 1
            b = ["1"]
            u0 = "exp(-10*x1^2)"
            b2 = 1.0
            exact = "exp(-10*(x1-t)^2)"
            "#,
        )
        .unwrap();
        let s = cfg.scenario().unwrap();
        let mut v = [0.0];
        s.b.eval(0.3, &[0.2], &mut v);
        assert_eq!(v[0], 1.0);
        assert!((s.exact.unwrap()(0.5, &[0.5]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn references_and_errors() {
        let cfg = Config::from_toml(
            "scenario = \"spin\"\n[custom]\ndim = 2\nb = [\"@rotation\"]\nu0 = \"@rotation\"\nb2 = 1.5\n",
        )
        .unwrap();
        assert!(cfg.scenario().is_ok());
        assert!(Config::from_toml("scenario = \"nowhere\"").unwrap().scenario().is_err());
        assert!(Config::from_toml("scenario = \"rotation\"\nbogus = 1").is_err());
        let bad = "scenario = \"x\"\n[custom]\ndim = 1\nb = [\"x3\"]\nu0 = \"1\"\n";
        assert!(matches!(Config::from_toml(bad).unwrap().scenario(), Err(Error::Expr { .. })));
    }
}
