//! The four bundled DAGs and their closed-form regression results.
//!
//! | kind    | structure                                                        |
//! |---------|------------------------------------------------------------------|
//! | `fig1a` | U→X1, U→X2, X1→Y (b1), X2→Y (b2); ρ = b3·b4                      |
//! | `fig1b` | U→X1, U→X2 (ρ = c4·c5), X1→Y (c1), U'→X1 (c2), U'→Y (c3)         |
//! | `fig2a` | U→X1, U→X2 (ρ = c1·c2), U'→X1, U'→Y (c3·c4), U''→X2, U''→Y (c5·c6) |
//! | `fig2b` | U→X1, U→X2 (c1·c2), Y→X1 (c3), Y→X2 (c4); ρ = c1·c2 + c3·c4      |
//!
//! Latent variables have unit variance. X1 and X2 are always standardized.
//! Only products of path coefficients enter the observed moments, so a
//! product given alone is split into two factors (see [`split_product`]).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sem::{self, LinearSem, Role, StructuralEdge, VariableDecl};

pub const EXPOSURES: [&str; 2] = ["X1", "X2"];
pub const OUTCOME: &str = "Y";
pub const OBSERVED: [&str; 3] = ["X1", "X2", "Y"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Fig1a,
    Fig1b,
    Fig2a,
    Fig2b,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Fig1a => "fig1a",
            ScenarioKind::Fig1b => "fig1b",
            ScenarioKind::Fig2a => "fig2a",
            ScenarioKind::Fig2b => "fig2b",
        }
    }
}

fn default_true() -> bool {
    true
}

/// `{"kind":"fig1b","params":{"c1":0.3,"c2c3":0.2,"rho":0.5},"standardize_outcome":true}`
///
/// With `standardize_outcome: false` the outcome noise variance comes from the
/// optional `sigma2` parameter (default 1). `fig2b` has Y as a root and always
/// uses unit variance for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_true")]
    pub standardize_outcome: bool,
}

/// Typed parameters after validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Parameters {
    Fig1a {
        b1: f64,
        b2: f64,
        rho: f64,
    },
    /// `c2`/`c3` are `None` when only their product was given.
    Fig1b {
        c1: f64,
        c2c3: f64,
        factors: Option<(f64, f64)>,
        rho: f64,
    },
    Fig2a {
        rho: f64,
        c3c4: f64,
        c5c6: f64,
    },
    Fig2b {
        c1c2: f64,
        c3: f64,
        c4: f64,
    },
}

impl Parameters {
    /// Correlation between the two exposures.
    pub fn rho(&self) -> f64 {
        match *self {
            Parameters::Fig1a { rho, .. } | Parameters::Fig1b { rho, .. } | Parameters::Fig2a { rho, .. } => rho,
            Parameters::Fig2b { c1c2, c3, c4 } => c1c2 + c3 * c4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCoefficients {
    pub crude_beta1: f64,
    pub crude_beta2: f64,
    pub adjusted_beta1: f64,
    pub adjusted_beta2: f64,
    pub rho: f64,
    /// False for fig2b, whose adjusted values come from the general
    /// two-regressor solution rather than a published table.
    pub adjusted_tabulated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiOracle {
    pub psi_true: f64,
    pub psi_expected: f64,
    pub psi_bias: f64,
}

impl ScenarioSpec {
    fn with_params(kind: ScenarioKind, params: &[(&str, f64)]) -> Self {
        Self { kind, params: params.iter().map(|&(k, v)| (k.to_owned(), v)).collect(), standardize_outcome: true }
    }

    pub fn fig1a(b1: f64, b2: f64, rho: f64) -> Self {
        Self::with_params(ScenarioKind::Fig1a, &[("b1", b1), ("b2", b2), ("rho", rho)])
    }

    pub fn fig1b(c1: f64, c2c3: f64, rho: f64) -> Self {
        Self::with_params(ScenarioKind::Fig1b, &[("c1", c1), ("c2c3", c2c3), ("rho", rho)])
    }

    pub fn fig1b_factors(c1: f64, c2: f64, c3: f64, rho: f64) -> Self {
        Self::with_params(ScenarioKind::Fig1b, &[("c1", c1), ("c2", c2), ("c3", c3), ("rho", rho)])
    }

    pub fn fig2a(rho: f64, c3c4: f64, c5c6: f64) -> Self {
        Self::with_params(ScenarioKind::Fig2a, &[("rho", rho), ("c3c4", c3c4), ("c5c6", c5c6)])
    }

    pub fn fig2b(c1c2: f64, c3: f64, c4: f64) -> Self {
        Self::with_params(ScenarioKind::Fig2b, &[("c1c2", c1c2), ("c3", c3), ("c4", c4)])
    }

    pub fn with_outcome_unstandardized(mut self, sigma2: f64) -> Self {
        self.standardize_outcome = false;
        self.params.insert("sigma2".into(), sigma2);
        self
    }

    fn get(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| Error::InvalidScenario(format!("{} requires parameter `{key}`", self.kind.as_str())))
    }

    /// Validate parameter names and invariants.
    pub fn resolve(&self) -> Result<Parameters> {
        let allowed: &[&str] = match self.kind {
            ScenarioKind::Fig1a => &["b1", "b2", "rho", "sigma2"],
            ScenarioKind::Fig1b => &["c1", "c2", "c3", "c2c3", "rho", "sigma2"],
            ScenarioKind::Fig2a => &["rho", "c3c4", "c5c6", "sigma2"],
            ScenarioKind::Fig2b => &["c1c2", "c3", "c4"],
        };
        for (k, v) in &self.params {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::InvalidScenario(format!(
                    "unknown parameter `{k}` for {} (allowed: {})",
                    self.kind.as_str(),
                    allowed.join(", ")
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidScenario(format!("parameter `{k}` is not finite")));
            }
        }
        if let Some(&s) = self.params.get("sigma2") {
            if self.standardize_outcome {
                return Err(Error::InvalidScenario("`sigma2` requires standardize_outcome = false".into()));
            }
            if s < 0.0 {
                return Err(Error::InvalidScenario(format!("sigma2 = {s} is negative")));
            }
        }
        let params = match self.kind {
            ScenarioKind::Fig1a => {
                Parameters::Fig1a { b1: self.get("b1")?, b2: self.get("b2")?, rho: self.get("rho")? }
            }
            ScenarioKind::Fig1b => {
                let has = |k: &str| self.params.contains_key(k);
                let (c2c3, factors) = match (has("c2c3"), has("c2"), has("c3")) {
                    (true, false, false) => (self.get("c2c3")?, None),
                    (false, true, true) => {
                        let (c2, c3) = (self.get("c2")?, self.get("c3")?);
                        (c2 * c3, Some((c2, c3)))
                    }
                    _ => return Err(Error::InvalidScenario("fig1b takes either `c2c3` or both `c2` and `c3`".into())),
                };
                Parameters::Fig1b { c1: self.get("c1")?, c2c3, factors, rho: self.get("rho")? }
            }
            ScenarioKind::Fig2a => {
                Parameters::Fig2a { rho: self.get("rho")?, c3c4: self.get("c3c4")?, c5c6: self.get("c5c6")? }
            }
            ScenarioKind::Fig2b => {
                if !self.standardize_outcome {
                    return Err(Error::InvalidScenario("fig2b requires a unit-variance outcome".into()));
                }
                Parameters::Fig2b { c1c2: self.get("c1c2")?, c3: self.get("c3")?, c4: self.get("c4")? }
            }
        };
        let rho = params.rho();
        if rho.is_nan() || rho.abs() >= 1.0 {
            return Err(Error::InvalidScenario(format!("|rho| must be < 1, got rho = {rho}")));
        }
        Ok(params)
    }

    /// Look up a named parameter, including derived products (`c2c3`, and
    /// `rho` for fig2b).
    pub fn parameter(&self, name: &str) -> Result<Option<f64>> {
        let value = match (self.resolve()?, name) {
            (Parameters::Fig1a { b1, .. }, "b1") => b1,
            (Parameters::Fig1a { b2, .. }, "b2") => b2,
            (Parameters::Fig1b { c1, .. }, "c1") => c1,
            (Parameters::Fig1b { c2c3, .. }, "c2c3") => c2c3,
            (Parameters::Fig1b { factors: Some((c2, _)), .. }, "c2") => c2,
            (Parameters::Fig1b { factors: Some((_, c3)), .. }, "c3") => c3,
            (Parameters::Fig2a { rho, .. }, "c1c2") => rho,
            (Parameters::Fig2a { c3c4, .. }, "c3c4") => c3c4,
            (Parameters::Fig2a { c5c6, .. }, "c5c6") => c5c6,
            (Parameters::Fig2b { c1c2, .. }, "c1c2") => c1c2,
            (Parameters::Fig2b { c3, .. }, "c3") => c3,
            (Parameters::Fig2b { c4, .. }, "c4") => c4,
            (p, "rho") => p.rho(),
            (Parameters::Fig1a { b1, b2, .. }, "psi") => b1 + b2,
            (Parameters::Fig1b { c1, .. }, "psi") => c1,
            _ => return Ok(None),
        };
        Ok(Some(value))
    }

    /// Same scenario with the exposure correlation moved to `rho`, every other
    /// parameter held. For fig2b the U-path product absorbs the change.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        let mut out = self.clone();
        match self.resolve()? {
            Parameters::Fig2b { c3, c4, .. } => {
                out.params.insert("c1c2".into(), rho - c3 * c4);
            }
            _ => {
                out.params.insert("rho".into(), rho);
            }
        }
        out.resolve()?;
        Ok(out)
    }

    fn outcome_noise(&self) -> f64 {
        self.params.get("sigma2").copied().unwrap_or(1.0)
    }
}

/// Split a path product `p = a·b` into two factors, where `a²` must fit in
/// `a_budget` and `b²` in `b_budget` (the variance left over in the variables
/// the factors point into). The even split `|a| = |b| = √|p|` is used when it
/// fits strictly; otherwise `a² = |p|·√(a_budget / b_budget)`, which leaves
/// both budgets equally loaded. The sign of `p` is carried by `b`.
pub fn split_product(p: f64, a_budget: f64, b_budget: f64) -> (f64, f64) {
    if p == 0.0 {
        return (0.0, 0.0);
    }
    let s = p.abs();
    let a2 = if s < a_budget && s < b_budget {
        s
    } else if a_budget > 0.0 && b_budget > 0.0 {
        if b_budget.is_finite() {
            s * (a_budget / b_budget).sqrt()
        } else {
            0.5 * a_budget
        }
    } else {
        s
    };
    let a = a2.sqrt();
    (a, p / a)
}

fn signed_root_pair(rho: f64) -> (f64, f64) {
    let r = rho.abs().sqrt();
    (r, if rho < 0.0 { -r } else { r })
}

/// Build the standardized structural model for a scenario.
pub fn build_model(spec: &ScenarioSpec) -> Result<LinearSem> {
    let params = spec.resolve()?;
    let x1 = VariableDecl::observed("X1", Role::Exposure);
    let x2 = VariableDecl::observed("X2", Role::Exposure);
    let y = VariableDecl::observed("Y", Role::Outcome);
    let y_budget = |used: f64| if spec.standardize_outcome { 1.0 - used } else { f64::INFINITY };

    let (variables, edges) = match params {
        Parameters::Fig1a { b1, b2, rho } => {
            let (b3, b4) = signed_root_pair(rho);
            (
                vec![VariableDecl::latent("U"), x1, x2, y],
                vec![
                    StructuralEdge::new("U", "X1", b3),
                    StructuralEdge::new("U", "X2", b4),
                    StructuralEdge::new("X1", "Y", b1),
                    StructuralEdge::new("X2", "Y", b2),
                ],
            )
        }
        Parameters::Fig1b { c1, c2c3, factors, rho } => {
            let (c4, c5) = signed_root_pair(rho);
            let (c2, c3) =
                factors.unwrap_or_else(|| split_product(c2c3, 1.0 - rho.abs(), y_budget(c1 * c1 + 2.0 * c1 * c2c3)));
            (
                vec![VariableDecl::latent("U"), VariableDecl::latent("U'"), x1, x2, y],
                vec![
                    StructuralEdge::new("U", "X1", c4),
                    StructuralEdge::new("U", "X2", c5),
                    StructuralEdge::new("U'", "X1", c2),
                    StructuralEdge::new("U'", "Y", c3),
                    StructuralEdge::new("X1", "Y", c1),
                ],
            )
        }
        Parameters::Fig2a { rho, c3c4, c5c6 } => {
            let (c1, c2) = signed_root_pair(rho);
            let total = c3c4.abs() + c5c6.abs();
            let share = |p: f64| {
                if !spec.standardize_outcome {
                    f64::INFINITY
                } else if total > 0.0 {
                    p.abs() / total
                } else {
                    1.0
                }
            };
            let (c3, c4) = split_product(c3c4, 1.0 - rho.abs(), share(c3c4));
            let (c5, c6) = split_product(c5c6, 1.0 - rho.abs(), share(c5c6));
            (
                vec![VariableDecl::latent("U"), VariableDecl::latent("U'"), VariableDecl::latent("U''"), x1, x2, y],
                vec![
                    StructuralEdge::new("U", "X1", c1),
                    StructuralEdge::new("U", "X2", c2),
                    StructuralEdge::new("U'", "X1", c3),
                    StructuralEdge::new("U'", "Y", c4),
                    StructuralEdge::new("U''", "X2", c5),
                    StructuralEdge::new("U''", "Y", c6),
                ],
            )
        }
        Parameters::Fig2b { c1c2, c3, c4 } => {
            let (c1, c2) = split_product(c1c2, 1.0 - c3 * c3, 1.0 - c4 * c4);
            (
                vec![VariableDecl::latent("U"), y, x1, x2],
                vec![
                    StructuralEdge::new("U", "X1", c1),
                    StructuralEdge::new("U", "X2", c2),
                    StructuralEdge::new("Y", "X1", c3),
                    StructuralEdge::new("Y", "X2", c4),
                ],
            )
        }
    };

    let noise: BTreeMap<String, f64> = variables
        .iter()
        .map(|v| {
            let value = if v.name == OUTCOME && !spec.standardize_outcome { spec.outcome_noise() } else { 1.0 };
            (v.name.clone(), value)
        })
        .collect();
    let model = LinearSem::new(variables, edges, noise)?;
    let targets: &[&str] = if spec.standardize_outcome { &OBSERVED } else { &EXPOSURES };
    sem::solve_standardizing_noise(&model, targets)
}

fn two_regressor(r1y: f64, r2y: f64, rho: f64) -> (f64, f64) {
    let d = 1.0 - rho * rho;
    ((r1y - rho * r2y) / d, (r2y - rho * r1y) / d)
}

/// Exact population crude and mutually adjusted OLS coefficients.
pub fn closed_form(spec: &ScenarioSpec) -> Result<OracleCoefficients> {
    let params = spec.resolve()?;
    let rho = params.rho();
    let d = 1.0 - rho * rho;
    let (crude, adjusted, tabulated) = match params {
        Parameters::Fig1a { b1, b2, rho } => ((b1 + rho * b2, b2 + rho * b1), (b1, b2), true),
        Parameters::Fig1b { c1, c2c3, rho, .. } => ((c1 + c2c3, rho * c1), (c1 + c2c3 / d, -c2c3 * rho / d), true),
        Parameters::Fig2a { rho, c3c4, c5c6 } => {
            ((c3c4, c5c6), ((c3c4 - rho * c5c6) / d, (c5c6 - rho * c3c4) / d), true)
        }
        Parameters::Fig2b { c3, c4, .. } => ((c3, c4), two_regressor(c3, c4, rho), false),
    };
    Ok(OracleCoefficients {
        crude_beta1: crude.0,
        crude_beta2: crude.1,
        adjusted_beta1: adjusted.0,
        adjusted_beta2: adjusted.1,
        rho,
        adjusted_tabulated: tabulated,
    })
}

/// Fig1a causal coefficients implied by fixed crude coefficients at a given
/// exposure correlation (inverse of `r1y = b1 + ρ·b2`, `r2y = b2 + ρ·b1`).
pub fn fig1a_from_crude(r1y: f64, r2y: f64, rho: f64) -> (f64, f64) {
    two_regressor(r1y, r2y, rho)
}

/// Fig1a parameters whose observed moments equal those of a fig1b model.
pub fn reparam_1b_to_1a(c1: f64, c2c3: f64, rho: f64) -> (f64, f64, f64) {
    let d = 1.0 - rho * rho;
    (c1 + c2c3 / d, -c2c3 * rho / d, rho)
}

/// Inverse of [`reparam_1b_to_1a`]; only the product `c2c3` is identified.
pub fn reparam_1a_to_1b(b1: f64, b2: f64, rho: f64) -> Result<(f64, f64)> {
    if rho == 0.0 {
        return Err(Error::ZeroRho);
    }
    Ok((b1 + b2 / rho, -b2 * (1.0 - rho * rho) / rho))
}

/// The fig1a spec observationally equivalent to a fig1b spec. When the
/// outcome is not standardized the fig1a noise variance is chosen so the
/// outcome variances agree.
pub fn equivalent_fig1a(spec: &ScenarioSpec) -> Result<ScenarioSpec> {
    let Parameters::Fig1b { c1, c2c3, rho, .. } = spec.resolve()? else {
        return Err(Error::UnsupportedScenario(format!("{} is not fig1b", spec.kind.as_str())));
    };
    let (b1, b2, rho) = reparam_1b_to_1a(c1, c2c3, rho);
    let out = ScenarioSpec::fig1a(b1, b2, rho);
    if spec.standardize_outcome {
        return Ok(out);
    }
    let vy = sem::implied_covariance(&build_model(spec)?).variance(OUTCOME).expect("outcome present");
    let explained = b1 * b1 + b2 * b2 + 2.0 * rho * b1 * b2;
    Ok(out.with_outcome_unstandardized((vy - explained).max(0.0)))
}

/// Overall mixture effect: causal truth and what the summed adjusted
/// coefficients converge to.
pub fn psi_oracle(spec: &ScenarioSpec) -> Result<PsiOracle> {
    let (psi_true, psi_expected) = match spec.resolve()? {
        Parameters::Fig1a { b1, b2, .. } => (b1 + b2, b1 + b2),
        Parameters::Fig1b { c1, c2c3, rho, .. } => (c1, c1 + c2c3 / (1.0 + rho)),
        _ => return Err(Error::UnsupportedScenario(format!("no causal psi is defined for {}", spec.kind.as_str()))),
    };
    Ok(PsiOracle { psi_true, psi_expected, psi_bias: psi_expected - psi_true })
}
