//! Replicated Monte Carlo experiments and parameter sweeps.
//!
//! Replicate `i` uses seed [`replicate_seed`]`(seed, i)`. Replicates run in
//! parallel on the current rayon pool and are merged by index, so a report
//! does not depend on scheduling. Every grid point of a sweep reuses the
//! experiment's base seed (common random numbers across the grid).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{self, format_sig17, GenMethod};
use crate::error::{Error, Result};
use crate::estimate;
use crate::rng::replicate_seed;
use crate::scenario::{self, OracleCoefficients, PsiOracle, ScenarioKind, ScenarioSpec, EXPOSURES, OUTCOME};
use crate::sem;

pub const ESTIMANDS: [&str; 5] = ["crude_beta1", "crude_beta2", "adjusted_beta1", "adjusted_beta2", "psi"];
pub const QUANTILE_ESTIMAND: &str = "psi_quantile";

/// Gate width used by `verify`, in Monte Carlo standard errors.
pub const GATE_SIGMAS: f64 = 4.0;

/// What an estimand is supposed to recover: a named scenario parameter or a
/// literal value (e.g. 0 for an exposure with no causal effect).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthRef {
    Parameter(String),
    Value(f64),
}

fn default_method() -> GenMethod {
    GenMethod::Method1
}
fn default_n() -> usize {
    1000
}
fn default_replicates() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    #[serde(default = "default_method")]
    pub method: GenMethod,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Estimand name → declared causal truth.
    #[serde(default)]
    pub truth: BTreeMap<String, TruthRef>,
    /// When set, exposures are also quantile-scored into this many bins and
    /// refit, and the summed coefficient is reported as `psi_quantile`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioSpec, method: GenMethod, n: usize, replicates: usize, seed: u64) -> Self {
        Self { scenario, method, n, replicates, seed, truth: BTreeMap::new(), quantiles: None }
    }

    pub fn with_truth(mut self, estimand: &str, truth: TruthRef) -> Self {
        self.truth.insert(estimand.to_owned(), truth);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.n < 4 {
            return Err(Error::InvalidConfig(format!("n must be at least 4, got {}", self.n)));
        }
        if let Some(q) = self.quantiles {
            if q < 2 || q > self.n {
                return Err(Error::InvalidConfig(format!("quantiles must be in 2..=n, got {q}")));
            }
        }
        self.scenario.resolve()?;
        for (estimand, truth) in &self.truth {
            if !ESTIMANDS.contains(&estimand.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "truth declared for unknown estimand `{estimand}` (known: {})",
                    ESTIMANDS.join(", ")
                )));
            }
            if let TruthRef::Parameter(name) = truth {
                if self.scenario.parameter(name)?.is_none() {
                    return Err(Error::InvalidConfig(format!(
                        "truth for `{estimand}` names `{name}`, which is not a {} parameter",
                        self.scenario.kind.as_str()
                    )));
                }
            }
        }
        Ok(())
    }

    fn resolve_truth(&self, estimand: &str) -> Result<Option<(f64, String)>> {
        Ok(match self.truth.get(estimand) {
            None => None,
            Some(TruthRef::Value(v)) => Some((*v, format!("{v}"))),
            Some(TruthRef::Parameter(name)) => {
                let v = self
                    .scenario
                    .parameter(name)?
                    .ok_or_else(|| Error::InvalidConfig(format!("`{name}` is not a parameter of this scenario")))?;
                Some((v, name.clone()))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationSource {
    /// Published closed form.
    Tabulated,
    /// General least-squares solution over the implied covariance.
    Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandSummary {
    pub estimand: String,
    pub mean: f64,
    /// `None` when only one replicate was included.
    pub sd: Option<f64>,
    pub mcse: Option<f64>,
    pub truth: Option<f64>,
    pub truth_source: Option<String>,
    /// mean − truth.
    pub bias: Option<f64>,
    pub expected: Option<f64>,
    pub expected_source: Option<ExpectationSource>,
    /// mean − expected.
    pub bias_vs_expected: Option<f64>,
    /// expected − truth: the bias the estimator should show under this DAG.
    pub expected_bias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub scenario: ScenarioSpec,
    pub method: GenMethod,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub included: usize,
    pub excluded_singular: usize,
    pub outcome_variance: f64,
    pub outcome_noise_variance: f64,
    pub estimands: Vec<EstimandSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub estimand: String,
    pub passed: bool,
    /// (mean − expected) / mcse.
    pub z: Option<f64>,
}

impl BiasReport {
    pub fn estimand(&self, name: &str) -> Option<&EstimandSummary> {
        self.estimands.iter().find(|e| e.estimand == name)
    }

    /// |mean − expected| < sigmas · mcse for every estimand with an
    /// expectation. Without an MCSE (one replicate) the gate cannot pass.
    pub fn gates(&self, sigmas: f64) -> Vec<Gate> {
        self.estimands
            .iter()
            .filter_map(|e| {
                let expected = e.expected?;
                let z = e.mcse.filter(|&s| s > 0.0).map(|s| (e.mean - expected) / s);
                Some(Gate { estimand: e.estimand.clone(), passed: z.is_some_and(|z| z.abs() < sigmas), z })
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario {} {}  method {}  n {}  replicates {} (included {}, singular {})  seed {}",
            self.scenario.kind.as_str(),
            serde_json::to_string(&self.scenario.params).unwrap_or_default(),
            self.method.as_str(),
            self.n,
            self.replicates,
            self.included,
            self.excluded_singular,
            self.seed
        );
        let _ = writeln!(out, "V(Y) {:.6}  V(eps) {:.6}", self.outcome_variance, self.outcome_noise_variance);
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
        let header = ["estimand", "mean", "sd", "mcse", "expected", "mean-exp", "truth", "bias", "note"];
        let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for e in &self.estimands {
            let note = match (e.expected_bias, e.expected_source) {
                (Some(b), _) if b.abs() > 1e-12 => format!("EXPECTED bias {b:+.6}"),
                (_, Some(ExpectationSource::Derived)) => "derived, not tabulated".to_string(),
                _ => String::new(),
            };
            rows.push(vec![
                e.estimand.clone(),
                format!("{:.6}", e.mean),
                opt(e.sd),
                opt(e.mcse),
                opt(e.expected),
                opt(e.bias_vs_expected),
                e.truth_source.clone().unwrap_or_else(|| "-".into()),
                opt(e.bias),
                note,
            ]);
        }
        let widths: Vec<usize> =
            (0..header.len()).map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0)).collect();
        for r in rows {
            let line: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}

struct Replicate {
    values: Vec<f64>,
}

fn summarize(values: &[f64]) -> (f64, Option<f64>, Option<f64>) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, None, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let sd = var.sqrt();
    (mean, Some(sd), Some(sd / r.sqrt()))
}

fn expectations(spec: &ScenarioSpec) -> Result<[(f64, ExpectationSource); 5]> {
    let o = scenario::closed_form(spec)?;
    let adjusted = if o.adjusted_tabulated { ExpectationSource::Tabulated } else { ExpectationSource::Derived };
    let psi = match scenario::psi_oracle(spec) {
        Ok(p) => (p.psi_expected, ExpectationSource::Tabulated),
        Err(Error::UnsupportedScenario(_)) => (o.adjusted_beta1 + o.adjusted_beta2, ExpectationSource::Derived),
        Err(e) => return Err(e),
    };
    Ok([
        (o.crude_beta1, ExpectationSource::Tabulated),
        (o.crude_beta2, ExpectationSource::Tabulated),
        (o.adjusted_beta1, adjusted),
        (o.adjusted_beta2, adjusted),
        psi,
    ])
}

/// Run `replicates` independent simulate-and-fit rounds and summarize them.
pub fn run_experiment(config: &ExperimentConfig) -> Result<BiasReport> {
    config.validate()?;
    let model = scenario::build_model(&config.scenario)?;
    let cov = sem::implied_covariance(&model);
    let observed = cov.marginal(&model.observed_names())?;
    if config.method == GenMethod::Method2 {
        observed.cholesky()?;
    }

    let outcomes: Vec<Result<Option<Replicate>>> = (0..config.replicates)
        .into_par_iter()
        .map(|i| {
            let seed = replicate_seed(config.seed, i as u64);
            let data = datagen::generate_from_model(&model, config.method, config.n, seed)?;
            let fit = match estimate::fit_mixture(&data, OUTCOME, &EXPOSURES) {
                Ok(f) => f,
                Err(Error::SingularDesign { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let mut values = vec![
                fit.exposures[0].crude,
                fit.exposures[1].crude,
                fit.exposures[0].adjusted,
                fit.exposures[1].adjusted,
                fit.psi_hat,
            ];
            if let Some(q) = config.quantiles {
                let scored = datagen::quantile_scores(&data, q, &EXPOSURES)?;
                match estimate::fit_mixture(&scored, OUTCOME, &EXPOSURES) {
                    Ok(f) => values.push(f.psi_hat),
                    Err(Error::SingularDesign { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
            Ok(Some(Replicate { values }))
        })
        .collect();

    let mut kept = Vec::with_capacity(config.replicates);
    let mut excluded = 0;
    for o in outcomes {
        match o? {
            Some(r) => kept.push(r),
            None => excluded += 1,
        }
    }
    if kept.is_empty() {
        return Err(Error::SingularDesign { condition: f64::INFINITY });
    }

    let expected = expectations(&config.scenario)?;
    let mut names: Vec<&str> = ESTIMANDS.to_vec();
    if config.quantiles.is_some() {
        names.push(QUANTILE_ESTIMAND);
    }
    let mut estimands = Vec::with_capacity(names.len());
    for (k, name) in names.iter().enumerate() {
        let column: Vec<f64> = kept.iter().map(|r| r.values[k]).collect();
        let (mean, sd, mcse) = summarize(&column);
        let truth = config.resolve_truth(name)?;
        let exp = expected.get(k).copied();
        estimands.push(EstimandSummary {
            estimand: name.to_string(),
            mean,
            sd,
            mcse,
            truth: truth.as_ref().map(|t| t.0),
            truth_source: truth.as_ref().map(|t| t.1.clone()),
            bias: truth.as_ref().map(|t| mean - t.0),
            expected: exp.map(|e| e.0),
            expected_source: exp.map(|e| e.1),
            bias_vs_expected: exp.map(|e| mean - e.0),
            expected_bias: match (exp, &truth) {
                (Some(e), Some(t)) => Some(e.0 - t.0),
                _ => None,
            },
        });
    }

    Ok(BiasReport {
        scenario: config.scenario.clone(),
        method: config.method,
        n: config.n,
        replicates: config.replicates,
        seed: config.seed,
        included: kept.len(),
        excluded_singular: excluded,
        outcome_variance: cov.variance(OUTCOME).expect("outcome"),
        outcome_noise_variance: model.noise_variance(OUTCOME).expect("outcome"),
        estimands,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepPolicy {
    /// Hold the causal coefficients, let the crude associations move.
    FixCausal,
    /// Hold the crude associations, let whatever else must move, move.
    FixCrude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Constant,
    Increasing,
    Decreasing,
    NonMonotone,
}

/// Strict monotonicity of a sequence; values within 1e-12 of the first are
/// treated as equal for the constant check.
pub fn direction(values: &[f64]) -> Direction {
    if values.iter().all(|v| (v - values[0]).abs() <= 1e-12) {
        Direction::Constant
    } else if values.windows(2).all(|w| w[1] > w[0]) {
        Direction::Increasing
    } else if values.windows(2).all(|w| w[1] < w[0]) {
        Direction::Decreasing
    } else {
        Direction::NonMonotone
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub scenario: ScenarioSpec,
    pub oracle: OracleCoefficients,
    pub psi: Option<PsiOracle>,
    /// Implied quantities at this point: `r1y`, `r2y`, V(Y) and V(ε), plus
    /// `b1`, `b2` when the point is a fig1a model.
    pub implied: BTreeMap<String, f64>,
    pub report: BiasReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: String,
    pub policy: SweepPolicy,
    pub points: Vec<SweepPoint>,
    pub monotonicity: BTreeMap<String, Direction>,
}

/// Refusal text for fixed-crude sweeps over fig1a/fig1b.
pub const REVERSAL_WARNING: &str = "holding r1y and r2y fixed while changing rho under fig1a/fig1b \
changes the causal coefficients b1 and b2 themselves (they move apart: the reversal paradox); \
comparing estimates against the original b1, b2 is then meaningless. \
Pass --acknowledge-reversal to run it anyway and report the implied b1, b2.";

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("sweep grid must be strictly increasing".into()));
    }
    Ok(())
}

fn run_point(base: &ExperimentConfig, value: f64, spec: ScenarioSpec) -> Result<SweepPoint> {
    let config = ExperimentConfig { scenario: spec.clone(), ..base.clone() };
    let report = run_experiment(&config)?;
    let oracle = scenario::closed_form(&spec)?;
    let psi = scenario::psi_oracle(&spec).ok();
    let mut implied = BTreeMap::new();
    implied.insert("r1y".into(), oracle.crude_beta1);
    implied.insert("r2y".into(), oracle.crude_beta2);
    implied.insert("outcome_variance".into(), report.outcome_variance);
    implied.insert("outcome_noise_variance".into(), report.outcome_noise_variance);
    if spec.kind == ScenarioKind::Fig1a {
        implied.insert("b1".into(), spec.params["b1"]);
        implied.insert("b2".into(), spec.params["b2"]);
    }
    Ok(SweepPoint { value, scenario: spec, oracle, psi, implied, report })
}

fn summarize_directions(points: &[SweepPoint]) -> BTreeMap<String, Direction> {
    let mut out = BTreeMap::new();
    let series = |f: &dyn Fn(&SweepPoint) -> f64| -> Vec<f64> { points.iter().map(f).collect() };
    out.insert("oracle.crude_beta1".into(), direction(&series(&|p| p.oracle.crude_beta1)));
    out.insert("oracle.crude_beta2".into(), direction(&series(&|p| p.oracle.crude_beta2)));
    out.insert("oracle.adjusted_beta1".into(), direction(&series(&|p| p.oracle.adjusted_beta1)));
    out.insert("oracle.adjusted_beta2".into(), direction(&series(&|p| p.oracle.adjusted_beta2)));
    if let Some(first) = points.first() {
        for key in first.implied.keys() {
            if points.iter().all(|p| p.implied.contains_key(key)) {
                out.insert(format!("implied.{key}"), direction(&series(&|p| p.implied[key])));
            }
        }
        for e in &first.report.estimands {
            let name = &e.estimand;
            let means = series(&|p| p.report.estimand(name).map_or(f64::NAN, |s| s.mean));
            out.insert(format!("empirical.{name}"), direction(&means));
        }
    }
    out
}

/// Sweep the exposure correlation over `grid`.
///
/// `FixCausal` holds every other scenario parameter. `FixCrude` holds the
/// crude associations: for fig2a/fig2b this is the same as moving the
/// ρ-controlling product; for fig1a/fig1b it forces the causal coefficients
/// to change and is refused unless `acknowledge_reversal` is set, in which
/// case every point is the fig1a model whose (b1, b2) reproduce the base
/// scenario's crude coefficients at that ρ.
pub fn collinearity_sweep(
    config: &ExperimentConfig,
    grid: &[f64],
    policy: SweepPolicy,
    acknowledge_reversal: bool,
) -> Result<SweepResult> {
    check_grid(grid)?;
    config.validate()?;
    let base = &config.scenario;
    let reversal = policy == SweepPolicy::FixCrude && matches!(base.kind, ScenarioKind::Fig1a | ScenarioKind::Fig1b);
    if reversal && !acknowledge_reversal {
        return Err(Error::PolicyScenarioMismatch(REVERSAL_WARNING.to_string()));
    }
    let crude = scenario::closed_form(base)?;
    let mut points = Vec::with_capacity(grid.len());
    for &rho in grid {
        let spec = if reversal {
            let (b1, b2) = scenario::fig1a_from_crude(crude.crude_beta1, crude.crude_beta2, rho);
            let mut s = ScenarioSpec::fig1a(b1, b2, rho);
            s.standardize_outcome = base.standardize_outcome;
            if let Some(&sigma2) = base.params.get("sigma2") {
                s.params.insert("sigma2".into(), sigma2);
            }
            s
        } else {
            base.with_rho(rho)?
        };
        points.push(run_point(config, rho, spec)?);
    }
    let monotonicity = summarize_directions(&points);
    Ok(SweepResult { parameter: "rho".into(), policy, points, monotonicity })
}

/// Empirical and exact ψ bias over a grid of ρ (fig1a or fig1b).
pub fn psi_bias_curve(config: &ExperimentConfig, grid: &[f64]) -> Result<SweepResult> {
    if !matches!(config.scenario.kind, ScenarioKind::Fig1a | ScenarioKind::Fig1b) {
        return Err(Error::UnsupportedScenario(format!(
            "psi curve needs fig1a or fig1b, got {}",
            config.scenario.kind.as_str()
        )));
    }
    let mut result = collinearity_sweep(config, grid, SweepPolicy::FixCausal, false)?;
    let split = |nonneg: bool, f: &dyn Fn(&SweepPoint) -> f64| -> Vec<f64> {
        result.points.iter().filter(|p| (p.value >= 0.0) == nonneg).map(f).collect()
    };
    let exact = |p: &SweepPoint| p.psi.expect("fig1a/fig1b").psi_bias.abs();
    let empirical = |p: &SweepPoint| {
        let psi = p.psi.expect("fig1a/fig1b");
        (p.report.estimand("psi").expect("psi").mean - psi.psi_true).abs()
    };
    let mut extra = BTreeMap::new();
    for (label, nonneg) in [("rho>=0", true), ("rho<0", false)] {
        let e = split(nonneg, &exact);
        if !e.is_empty() {
            extra.insert(format!("exact.abs_psi_bias[{label}]"), direction(&e));
            extra.insert(format!("empirical.abs_psi_bias[{label}]"), direction(&split(nonneg, &empirical)));
        }
    }
    result.monotonicity.extend(extra);
    Ok(result)
}

impl SweepResult {
    /// One row per (grid value, estimand). Points with a ψ oracle get an
    /// extra `psi_bias` row: mean ψ̂ minus the causal ψ, against the exact
    /// bias.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("grid_value,estimand,mean,sd,mcse,truth,bias,exact_expectation\n");
        let opt = |v: Option<f64>| v.map(format_sig17).unwrap_or_default();
        for p in &self.points {
            for e in &p.report.estimands {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    format_sig17(p.value),
                    e.estimand,
                    format_sig17(e.mean),
                    opt(e.sd),
                    opt(e.mcse),
                    opt(e.truth),
                    opt(e.bias),
                    opt(e.expected)
                );
            }
            if let (Some(psi), Some(e)) = (p.psi, p.report.estimand("psi")) {
                let mean = e.mean - psi.psi_true;
                let _ = writeln!(
                    out,
                    "{},psi_bias,{},{},{},{},{},{}",
                    format_sig17(p.value),
                    format_sig17(mean),
                    opt(e.sd),
                    opt(e.mcse),
                    format_sig17(0.0),
                    format_sig17(mean),
                    format_sig17(psi.psi_bias)
                );
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "sweep over {} ({:?})", self.parameter, self.policy);
        for p in &self.points {
            let implied: Vec<String> = p.implied.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
            let _ = writeln!(out, "\n{} = {}  [{}]", self.parameter, p.value, implied.join(" "));
            out.push_str(&p.report.to_text());
        }
        let _ = writeln!(out, "\nmonotonicity:");
        for (k, d) in &self.monotonicity {
            let _ = writeln!(out, "  {k:<40} {d:?}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplificationPoint {
    pub rho: f64,
    pub exact_ratio: f64,
    pub empirical_ratio: f64,
    pub c1: f64,
    pub mean_crude_beta1: f64,
    pub mean_adjusted_beta1: f64,
    pub report: BiasReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplificationResult {
    pub points: Vec<AmplificationPoint>,
}

/// Compare (adjusted β̂1 − c1) / (crude β̂1 − c1) with 1/(1 − ρ²) over a grid.
pub fn amplification_check(config: &ExperimentConfig, grid: &[f64]) -> Result<AmplificationResult> {
    check_grid(grid)?;
    let scenario::Parameters::Fig1b { c1, c2c3, .. } = config.scenario.resolve()? else {
        return Err(Error::UnsupportedScenario(format!(
            "amplification check needs fig1b, got {}",
            config.scenario.kind.as_str()
        )));
    };
    if c2c3 == 0.0 {
        return Err(Error::InvalidConfig("amplification ratio is undefined when c2c3 = 0".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &rho in grid {
        let spec = config.scenario.with_rho(rho)?;
        let report = run_experiment(&ExperimentConfig { scenario: spec, ..config.clone() })?;
        let crude = report.estimand("crude_beta1").expect("estimand").mean;
        let adjusted = report.estimand("adjusted_beta1").expect("estimand").mean;
        points.push(AmplificationPoint {
            rho,
            exact_ratio: 1.0 / (1.0 - rho * rho),
            empirical_ratio: (adjusted - c1) / (crude - c1),
            c1,
            mean_crude_beta1: crude,
            mean_adjusted_beta1: adjusted,
            report,
        });
    }
    Ok(AmplificationResult { points })
}

impl AmplificationResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("grid_value,exact_ratio,empirical_ratio,c1,mean_crude_beta1,mean_adjusted_beta1\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                format_sig17(p.rho),
                format_sig17(p.exact_ratio),
                format_sig17(p.empirical_ratio),
                format_sig17(p.c1),
                format_sig17(p.mean_crude_beta1),
                format_sig17(p.mean_adjusted_beta1)
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:>8}  {:>12}  {:>12}\n", "rho", "exact", "empirical");
        for p in &self.points {
            let _ = writeln!(out, "{:>8.4}  {:>12.6}  {:>12.6}", p.rho, p.exact_ratio, p.empirical_ratio);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(spec: ScenarioSpec) -> ExperimentConfig {
        ExperimentConfig::new(spec, GenMethod::Method1, 200, 50, 5)
    }

    #[test]
    fn config_validation() {
        let mut c = small(ScenarioSpec::fig1a(0.4, 0.2, 0.5));
        c.replicates = 0;
        assert!(matches!(run_experiment(&c), Err(Error::InvalidConfig(_))));
        let mut c = small(ScenarioSpec::fig1a(0.4, 0.2, 0.5));
        c.n = 3;
        assert!(c.validate().is_err());
        let c =
            small(ScenarioSpec::fig1a(0.4, 0.2, 0.5)).with_truth("adjusted_beta1", TruthRef::Parameter("c1".into()));
        assert!(c.validate().is_err());
        let c = small(ScenarioSpec::fig1a(0.4, 0.2, 0.5)).with_truth("beta9", TruthRef::Value(0.0));
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_replicate_has_no_spread() {
        let mut c = small(ScenarioSpec::fig1a(0.4, 0.2, 0.5));
        c.replicates = 1;
        let r = run_experiment(&c).unwrap();
        let e = r.estimand("adjusted_beta1").unwrap();
        assert!(e.sd.is_none() && e.mcse.is_none());
        let d = datagen::generate_from_model(
            &scenario::build_model(&c.scenario).unwrap(),
            GenMethod::Method1,
            200,
            replicate_seed(5, 0),
        )
        .unwrap();
        let fit = estimate::fit_mixture(&d, "Y", &EXPOSURES).unwrap();
        assert_eq!(e.mean, fit.exposures[0].adjusted);
        assert!(r.gates(GATE_SIGMAS).iter().all(|g| !g.passed));
    }

    #[test]
    fn truth_and_expectation_are_reported_separately() {
        let c = small(ScenarioSpec::fig1b(0.3, 0.2, 0.5))
            .with_truth("adjusted_beta1", TruthRef::Parameter("c1".into()))
            .with_truth("adjusted_beta2", TruthRef::Value(0.0));
        let r = run_experiment(&c).unwrap();
        let e = r.estimand("adjusted_beta1").unwrap();
        assert_eq!(e.truth, Some(0.3));
        assert!((e.expected_bias.unwrap() - 0.2 / 0.75).abs() < 1e-12);
        assert_eq!(e.bias.unwrap(), e.mean - 0.3);
        assert!(r.to_text().contains("EXPECTED bias"));
        assert!(r.estimand("crude_beta1").unwrap().truth.is_none());
    }

    #[test]
    fn quantile_psi_is_reported() {
        let mut c = small(ScenarioSpec::fig1a(0.4, 0.2, 0.5));
        c.quantiles = Some(4);
        let r = run_experiment(&c).unwrap();
        let q = r.estimand(QUANTILE_ESTIMAND).unwrap();
        assert!(q.expected.is_none() && q.mean > 0.0);
    }

    #[test]
    fn directions() {
        assert_eq!(direction(&[1.0, 2.0, 3.0]), Direction::Increasing);
        assert_eq!(direction(&[3.0, 2.0, 1.0]), Direction::Decreasing);
        assert_eq!(direction(&[1.0, 1.0]), Direction::Constant);
        assert_eq!(direction(&[1.0, 0.5, 2.0]), Direction::NonMonotone);
    }

    #[test]
    fn sweep_policy_refusal_and_grid_checks() {
        let c = small(ScenarioSpec::fig1a(0.4, 0.2, 0.5));
        assert!(matches!(
            collinearity_sweep(&c, &[0.1, 0.5], SweepPolicy::FixCrude, false),
            Err(Error::PolicyScenarioMismatch(_))
        ));
        assert!(collinearity_sweep(&c, &[0.5, 0.1], SweepPolicy::FixCausal, false).is_err());
        assert!(collinearity_sweep(&c, &[], SweepPolicy::FixCausal, false).is_err());
    }

    #[test]
    fn fix_causal_recomputes_crude() {
        let mut c = small(ScenarioSpec::fig1a(0.4, 0.2, 0.5));
        c.replicates = 2;
        let s = collinearity_sweep(&c, &[0.0, 0.3, 0.6, 0.9], SweepPolicy::FixCausal, false).unwrap();
        let r1y: Vec<f64> = s.points.iter().map(|p| p.implied["r1y"]).collect();
        for (got, want) in r1y.iter().zip([0.4, 0.46, 0.52, 0.58]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(s.monotonicity["implied.outcome_noise_variance"], Direction::Decreasing);
    }

    #[test]
    fn amplification_requires_fig1b() {
        let c = small(ScenarioSpec::fig1a(0.4, 0.2, 0.5));
        assert!(matches!(amplification_check(&c, &[0.0]), Err(Error::UnsupportedScenario(_))));
        let c = small(ScenarioSpec::fig1b(0.3, 0.0, 0.5));
        assert!(matches!(amplification_check(&c, &[0.0]), Err(Error::InvalidConfig(_))));
    }
}
