//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a verification gate failed, 2 configuration or
//! model error, 3 numerically infeasible (covariance not positive definite,
//! singular design).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::datagen::{self, DataSource, GenMethod, Provenance};
use crate::error::{Error, Result};
use crate::harness::{self, ExperimentConfig, SweepPolicy, GATE_SIGMAS};
use crate::scenario::{self, OracleCoefficients, Parameters, PsiOracle, ScenarioSpec};
use crate::sem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Generate one dataset (CSV plus provenance JSON).
    Simulate,
    /// Replicated experiment with 4·MCSE gates against the closed forms.
    Verify,
    /// Exposure-correlation sweep.
    Sweep,
    /// Co-exposure amplification ratio over a grid of rho.
    Amplify,
    /// Bias of the summed adjusted coefficient over a grid of rho.
    PsiCurve,
    /// Print the exact population coefficients of a scenario.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Debug, Parser)]
#[command(name = "mixlab", version, about = "Simulation lab for bias in exposure-mixture regressions")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Directory for output files (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Allow fixed-crude sweeps on fig1a/fig1b.
    #[arg(long)]
    pub acknowledge_reversal: bool,
}

fn default_method() -> GenMethod {
    GenMethod::Method1
}
fn default_n() -> usize {
    1000
}

/// Input of `simulate`. Same shape as the emitted provenance record, so a
/// provenance file can be fed back in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    #[serde(flatten)]
    pub source: DataSource,
    #[serde(default = "default_method")]
    pub method: GenMethod,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_policy() -> SweepPolicy {
    SweepPolicy::FixCausal
}

/// Input of `sweep`, `amplify` and `psi-curve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    pub grid: Vec<f64>,
    #[serde(default = "default_policy")]
    pub policy: SweepPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reparameterization {
    pub target: String,
    pub params: std::collections::BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutput {
    pub scenario: ScenarioSpec,
    pub coefficients: OracleCoefficients,
    pub psi: Option<PsiOracle>,
    /// Observationally equivalent parameters under the other fig1 DAG.
    /// Absent for fig2 scenarios, and for fig1a at rho = 0.
    pub reparameterization: Option<Reparameterization>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotPositiveDefinite { .. } | Error::SingularDesign { .. } => 3,
        _ => 2,
    }
}

/// Run one command and return the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let threads = std::env::var("MIXLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok());
    let result = match threads {
        Some(t) if t > 0 => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(cli)),
            Err(e) => Err(Error::InvalidConfig(format!("MIXLAB_THREADS: {e}"))),
        },
        _ => dispatch(cli),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let text = fs::read_to_string(&cli.config)?;
    match cli.command {
        Command::Oracle => cmd_oracle(cli, &text),
        Command::Simulate => cmd_simulate(cli, &text),
        Command::Verify => cmd_verify(cli, &text),
        Command::Sweep | Command::Amplify | Command::PsiCurve => cmd_grid(cli, &text),
    }
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn emit(
    cli: &Cli,
    text: impl FnOnce() -> String,
    json: impl FnOnce() -> Result<String>,
    csv: Option<String>,
) -> Result<()> {
    let out = match cli.format {
        Format::Text => text(),
        Format::Json => json()?,
        Format::Csv => csv.ok_or_else(|| Error::InvalidConfig("this command has no CSV output".into()))?,
    };
    print!("{out}");
    Ok(())
}

/// Accepts a bare scenario or any config with a `scenario` field.
fn parse_scenario(text: &str) -> Result<ScenarioSpec> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let value = match value.get("scenario") {
        Some(inner) if value.get("kind").is_none() => inner.clone(),
        _ => value,
    };
    Ok(serde_json::from_value(value)?)
}

pub fn oracle(spec: &ScenarioSpec) -> Result<OracleOutput> {
    scenario::build_model(spec)?;
    let coefficients = scenario::closed_form(spec)?;
    let psi = scenario::psi_oracle(spec).ok();
    let reparameterization = match spec.resolve()? {
        Parameters::Fig1b { c1, c2c3, rho, .. } => {
            let (b1, b2, _) = scenario::reparam_1b_to_1a(c1, c2c3, rho);
            Some(Reparameterization {
                target: "fig1a".into(),
                params: [("b1".to_string(), b1), ("b2".to_string(), b2), ("rho".to_string(), rho)].into(),
            })
        }
        Parameters::Fig1a { b1, b2, rho } => match scenario::reparam_1a_to_1b(b1, b2, rho) {
            Ok((c1, c2c3)) => Some(Reparameterization {
                target: "fig1b".into(),
                params: [("c1".to_string(), c1), ("c2c3".to_string(), c2c3), ("rho".to_string(), rho)].into(),
            }),
            Err(Error::ZeroRho) => None,
            Err(e) => return Err(e),
        },
        _ => None,
    };
    Ok(OracleOutput { scenario: spec.clone(), coefficients, psi, reparameterization })
}

fn oracle_text(o: &OracleOutput) -> String {
    let c = &o.coefficients;
    let mut s = format!(
        "scenario {} {}\nrho {:.6}\n{:<10} {:>12} {:>12}\n{:<10} {:>12.6} {:>12.6}\n{:<10} {:>12.6} {:>12.6}{}\n",
        o.scenario.kind.as_str(),
        serde_json::to_string(&o.scenario.params).unwrap_or_default(),
        c.rho,
        "",
        "beta1",
        "beta2",
        "crude",
        c.crude_beta1,
        c.crude_beta2,
        "adjusted",
        c.adjusted_beta1,
        c.adjusted_beta2,
        if c.adjusted_tabulated { "" } else { "  (derived)" }
    );
    if let Some(p) = o.psi {
        s.push_str(&format!("psi true {:.6}  expected {:.6}  bias {:.6}\n", p.psi_true, p.psi_expected, p.psi_bias));
    }
    match &o.reparameterization {
        Some(r) => {
            let parts: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
            s.push_str(&format!("equivalent {}: {}\n", r.target, parts.join(" ")));
        }
        None if matches!(o.scenario.kind, scenario::ScenarioKind::Fig1a) => {
            s.push_str("equivalent fig1b: not identified at rho = 0\n");
        }
        None => {}
    }
    s
}

fn cmd_oracle(cli: &Cli, text: &str) -> Result<i32> {
    let spec = parse_scenario(text)?;
    let o = oracle(&spec)?;
    emit(cli, || oracle_text(&o), || to_json(&o), None)?;
    Ok(0)
}

fn cmd_simulate(cli: &Cli, text: &str) -> Result<i32> {
    let mut config: SimulateConfig = serde_json::from_str(text)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(n) = cli.n {
        config.n = n;
    }
    if config.n == 0 {
        return Err(Error::InvalidConfig("n must be positive".into()));
    }
    let data = match &config.source {
        DataSource::Scenario(spec) => datagen::generate(spec, config.method, config.n, config.seed)?,
        DataSource::Model(model) => datagen::generate_from_model(model, config.method, config.n, config.seed)?,
        DataSource::Covariance(cov) => {
            if config.method != GenMethod::Method2 {
                return Err(Error::InvalidConfig("a covariance source can only be sampled with method m2".into()));
            }
            datagen::sample_method2(cov, config.n, config.seed)?
        }
    };
    let csv = data.to_csv_string();
    let provenance = data.provenance_json() + "\n";
    write_atomic(&cli.out.join("data.csv"), &csv)?;
    write_atomic(&cli.out.join("data.provenance.json"), &provenance)?;
    let summary = || {
        let p: &Provenance = data.provenance();
        format!(
            "wrote {} rows of {} ({} seed {}) to {}\n",
            data.n(),
            data.names().join(","),
            p.method.as_str(),
            p.seed,
            cli.out.display()
        )
    };
    emit(cli, summary, || Ok(provenance.clone()), Some(csv.clone()))?;
    Ok(0)
}

fn apply_overrides(cli: &Cli, config: &mut ExperimentConfig) {
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(n) = cli.n {
        config.n = n;
    }
    if let Some(r) = cli.replicates {
        config.replicates = r;
    }
}

fn cmd_verify(cli: &Cli, text: &str) -> Result<i32> {
    let mut config: ExperimentConfig = serde_json::from_str(text)?;
    apply_overrides(cli, &mut config);
    let report = harness::run_experiment(&config)?;
    let gates = report.gates(GATE_SIGMAS);
    let mut rendered = report.to_text();
    for g in &gates {
        let z = g.z.map_or_else(|| "undefined".to_string(), |z| format!("{z:+.3}"));
        rendered.push_str(&format!(
            "gate {:<16} {} (z = {z}, limit {GATE_SIGMAS})\n",
            g.estimand,
            if g.passed { "pass" } else { "FAIL" }
        ));
    }
    #[derive(Serialize)]
    struct Out<'a> {
        #[serde(flatten)]
        report: &'a harness::BiasReport,
        gates: &'a [harness::Gate],
    }
    let json = to_json(&Out { report: &report, gates: &gates })?;
    write_atomic(&cli.out.join("report.json"), &json)?;
    write_atomic(&cli.out.join("report.txt"), &rendered)?;
    emit(cli, || rendered.clone(), || Ok(json.clone()), None)?;
    Ok(if gates.iter().all(|g| g.passed) { 0 } else { 1 })
}

fn cmd_grid(cli: &Cli, text: &str) -> Result<i32> {
    let mut config: SweepConfig = serde_json::from_str(text)?;
    apply_overrides(cli, &mut config.experiment);
    let (stem, text, json, csv) = match cli.command {
        Command::Amplify => {
            let r = harness::amplification_check(&config.experiment, &config.grid)?;
            ("amplify", r.to_text(), to_json(&r)?, r.to_csv())
        }
        Command::PsiCurve => {
            let r = harness::psi_bias_curve(&config.experiment, &config.grid)?;
            ("sweep", r.to_text(), to_json(&r)?, r.to_csv())
        }
        _ => {
            let r =
                harness::collinearity_sweep(&config.experiment, &config.grid, config.policy, cli.acknowledge_reversal)?;
            ("sweep", r.to_text(), to_json(&r)?, r.to_csv())
        }
    };
    write_atomic(&cli.out.join(format!("{stem}.csv")), &csv)?;
    write_atomic(&cli.out.join(format!("{stem}.json")), &json)?;
    emit(cli, || text, || Ok(json.clone()), Some(csv.clone()))?;
    Ok(0)
}

/// Implied covariance of the observed variables of a scenario, for quick
/// inspection in tests and scripts.
pub fn observed_covariance(spec: &ScenarioSpec) -> Result<sem::CovarianceMatrix> {
    let model = scenario::build_model(spec)?;
    sem::implied_covariance(&model).marginal(&model.observed_names())
}
