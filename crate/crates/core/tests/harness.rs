use mixlab::datagen::GenMethod;
use mixlab::harness::{self, Direction, ExperimentConfig, SweepPolicy, TruthRef};
use mixlab::scenario::ScenarioSpec;

fn z(report: &mixlab::BiasReport, estimand: &str, target: f64) -> f64 {
    let e = report.estimand(estimand).unwrap();
    (e.mean - target) / e.mcse.unwrap()
}

#[test]
fn estimators_are_unbiased_at_large_replicate_counts() {
    // MCSE here is about 1.4e-4, fine enough to expose a systematic error in
    // the generator or the regressions
    for method in [GenMethod::Method1, GenMethod::Method2, GenMethod::Hybrid] {
        let config = ExperimentConfig::new(ScenarioSpec::fig1b(0.3, 0.2, 0.5), method, 500, 20_000, 31);
        let r = harness::run_experiment(&config).unwrap();
        for (name, target) in [
            ("crude_beta1", 0.5),
            ("crude_beta2", 0.15),
            ("adjusted_beta1", 0.3 + 0.2 / 0.75),
            ("adjusted_beta2", -0.1 / 0.75),
            ("psi", 0.3 + 0.2 / 1.5),
        ] {
            assert!(z(&r, name, target).abs() < 4.0, "{method:?} {name}: z {}", z(&r, name, target));
        }
    }
}

#[test]
fn bias_against_truth_and_against_expectation() {
    let config = ExperimentConfig::new(ScenarioSpec::fig1b(0.3, 0.2, 0.5), GenMethod::Method1, 1000, 1000, 8)
        .with_truth("adjusted_beta1", TruthRef::Parameter("c1".into()));
    let r = harness::run_experiment(&config).unwrap();
    let e = r.estimand("adjusted_beta1").unwrap();
    assert_eq!(e.bias.unwrap(), e.mean - 0.3);
    assert!((e.bias.unwrap() - 0.266_67).abs() < 3.0 * e.mcse.unwrap() + 1e-5);
    assert!(z(&r, "adjusted_beta1", 0.566_666_666_666_666_7).abs() < 3.0);
    assert_eq!(r.excluded_singular, 0);
}

#[test]
fn no_singular_replicates_at_high_correlation() {
    let config = ExperimentConfig::new(ScenarioSpec::fig1a(0.2, 0.1, 0.95), GenMethod::Method1, 1000, 200, 2);
    assert_eq!(harness::run_experiment(&config).unwrap().excluded_singular, 0);
}

#[test]
fn fixed_causal_sweep_reports_implied_crude_coefficients() {
    let config = ExperimentConfig::new(ScenarioSpec::fig1a(0.4, 0.2, 0.0), GenMethod::Method1, 100, 5, 1);
    let s = harness::collinearity_sweep(&config, &[0.0, 0.3, 0.6, 0.9], SweepPolicy::FixCausal, false).unwrap();
    let r1y: Vec<f64> = s.points.iter().map(|p| p.implied["r1y"]).collect();
    for (got, want) in r1y.iter().zip([0.4, 0.46, 0.52, 0.58]) {
        assert!((got - want).abs() < 1e-12);
    }
    assert_eq!(s.monotonicity["implied.r1y"], Direction::Increasing);
    assert!(s.points.iter().all(|p| (p.report.outcome_variance - 1.0).abs() < 1e-12));
}

#[test]
fn fixed_crude_sweep_holds_fig2a_crude_coefficients() {
    let config = ExperimentConfig::new(ScenarioSpec::fig2a(0.0, 0.3, 0.2), GenMethod::Method1, 100, 5, 1);
    let s = harness::collinearity_sweep(&config, &[0.0, 0.3, 0.6], SweepPolicy::FixCrude, false).unwrap();
    for p in &s.points {
        assert_eq!((p.oracle.crude_beta1, p.oracle.crude_beta2), (0.3, 0.2));
    }
    assert_eq!(s.monotonicity["oracle.crude_beta1"], Direction::Constant);
}

#[test]
fn acknowledged_reversal_sweep_satisfies_moment_equations() {
    let config = ExperimentConfig::new(ScenarioSpec::fig1b(0.3, 0.2, 0.5), GenMethod::Method1, 100, 5, 1);
    let s = harness::collinearity_sweep(&config, &[0.1, 0.4, 0.7], SweepPolicy::FixCrude, true).unwrap();
    for p in &s.points {
        let (b1, b2) = (p.implied["b1"], p.implied["b2"]);
        assert!((b1 + p.value * b2 - 0.5).abs() < 1e-12);
        assert!((b2 + p.value * b1 - 0.15).abs() < 1e-12);
        assert_eq!(p.scenario.kind, mixlab::ScenarioKind::Fig1a);
    }
}

#[test]
fn amplification_exact_ratios() {
    let config = ExperimentConfig::new(ScenarioSpec::fig1b(0.3, 0.2, 0.0), GenMethod::Method1, 200, 10, 1);
    let a = harness::amplification_check(&config, &[0.0, 0.5, 0.6]).unwrap();
    let exact: Vec<f64> = a.points.iter().map(|p| p.exact_ratio).collect();
    assert_eq!(exact[0], 1.0);
    assert!((exact[1] - 1.333_333_333_333_333_3).abs() < 1e-15);
    assert!((exact[2] - 1.5625).abs() < 1e-15);
}

#[test]
fn psi_curve_without_confounding_is_flat_at_zero() {
    let config = ExperimentConfig::new(ScenarioSpec::fig1b(0.3, 0.0, 0.0), GenMethod::Method1, 200, 10, 1);
    let s = harness::psi_bias_curve(&config, &[-0.5, 0.0, 0.5]).unwrap();
    assert!(s.points.iter().all(|p| p.psi.unwrap().psi_bias == 0.0));
    assert_eq!(s.monotonicity["exact.abs_psi_bias[rho>=0]"], Direction::Constant);
    let csv = s.to_csv();
    assert!(csv.starts_with("grid_value,estimand,mean,sd,mcse,truth,bias,exact_expectation\n"));
    assert_eq!(csv.lines().filter(|l| l.contains(",psi_bias,")).count(), 3);
}

#[test]
fn psi_curve_rejects_fig2() {
    let config = ExperimentConfig::new(ScenarioSpec::fig2a(0.0, 0.3, 0.2), GenMethod::Method1, 200, 10, 1);
    assert!(harness::psi_bias_curve(&config, &[0.0]).is_err());
}

#[test]
fn report_round_trips_through_json() {
    let config = ExperimentConfig::new(ScenarioSpec::fig2b(0.2, 0.5, 0.6), GenMethod::Hybrid, 100, 10, 4);
    let r = harness::run_experiment(&config).unwrap();
    let back: mixlab::BiasReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
    let cfg: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&config).unwrap()).unwrap();
    assert_eq!(cfg, config);
}
