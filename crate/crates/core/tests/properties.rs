mod common;

use common::{max_abs_diff, random_dag, RandomDag};
use mixlab::datagen::{self, GenMethod};
use mixlab::error::Error;
use mixlab::estimate::{self, moment_ols};
use mixlab::scenario::{self, ScenarioSpec, EXPOSURES, OUTCOME};
use mixlab::sem;
use proptest::prelude::*;

fn feasible(spec: &ScenarioSpec) -> bool {
    scenario::build_model(spec).is_ok()
}

fn fig1a() -> impl Strategy<Value = ScenarioSpec> {
    (-0.7f64..0.7, -0.7f64..0.7, -0.95f64..0.95)
        .prop_map(|(b1, b2, rho)| ScenarioSpec::fig1a(b1, b2, rho))
        .prop_filter("feasible", feasible)
}

fn fig1b() -> impl Strategy<Value = ScenarioSpec> {
    (-0.6f64..0.6, -0.3f64..0.3, -0.9f64..0.9)
        .prop_map(|(c1, c2c3, rho)| ScenarioSpec::fig1b(c1, c2c3, rho))
        .prop_filter("feasible", feasible)
}

fn fig2a() -> impl Strategy<Value = ScenarioSpec> {
    (-0.9f64..0.9, -0.4f64..0.4, -0.4f64..0.4)
        .prop_map(|(rho, a, b)| ScenarioSpec::fig2a(rho, a, b))
        .prop_filter("feasible", feasible)
}

fn fig2b() -> impl Strategy<Value = ScenarioSpec> {
    (-0.4f64..0.4, -0.6f64..0.6, -0.6f64..0.6)
        .prop_map(|(c1c2, c3, c4)| ScenarioSpec::fig2b(c1c2, c3, c4))
        .prop_filter("feasible", feasible)
}

fn any_scenario() -> impl Strategy<Value = ScenarioSpec> {
    prop_oneof![fig1a(), fig1b(), fig2a(), fig2b()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn closed_form_equals_least_squares_on_implied_moments(spec in any_scenario()) {
        let o = scenario::closed_form(&spec).unwrap();
        let cov = sem::implied_covariance(&scenario::build_model(&spec).unwrap());
        let adjusted = moment_ols(&cov, OUTCOME, &EXPOSURES).unwrap();
        let crude1 = moment_ols(&cov, OUTCOME, &["X1"]).unwrap()[0];
        let crude2 = moment_ols(&cov, OUTCOME, &["X2"]).unwrap()[0];
        prop_assert!((o.crude_beta1 - crude1).abs() < 1e-10);
        prop_assert!((o.crude_beta2 - crude2).abs() < 1e-10);
        prop_assert!((o.adjusted_beta1 - adjusted[0]).abs() < 1e-10);
        prop_assert!((o.adjusted_beta2 - adjusted[1]).abs() < 1e-10);
        prop_assert!((o.rho - cov.get("X1", "X2").unwrap()).abs() < 1e-12);
    }

    #[test]
    fn scenario_observed_variables_are_standardized(spec in any_scenario()) {
        let cov = sem::implied_covariance(&scenario::build_model(&spec).unwrap());
        for v in ["X1", "X2", "Y"] {
            prop_assert!((cov.variance(v).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn amplification_law(spec in fig1b()) {
        let scenario::Parameters::Fig1b { c1, c2c3, rho, .. } = spec.resolve().unwrap() else { unreachable!() };
        let o = scenario::closed_form(&spec).unwrap();
        let crude_bias = o.crude_beta1 - c1;
        let adjusted_bias = o.adjusted_beta1 - c1;
        prop_assert!((crude_bias - c2c3).abs() < 1e-12);
        prop_assert!((adjusted_bias - crude_bias / (1.0 - rho * rho)).abs() < 1e-12);
        prop_assert!(adjusted_bias.abs() >= crude_bias.abs() - 1e-15);
    }

    #[test]
    fn co_exposure_sign_flip(c1 in 0.01f64..0.5, c2c3 in 0.01f64..0.3, rho in 0.01f64..0.9) {
        let spec = ScenarioSpec::fig1b(c1, c2c3, rho);
        prop_assume!(feasible(&spec));
        let o = scenario::closed_form(&spec).unwrap();
        prop_assert!(o.crude_beta2 > 0.0);
        prop_assert!(o.adjusted_beta2 < 0.0);
    }

    #[test]
    fn psi_bias_shrinks_with_rho(c2c3 in 0.01f64..0.3, a in -0.9f64..0.9, b in -0.9f64..0.9) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let bias = |rho: f64| scenario::psi_oracle(&ScenarioSpec::fig1b(0.2, c2c3, rho)).map(|p| p.psi_bias);
        if let (Ok(l), Ok(h)) = (bias(lo), bias(hi)) {
            prop_assert!(h.abs() < l.abs());
            prop_assert!((l - c2c3 / (1.0 + lo)).abs() < 1e-12);
        }
    }

    #[test]
    fn fig1b_and_its_fig1a_equivalent_share_moments(spec in fig1b(), seed in any::<u64>()) {
        let a = scenario::equivalent_fig1a(&spec).unwrap();
        prop_assume!(feasible(&a));
        let keep = ["X1", "X2", "Y"];
        let cb = sem::implied_covariance(&scenario::build_model(&spec).unwrap()).marginal(&keep).unwrap();
        let ca = sem::implied_covariance(&scenario::build_model(&a).unwrap()).marginal(&keep).unwrap();
        prop_assert!(max_abs_diff(cb.matrix(), ca.matrix()) < 1e-12);
        let db = datagen::generate(&spec, GenMethod::Method2, 16, seed).unwrap();
        let da = datagen::generate(&a, GenMethod::Method2, 16, seed).unwrap();
        prop_assert_eq!(db.columns(), da.columns());
    }

    #[test]
    fn reparameterization_round_trip(c1 in -0.6f64..0.6, c2c3 in -0.3f64..0.3, rho in -0.9f64..0.9) {
        prop_assume!(rho.abs() > 1e-3);
        let (b1, b2, _) = scenario::reparam_1b_to_1a(c1, c2c3, rho);
        let (c1b, c2c3b) = scenario::reparam_1a_to_1b(b1, b2, rho).unwrap();
        prop_assert!((c1 - c1b).abs() < 1e-9 && (c2c3 - c2c3b).abs() < 1e-9);
    }

    #[test]
    fn declaration_order_does_not_change_moments(dag in random_dag(), perm in Just(()).prop_perturb(|_, mut rng| {
        let mut v: Vec<usize> = (0..8).collect();
        for i in (1..v.len()).rev() { v.swap(i, (rng.next_u32() as usize) % (i + 1)); }
        v
    })) {
        let order: Vec<usize> = perm.into_iter().filter(|&i| i < dag.k).collect();
        let a = sem::implied_covariance(&dag.model());
        let b = sem::implied_covariance(&dag.model_with_order(&order));
        for i in 0..dag.k {
            for j in 0..dag.k {
                let (ni, nj) = (RandomDag::name(i), RandomDag::name(j));
                prop_assert!((a.get(&ni, &nj).unwrap() - b.get(&ni, &nj).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn standardization_hits_unit_variance_or_reports_the_shortfall(dag in random_dag()) {
        let model = dag.model();
        let targets = model.observed_names();
        match sem::solve_standardizing_noise(&model, &targets) {
            Ok(std) => {
                let cov = sem::implied_covariance(&std);
                for t in &targets {
                    prop_assert!((cov.variance(t).unwrap() - 1.0).abs() < 1e-10);
                }
            }
            Err(Error::InfeasibleStandardization { required, .. }) => prop_assert!(required < 0.0),
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
    }

    #[test]
    fn implied_covariance_is_symmetric_psd(dag in random_dag()) {
        let cov = sem::implied_covariance(&dag.model());
        prop_assert_eq!(cov.max_asymmetry(), 0.0);
        let eig = cov.matrix().clone().symmetric_eigen();
        prop_assert!(eig.eigenvalues.iter().all(|&l| l > -1e-10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn data_ols_equals_moment_ols_on_sample_covariance(spec in any_scenario(), seed in any::<u64>(), method in prop_oneof![
        Just(GenMethod::Method1), Just(GenMethod::Method2), Just(GenMethod::Hybrid)
    ]) {
        let data = datagen::generate(&spec, method, 64, seed).unwrap();
        let fit = estimate::ols(&data, OUTCOME, &EXPOSURES).unwrap();
        let moments = moment_ols(&data.sample_covariance().unwrap(), OUTCOME, &EXPOSURES).unwrap();
        for (a, b) in fit.coefficients.iter().zip(&moments) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn quantile_scores_are_ordered_bins(spec in any_scenario(), seed in any::<u64>(), q in 2usize..10) {
        let data = datagen::generate(&spec, GenMethod::Method1, 50, seed).unwrap();
        let scored = datagen::quantile_scores(&data, q, &EXPOSURES).unwrap();
        for name in EXPOSURES {
            let raw = data.column(name).unwrap();
            let s = scored.column(name).unwrap();
            prop_assert!(s.iter().all(|&v| v >= 0.0 && v < q as f64 && v.fract() == 0.0));
            for i in 0..raw.len() {
                for j in 0..raw.len() {
                    if raw[i] < raw[j] {
                        prop_assert!(s[i] <= s[j]);
                    }
                }
            }
        }
        prop_assert_eq!(scored.column(OUTCOME), data.column(OUTCOME));
    }
}
