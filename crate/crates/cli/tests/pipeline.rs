use proptest::prelude::*;
use rta_core::config::RunConfig;
use rta_core::harness::{ExperimentSpec, Harness};
use rta_core::model::validate;
use rta_core::rng::Parallelism;

const SHIPPED: &str = include_str!("../../../configs/reference.toml");

#[test]
fn shipped_config_parses_and_validates() {
    let cfg = RunConfig::parse(SHIPPED, "reference.toml").unwrap();
    let m = validate(&cfg.model).unwrap();
    assert!((m.constants.alpha - 1.5).abs() < 1e-12);
    assert_eq!(cfg.experiment.initial, cfg.initial);
}

#[test]
fn deterministic_experiments_pass_at_smoke_size() {
    let cfg = RunConfig::parse(SHIPPED, "reference.toml").unwrap();
    let m = validate(&cfg.model).unwrap();
    let spec = ExperimentSpec {
        initial: cfg.initial.clone(),
        ..ExperimentSpec::smoke()
    };
    let h = Harness {
        model: &m,
        spec: &spec,
        seed: cfg.seed,
        par: Parallelism::new(2),
    };
    let only: Vec<String> = ["symbol_check", "quadratic_form", "energy_identity", "weak_residual"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let t = h.run_all(Some(&only)).unwrap();
    assert!(!t.incomplete);
    assert!(t.passed(), "{:?}", t.assertions.iter().filter(|a| !a.passed).collect::<Vec<_>>());
    for name in &only {
        assert!(t.for_experiment(name).count() > 0, "{name}");
    }
}

#[test]
fn experiment_tables_are_seed_reproducible() {
    let cfg = RunConfig::parse(SHIPPED, "reference.toml").unwrap();
    let m = validate(&cfg.model).unwrap();
    let spec = ExperimentSpec::smoke();
    let run = |w| {
        Harness {
            model: &m,
            spec: &spec,
            seed: 5,
            par: Parallelism::new(w),
        }
        .run("crossing_time_convergence")
        .unwrap()
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.cells, b.cells);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn any_unknown_top_level_key_is_rejected(key in "[a-z]{3,10}") {
        prop_assume!(!["seed", "workers", "model", "initial", "solver", "simulate", "crossings", "experiment", "io"].contains(&key.as_str()));
        let text = format!("{key} = 1\n{SHIPPED}");
        let err = RunConfig::parse(&text, "x.toml").unwrap_err();
        prop_assert_eq!(err.exit_code(), 2);
        prop_assert!(err.to_string().contains("x.toml:1:"), "{}", err);
    }
}
