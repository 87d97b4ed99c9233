use proptest::prelude::*;
use roughspde::config::{ExperimentConfig, InitConfig, SchemeName};
use roughspde_core::kernels::KernelKind;
use roughspde_core::regularity::Direction;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, 0.0..1.0f64, Just(0.0), Just(1e-300), Just(-2.5e17)]
}

fn init() -> impl Strategy<Value = InitConfig> {
    prop_oneof![
        (finite(), 0u32..100).prop_map(|(hurst, terms)| InitConfig::Weierstrass { hurst, terms }),
        (finite(), 0..=i64::MAX as u64).prop_map(|(hurst, seed)| InitConfig::FrozenFbm { hurst, seed }),
        (finite(), finite(), finite()).prop_map(|(center, width, amplitude)| InitConfig::Bump { center, width, amplitude }),
        finite().prop_map(|value| InitConfig::Constant { value }),
        finite().prop_map(|slope| InitConfig::Linear { slope }),
        Just(InitConfig::Zero),
    ]
}

fn config() -> impl Strategy<Value = ExperimentConfig> {
    (
        (finite(), any::<bool>(), finite(), 1usize..1 << 20, finite(), 1usize..1 << 20),
        (any::<bool>(), init(), finite(), finite(), any::<bool>(), 0usize..50),
        (
            prop::collection::vec(prop_oneof![Just(Direction::Space), Just(Direction::Time)], 0..3),
            prop::collection::vec(finite(), 0..4),
            prop::option::of(prop::collection::vec(finite(), 0..5)),
            prop::option::of(prop::collection::vec(finite(), 0..5)),
        ),
        (0..=i64::MAX as u64, 0usize..100_000, "[a-z/._ -]{0,12}", finite(), finite(), 1usize..64),
    )
        .prop_map(|(g, s, r, run)| {
            let mut c = ExperimentConfig::default();
            c.noise.hurst = g.0;
            c.noise.allow_outside_theorem = g.1;
            c.grid.half_width = g.2;
            c.grid.nx = g.3;
            c.grid.horizon = g.4;
            c.grid.nt = g.5;
            c.kernels.kind = if s.0 { KernelKind::Heat } else { KernelKind::Wave };
            c.kernels.init = s.1;
            c.solver.sigma_a = s.2;
            c.solver.sigma_b = s.3;
            c.solver.scheme = if s.4 { SchemeName::Mild } else { SchemeName::Picard };
            c.solver.n_iters = s.5;
            c.regularity.directions = r.0;
            c.regularity.orders = r.1;
            c.regularity.space_lags = r.2;
            c.regularity.time_lags = r.3;
            c.run.seed = run.0;
            c.run.paths = run.1;
            c.run.out = run.2;
            c.tolerances.drift = run.3;
            c.property_p.far_reach = run.4;
            c.property_p.time_cells = run.5;
            c
        })
}

proptest! {
    #[test]
    fn toml_round_trip_is_identity(c in config()) {
        let text = c.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_toml(), text);
        prop_assert_eq!(back.hash(), c.hash());
    }
}

#[test]
fn unrepresentable_seed_is_a_validation_error() {
    let mut c = ExperimentConfig::default();
    c.run.seed = u64::MAX;
    let e = c.resolve().unwrap_err();
    assert_eq!(e.exit_code(), 1);
    assert!(e.to_string().contains("run.seed"), "{e}");
}

#[test]
fn default_round_trips_and_empty_file_is_default() {
    let d = ExperimentConfig::default();
    assert_eq!(ExperimentConfig::from_toml(&d.to_toml()).unwrap(), d);
    assert_eq!(ExperimentConfig::from_toml("").unwrap(), d);
}
