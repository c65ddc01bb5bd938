use conformal_warp_cli::config::{
    emit_config, parse_scenario, ConformalConfig, FluxConfig, ManifoldConfig, ManifoldKind,
    NonlinearConfig, PhiSource, ScenarioConfig, StringConfig, StringKind, SweepConfig,
};
use proptest::prelude::*;

fn scenario() -> impl Strategy<Value = ScenarioConfig> {
    (
        "[a-z][a-z0-9-]{0,12}",
        prop_oneof![Just(ManifoldKind::Sphere2), Just(ManifoldKind::Torus)],
        8usize..64,
        prop::option::of(0.1f64..10.0),
        prop::option::of(0u64..1000),
        prop::collection::vec((1usize..3, 0.0f64..5.0), 0..3),
        (0.0f64..3.0, 0.0f64..5.0),
        prop::option::of((
            1usize..50,
            0u64..99,
            prop::collection::vec(0.0f64..2.0, 0..4),
        )),
        prop::option::of((prop_oneof![Just(5usize), Just(8), Just(11)], -3.0f64..3.0)),
    )
        .prop_map(|(id, kind, res, vol, seed, flux, (beta, t), sweep, nl)| {
            let mut c = ScenarioConfig {
                id,
                ..Default::default()
            };
            c.manifold = ManifoldConfig {
                kind,
                resolution: res,
                ..Default::default()
            };
            c.conformal = ConformalConfig {
                source: if seed.is_some() {
                    PhiSource::Random
                } else {
                    PhiSource::Zero
                },
                seed,
                amplitude: seed.map(|_| 0.4),
                volume_len_n: vol,
                ..Default::default()
            };
            c.sources.flux = flux
                .into_iter()
                .map(|(degree, norm_sq_per_len2)| FluxConfig {
                    degree,
                    norm_sq_per_len2,
                })
                .collect();
            c.sources.string = StringConfig {
                kind: StringKind::Smooth,
                beta,
                strength_per_len2: t,
                ..Default::default()
            };
            c.sweep = sweep.map(|(samples, seed, betas)| SweepConfig {
                samples,
                seed,
                betas,
                ..Default::default()
            });
            c.nonlinear = nl.map(|(d, k)| NonlinearConfig {
                d,
                k,
                f_const: None,
            });
            c
        })
}

proptest! {
    #[test]
    fn emit_then_parse_is_identity(cfg in scenario()) {
        let text = emit_config(&cfg);
        let back = parse_scenario(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn shipped_scenarios_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let text = std::fs::read_to_string(&path).unwrap();
            parse_scenario(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}
