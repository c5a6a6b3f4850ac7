//! Cross-module properties through the public API.

use phaselab_core::langevin::{EnsembleSpec, LangevinSettings, TsEnsemble};
use phaselab_core::mod_theory::{classify_at, lambda_of_a, solve_a, ModSolverOptions};
use phaselab_core::models::ts_sample_dataset;
use phaselab_core::ts_theory::{
    find_saddles_ts, gpr_update, is_stationary, qtilde_matrix, solve_bc, DiscrepancyTs, TsSolverOptions,
};
use phaselab_core::{EffectiveInteraction, ModConfig, PhaseLabel, TsConfig, TsDataset};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mod_roots_are_self_consistent(sigma2 in 0.08f64..0.4, width in 200usize..3000) {
        let cfg = ModConfig { p: 401, width, sigma2, sigma_a2: 0.002 / width as f64, gamma: 1e-4 };
        let opts = ModSolverOptions::default();
        let roots = solve_a(&cfg, &opts).locations();
        prop_assert!(!roots.is_empty());
        for a in roots {
            prop_assert!(a > 0.0 && a <= 1.0);
            let rhs = sigma2 / (lambda_of_a(a, &cfg) + sigma2);
            prop_assert!((a - rhs).abs() < 1e-8, "a = {a}, map = {rhs}");
            let point = classify_at(&cfg, a, 1.0);
            if a > 1.0 - 1e-9 {
                prop_assert_eq!(point.report.phase, PhaseLabel::Gfl);
            }
        }
    }

    #[test]
    fn mod_interaction_scales_inversely_with_noise_squared(sigma2 in 0.05f64..1.0, k in 1.1f64..3.0) {
        let cfg = ModConfig::reference(sigma2);
        let u1 = cfg.effective_interaction();
        let u2 = cfg.with_sigma2(sigma2 * k).effective_interaction();
        prop_assert!((u1 / u2 - k * k).abs() < 1e-10 * k * k);
    }
}

#[test]
fn ts_solution_is_a_fixed_point_of_the_update() {
    let cfg = TsConfig::reference(0.3);
    let opts = TsSolverOptions::default();
    let sol = solve_bc(&cfg, DiscrepancyTs::gp_start(cfg.eps), &opts).unwrap();
    let next = gpr_update(&qtilde_matrix(&sol.disc, &cfg, &opts).unwrap(), &cfg).unwrap();
    assert!((next.b - sol.disc.b).abs() < 1e-7 && (next.c - sol.disc.c).abs() < 1e-7, "{sol:?} → {next:?}");
    for m in &find_saddles_ts(&sol.disc, &cfg, &opts).minima {
        if m.interior {
            assert!(is_stationary(&sol.disc, &cfg, m.location));
        }
    }
}

#[test]
fn dataset_json_round_trip() {
    let cfg = TsConfig { n: 20, d: 5, width: 4, sigma2: 0.5, sigma_a2: 1.0, sigma_w2: 0.5, eps: -0.3 };
    let data = ts_sample_dataset(&cfg, 12);
    let back: TsDataset = serde_json::from_str(&serde_json::to_string(&data).unwrap()).unwrap();
    assert_eq!(back.inputs, data.inputs);
    assert_eq!(back.labels, data.labels);
    assert_eq!(back.to_csv().lines().count(), 21);
}

#[test]
fn checkpoint_round_trip_resumes_identically() {
    let cfg = TsConfig { n: 30, d: 4, width: 6, sigma2: 0.5, sigma_a2: 0.5, sigma_w2: 0.5, eps: -0.3 };
    let settings = LangevinSettings {
        step_size: 0.01,
        n_steps: 120,
        burn_in: 20,
        thin: 5,
        seed: 3,
        precondition: true,
        noise: 1.0,
    };
    let spec = EnsembleSpec { n_test: 10, ..EnsembleSpec::new(2, 1) };
    let mut straight = TsEnsemble::init(cfg, settings, spec).unwrap();
    straight.advance(120).unwrap();
    let mut split = TsEnsemble::init(cfg, settings, spec).unwrap();
    split.advance(47).unwrap();
    let mut split = TsEnsemble::from_json(&split.to_json().unwrap()).unwrap();
    split.advance(120).unwrap();
    assert_eq!(straight.to_json().unwrap(), split.to_json().unwrap());
}
