use mixsel_core::data::PreparedData;
use mixsel_core::sampler::SamplerConfig;
use mixsel_core::simgen::{generate, Scenario, ScenarioSpec};
use mixsel_core::{select_df, FitConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Nonlinear main effects need more than a linear basis: WAIC should pick
/// d >= 2 in most replicates.
#[test]
fn nonlinear_main_effects_select_df_above_one() {
    let reps = 3;
    let mut chosen = Vec::new();
    for r in 0..reps {
        let spec = ScenarioSpec::new(Scenario::NonlinearMainB3).with_seed(500 + r);
        let sim = generate(&spec, &mut ChaCha8Rng::seed_from_u64(500 + r)).unwrap();
        let data = PreparedData::new(&sim.dataset);
        let mut cfg = FitConfig::defaults_for(data.p(), 1);
        cfg.sampler = SamplerConfig {
            n_iter: 2000,
            burn_in: 500,
            thin: 3,
            rng_seed: 11 + r,
            ..SamplerConfig::default()
        };
        cfg.eb.max_steps = 10;
        cfg.lower_bound.short_iters = 200;
        let result = select_df(&data, &cfg, &[1, 2, 3, 4]).unwrap();
        let waic: Vec<f64> = result.table.iter().map(|(_, w)| w.waic).collect();
        assert!(waic.iter().all(|w| w.is_finite()));
        let best = waic.iter().copied().fold(f64::INFINITY, f64::min);
        let pick = result.table.iter().find(|(_, w)| w.waic == best).unwrap().0;
        assert_eq!(result.chosen, pick);
        chosen.push(result.chosen);
    }
    let above = chosen.iter().filter(|&&d| d >= 2).count();
    assert!(above * 3 >= reps as usize * 2, "chosen {chosen:?}");
}
