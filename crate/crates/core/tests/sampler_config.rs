use mixsel_core::sampler::config::*;

#[test]
fn default_keeps_one_thousand_draws() {
    let c = SamplerConfig::default();
    c.validate().unwrap();
    assert_eq!(c.kept_draws(), 1000);
    assert_eq!((1..=c.n_iter).filter(|&t| c.keeps(t)).count(), 1000);
}

#[test]
fn rejects_burn_in_past_end() {
    let c = SamplerConfig {
        n_iter: 10,
        burn_in: 10,
        ..SamplerConfig::default()
    };
    assert!(c.validate().is_err());
}
