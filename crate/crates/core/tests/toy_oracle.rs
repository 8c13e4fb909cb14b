//! Sampler against the enumerated posterior of a two-exposure toy model.

mod common;

use common::*;
use mixsel_core::sampler::{
    candidate_models, run_chain, transition_probabilities, SamplerConfig, ZetaUpdateMode,
};
use mixsel_core::summaries::pool_draws;
use mixsel_core::{check_zeta_constraint, ZetaMatrix};

fn sampled(toy: &Toy, mode: ZetaUpdateMode, n_iter: usize, seed: u64) -> Vec<ZetaMatrix> {
    let cfg = SamplerConfig {
        n_iter,
        burn_in: 1000,
        thin: 2,
        n_chains: 1,
        zeta_update_mode: mode,
        rng_seed: seed,
        ..SamplerConfig::default()
    };
    let samples = run_chain(&toy.data, &toy.spec, &toy.prior, &cfg, 0).unwrap();
    assert_eq!(samples.violations, 0);
    pool_draws(std::slice::from_ref(&samples))
        .into_iter()
        .map(|d| d.zeta.clone())
        .collect()
}

#[test]
fn enumeration_covers_the_valid_space() {
    let states = enumerate_valid(2, 2);
    // empty; one of three sets in either slot; {1} and {2} in either order.
    assert_eq!(states.len(), 1 + 6 + 2);
    assert!(states.iter().all(check_zeta_constraint));
    let post = exact_posterior(&toy(11));
    let total: f64 = post.iter().map(|(_, w)| w).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn exact_posterior_is_not_degenerate() {
    let t = toy(11);
    let (main, pair) = pips(&exact_posterior(&t), 2);
    for v in main.iter().chain([&pair[0][1]]) {
        assert!(*v > 0.05 && *v < 0.999, "{main:?} {pair:?}");
    }
}

#[test]
fn gibbs_scan_kernel_is_reversible() {
    let t = toy(11);
    let states = enumerate_valid(2, 2);
    let lw = |z: &ZetaMatrix| log_evidence(&t, z) + log_zeta_prior(&t, z);
    let post = exact_posterior(&t);
    let pi = |z: &ZetaMatrix| post.iter().find(|(s, _)| s == z).unwrap().1;
    for gibbs in [true, false] {
        for j in 0..2 {
            for h in 0..2 {
                for s in &states {
                    for (target, k_st) in transition_probabilities(s, (j, h), 4, gibbs, lw) {
                        let back = transition_probabilities(&target, (j, h), 4, gibbs, lw);
                        let k_ts = back.iter().find(|(z, _)| z == s).map_or(0.0, |(_, p)| *p);
                        let gap = (pi(s) * k_st - pi(&target) * k_ts).abs();
                        assert!(gap < 1e-10, "gibbs={gibbs} {s:?} -> {target:?}: {gap}");
                    }
                }
            }
        }
    }
}

#[test]
fn families_connect_the_toy_space() {
    // Every valid state reaches every other through single-coordinate moves.
    let states = enumerate_valid(2, 2);
    let mut seen = vec![states[0].clone()];
    let mut frontier = seen.clone();
    while let Some(s) = frontier.pop() {
        for j in 0..2 {
            for h in 0..2 {
                for m in candidate_models(&s, (j, h), 4).models() {
                    if !seen.contains(&m) {
                        seen.push(m.clone());
                        frontier.push(m);
                    }
                }
            }
        }
    }
    assert_eq!(seen.len(), states.len());
}

#[test]
fn mh_chain_matches_exact_posterior() {
    let t = toy(11);
    let post = exact_posterior(&t);
    let draws = sampled(&t, ZetaUpdateMode::Mh, 40_000, 3);
    let refs: Vec<&ZetaMatrix> = draws.iter().collect();
    let emp = empirical(&enumerate_valid(2, 2), &refs);
    let tv = total_variation(&emp, &post);
    assert!(tv < 0.03, "total variation {tv}");
}

#[test]
fn gibbs_scan_chain_matches_exact_pips() {
    let t = toy(11);
    let (main, pair) = pips(&exact_posterior(&t), 2);
    let draws = sampled(&t, ZetaUpdateMode::GibbsScan, 40_000, 5);
    let refs: Vec<&ZetaMatrix> = draws.iter().collect();
    let (m_hat, p_hat) = pips(&empirical(&enumerate_valid(2, 2), &refs), 2);
    for j in 0..2 {
        assert!((main[j] - m_hat[j]).abs() < 0.03, "{main:?} vs {m_hat:?}");
    }
    assert!(
        (pair[0][1] - p_hat[0][1]).abs() < 0.03,
        "{pair:?} vs {p_hat:?}"
    );
}
