//! Fits one simulated scenario and prints inclusion probabilities.
//!
//! `cargo run --release -p mixsel-core --example scenario_fit -- [scenario] [n_iter] [df] [n] [p]`

use std::time::Instant;

use mixsel_core::data::PreparedData;
use mixsel_core::simgen::{generate, Scenario, ScenarioSpec};
use mixsel_core::summaries::{inclusion_probabilities, pool_draws};
use mixsel_core::{fit, ExposureSet, FitConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let scenario: Scenario = args
        .get(1)
        .map_or(Ok(Scenario::Polynomial51), |s| s.parse())?;
    let n_iter: usize = args.get(2).map_or(Ok(2000), |s| s.parse())?;
    let df: usize = args.get(3).map_or(Ok(2), |s| s.parse())?;

    let mut spec = ScenarioSpec::new(scenario).with_seed(7);
    if let Some(n) = args.get(4) {
        spec = spec.with_n(n.parse()?);
    }
    if let Some(p) = args.get(5) {
        spec = spec.with_p(p.parse()?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sim = generate(&spec, &mut rng)?;
    let data = PreparedData::new(&sim.dataset);

    let mut cfg = FitConfig::defaults_for(data.p(), df);
    cfg.sampler.n_iter = n_iter;
    cfg.sampler.burn_in = n_iter / 5;
    cfg.sampler.thin = 4;
    if let Ok(v) = std::env::var("SIGMA_BETA2") {
        cfg.slab = mixsel_core::SlabVariance::Fixed(v.parse()?);
    }

    let t = Instant::now();
    let res = fit(&data, &cfg)?;
    println!("elapsed {:.2?}", t.elapsed());
    println!(
        "sigma_beta2 {:.4}  waic {:.2}",
        res.prior.sigma_beta2, res.waic.waic
    );
    if let Some(eb) = &res.eb {
        println!(
            "eb {:.4} converged {} steps {}",
            eb.value,
            eb.converged,
            eb.trace.len()
        );
    }
    if let Some(lb) = &res.lower_bound {
        println!(
            "lower bound {:.4} met {} curve {:?}",
            lb.bound, lb.met, lb.curve
        );
    }

    let draws = pool_draws(&res.chains);
    let pairs = [
        ExposureSet::from_indices([1, 2]),
        ExposureSet::from_indices([3, 4]),
        ExposureSet::from_indices([2, 3, 4]),
    ];
    let inc = inclusion_probabilities(&draws, &pairs)?;
    println!("main pip {:.3?}", inc.main_pip);
    println!("set pip {:.3?}", inc.set_pip);
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    for d in &draws {
        let mut sets: Vec<String> = d
            .zeta
            .active_sets()
            .iter()
            .filter(|a| !a.is_empty())
            .map(|a| a.to_string())
            .collect();
        sets.sort();
        *counts.entry(sets.join(" ")).or_default() += 1;
    }
    let mut top: Vec<_> = counts.into_iter().collect();
    top.sort_by_key(|e| std::cmp::Reverse(e.1));
    for (m, c) in top.iter().take(5) {
        println!("{c:6} {m}");
    }
    println!("violations {}", res.violations());
    Ok(())
}
