//! Subcommand implementations.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use mixsel_core::basis::SplineSpec;
use mixsel_core::data::PreparedData;
use mixsel_core::diagnostics::waic_for_chains;
use mixsel_core::hyper::permutation_lower_bound;
use mixsel_core::priors::{prob_exact_set_absent, shrinkage_is_monotone, PriorProbQuery};
use mixsel_core::sampler::Chain;
use mixsel_core::simgen::{generate, Scenario, ScenarioSpec};
use mixsel_core::summaries::{
    cross_section, inclusion_probabilities, pool_draws, predict_f, range_grid, surface_2d,
    CROSS_SECTION_QUANTILES,
};
use mixsel_core::{ExposureSet, FitResult, PriorConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{io_err, CliError, CliResult};
use crate::fitdir::{write_fit, write_lower_bound_curve, LoadedFit};
use crate::io::{load_dataset, real, sha256_file, write_text, CsvOut, Manifest, Staged};
use crate::settings::{
    to_toml, ModelSettings, PriorProbSettings, SimulateSettings, SummarizeSettings,
};

/// Makes the data path absolute so that the saved config reruns from any
/// working directory.
fn absolute_data(mut s: ModelSettings) -> CliResult<ModelSettings> {
    if let Some(path) = &s.data {
        s.data = Some(std::fs::canonicalize(path).map_err(io_err(path))?);
    }
    Ok(s)
}

struct Loaded {
    data: PreparedData,
    outcome: String,
    sha256: String,
    path: PathBuf,
}

fn load(s: &ModelSettings) -> CliResult<Loaded> {
    let (path, outcome) = s.require_data()?;
    let ds = load_dataset(s)?;
    info!(
        "loaded {} rows, {} exposures, {} covariates",
        ds.n(),
        ds.p(),
        ds.m()
    );
    Ok(Loaded {
        data: PreparedData::new(&ds),
        outcome: outcome.to_string(),
        sha256: sha256_file(path)?,
        path: path.to_path_buf(),
    })
}

pub fn simulate(s: SimulateSettings, out: &Path, force: bool) -> CliResult<()> {
    let name = s
        .scenario
        .as_deref()
        .ok_or_else(|| CliError::Usage("--scenario is required".into()))?;
    let scenario: Scenario = name.parse()?;
    let seed = s.seed.unwrap_or(1);
    let mut spec = ScenarioSpec::new(scenario).with_seed(seed);
    if let Some(n) = s.n {
        spec = spec.with_n(n);
    }
    if let Some(p) = s.p {
        spec = spec.with_p(p);
    }
    let sim = generate(&spec, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let ds = &sim.dataset;

    let staged = Staged::create(out, force)?;
    let mut header = vec!["y".to_string()];
    header.extend(ds.exposure_names.iter().cloned());
    header.extend(ds.covariate_names.iter().cloned());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = CsvOut::create(staged.file("data.csv"), &header)?;
    for i in 0..ds.n() {
        let mut row = vec![real(ds.y[i])];
        row.extend((0..ds.p()).map(|j| real(ds.x[(i, j)])));
        row.extend((0..ds.m()).map(|j| real(ds.c[(i, j)])));
        w.row(row)?;
    }
    w.finish()?;
    let mut w = CsvOut::create(staged.file("truth.csv"), &["row", "f_true"])?;
    for (i, f) in sim.f_true.iter().enumerate() {
        w.row([(i + 1).to_string(), real(*f)])?;
    }
    w.finish()?;

    let resolved = SimulateSettings {
        scenario: Some(scenario.name().to_string()),
        n: Some(spec.n),
        p: Some(spec.p),
        seed: Some(seed),
    };
    write_text(&staged.file("config.toml"), &to_toml(&resolved)?)?;
    #[derive(Serialize)]
    struct Truth {
        true_sets: Vec<Vec<usize>>,
        beta_c: Vec<f64>,
        correlation: f64,
    }
    let truth = Truth {
        true_sets: sim
            .true_sets
            .iter()
            .map(|s| s.iter().map(|j| j + 1).collect())
            .collect(),
        beta_c: sim.beta_c.clone(),
        correlation: spec.correlation,
    };
    Manifest::new("simulate", &resolved)?
        .results(&truth)?
        .write(&staged)?;
    staged.commit()?;
    Ok(())
}

fn write_model_outputs(
    staged: &Staged,
    command: &str,
    s: &ModelSettings,
    loaded: &Loaded,
    fit: &FitResult,
) -> CliResult<()> {
    let summary = write_fit(
        staged.path(),
        fit,
        &loaded.data,
        &loaded.outcome,
        &loaded.sha256,
        s,
        &s.sampler(),
    )?;
    if summary.violations > 0 {
        log::warn!("{} invariant violations recorded", summary.violations);
    }
    write_text(&staged.file("config.toml"), &to_toml(s)?)?;
    Manifest::new(command, s)?
        .input(&loaded.path)?
        .results(&summary)?
        .write(staged)
}

pub fn fit(s: ModelSettings, out: &Path, force: bool) -> CliResult<()> {
    let s = absolute_data(s)?;
    let loaded = load(&s)?;
    let s = s.resolved(&loaded.data);
    let cfg = s.fit_config(loaded.data.p(), s.df())?;
    let staged = Staged::create(out, force)?;
    let fit = mixsel_core::fit(&loaded.data, &cfg)?;
    write_model_outputs(&staged, "fit", &s, &loaded, &fit)?;
    staged.commit()?;
    Ok(())
}

pub fn select_df(s: ModelSettings, out: &Path, force: bool) -> CliResult<()> {
    let s = absolute_data(s)?;
    let loaded = load(&s)?;
    let s = s.resolved(&loaded.data);
    let grid = s.df_grid();
    let cfg = s.fit_config(loaded.data.p(), s.df())?;
    let staged = Staged::create(out, force)?;
    let result = mixsel_core::select_df(&loaded.data, &cfg, &grid)?;
    let names = &loaded.data.exposure_names;

    let mut header = vec!["df", "waic", "lppd", "p_waic", "sigma_beta2", "chosen"];
    let pip_cols: Vec<String> = names.iter().map(|n| format!("pip_{n}")).collect();
    header.extend(pip_cols.iter().map(String::as_str));
    let mut table = CsvOut::create(staged.file("df_table.csv"), &header)?;
    let mut per_df = BTreeMap::new();
    for f in &result.fits {
        let dir = staged.file(&format!("d{}", f.df));
        let fit_settings = ModelSettings {
            df: Some(f.df),
            ..s.clone()
        };
        let summary = write_fit(
            &dir,
            f,
            &loaded.data,
            &loaded.outcome,
            &loaded.sha256,
            &fit_settings,
            &cfg.sampler,
        )?;
        let mut row = vec![
            f.df.to_string(),
            real(f.waic.waic),
            real(f.waic.lppd),
            real(f.waic.p_waic),
            real(f.prior.sigma_beta2),
            (f.df == result.chosen).to_string(),
        ];
        row.extend(names.iter().map(|n| real(summary.main_pip[n])));
        table.row(row)?;
        per_df.insert(format!("d{}", f.df), summary);
    }
    table.finish()?;
    write_text(&staged.file("config.toml"), &to_toml(&s)?)?;

    #[derive(Serialize)]
    struct Results<'a> {
        chosen_df: usize,
        fits: BTreeMap<String, crate::fitdir::FitSummary>,
        grid: &'a [usize],
    }
    Manifest::new("select-df", &s)?
        .input(&loaded.path)?
        .results(&Results {
            chosen_df: result.chosen,
            fits: per_df,
            grid: &grid,
        })?
        .write(&staged)?;
    staged.commit()?;
    println!("chosen df: {}", result.chosen);
    Ok(())
}

pub fn lower_bound(s: ModelSettings, out: &Path, force: bool) -> CliResult<()> {
    let s = absolute_data(s)?;
    let loaded = load(&s)?;
    let s = s.resolved(&loaded.data);
    let cfg = s.fit_config(loaded.data.p(), s.df())?;
    let spec = SplineSpec::fit(&loaded.data.x_raw, cfg.df)?;
    let staged = Staged::create(out, force)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sampler.rng_seed);
    let lb = permutation_lower_bound(
        &loaded.data,
        &spec,
        &cfg.prior,
        &cfg.sampler,
        &cfg.lower_bound,
        &mut rng,
    )?;
    write_lower_bound_curve(&staged.file("lower_bound_curve.csv"), &lb)?;
    write_text(&staged.file("config.toml"), &to_toml(&s)?)?;
    #[derive(Serialize)]
    struct Results {
        bound: f64,
        met: bool,
        violations: u64,
    }
    Manifest::new("lower-bound", &s)?
        .input(&loaded.path)?
        .results(&Results {
            bound: lb.bound,
            met: lb.met,
            violations: lb.violations,
        })?
        .write(&staged)?;
    staged.commit()?;
    println!(
        "lower bound: {} (criterion met: {})",
        real(lb.bound),
        lb.met
    );
    Ok(())
}

/// Extends every chain of a fit to `iters` total iterations.
pub fn resume(fit_dir: &Path, iters: usize, out: &Path, force: bool) -> CliResult<()> {
    let loaded_fit = LoadedFit::load(fit_dir)?;
    let model = &loaded_fit.model;
    let s = model.settings.clone();
    let loaded = load(&s)?;
    if loaded.sha256 != model.data_sha256 {
        return Err(CliError::Usage(format!(
            "{} changed since the fit was written",
            loaded.path.display()
        )));
    }
    let done = loaded_fit
        .checkpoints
        .iter()
        .map(|c| c.iteration)
        .max()
        .unwrap_or(0);
    if iters < done {
        return Err(CliError::Usage(format!(
            "--iters {iters} is below the {done} iterations already run"
        )));
    }
    let sampler = mixsel_core::sampler::SamplerConfig {
        n_iter: iters,
        ..model.sampler.clone()
    };
    let staged = Staged::create(out, force)?;
    let (chains, resume): (Vec<_>, Vec<_>) = loaded_fit
        .checkpoints
        .clone()
        .into_par_iter()
        .map(|cp| {
            let mut chain = Chain::resume(&loaded.data, &model.spec, &model.prior, &sampler, cp)?;
            chain.run_to(iters)?;
            Ok(chain.into_checkpoint().into_parts())
        })
        .collect::<mixsel_core::Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let waic = waic_for_chains(&chains)?;
    let fit = FitResult {
        df: model.df,
        spec: model.spec.clone(),
        prior: model.prior.clone(),
        eb: model.eb.clone(),
        lower_bound: model.lower_bound.clone(),
        chains,
        resume,
        waic,
    };
    let s = ModelSettings {
        iters: Some(iters),
        ..s
    };
    let summary = write_fit(
        staged.path(),
        &fit,
        &loaded.data,
        &loaded.outcome,
        &loaded.sha256,
        &s,
        &sampler,
    )?;
    write_text(&staged.file("config.toml"), &to_toml(&s)?)?;
    Manifest::new("resume", &s)?
        .input(&loaded.path)?
        .input(&fit_dir.join("model.json"))?
        .results(&summary)?
        .write(&staged)?;
    staged.commit()?;
    Ok(())
}

fn pair(spec: &str, model: &crate::fitdir::ModelFile) -> CliResult<(usize, usize)> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(CliError::Usage(format!(
            "expected two exposure names `a,b`, got `{spec}`"
        )));
    }
    Ok((
        model.exposure_index(parts[0])?,
        model.exposure_index(parts[1])?,
    ))
}

pub fn summarize(s: SummarizeSettings, out: Option<PathBuf>, force: bool) -> CliResult<()> {
    let fit_dir = s
        .fit
        .clone()
        .ok_or_else(|| CliError::Usage("--fit is required".into()))?;
    let fit = LoadedFit::load(&fit_dir)?;
    let model = &fit.model;
    let chains = fit.chains();
    let draws = pool_draws(&chains);
    let x = model.x_train();
    let grid_size = s.grid_size.unwrap_or(50);
    let quantiles = s
        .quantiles
        .clone()
        .unwrap_or_else(|| CROSS_SECTION_QUANTILES.to_vec());
    let cross = s.cross_section.clone().unwrap_or_default();
    let surfaces = s.surface.clone().unwrap_or_default();
    let sets = s.set.clone().unwrap_or_default();
    if cross.is_empty() && surfaces.is_empty() && sets.is_empty() && s.predict.is_none() {
        return Err(CliError::Usage(
            "nothing to summarize; pass --cross-section, --surface, --set or --predict".into(),
        ));
    }
    let out = out.unwrap_or_else(|| fit_dir.join("summary"));
    let staged = Staged::create(&out, force)?;

    for spec in &cross {
        let (t, c) = pair(spec, model)?;
        let curves = cross_section(&draws, &model.spec, &x, t, c, &quantiles, grid_size)?;
        let name = format!(
            "cross_section_{}_{}.csv",
            model.exposures[t], model.exposures[c]
        );
        let mut w = CsvOut::create(
            staged.file(&name),
            &[
                "co_quantile",
                "co_value",
                "x",
                "mean",
                "sd",
                "lower",
                "upper",
            ],
        )?;
        for curve in &curves {
            let sm = &curve.summary;
            for (i, g) in curve.grid.iter().enumerate() {
                w.row([
                    real(curve.co_quantile),
                    real(curve.co_value),
                    real(*g),
                    real(sm.mean[i]),
                    real(sm.sd[i]),
                    real(sm.lower[i]),
                    real(sm.upper[i]),
                ])?;
            }
        }
        w.finish()?;
    }

    for spec in &surfaces {
        let (a, b) = pair(spec, model)?;
        let surf = surface_2d(
            &draws,
            &model.spec,
            &x,
            (a, b),
            &range_grid(&x, a, grid_size),
            &range_grid(&x, b, grid_size),
        )?;
        let (na, nb) = (&model.exposures[a], &model.exposures[b]);
        let mut w = CsvOut::create(
            staged.file(&format!("surface_{na}_{nb}.csv")),
            &[na, nb, "mean", "sd"],
        )?;
        let cols = surf.grid_j.len();
        for (i, gi) in surf.grid_i.iter().enumerate() {
            for (j, gj) in surf.grid_j.iter().enumerate() {
                let k = i * cols + j;
                w.row([real(*gi), real(*gj), real(surf.mean[k]), real(surf.sd[k])])?;
            }
        }
        w.finish()?;
    }

    if !sets.is_empty() {
        let parsed = sets
            .iter()
            .map(|spec| {
                let idx = spec
                    .split(',')
                    .map(|n| model.exposure_index(n.trim()))
                    .collect::<CliResult<Vec<_>>>()?;
                Ok(ExposureSet::from_indices(idx))
            })
            .collect::<CliResult<Vec<_>>>()?;
        let inc = inclusion_probabilities(&draws, &parsed)?;
        let mut w = CsvOut::create(staged.file("set_pip.csv"), &["set", "pip", "exact_pip"])?;
        for ((set, pip), (_, exact)) in inc.set_pip.iter().zip(&inc.exact_set_pip) {
            let label = set
                .iter()
                .map(|j| model.exposures[j].as_str())
                .collect::<Vec<_>>()
                .join(",");
            w.row([label, real(*pip), real(*exact)])?;
        }
        w.finish()?;
    }

    let mut manifest = Manifest::new("summarize", &s)?.input(&fit_dir.join("model.json"))?;
    if let Some(path) = &s.predict {
        let delimiter = model.settings.delimiter.unwrap_or(',');
        let x_new = crate::io::read_exposure_rows(path, &model.exposures, delimiter)?;
        let pred = predict_f(&draws, &x_new, &model.spec, &x)?;
        let mut w = CsvOut::create(
            staged.file("predictions.csv"),
            &["row", "mean", "sd", "lower", "upper", "extrapolated"],
        )?;
        let sm = &pred.summary;
        for i in 0..sm.mean.len() {
            w.row([
                (i + 1).to_string(),
                real(sm.mean[i]),
                real(sm.sd[i]),
                real(sm.lower[i]),
                real(sm.upper[i]),
                pred.extrapolated[i].to_string(),
            ])?;
        }
        w.finish()?;
        manifest = manifest.input(path)?;
    }
    manifest.write(&staged)?;
    staged.commit()?;
    Ok(())
}

pub fn prior_prob(s: PriorProbSettings, out: Option<PathBuf>, force: bool) -> CliResult<()> {
    let p =
        s.p.ok_or_else(|| CliError::Usage("--p is required".into()))?;
    let d = PriorConfig::defaults_for(p);
    let k = s.k.unwrap_or(d.k);
    let m_shape = s.m_shape.unwrap_or(d.m_shape);
    let gamma = s.gamma.unwrap_or(d.gamma);
    let rows = (1..=p)
        .map(|j| {
            let q = PriorProbQuery {
                j,
                p,
                k,
                m_shape,
                gamma,
            };
            prob_exact_set_absent(&q).map(|v| (j, v))
        })
        .collect::<mixsel_core::Result<Vec<_>>>()?;
    let check = shrinkage_is_monotone(p, m_shape, gamma)?;

    let mut stdout = std::io::stdout().lock();
    let mut text = String::from("j,probability\n");
    for (j, v) in &rows {
        text.push_str(&format!("{j},{}\n", real(*v)));
    }
    stdout
        .write_all(text.as_bytes())
        .map_err(io_err("<stdout>"))?;
    eprintln!(
        "absence probability {} nondecreasing in the interaction order",
        if check.monotone { "is" } else { "is not" }
    );

    if let Some(out) = out {
        let staged = Staged::create(&out, force)?;
        write_text(&staged.file("prior_prob.csv"), &text)?;
        let resolved = PriorProbSettings {
            p: Some(p),
            k: Some(k),
            m_shape: Some(m_shape),
            gamma: Some(gamma),
        };
        write_text(&staged.file("config.toml"), &to_toml(&resolved)?)?;
        #[derive(Serialize)]
        struct Results {
            monotone: bool,
        }
        Manifest::new("prior-prob", &resolved)?
            .results(&Results {
                monotone: check.monotone,
            })?
            .write(&staged)?;
        staged.commit()?;
    }
    Ok(())
}
