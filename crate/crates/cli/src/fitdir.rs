//! Reading and writing the contents of a fit directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mixsel_core::basis::SplineSpec;
use mixsel_core::data::PreparedData;
use mixsel_core::diagnostics::Waic;
use mixsel_core::hyper::{EbResult, LowerBoundResult};
use mixsel_core::sampler::{read_checkpoint, write_checkpoint, Checkpoint, SamplerConfig};
use mixsel_core::summaries::{inclusion_probabilities, pool_draws, predict_f, psr_table};
use mixsel_core::{ChainSamples, ExposureSet, FitResult, ModelState, PriorConfig};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, CliResult};
use crate::io::{real, write_json, CsvOut};
use crate::settings::ModelSettings;

/// Everything besides the chains needed to summarize or extend a fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub outcome: String,
    pub exposures: Vec<String>,
    pub covariates: Vec<String>,
    pub df: usize,
    pub spec: SplineSpec,
    /// Prior of the final chains, including the chosen slab variance.
    pub prior: PriorConfig,
    pub sampler: SamplerConfig,
    pub eb: Option<EbResult>,
    pub lower_bound: Option<LowerBoundResult>,
    pub waic: Waic,
    /// Training exposures by row, on the original scale.
    pub x_train: Vec<Vec<f64>>,
    pub data_sha256: String,
    pub settings: ModelSettings,
}

impl ModelFile {
    pub fn x_train(&self) -> DMatrix<f64> {
        let p = self.exposures.len();
        DMatrix::from_fn(self.x_train.len(), p, |i, j| self.x_train[i][j])
    }

    pub fn exposure_index(&self, name: &str) -> CliResult<usize> {
        self.exposures
            .iter()
            .position(|e| e == name)
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown exposure `{name}`; known: {}",
                    self.exposures.join(",")
                ))
            })
    }
}

/// A fit directory loaded back into memory.
pub struct LoadedFit {
    pub model: ModelFile,
    pub checkpoints: Vec<Checkpoint>,
}

impl LoadedFit {
    pub fn load(dir: &Path) -> CliResult<LoadedFit> {
        let model_path = dir.join("model.json");
        let text = fs::read_to_string(&model_path).map_err(io_err(&model_path))?;
        let model: ModelFile = serde_json::from_str(&text).map_err(|e| CliError::Schema {
            path: model_path.clone(),
            message: e.to_string(),
        })?;
        let checkpoints = (0..model.sampler.n_chains)
            .map(|i| {
                let path = dir.join("chains").join(format!("chain_{i}.ckpt"));
                read_checkpoint(&path).map_err(|e| CliError::Schema {
                    path,
                    message: e.to_string(),
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(LoadedFit { model, checkpoints })
    }

    pub fn chains(&self) -> Vec<ChainSamples> {
        self.checkpoints.iter().map(|c| c.samples.clone()).collect()
    }
}

fn set_label(set: ExposureSet, names: &[String]) -> String {
    set.iter()
        .map(|j| names[j].as_str())
        .collect::<Vec<_>>()
        .join("*")
}

/// Nonempty active sets of a draw, as a canonical model label.
fn model_label(d: &ModelState, names: &[String]) -> String {
    let mut sets: Vec<ExposureSet> = d
        .zeta
        .active_sets()
        .iter()
        .copied()
        .filter(|s| !s.is_empty())
        .collect();
    if sets.is_empty() {
        return "null".into();
    }
    sets.sort_by_key(|s| (s.len(), s.bits()));
    sets.iter()
        .map(|s| set_label(*s, names))
        .collect::<Vec<_>>()
        .join(" + ")
}

#[derive(Serialize)]
pub struct FitSummary {
    pub df: usize,
    pub sigma_beta2: f64,
    pub eb_value: Option<f64>,
    pub eb_converged: Option<bool>,
    pub lower_bound: Option<f64>,
    pub lower_bound_met: Option<bool>,
    pub waic: Waic,
    pub draws: usize,
    pub violations: u64,
    pub saturated: bool,
    pub main_pip: BTreeMap<String, f64>,
}

/// Writes model.json, the chain checkpoints and the CSV summaries.
pub fn write_fit(
    dir: &Path,
    fit: &FitResult,
    data: &PreparedData,
    outcome: &str,
    data_sha256: &str,
    settings: &ModelSettings,
    sampler: &SamplerConfig,
) -> CliResult<FitSummary> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let names = &data.exposure_names;
    let model = ModelFile {
        outcome: outcome.to_string(),
        exposures: names.clone(),
        covariates: data.covariate_names.clone(),
        df: fit.df,
        spec: fit.spec.clone(),
        prior: fit.prior.clone(),
        sampler: sampler.clone(),
        eb: fit.eb.clone(),
        lower_bound: fit.lower_bound.clone(),
        waic: fit.waic,
        x_train: data
            .x_raw
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        data_sha256: data_sha256.to_string(),
        settings: settings.clone(),
    };
    write_json(&dir.join("model.json"), &model)?;

    let chain_dir = dir.join("chains");
    fs::create_dir_all(&chain_dir).map_err(io_err(&chain_dir))?;
    for (i, (samples, at)) in fit.chains.iter().zip(&fit.resume).enumerate() {
        let cp = Checkpoint::from_parts(samples.clone(), at.clone());
        write_checkpoint(&chain_dir.join(format!("chain_{i}.ckpt")), &cp)?;
    }

    let draws = pool_draws(&fit.chains);
    let inc = inclusion_probabilities(&draws, &[])?;
    let mut out = CsvOut::create(dir.join("pip_main.csv"), &["exposure", "pip"])?;
    for (name, v) in names.iter().zip(&inc.main_pip) {
        out.row([name.clone(), real(*v)])?;
    }
    out.finish()?;

    let mut out = CsvOut::create(
        dir.join("pip_pair.csv"),
        &["exposure_a", "exposure_b", "pip"],
    )?;
    for a in 0..names.len() {
        for b in a + 1..names.len() {
            out.row([names[a].clone(), names[b].clone(), real(inc.pair_pip[a][b])])?;
        }
    }
    out.finish()?;

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for d in &draws {
        *counts.entry(model_label(d, names)).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut out = CsvOut::create(dir.join("models.csv"), &["model", "probability", "draws"])?;
    for (label, c) in &ranked {
        out.row([
            label.clone(),
            real(*c as f64 / draws.len() as f64),
            c.to_string(),
        ])?;
    }
    out.finish()?;

    let mut out = CsvOut::create(dir.join("waic.csv"), &["df", "waic", "lppd", "p_waic"])?;
    out.row([
        fit.df.to_string(),
        real(fit.waic.waic),
        real(fit.waic.lppd),
        real(fit.waic.p_waic),
    ])?;
    out.finish()?;

    let pred = predict_f(&draws, &data.x_raw, &fit.spec, &data.x_raw)?;
    let mut out = CsvOut::create(
        dir.join("fitted.csv"),
        &["row", "mean", "sd", "lower", "upper"],
    )?;
    let s = &pred.summary;
    for i in 0..s.mean.len() {
        out.row([
            (i + 1).to_string(),
            real(s.mean[i]),
            real(s.sd[i]),
            real(s.lower[i]),
            real(s.upper[i]),
        ])?;
    }
    out.finish()?;

    if fit.chains.len() >= 2 {
        let table = psr_table(&fit.chains, &fit.spec, &data.x_raw)?;
        let mut out = CsvOut::create(dir.join("psr.csv"), &["quantity", "psr", "degenerate"])?;
        let mut emit = |name: String, r: &mixsel_core::diagnostics::Psr| {
            out.row([name, real(r.value), r.degenerate.to_string()])
        };
        for (i, r) in table.f.iter().enumerate() {
            emit(format!("f[{}]", i + 1), r)?;
        }
        for (i, r) in table.beta_c.iter().enumerate() {
            let name = if i == 0 {
                "intercept".to_string()
            } else {
                format!("beta_c[{}]", data.covariate_names[i - 1])
            };
            emit(name, r)?;
        }
        emit("sigma2".into(), &table.sigma2)?;
        out.finish()?;
    }

    if let Some(eb) = &fit.eb {
        let mut out = CsvOut::create(dir.join("eb_trace.csv"), &["step", "sigma_beta2"])?;
        for (i, v) in eb.trace.iter().enumerate() {
            out.row([i.to_string(), real(*v)])?;
        }
        out.finish()?;
    }
    if let Some(lb) = &fit.lower_bound {
        write_lower_bound_curve(&dir.join("lower_bound_curve.csv"), lb)?;
    }

    Ok(FitSummary {
        df: fit.df,
        sigma_beta2: fit.prior.sigma_beta2,
        eb_value: fit.eb.as_ref().map(|e| e.value),
        eb_converged: fit.eb.as_ref().map(|e| e.converged),
        lower_bound: fit.lower_bound.as_ref().map(|l| l.bound),
        lower_bound_met: fit.lower_bound.as_ref().map(|l| l.met),
        waic: fit.waic,
        draws: draws.len(),
        violations: fit.violations(),
        saturated: fit.chains.iter().any(|c| c.saturated),
        main_pip: names
            .iter()
            .cloned()
            .zip(inc.main_pip.iter().copied())
            .collect(),
    })
}

pub fn write_lower_bound_curve(path: &Path, lb: &LowerBoundResult) -> CliResult<()> {
    let mut out = CsvOut::create(path.to_path_buf(), &["sigma_beta2", "statistic"])?;
    for (v, s) in &lb.curve {
        out.row([real(*v), real(*s)])?;
    }
    out.finish()
}
