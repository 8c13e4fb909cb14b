//! One Markov chain over the full parameter vector.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::SplineSpec;
use crate::data::PreparedData;
use crate::error::{Error, Result};
use crate::sampler::block::BlockPosterior;
use crate::sampler::candidates::{candidate_models, CandidateSet, ModelClass};
use crate::sampler::config::{SamplerConfig, ZetaUpdateMode};
use crate::sampler::design::{DesignCache, XtMemo};
use crate::types::{ChainSamples, ExposureSet, ModelState, PriorConfig, ZetaMatrix};

const TAU_EPS: f64 = 1e-12;

/// Everything needed to continue a chain exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub samples: ChainSamples,
    pub state: ModelState,
    /// Completed iterations.
    pub iteration: usize,
    pub stream: u64,
    pub word_pos: u128,
}

/// Where a chain stopped; together with its samples this forms a
/// [`Checkpoint`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResumePoint {
    pub state: ModelState,
    pub iteration: usize,
    pub stream: u64,
    pub word_pos: u128,
}

impl Checkpoint {
    pub fn from_parts(samples: ChainSamples, at: ResumePoint) -> Self {
        Checkpoint {
            samples,
            state: at.state,
            iteration: at.iteration,
            stream: at.stream,
            word_pos: at.word_pos,
        }
    }

    pub fn into_parts(self) -> (ChainSamples, ResumePoint) {
        let at = ResumePoint {
            state: self.state,
            iteration: self.iteration,
            stream: self.stream,
            word_pos: self.word_pos,
        };
        (self.samples, at)
    }
}

pub struct Chain<'a> {
    data: &'a PreparedData,
    prior: PriorConfig,
    config: SamplerConfig,
    cache: DesignCache,
    state: ModelState,
    fitted: Vec<DVector<f64>>,
    total: DVector<f64>,
    cfit: DVector<f64>,
    ctc: DMatrix<f64>,
    rng: ChaCha8Rng,
    iteration: usize,
    samples: ChainSamples,
    warned_budget: bool,
}

fn sample_variance(v: &DVector<f64>) -> f64 {
    let n = v.len() as f64;
    let mean = v.sum() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

impl<'a> Chain<'a> {
    /// Starts a chain from the null model. `chain_id` selects the RNG stream.
    pub fn new(
        data: &'a PreparedData,
        spec: &SplineSpec,
        prior: &PriorConfig,
        config: &SamplerConfig,
        chain_id: usize,
    ) -> Result<Self> {
        prior.validate()?;
        config.validate()?;
        if spec.p() != data.p() {
            return Err(Error::Dimension(format!(
                "spline spec covers {} exposures, data has {}",
                spec.p(),
                data.p()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        rng.set_stream(chain_id as u64);
        let mut state = ModelState::null(data.p(), prior.k, spec.df, data.m());
        let var = sample_variance(&data.y);
        state.sigma2 = if var > 0.0 { var } else { 1.0 };
        let tau0 = config
            .fixed_tau
            .unwrap_or(prior.m_shape / (prior.m_shape + prior.gamma));
        state.tau = vec![tau0; prior.k];
        let samples = ChainSamples {
            chain_id,
            rng_seed: config.rng_seed,
            draws: Vec::new(),
            loglik: Vec::new(),
            saturated: false,
            violations: 0,
        };
        let mut chain = Self::assemble(data, spec, prior, config, state, rng, 0, samples);
        chain.state.beta_c = chain.beta_c_posterior()?.0.as_slice().to_vec();
        chain.refresh_fits();
        Ok(chain)
    }

    /// Continues from a checkpoint written by [`Chain::checkpoint`].
    pub fn resume(
        data: &'a PreparedData,
        spec: &SplineSpec,
        prior: &PriorConfig,
        config: &SamplerConfig,
        cp: Checkpoint,
    ) -> Result<Self> {
        prior.validate()?;
        config.validate()?;
        if cp.state.zeta.p() != data.p() || cp.state.zeta.k() != prior.k || cp.state.df != spec.df {
            return Err(Error::Checkpoint(
                "checkpoint does not match data or configuration".into(),
            ));
        }
        cp.state.check_invariants().map_err(Error::Checkpoint)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cp.samples.rng_seed);
        rng.set_stream(cp.stream);
        rng.set_word_pos(cp.word_pos);
        let mut chain = Self::assemble(
            data,
            spec,
            prior,
            config,
            cp.state,
            rng,
            cp.iteration,
            cp.samples,
        );
        chain.refresh_fits();
        Ok(chain)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        data: &'a PreparedData,
        spec: &SplineSpec,
        prior: &PriorConfig,
        config: &SamplerConfig,
        state: ModelState,
        rng: ChaCha8Rng,
        iteration: usize,
        samples: ChainSamples,
    ) -> Self {
        let n = data.n();
        Chain {
            data,
            prior: prior.clone(),
            config: config.clone(),
            cache: DesignCache::new(spec, &data.x_raw),
            fitted: vec![DVector::zeros(n); prior.k],
            total: DVector::zeros(n),
            cfit: DVector::zeros(n),
            ctc: data.c_design.tr_mul(&data.c_design),
            state,
            rng,
            iteration,
            samples,
            warned_budget: false,
        }
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn samples(&self) -> &ChainSamples {
        &self.samples
    }

    /// Changes the slab variance for subsequent iterations.
    pub fn set_sigma_beta2(&mut self, v: f64) {
        self.prior.sigma_beta2 = v;
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            samples: self.samples.clone(),
            state: self.state.clone(),
            iteration: self.iteration,
            stream: self.rng.get_stream(),
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn finish(self) -> ChainSamples {
        self.samples
    }

    /// Consumes the chain without copying its samples.
    pub fn into_checkpoint(self) -> Checkpoint {
        Checkpoint {
            stream: self.rng.get_stream(),
            word_pos: self.rng.get_word_pos(),
            samples: self.samples,
            state: self.state,
            iteration: self.iteration,
        }
    }

    /// Fitted values of the exposure part, `f(X_i)`.
    pub fn f_values(&self) -> &DVector<f64> {
        &self.total
    }

    fn refresh_fits(&mut self) {
        for h in 0..self.prior.k {
            let set = self.state.zeta.active_set(h);
            self.fitted[h] = if set.is_empty() {
                DVector::zeros(self.data.n())
            } else {
                self.cache.fitted(set, &self.state.beta[h])
            };
        }
        self.refresh_total();
        self.cfit = &self.data.c_design * DVector::from_column_slice(&self.state.beta_c);
    }

    fn refresh_total(&mut self) {
        let mut total = DVector::zeros(self.data.n());
        for f in &self.fitted {
            total += f;
        }
        self.total = total;
    }

    fn residual(&self) -> DVector<f64> {
        &self.data.y - &self.total - &self.cfit
    }

    fn check(&mut self) {
        if !self.config.check_invariants {
            return;
        }
        if let Err(msg) = self.state.check_invariants() {
            if self.samples.violations == 0 {
                warn!("chain {}: invariant violated: {msg}", self.samples.chain_id);
            }
            self.samples.violations += 1;
        }
    }

    /// Runs until `target` iterations have been completed in total.
    pub fn run_to(&mut self, target: usize) -> Result<()> {
        while self.iteration < target {
            self.step().map_err(|e| Error::AtIteration {
                iteration: self.iteration + 1,
                source: Box::new(e),
            })?;
            if self.config.keeps(self.iteration) {
                self.record();
            }
        }
        Ok(())
    }

    /// One full scan: sigma2, tau, a sweep over every inclusion coordinate,
    /// function coefficients, covariate coefficients.
    pub fn step(&mut self) -> Result<()> {
        self.state.sigma2 = self.sample_sigma2()?;
        self.check();
        self.state.tau = self.sample_tau();
        self.check();
        let (p, k) = (self.data.p(), self.prior.k);
        let mut order: Vec<(usize, usize)> =
            (0..k).flat_map(|h| (0..p).map(move |j| (j, h))).collect();
        order.shuffle(&mut self.rng);
        for element in order {
            match self.config.zeta_update_mode {
                ZetaUpdateMode::Mh => self.update_zeta_mh(element)?,
                ZetaUpdateMode::GibbsScan => self.update_zeta_gibbs_scan(element)?,
            }
            self.check();
        }
        if !self.samples.saturated && self.state.zeta.active_sets().iter().all(|s| !s.is_empty()) {
            warn!(
                "chain {}: all {k} functions are active; consider a larger k",
                self.samples.chain_id
            );
            self.samples.saturated = true;
        }
        self.sample_beta_blocks()?;
        self.check();
        self.sample_beta_c()?;
        self.check();
        self.iteration += 1;
        Ok(())
    }

    fn record(&mut self) {
        let r = self.residual();
        let s2 = self.state.sigma2;
        let c = -0.5 * (2.0 * std::f64::consts::PI * s2).ln();
        let row: Vec<f64> = r.iter().map(|v| c - v * v / (2.0 * s2)).collect();
        self.samples.loglik.push(row);
        self.samples.draws.push(self.state.clone());
    }

    /// Residual variance from its inverse-gamma full conditional.
    pub fn sample_sigma2(&mut self) -> Result<f64> {
        let r = self.residual();
        let rss = r.dot(&r);
        let ssb: f64 = self.state.beta.iter().flatten().map(|b| b * b).sum();
        let nnz = self.state.active_coefficient_count() as f64;
        let a = self.prior.a0 + 0.5 * self.data.n() as f64 + 0.5 * nnz;
        let b = self.prior.b0 + 0.5 * rss + 0.5 * ssb / self.prior.sigma_beta2;
        draw_inverse_gamma(a, b, &mut self.rng)
    }

    pub fn sample_tau(&mut self) -> Vec<f64> {
        if let Some(t) = self.config.fixed_tau {
            return vec![t; self.prior.k];
        }
        let p = self.data.p() as f64;
        let sets: Vec<ExposureSet> = self.state.zeta.active_sets().to_vec();
        sets.iter()
            .map(|s| {
                let a = s.len() as f64;
                let dist = Beta::new(self.prior.m_shape + a, self.prior.gamma + p - a)
                    .expect("positive Beta shapes");
                dist.sample(&mut self.rng).clamp(TAU_EPS, 1.0 - TAU_EPS)
            })
            .collect()
    }

    fn y_star(&self, functions: &[usize]) -> DVector<f64> {
        let mut y = self.residual();
        for &h in functions {
            if !self.state.zeta.active_set(h).is_empty() {
                y += &self.fitted[h];
            }
        }
        y
    }

    fn evaluate(
        &mut self,
        class: &ModelClass,
        y_star: &DVector<f64>,
        memo: &mut XtMemo,
    ) -> Result<BlockPosterior> {
        BlockPosterior::evaluate_memo(
            &mut self.cache,
            &class.block_sets(),
            y_star,
            self.state.sigma2,
            self.prior.sigma_beta2,
            memo,
        )
    }

    /// Installs `zeta` and draws the coefficients of `functions` from `post`.
    fn apply(&mut self, zeta: ZetaMatrix, functions: &[usize], post: &BlockPosterior) {
        let draw = post.draw(&mut self.rng);
        let parts = post.split(&draw);
        for &h in functions {
            let set = zeta.active_set(h);
            if set.is_empty() {
                if !self.state.zeta.active_set(h).is_empty() {
                    self.state.beta[h].clear();
                    self.fitted[h] = DVector::zeros(self.data.n());
                }
            } else {
                let idx = post
                    .sets
                    .iter()
                    .position(|s| *s == set)
                    .expect("block sets cover the active functions");
                self.state.beta[h] = parts[idx].clone();
                self.fitted[h] = self.cache.fitted(set, &self.state.beta[h]);
            }
        }
        self.state.zeta = zeta;
        self.refresh_total();
    }

    fn candidates(&mut self, element: (usize, usize)) -> CandidateSet {
        let cs = candidate_models(&self.state.zeta, element, self.config.subset_cap);
        if cs.saturated && !self.samples.saturated {
            warn!(
                "chain {}: no empty function left for a decomposition; consider a larger k",
                self.samples.chain_id
            );
            self.samples.saturated = true;
        }
        cs
    }

    /// Metropolis-Hastings move within the family. The proposal is uniform
    /// over the other model classes, then uniform over slots within a class.
    pub fn update_zeta_mh(&mut self, element: (usize, usize)) -> Result<()> {
        let cs = self.candidates(element);
        self.mh_move(cs)
    }

    fn mh_move(&mut self, cs: CandidateSet) -> Result<()> {
        if cs.len() < 2 {
            return Ok(());
        }
        let c = cs.current;
        let u: f64 = self.rng.random();
        let target = {
            let rng = &mut self.rng;
            cs.propose(c, u, |n| rng.random_range(0..n))
        };
        let log_q_ratio = cs.proposal_prob(target, c).ln() - cs.proposal_prob(c, target).ln();
        let y_star = self.y_star(&cs.block_functions);
        let mut memo = XtMemo::new();
        let (cur_class, _) = cs.locate(c);
        let (new_class, _) = cs.locate(target);
        let lp_cur = self
            .evaluate(&cs.classes[cur_class], &y_star, &mut memo)?
            .log_ratio;
        let post = self.evaluate(&cs.classes[new_class], &y_star, &mut memo)?;
        let log_prior =
            cs.log_prior_delta(target, &self.state.tau) - cs.log_prior_delta(c, &self.state.tau);
        let u: f64 = self.rng.random();
        if u.ln() < post.log_ratio - lp_cur + log_prior + log_q_ratio {
            self.apply(cs.member(target), &cs.block_functions, &post);
        }
        Ok(())
    }

    /// Draws the coordinate's family member in proportion to the collapsed
    /// posterior, then the block coefficients given it.
    pub fn update_zeta_gibbs_scan(&mut self, element: (usize, usize)) -> Result<()> {
        let cs = self.candidates(element);
        if cs.len() > self.config.candidate_budget {
            if !self.warned_budget {
                warn!(
                    "chain {}: candidate family of {} exceeds budget {}; using an MH move",
                    self.samples.chain_id,
                    cs.len(),
                    self.config.candidate_budget
                );
                self.warned_budget = true;
            }
            return self.mh_move(cs);
        }
        if cs.len() < 2 {
            return Ok(());
        }
        let y_star = self.y_star(&cs.block_functions);
        let mut memo = XtMemo::new();
        let mut posts = Vec::with_capacity(cs.classes.len());
        for class in &cs.classes {
            posts.push(self.evaluate(class, &y_star, &mut memo)?);
        }
        let lp: Vec<f64> = (0..cs.len())
            .map(|i| posts[cs.locate(i).0].log_ratio + cs.log_prior_delta(i, &self.state.tau))
            .collect();
        let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lp.iter().map(|v| (v - max).exp()).collect();
        let u: f64 = self.rng.random::<f64>() * w.iter().sum::<f64>();
        let mut acc = 0.0;
        let mut chosen = w.len() - 1;
        for (i, wi) in w.iter().enumerate() {
            acc += wi;
            if u < acc {
                chosen = i;
                break;
            }
        }
        let post = &posts[cs.locate(chosen).0];
        self.apply(cs.member(chosen), &cs.block_functions, post);
        Ok(())
    }

    /// Redraws the coefficients of every active function in turn.
    pub fn sample_beta_blocks(&mut self) -> Result<()> {
        for h in 0..self.prior.k {
            let set = self.state.zeta.active_set(h);
            if set.is_empty() {
                continue;
            }
            let y_star = self.y_star(&[h]);
            let post = BlockPosterior::evaluate(
                &mut self.cache,
                &[set],
                &y_star,
                self.state.sigma2,
                self.prior.sigma_beta2,
            )?;
            let draw = post.draw(&mut self.rng);
            self.state.beta[h] = draw.as_slice().to_vec();
            let f = self.cache.fitted(set, &self.state.beta[h]);
            self.total += &f - &self.fitted[h];
            self.fitted[h] = f;
        }
        self.refresh_total();
        Ok(())
    }

    fn beta_c_posterior(&self) -> Result<(DVector<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
        let s2 = self.state.sigma2;
        let mut prec = &self.ctc / s2;
        for i in 0..prec.nrows() {
            prec[(i, i)] += 1.0 / self.prior.beta_c_prior_variance;
        }
        let ytilde = &self.data.y - &self.total;
        let b = self.data.c_design.tr_mul(&ytilde) / s2;
        let chol = prec
            .cholesky()
            .ok_or_else(|| Error::Numerical("covariate cross-product is singular".into()))?;
        Ok((chol.solve(&b), chol))
    }

    pub fn sample_beta_c(&mut self) -> Result<()> {
        let (mean, chol) = self.beta_c_posterior()?;
        let z = DVector::from_fn(mean.len(), |_, _| self.rng.sample::<f64, _>(StandardNormal));
        let x = chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        let draw = mean + x;
        self.cfit = &self.data.c_design * &draw;
        self.state.beta_c = draw.as_slice().to_vec();
        Ok(())
    }
}

/// `1 / Gamma(shape = a, rate = b)`.
pub fn draw_inverse_gamma<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::Numerical(format!(
            "inverse-gamma scale {b} is not positive"
        )));
    }
    let g = Gamma::new(a, 1.0 / b).map_err(|e| Error::Numerical(e.to_string()))?;
    let v = 1.0 / g.sample(rng);
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Numerical(format!(
            "degenerate residual variance draw {v}"
        )))
    }
}

/// Runs one chain to completion.
pub fn run_chain(
    data: &PreparedData,
    spec: &SplineSpec,
    prior: &PriorConfig,
    config: &SamplerConfig,
    chain_id: usize,
) -> Result<ChainSamples> {
    let mut chain = Chain::new(data, spec, prior, config, chain_id)?;
    chain.run_to(config.n_iter)?;
    Ok(chain.finish())
}

/// Runs `config.n_chains` independent chains concurrently and keeps the
/// state needed to extend them.
pub fn run_chains_resumable(
    data: &PreparedData,
    spec: &SplineSpec,
    prior: &PriorConfig,
    config: &SamplerConfig,
) -> Result<Vec<Checkpoint>> {
    (0..config.n_chains)
        .into_par_iter()
        .map(|id| {
            let mut chain = Chain::new(data, spec, prior, config, id)?;
            chain.run_to(config.n_iter)?;
            Ok(chain.into_checkpoint())
        })
        .collect()
}

/// Runs `config.n_chains` independent chains concurrently.
pub fn run_chains(
    data: &PreparedData,
    spec: &SplineSpec,
    prior: &PriorConfig,
    config: &SamplerConfig,
) -> Result<Vec<ChainSamples>> {
    (0..config.n_chains)
        .into_par_iter()
        .map(|id| run_chain(data, spec, prior, config, id))
        .collect()
}
