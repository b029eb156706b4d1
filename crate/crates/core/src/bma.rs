//! Linear-regression BMA under a Zellner g-prior.
//!
//! Slopes get the g-prior `N(0, g·σ²·(CᵀC)⁻¹)` on the centred selected columns
//! `C`; the intercept and `ln σ²` are flat. The Bayes factor of a model against
//! the intercept-only model is then
//!
//! ```text
//! ln BF = ((n-1-k)/2)·ln(1+g) - ((n-1)/2)·ln(1 + g·(1-R²))
//! ```
//!
//! Per-model slope posteriors are Student-t with mean `g/(1+g)·β̂_OLS` and
//! covariance `g/(1+g)·s²·(CᵀC)⁻¹`, where `s² = Q/(n-3)` and
//! `Q = TSS·(1 - g/(1+g)·R²)` is the shrunk residual sum of squares.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{center_columns, center_vector, checked_cholesky, sub_gram, sub_vector};
use crate::model_space::{
    enumerate_all, propose_flip_index, InclusionMask, ModelConstraints, ModelRecord,
    DEFAULT_ENUMERATION_CAP,
};

/// Choice of the g-prior shrinkage constant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GPrior {
    /// `g = n`.
    #[default]
    UnitInformation,
    Fixed(f64),
}

impl GPrior {
    pub fn value(&self, n: usize) -> f64 {
        match *self {
            GPrior::UnitInformation => n as f64,
            GPrior::Fixed(g) => g,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GPrior::Fixed(g) if !(g > 0.0 && g.is_finite()) => {
                Err(Error::Config(format!("g must be positive and finite, got {g}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for GPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GPrior::UnitInformation => f.write_str("n"),
            GPrior::Fixed(g) => write!(f, "{g}"),
        }
    }
}

impl FromStr for GPrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("n") || s.eq_ignore_ascii_case("uip") {
            return Ok(GPrior::UnitInformation);
        }
        let g: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("g must be \"n\" or a positive number, got {s:?}")))?;
        let prior = GPrior::Fixed(g);
        prior.validate()?;
        Ok(prior)
    }
}

impl Serialize for GPrior {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GPrior {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(g) => {
                let p = GPrior::Fixed(g);
                p.validate().map_err(serde::de::Error::custom)?;
                Ok(p)
            }
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PriorConfig {
    pub g: GPrior,
}

impl PriorConfig {
    pub fn fixed(g: f64) -> Self {
        Self {
            g: GPrior::Fixed(g),
        }
    }
}

/// Sampler settings shared by MC3 and IVBMA runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default)]
    pub g: GPrior,
    #[serde(default = "default_cap")]
    pub enumeration_cap: usize,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    #[serde(default)]
    pub constraints: ModelConstraints,
}

fn default_cap() -> usize {
    DEFAULT_ENUMERATION_CAP
}

fn default_thinning() -> usize {
    10
}

impl SamplerConfig {
    pub fn new(iterations: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            iterations,
            burn_in,
            seed,
            g: GPrior::UnitInformation,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            thinning: default_thinning(),
            constraints: ModelConstraints::default(),
        }
    }

    pub fn prior(&self) -> PriorConfig {
        PriorConfig { g: self.g }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        self.g.validate()
    }
}

/// Outcome vector plus a block of candidate regressors; the intercept is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleStage {
    pub y: DVector<f64>,
    pub columns: DMatrix<f64>,
    pub names: Vec<String>,
}

impl SingleStage {
    pub fn new(y: DVector<f64>, columns: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if columns.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "outcome has {} rows but the regressor block has {}",
                y.len(),
                columns.nrows()
            )));
        }
        if names.len() != columns.ncols() {
            return Err(Error::Dimension(format!(
                "{} names for {} columns",
                names.len(),
                columns.ncols()
            )));
        }
        Ok(Self { y, columns, names })
    }

    /// Same stage with generated names `x1..xK`.
    pub fn unnamed(y: DVector<f64>, columns: DMatrix<f64>) -> Result<Self> {
        let names = (1..=columns.ncols()).map(|i| format!("x{i}")).collect();
        Self::new(y, columns, names)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.columns.ncols()
    }
}

/// Posterior of the slopes of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Moments of one model, indexed like `indices`.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub indices: Vec<usize>,
    pub log_ml: f64,
    pub coef_mean: DVector<f64>,
    pub coef_var: DVector<f64>,
}

/// Sufficient statistics of a single-stage problem, shared by every model.
#[derive(Debug, Clone)]
pub struct LinearModelSpace {
    n: usize,
    g: f64,
    tss: f64,
    cross: DVector<f64>,
    gram: DMatrix<f64>,
}

impl LinearModelSpace {
    pub fn new(stage: &SingleStage, prior: &PriorConfig) -> Result<Self> {
        prior.g.validate()?;
        let n = stage.n();
        if n < 3 {
            return Err(Error::InsufficientData { n, required: 2 });
        }
        let (_, yc) = center_vector(&stage.y);
        let (_, xc) = center_columns(&stage.columns);
        let tss = yc.norm_squared();
        if !(tss > 0.0) {
            return Err(Error::RankDeficient("outcome has zero variance".into()));
        }
        Ok(Self {
            n,
            g: prior.g.value(n),
            tss,
            cross: xc.tr_mul(&yc),
            gram: xc.tr_mul(&xc),
        })
    }

    pub fn k(&self) -> usize {
        self.cross.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    fn bayes_factor(&self, k: usize, r2: f64) -> f64 {
        let n1 = (self.n - 1) as f64;
        let one_minus_r2 = (1.0 - r2).max(0.0);
        0.5 * (n1 - k as f64) * self.g.ln_1p() - 0.5 * n1 * (self.g * one_minus_r2).ln_1p()
    }

    /// Log Bayes factor against the null model; `-inf` for rank-deficient or
    /// over-parameterised models.
    pub fn log_ml(&self, mask: &InclusionMask) -> f64 {
        let idx = mask.indices();
        if idx.is_empty() {
            return 0.0;
        }
        if idx.len() + 2 > self.n {
            return f64::NEG_INFINITY;
        }
        let Some(chol) = checked_cholesky(sub_gram(&self.gram, &idx)) else {
            return f64::NEG_INFINITY;
        };
        let c = sub_vector(&self.cross, &idx);
        let b = chol.solve(&c);
        let r2 = c.dot(&b) / self.tss;
        self.bayes_factor(idx.len(), r2)
    }

    /// Marginal likelihood and per-coefficient posterior moments, or `None` when rank-deficient.
    pub fn fit(&self, mask: &InclusionMask) -> Option<ModelFit> {
        let idx = mask.indices();
        if idx.is_empty() {
            return Some(ModelFit {
                indices: idx,
                log_ml: 0.0,
                coef_mean: DVector::zeros(0),
                coef_var: DVector::zeros(0),
            });
        }
        let post = self.posterior(&idx)?;
        Some(ModelFit {
            indices: idx,
            log_ml: post.0,
            coef_var: post.1.covariance.diagonal(),
            coef_mean: post.1.mean,
        })
    }

    fn posterior(&self, idx: &[usize]) -> Option<(f64, CoefficientPosterior)> {
        if idx.len() + 2 > self.n || self.n <= 3 {
            return None;
        }
        let chol = checked_cholesky(sub_gram(&self.gram, idx))?;
        let c = sub_vector(&self.cross, idx);
        let ols = chol.solve(&c);
        let ess = c.dot(&ols);
        let r2 = ess / self.tss;
        let shrink = self.g / (1.0 + self.g);
        // posterior expectation of the error variance: shrunk RSS over (n - 3)
        let q = (self.tss - shrink * ess).max(0.0);
        let s2 = q / (self.n as f64 - 3.0);
        let covariance = chol.inverse() * (shrink * s2);
        Some((
            self.bayes_factor(idx.len(), r2),
            CoefficientPosterior {
                mean: ols * shrink,
                covariance,
            },
        ))
    }
}

/// Log Bayes factor of the model using all of `columns` against the intercept-only model.
///
/// Rank-deficient selections yield `-inf`.
pub fn log_marginal_likelihood(
    y: &DVector<f64>,
    columns: &DMatrix<f64>,
    prior: &PriorConfig,
) -> Result<f64> {
    let stage = SingleStage::unnamed(y.clone(), columns.clone())?;
    let k = stage.k();
    if stage.n() < k + 2 {
        return Err(Error::InsufficientData {
            n: stage.n(),
            required: k + 1,
        });
    }
    let space = LinearModelSpace::new(&stage, prior)?;
    Ok(space.log_ml(&InclusionMask::from_indices(k, &(0..k).collect::<Vec<_>>())))
}

/// Conjugate posterior mean and covariance of the slopes of the model using all of `columns`.
pub fn conditional_posterior_coefficients(
    y: &DVector<f64>,
    columns: &DMatrix<f64>,
    prior: &PriorConfig,
) -> Result<CoefficientPosterior> {
    let stage = SingleStage::unnamed(y.clone(), columns.clone())?;
    let k = stage.k();
    if k == 0 {
        return Ok(CoefficientPosterior {
            mean: DVector::zeros(0),
            covariance: DMatrix::zeros(0, 0),
        });
    }
    if stage.n() < k + 2 || stage.n() <= 3 {
        return Err(Error::InsufficientData {
            n: stage.n(),
            required: (k + 1).max(3),
        });
    }
    let space = LinearModelSpace::new(&stage, prior)?;
    let idx: Vec<usize> = (0..k).collect();
    space
        .posterior(&idx)
        .map(|(_, post)| post)
        .ok_or_else(|| Error::RankDeficient("selected columns are collinear".into()))
}

/// Per-variable posterior summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub name: String,
    pub pip: f64,
    pub post_mean: f64,
    pub post_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopModel {
    pub mask: InclusionMask,
    pub pmp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub variables: Vec<VariableSummary>,
    /// Models enumerated (exact) or distinct models visited (samplers).
    pub models_visited: usize,
    pub rank_deficient_models: usize,
    pub top_models: Vec<TopModel>,
}

impl PosteriorSummary {
    pub fn pips(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.pip).collect()
    }

    pub fn post_means(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.post_mean).collect()
    }

    pub fn post_sds(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.post_sd).collect()
    }

    pub fn variable(&self, name: &str) -> Option<&VariableSummary> {
        self.variables.iter().find(|v| v.name == name)
    }
}

/// Weighted accumulation of inclusion, first and second moments over models.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    weight: f64,
    inclusion: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(k: usize) -> Self {
        Self {
            weight: 0.0,
            inclusion: vec![0.0; k],
            first: vec![0.0; k],
            second: vec![0.0; k],
        }
    }

    /// Adds one model: `indices[i]` has conditional mean `mean[i]` and variance `var[i]`.
    pub fn add(&mut self, weight: f64, indices: &[usize], mean: &[f64], var: &[f64]) {
        self.weight += weight;
        for ((&j, &m), &v) in indices.iter().zip(mean).zip(var) {
            self.inclusion[j] += weight;
            self.first[j] += weight * m;
            self.second[j] += weight * (v + m * m);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.weight += other.weight;
        for j in 0..self.inclusion.len() {
            self.inclusion[j] += other.inclusion[j];
            self.first[j] += other.first[j];
            self.second[j] += other.second[j];
        }
    }

    /// Normalises by the total weight and applies `Var = E[v + m²] - E[m]²`.
    pub fn finish(&self, names: &[String]) -> Vec<VariableSummary> {
        let w = if self.weight > 0.0 { self.weight } else { 1.0 };
        names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let pip = (self.inclusion[j] / w).clamp(0.0, 1.0);
                let mean = self.first[j] / w;
                let var = (self.second[j] / w - mean * mean).max(0.0);
                VariableSummary {
                    name: name.clone(),
                    pip,
                    post_mean: mean,
                    post_sd: var.sqrt(),
                }
            })
            .collect()
    }
}

/// Full enumeration result. Models are stored densely by enumeration rank.
#[derive(Debug, Clone)]
pub struct ExactBma {
    k: usize,
    log_ml: Vec<f64>,
    pmp: Vec<f64>,
    pub summary: PosteriorSummary,
}

impl ExactBma {
    pub fn len(&self) -> usize {
        self.pmp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmp.is_empty()
    }

    pub fn record(&self, rank: usize) -> ModelRecord {
        ModelRecord {
            mask: InclusionMask::from_rank(self.k, rank as u64),
            log_marginal_likelihood: self.log_ml[rank],
            pmp: self.pmp[rank],
        }
    }

    /// Records in ascending binary order of their masks.
    pub fn records(&self) -> impl Iterator<Item = ModelRecord> + '_ {
        (0..self.len()).map(|r| self.record(r))
    }

    pub fn pmps(&self) -> &[f64] {
        &self.pmp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactOptions {
    pub cap: usize,
    /// Spread chunks over the rayon pool. Chunk boundaries and merge order are
    /// fixed, so the result is bit-identical either way.
    pub parallel: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ENUMERATION_CAP,
            parallel: true,
        }
    }
}

const CHUNK: usize = 1 << 12;
const TOP_MODELS: usize = 10;

fn map_chunks<T: Send>(total: usize, parallel: bool, f: impl Fn(std::ops::Range<usize>) -> T + Sync) -> Vec<T> {
    let nchunks = total.div_ceil(CHUNK);
    let range = |c: usize| c * CHUNK..((c + 1) * CHUNK).min(total);
    if parallel {
        (0..nchunks).into_par_iter().map(|c| f(range(c))).collect()
    } else {
        (0..nchunks).map(|c| f(range(c))).collect()
    }
}

/// Enumerates every model and averages over all of them.
pub fn exact_bma(stage: &SingleStage, prior: &PriorConfig, options: ExactOptions) -> Result<ExactBma> {
    let k = stage.k();
    enumerate_all(k, options.cap)?;
    let space = LinearModelSpace::new(stage, prior)?;
    let total = 1usize << k;

    let log_ml: Vec<f64> = map_chunks(total, options.parallel, |r| {
        r.map(|rank| space.log_ml(&InclusionMask::from_rank(k, rank as u64)))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();

    let max = log_ml.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let partial: Vec<f64> = map_chunks(total, options.parallel, |r| {
        r.map(|i| (log_ml[i] - max).exp()).sum::<f64>()
    });
    let log_norm = max + partial.iter().sum::<f64>().ln();
    let pmp: Vec<f64> = log_ml.iter().map(|&l| (l - log_norm).exp()).collect();
    let rank_deficient = log_ml.iter().filter(|l| l.is_infinite()).count();

    let parts = map_chunks(total, options.parallel, |r| {
        let mut acc = MomentAccumulator::new(k);
        for rank in r {
            if pmp[rank] > 0.0 {
                let fit = space
                    .fit(&InclusionMask::from_rank(k, rank as u64))
                    .expect("finite marginal likelihood implies a full-rank fit");
                acc.add(
                    pmp[rank],
                    &fit.indices,
                    fit.coef_mean.as_slice(),
                    fit.coef_var.as_slice(),
                );
            }
        }
        acc
    });
    let mut acc = MomentAccumulator::new(k);
    for part in &parts {
        acc.merge(part);
    }

    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| pmp[b].total_cmp(&pmp[a]).then(a.cmp(&b)));
    let top_models = order
        .iter()
        .take(TOP_MODELS)
        .map(|&r| TopModel {
            mask: InclusionMask::from_rank(k, r as u64),
            pmp: pmp[r],
        })
        .collect();

    if rank_deficient > 0 {
        log::warn!("{rank_deficient} rank-deficient models excluded from the average");
    }

    Ok(ExactBma {
        k,
        summary: PosteriorSummary {
            variables: acc.finish(&stage.names),
            models_visited: total,
            rank_deficient_models: rank_deficient,
            top_models,
        },
        log_ml,
        pmp,
    })
}

/// Acceptance probability of a Metropolis move with log target ratio `delta`.
pub fn metropolis_acceptance(delta: f64) -> f64 {
    if delta >= 0.0 {
        1.0
    } else {
        delta.exp()
    }
}

pub(crate) fn metropolis_accept<R: Rng + ?Sized>(delta: f64, rng: &mut R) -> bool {
    if delta >= 0.0 {
        return true;
    }
    if delta == f64::NEG_INFINITY || delta.is_nan() {
        return false;
    }
    rng.random::<f64>() < delta.exp()
}

/// States of an MC3 chain after burn-in, as indices into the distinct visited models.
#[derive(Debug, Clone, PartialEq)]
pub struct Mc3Chain {
    pub models: Vec<InclusionMask>,
    pub log_ml: Vec<f64>,
    pub states: Vec<u32>,
    pub burn_in: usize,
    pub proposals: usize,
    pub accepted: usize,
}

impl Mc3Chain {
    pub fn iter(&self) -> impl Iterator<Item = (&InclusionMask, f64)> + '_ {
        self.states
            .iter()
            .map(|&s| (&self.models[s as usize], self.log_ml[s as usize]))
    }

    /// Visit frequency of each distinct model, in order of first visit.
    pub fn frequencies(&self) -> Vec<(InclusionMask, f64)> {
        let mut counts = vec![0usize; self.models.len()];
        for &s in &self.states {
            counts[s as usize] += 1;
        }
        let total = self.states.len().max(1) as f64;
        self.models
            .iter()
            .zip(counts)
            .filter(|(_, c)| *c > 0)
            .map(|(m, c)| (m.clone(), c as f64 / total))
            .collect()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mc3Run {
    pub chain: Mc3Chain,
    pub summary: PosteriorSummary,
}

/// Metropolis sampling over model space with single-flip proposals, starting
/// from the empty model (plus any forced-in columns).
///
/// PIPs are post-burn-in visit frequencies; means and SDs average each visited
/// model's analytic moments with the visit frequencies as weights.
pub fn mc3_sample(stage: &SingleStage, config: &SamplerConfig) -> Result<Mc3Run> {
    config.validate()?;
    let k = stage.k();
    config.constraints.validate(k)?;
    let space = LinearModelSpace::new(stage, &config.prior())?;
    let free = config.constraints.free_columns(k);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut ids: HashMap<InclusionMask, u32> = HashMap::new();
    let mut models = Vec::new();
    let mut log_ml = Vec::new();
    let mut intern = |mask: InclusionMask, lml: f64| -> u32 {
        *ids.entry(mask.clone()).or_insert_with(|| {
            models.push(mask);
            log_ml.push(lml);
            (models.len() - 1) as u32
        })
    };
    let mut cache: HashMap<InclusionMask, f64> = HashMap::new();
    let mut eval = |mask: &InclusionMask| -> f64 {
        if let Some(&v) = cache.get(mask) {
            return v;
        }
        let v = space.log_ml(mask);
        cache.insert(mask.clone(), v);
        v
    };

    let mut current = config.constraints.initial_mask(k);
    let mut current_lml = eval(&current);
    if !current_lml.is_finite() {
        return Err(Error::RankDeficient(
            "the forced-in columns are collinear".into(),
        ));
    }
    let mut states = Vec::with_capacity(config.iterations - config.burn_in);
    let mut proposals = 0;
    let mut accepted = 0;

    for it in 0..config.iterations {
        if let Some(j) = propose_flip_index(&free, &mut rng) {
            let proposal = current.flipped(j);
            let lml = eval(&proposal);
            proposals += 1;
            if metropolis_accept(lml - current_lml, &mut rng) {
                current = proposal;
                current_lml = lml;
                accepted += 1;
            }
        }
        if it >= config.burn_in {
            states.push(intern(current.clone(), current_lml));
        }
    }

    let chain = Mc3Chain {
        models,
        log_ml,
        states,
        burn_in: config.burn_in,
        proposals,
        accepted,
    };
    let summary = summarize_visits(&space, &chain, &stage.names);
    Ok(Mc3Run { chain, summary })
}

fn summarize_visits(space: &LinearModelSpace, chain: &Mc3Chain, names: &[String]) -> PosteriorSummary {
    let freq = chain.frequencies();
    let mut acc = MomentAccumulator::new(names.len());
    for (mask, w) in &freq {
        let fit = space
            .fit(mask)
            .expect("visited models have finite marginal likelihood");
        acc.add(*w, &fit.indices, fit.coef_mean.as_slice(), fit.coef_var.as_slice());
    }
    let mut ranked: Vec<&(InclusionMask, f64)> = freq.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    PosteriorSummary {
        variables: acc.finish(names),
        models_visited: freq.len(),
        rank_deficient_models: 0,
        top_models: ranked
            .into_iter()
            .take(TOP_MODELS)
            .map(|(m, w)| TopModel {
                mask: m.clone(),
                pmp: *w,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn random_stage(n: usize, k: usize, seed: u64, beta: &[f64]) -> SingleStage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
        let mut y = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        for (j, b) in beta.iter().enumerate() {
            y += x.column(j) * *b;
        }
        SingleStage::unnamed(y, x).unwrap()
    }

    #[test]
    fn null_model_has_zero_log_ml() {
        let y = DVector::from_vec(vec![1.0, 2.0, 4.0, 3.0]);
        let x = DMatrix::zeros(4, 0);
        assert_eq!(log_marginal_likelihood(&y, &x, &PriorConfig::fixed(3.0)).unwrap(), 0.0);
    }

    #[test]
    fn perfect_fit_closed_form() {
        // R² = 1, n = 3, g = 3: 0.5·ln 4
        let y = DVector::from_vec(vec![-1.0, 0.0, 1.0]);
        let x = DMatrix::from_column_slice(3, 1, &[-1.0, 0.0, 1.0]);
        let v = log_marginal_likelihood(&y, &x, &PriorConfig::fixed(3.0)).unwrap();
        assert_abs_diff_eq!(v, 0.5 * 4f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn log_ml_is_scale_invariant_in_y() {
        let stage = random_stage(30, 3, 5, &[0.5, 0.0, -0.3]);
        let prior = PriorConfig::default();
        let a = log_marginal_likelihood(&stage.y, &stage.columns, &prior).unwrap();
        for c in [0.01, 3.0, 1e4] {
            let b = log_marginal_likelihood(&(stage.y.clone() * c), &stage.columns, &prior).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn duplicated_column_is_excluded() {
        let stage = random_stage(20, 1, 9, &[1.0]);
        let x = crate::linalg::hstack(&stage.columns, &stage.columns);
        let v = log_marginal_likelihood(&stage.y, &x, &PriorConfig::default()).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
        assert!(conditional_posterior_coefficients(&stage.y, &x, &PriorConfig::default()).is_err());
    }

    #[test]
    fn shrunk_mean_for_orthonormal_column() {
        // centred unit-norm column with x'y = 2, n = 5, g = 5 → (5/6)·2
        let x = DVector::from_vec(vec![-2.0, -1.0, 0.0, 1.0, 2.0]).normalize();
        let y = &x * 2.0 + DVector::from_vec(vec![1.0, -2.0, 0.0, 2.0, -1.0]) * 0.1;
        assert_abs_diff_eq!(x.dot(&y), 2.0, epsilon = 1e-12);
        let cols = DMatrix::from_column_slice(5, 1, x.as_slice());
        let post = conditional_posterior_coefficients(&y, &cols, &PriorConfig::fixed(5.0)).unwrap();
        assert_abs_diff_eq!(post.mean[0], 5.0 / 6.0 * 2.0, epsilon = 1e-12);
        // ridge oracle with penalty 1/g on the centred data
        let ridge = x.dot(&y) / (x.norm_squared() * (1.0 + 1.0 / 5.0));
        assert_abs_diff_eq!(post.mean[0], ridge, epsilon = 1e-12);
    }

    #[test]
    fn large_g_recovers_ols() {
        let stage = random_stage(40, 2, 11, &[1.5, -0.7]);
        let post = conditional_posterior_coefficients(&stage.y, &stage.columns, &PriorConfig::fixed(1e12)).unwrap();
        let (_, xc) = center_columns(&stage.columns);
        let (_, yc) = center_vector(&stage.y);
        let ols = (xc.tr_mul(&xc)).try_inverse().unwrap() * xc.tr_mul(&yc);
        assert_abs_diff_eq!(post.mean[0], ols[0], epsilon = 1e-9);
        assert_abs_diff_eq!(post.mean[1], ols[1], epsilon = 1e-9);
    }

    #[test]
    fn empty_model_posterior_is_empty() {
        let stage = random_stage(10, 0, 1, &[]);
        let post = conditional_posterior_coefficients(&stage.y, &stage.columns, &PriorConfig::default()).unwrap();
        assert_eq!(post.mean.len(), 0);
    }

    #[test]
    fn acceptance_rule() {
        assert_eq!(metropolis_acceptance(2f64.ln()), 1.0);
        assert_abs_diff_eq!(metropolis_acceptance(0.5f64.ln()), 0.5, epsilon = 1e-15);
        assert_eq!(metropolis_acceptance(0.0), 1.0);
    }

    #[test]
    fn moment_arithmetic() {
        let names = vec!["x".to_string()];
        // PMPs 0.6/0.4, means 1/2, variances 0 → mean 1.4
        let mut acc = MomentAccumulator::new(1);
        acc.add(0.6, &[0], &[1.0], &[0.0]);
        acc.add(0.4, &[0], &[2.0], &[0.0]);
        assert_abs_diff_eq!(acc.finish(&names)[0].post_mean, 1.4, epsilon = 1e-15);
        // PMPs 0.5/0.5 → variance 0.25
        let mut acc = MomentAccumulator::new(1);
        acc.add(0.5, &[0], &[1.0], &[0.0]);
        acc.add(0.5, &[0], &[2.0], &[0.0]);
        let s = &acc.finish(&names)[0];
        assert_abs_diff_eq!(s.post_mean, 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.post_sd, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_single_column_gives_half() {
        // choose g so that the one-column Bayes factor is exactly 1:
        // ((n-2)/2)·ln(1+g) = ((n-1)/2)·ln(1+g(1-R²))
        let stage = random_stage(25, 1, 3, &[0.3]);
        let space = LinearModelSpace::new(&stage, &PriorConfig::fixed(1.0)).unwrap();
        let r2 = {
            let c = space.cross[0];
            c * c / (space.gram[(0, 0)] * space.tss)
        };
        let n1 = 24.0;
        // solve for g by bisection
        let f = |g: f64| (n1 - 1.0) * (1.0 + g).ln() - n1 * (1.0 + g * (1.0 - r2)).ln();
        let (mut lo, mut hi) = (1e-9, 1e9);
        assert!(f(lo) * f(hi) < 0.0, "R² = {r2}");
        for _ in 0..300 {
            let mid = (lo * hi).sqrt();
            if f(mid).signum() == f(lo).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let res = exact_bma(&stage, &PriorConfig::fixed(lo), ExactOptions::default()).unwrap();
        assert_abs_diff_eq!(res.summary.variables[0].pip, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn exact_pmps_sum_to_one_and_pips_match_direct_sum() {
        let stage = random_stage(60, 6, 21, &[1.0, 0.0, 0.3, 0.0, 0.0, -0.2]);
        let res = exact_bma(&stage, &PriorConfig::default(), ExactOptions::default()).unwrap();
        let total: f64 = res.pmps().iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        for j in 0..6 {
            let direct: f64 = res.records().filter(|r| r.mask.get(j)).map(|r| r.pmp).sum();
            assert_abs_diff_eq!(res.summary.variables[j].pip, direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn parallel_and_sequential_enumeration_are_bit_identical() {
        let stage = random_stage(80, 14, 4, &[0.5, 0.2, 0.0, 0.1]);
        let prior = PriorConfig::default();
        let a = exact_bma(&stage, &prior, ExactOptions { parallel: true, ..Default::default() }).unwrap();
        let b = exact_bma(&stage, &prior, ExactOptions { parallel: false, ..Default::default() }).unwrap();
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.pmps(), b.pmps());
    }

    #[test]
    fn permutation_equivariance() {
        let stage = random_stage(50, 5, 33, &[0.8, 0.0, 0.25, 0.0, -0.4]);
        let perm = [3, 0, 4, 1, 2];
        let cols = crate::linalg::select_columns(&stage.columns, &perm);
        let names = perm.iter().map(|&p| stage.names[p].clone()).collect();
        let permuted = SingleStage::new(stage.y.clone(), cols, names).unwrap();
        let prior = PriorConfig::default();
        let a = exact_bma(&stage, &prior, ExactOptions::default()).unwrap().summary;
        let b = exact_bma(&permuted, &prior, ExactOptions::default()).unwrap().summary;
        for (pos, &orig) in perm.iter().enumerate() {
            let (va, vb) = (&a.variables[orig], &b.variables[pos]);
            assert_eq!(va.name, vb.name);
            assert_abs_diff_eq!(va.pip, vb.pip, epsilon = 1e-12);
            assert_abs_diff_eq!(va.post_mean, vb.post_mean, epsilon = 1e-12);
            assert_abs_diff_eq!(va.post_sd, vb.post_sd, epsilon = 1e-12);
        }
    }

    #[test]
    fn null_data_pips_stay_below_half() {
        let mut mean_pip = 0.0;
        for seed in 0..20 {
            let stage = random_stage(60, 6, 1000 + seed, &[]);
            let res = exact_bma(&stage, &PriorConfig::default(), ExactOptions::default()).unwrap();
            mean_pip += res.summary.pips().iter().sum::<f64>() / 6.0;
        }
        mean_pip /= 20.0;
        assert!(mean_pip < 0.5, "mean PIP {mean_pip}");
    }

    #[test]
    fn mc3_is_deterministic() {
        let stage = random_stage(50, 8, 8, &[0.6, 0.0, 0.3]);
        let cfg = SamplerConfig::new(20_000, 2_000, 77);
        let a = mc3_sample(&stage, &cfg).unwrap();
        let b = mc3_sample(&stage, &cfg).unwrap();
        assert_eq!(a.chain, b.chain);
        assert_eq!(a.summary, b.summary);
        let c = mc3_sample(&stage, &SamplerConfig::new(20_000, 2_000, 78)).unwrap();
        assert_ne!(a.chain.states, c.chain.states);
    }

    #[test]
    fn mc3_matches_exact_on_ten_columns() {
        let stage = random_stage(100, 10, 12, &[0.4, 0.0, 0.25, 0.0, 0.0, 0.15, 0.0, 0.0, 0.0, -0.2]);
        let exact = exact_bma(&stage, &PriorConfig::default(), ExactOptions::default()).unwrap();
        let run = mc3_sample(&stage, &SamplerConfig::new(220_000, 20_000, 5)).unwrap();
        for (e, s) in exact.summary.variables.iter().zip(&run.summary.variables) {
            assert!((e.pip - s.pip).abs() < 0.02, "{}: exact {} vs mc3 {}", e.name, e.pip, s.pip);
        }
    }

    #[test]
    fn mc3_respects_constraints() {
        let stage = random_stage(50, 5, 2, &[0.5, 0.5]);
        let mut cfg = SamplerConfig::new(5_000, 500, 1);
        cfg.constraints = ModelConstraints {
            forced_in: vec![3],
            forced_out: vec![0],
        };
        let run = mc3_sample(&stage, &cfg).unwrap();
        assert_eq!(run.summary.variables[0].pip, 0.0);
        assert_eq!(run.summary.variables[3].pip, 1.0);
    }

    #[test]
    fn mc3_rejects_bad_config() {
        let stage = random_stage(20, 2, 2, &[]);
        assert!(mc3_sample(&stage, &SamplerConfig::new(10, 10, 1)).is_err());
    }

    #[test]
    fn g_prior_parsing() {
        assert_eq!("n".parse::<GPrior>().unwrap(), GPrior::UnitInformation);
        assert_eq!("4.5".parse::<GPrior>().unwrap(), GPrior::Fixed(4.5));
        assert!("-1".parse::<GPrior>().is_err());
        assert!("abc".parse::<GPrior>().is_err());
    }
}
