use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bma::{metropolis_accept, MomentAccumulator, PosteriorSummary, SamplerConfig, TopModel};
use crate::error::{Error, Result};
use crate::ivbma::conditioning::ErrorConditionals;
use crate::ivbma::sigma::{draw_sigma, InverseWishart};
use crate::linalg::{center_columns, checked_cholesky, is_positive_definite, sub_gram, sub_vector};
use crate::model_space::{propose_flip_index, InclusionMask};
use crate::pipeline::DesignMatrices;

/// Candidate block of one equation with its centred Gram matrix.
#[derive(Debug, Clone)]
struct StagePool {
    raw: DMatrix<f64>,
    means: DVector<f64>,
    centered: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl StagePool {
    fn new(raw: DMatrix<f64>) -> Self {
        let (means, centered) = center_columns(&raw);
        let gram = centered.tr_mul(&centered);
        Self {
            raw,
            means,
            centered,
            gram,
        }
    }

    fn k(&self) -> usize {
        self.raw.ncols()
    }

    /// `Cᵀ t`; equal to `Cᵀ (t - t̄)` because the columns of `C` are centred.
    fn cross(&self, target: &DVector<f64>) -> DVector<f64> {
        self.centered.tr_mul(target)
    }

    /// Log marginal likelihood against the intercept-only model for a target
    /// with known error variance `v` under the g-prior `N(0, g·v·(CᵀC)⁻¹)`:
    /// `-k/2·ln(1+g) + g/(2v(1+g))·cᵀ(CᵀC)⁻¹c`.
    fn log_ml(&self, mask: &InclusionMask, cross: &DVector<f64>, v: f64, g: f64) -> f64 {
        let idx = mask.indices();
        if idx.is_empty() {
            return 0.0;
        }
        let Some(chol) = checked_cholesky(sub_gram(&self.gram, &idx)) else {
            return f64::NEG_INFINITY;
        };
        let c = sub_vector(cross, &idx);
        let ess = c.dot(&chol.solve(&c));
        -0.5 * idx.len() as f64 * g.ln_1p() + g / (2.0 * v * (1.0 + g)) * ess
    }

    /// Draws intercept and slopes from their conditional posterior and returns
    /// the new residual `raw_target - α - X_M θ` together with the conditional moments.
    #[allow(clippy::too_many_arguments)]
    fn draw<R: Rng + ?Sized>(
        &self,
        mask: &InclusionMask,
        target: &DVector<f64>,
        cross: &DVector<f64>,
        raw_target: &DVector<f64>,
        v: f64,
        g: f64,
        rng: &mut R,
    ) -> Result<StageDraw> {
        let n = target.len();
        let idx = mask.indices();
        let k = self.k();
        let mut coefficients = DVector::zeros(k);
        let mut cond_mean = Vec::with_capacity(idx.len());
        let mut cond_var = Vec::with_capacity(idx.len());
        let mut fitted_mean = 0.0;
        if !idx.is_empty() {
            let chol = checked_cholesky(sub_gram(&self.gram, &idx))
                .ok_or_else(|| Error::StateCorruption("current model is rank-deficient".into()))?;
            let shrink = g / (1.0 + g);
            let mean = chol.solve(&sub_vector(cross, &idx)) * shrink;
            let z = DVector::from_fn(idx.len(), |_, _| StandardNormal.sample(rng));
            // θ = mean + sqrt(v·shrink)·L⁻ᵀz has covariance v·shrink·(LLᵀ)⁻¹
            let l = chol.l();
            let noise = l
                .tr_solve_upper_triangular(&z)
                .ok_or_else(|| Error::StateCorruption("singular Cholesky factor".into()))?;
            let theta = &mean + noise * (v * shrink).sqrt();
            let inv_diag = chol.inverse().diagonal();
            for (a, &j) in idx.iter().enumerate() {
                coefficients[j] = theta[a];
                fitted_mean += self.means[j] * theta[a];
                cond_mean.push(mean[a]);
                cond_var.push(v * shrink * inv_diag[a]);
            }
        }
        let target_mean = target.mean();
        let z: f64 = StandardNormal.sample(rng);
        let intercept = target_mean - fitted_mean + z * (v / n as f64).sqrt();
        let mut residual = raw_target.add_scalar(-intercept);
        for &j in &idx {
            residual.axpy(-coefficients[j], &self.raw.column(j), 1.0);
        }
        Ok(StageDraw {
            intercept,
            coefficients,
            indices: idx,
            cond_mean,
            cond_var,
            residual,
        })
    }
}

struct StageDraw {
    intercept: f64,
    coefficients: DVector<f64>,
    indices: Vec<usize>,
    cond_mean: Vec<f64>,
    cond_var: Vec<f64>,
    residual: DVector<f64>,
}

/// Shared, read-only ingredients of an IVBMA chain.
#[derive(Debug, Clone)]
pub struct IvbmaContext {
    y: DVector<f64>,
    x: DMatrix<f64>,
    outcome_pool: StagePool,
    first_pool: StagePool,
    outcome_names: Vec<String>,
    first_names: Vec<String>,
    x_names: Vec<String>,
    outcome_free: Vec<usize>,
    first_free: Vec<usize>,
    g: f64,
    sigma_prior: InverseWishart,
}

impl IvbmaContext {
    pub fn new(design: &DesignMatrices, config: &SamplerConfig) -> Result<Self> {
        config.g.validate()?;
        let outcome_pool = StagePool::new(design.second_stage_block());
        config.constraints.validate(outcome_pool.k())?;
        let first_pool = StagePool::new(design.first_stage_block());
        Ok(Self {
            y: design.y.clone(),
            x: design.x.clone(),
            outcome_free: config.constraints.free_columns(outcome_pool.k()),
            first_free: (0..first_pool.k()).collect(),
            outcome_pool,
            first_pool,
            outcome_names: design.second_stage_names(),
            first_names: design.first_stage_names(),
            x_names: design.x_names.clone(),
            g: config.g.value(design.n()),
            sigma_prior: InverseWishart::default_for(design.p()),
        })
    }

    /// Replaces the default `IW(p + 3, I)` error-covariance prior.
    pub fn with_sigma_prior(mut self, prior: InverseWishart) -> Result<Self> {
        if prior.dim() != self.p() + 1 {
            return Err(Error::Dimension(format!(
                "sigma prior is {}-dimensional, expected {}",
                prior.dim(),
                self.p() + 1
            )));
        }
        self.sigma_prior = prior;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn outcome_k(&self) -> usize {
        self.outcome_pool.k()
    }

    pub fn first_stage_k(&self) -> usize {
        self.first_pool.k()
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn sigma_prior(&self) -> &InverseWishart {
        &self.sigma_prior
    }
}

/// Conditional posterior moments of the slopes drawn in the last update of an equation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageMoments {
    pub indices: Vec<usize>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Model and parameters of one equation.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationState {
    pub mask: InclusionMask,
    pub intercept: f64,
    /// Dense over the equation's candidate block; zero where excluded.
    pub coefficients: DVector<f64>,
    pub moments: StageMoments,
}

impl EquationState {
    fn apply(&mut self, draw: StageDraw) -> DVector<f64> {
        self.intercept = draw.intercept;
        self.coefficients = draw.coefficients;
        self.moments = StageMoments {
            indices: draw.indices,
            mean: draw.cond_mean,
            var: draw.cond_var,
        };
        draw.residual
    }
}

/// Full state of the MC3-within-Gibbs chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    /// Outcome equation over `[X W]` (β, γ).
    pub outcome: EquationState,
    /// One first-stage equation per endogenous regressor over `[Z W]` (δ, τ).
    pub first_stage: Vec<EquationState>,
    /// Outcome-equation residuals ε (n).
    pub epsilon: DVector<f64>,
    /// First-stage residuals η (n × p).
    pub eta: DMatrix<f64>,
    sigma: DMatrix<f64>,
    conditionals: ErrorConditionals,
}

impl GibbsState {
    /// Starting point: forced-in outcome columns only, empty first stages,
    /// intercepts at the sample means, and Σ at the posterior mean implied by
    /// the resulting residuals.
    pub fn initial(ctx: &IvbmaContext, config: &SamplerConfig) -> Result<Self> {
        let n = ctx.n();
        let p = ctx.p();
        let outcome_mask = config.constraints.initial_mask(ctx.outcome_k());
        if !ctx.outcome_pool.log_ml(&outcome_mask, &DVector::zeros(ctx.outcome_k()), 1.0, ctx.g).is_finite() {
            return Err(Error::RankDeficient("the forced-in columns are collinear".into()));
        }
        let y_mean = ctx.y.mean();
        let epsilon = ctx.y.add_scalar(-y_mean);
        let (x_means, eta) = center_columns(&ctx.x);
        let first_stage = (0..p)
            .map(|j| EquationState {
                mask: InclusionMask::empty(ctx.first_stage_k()),
                intercept: x_means[j],
                coefficients: DVector::zeros(ctx.first_stage_k()),
                moments: StageMoments::default(),
            })
            .collect();
        let residuals = residual_matrix(&epsilon, &eta);
        let post = ctx
            .sigma_prior
            .posterior(n, &residuals.tr_mul(&residuals))?;
        let sigma = post.mean().unwrap_or_else(|| DMatrix::identity(p + 1, p + 1));
        let mut state = Self {
            outcome: EquationState {
                mask: outcome_mask,
                intercept: y_mean,
                coefficients: DVector::zeros(ctx.outcome_k()),
                moments: StageMoments::default(),
            },
            first_stage,
            epsilon,
            eta,
            conditionals: ErrorConditionals::from_sigma(&DMatrix::identity(p + 1, p + 1))?,
            sigma: DMatrix::identity(p + 1, p + 1),
        };
        state.set_sigma(sigma)?;
        Ok(state)
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Installs a new error covariance after checking it is symmetric positive definite.
    pub fn set_sigma(&mut self, sigma: DMatrix<f64>) -> Result<()> {
        let d = self.eta.ncols() + 1;
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::Dimension(format!("sigma must be {d}x{d}")));
        }
        if !is_positive_definite(&sigma) {
            return Err(Error::StateCorruption("sigma is not symmetric positive definite".into()));
        }
        self.conditionals = ErrorConditionals::from_sigma(&sigma)?;
        self.sigma = sigma;
        Ok(())
    }

    /// Conditional variance of the outcome error given η.
    pub fn outcome_target_variance(&self) -> f64 {
        self.conditionals.variances[0]
    }

    /// `[ε | η]`.
    pub fn residuals(&self) -> DMatrix<f64> {
        residual_matrix(&self.epsilon, &self.eta)
    }

    /// Outcome adjusted for the first-stage errors and its conditional variance.
    pub fn outcome_target(&self, ctx: &IvbmaContext) -> (DVector<f64>, f64) {
        let mut target = ctx.y.clone();
        for o in 0..self.eta.ncols() {
            let w = self.conditionals.weights[(0, o + 1)];
            if w != 0.0 {
                target.axpy(-w, &self.eta.column(o), 1.0);
            }
        }
        (target, self.conditionals.variances[0])
    }

    /// `X_j` adjusted for ε and the other first-stage errors, with its conditional variance.
    pub fn first_stage_target(&self, ctx: &IvbmaContext, j: usize) -> (DVector<f64>, f64) {
        let row = j + 1;
        let mut target = ctx.x.column(j).into_owned();
        target.axpy(-self.conditionals.weights[(row, 0)], &self.epsilon, 1.0);
        for o in 0..self.eta.ncols() {
            if o != j {
                let w = self.conditionals.weights[(row, o + 1)];
                if w != 0.0 {
                    target.axpy(-w, &self.eta.column(o), 1.0);
                }
            }
        }
        (target, self.conditionals.variances[row])
    }
}

fn residual_matrix(epsilon: &DVector<f64>, eta: &DMatrix<f64>) -> DMatrix<f64> {
    let n = epsilon.len();
    let mut r = DMatrix::zeros(n, eta.ncols() + 1);
    r.column_mut(0).copy_from(epsilon);
    r.columns_mut(1, eta.ncols()).copy_from(eta);
    r
}

/// What happened in one model move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveReport {
    /// Column whose inclusion was proposed to flip; `None` if every column is fixed.
    pub flipped: Option<usize>,
    pub log_cbf: f64,
    pub accepted: bool,
}

/// Log conditional Bayes factor of `proposal` against the current outcome model.
pub fn outcome_log_cbf(state: &GibbsState, ctx: &IvbmaContext, proposal: &InclusionMask) -> f64 {
    let (target, v) = state.outcome_target(ctx);
    let cross = ctx.outcome_pool.cross(&target);
    ctx.outcome_pool.log_ml(proposal, &cross, v, ctx.g)
        - ctx.outcome_pool.log_ml(&state.outcome.mask, &cross, v, ctx.g)
}

/// Log conditional Bayes factor of `proposal` against the current model of first-stage equation `j`.
pub fn first_stage_log_cbf(state: &GibbsState, ctx: &IvbmaContext, j: usize, proposal: &InclusionMask) -> f64 {
    let (target, v) = state.first_stage_target(ctx, j);
    let cross = ctx.first_pool.cross(&target);
    ctx.first_pool.log_ml(proposal, &cross, v, ctx.g)
        - ctx.first_pool.log_ml(&state.first_stage[j].mask, &cross, v, ctx.g)
}

fn mc3_step<R: Rng + ?Sized>(
    pool: &StagePool,
    free: &[usize],
    mask: &InclusionMask,
    cross: &DVector<f64>,
    v: f64,
    g: f64,
    rng: &mut R,
) -> (Option<InclusionMask>, MoveReport) {
    let Some(j) = propose_flip_index(free, rng) else {
        return (
            None,
            MoveReport {
                flipped: None,
                log_cbf: 0.0,
                accepted: false,
            },
        );
    };
    let proposal = mask.flipped(j);
    let log_cbf = pool.log_ml(&proposal, cross, v, g) - pool.log_ml(mask, cross, v, g);
    let accepted = metropolis_accept(log_cbf, rng);
    (
        accepted.then_some(proposal),
        MoveReport {
            flipped: Some(j),
            log_cbf,
            accepted,
        },
    )
}

/// Single-flip CBF move on the outcome equation, followed by a redraw of its
/// coefficients from the conditional posterior and a refresh of ε.
pub fn cbf_move_outcome<R: Rng + ?Sized>(
    state: &mut GibbsState,
    ctx: &IvbmaContext,
    rng: &mut R,
) -> Result<MoveReport> {
    let (target, v) = state.outcome_target(ctx);
    if !(v > 0.0) {
        return Err(Error::StateCorruption(format!("conditional outcome variance {v}")));
    }
    let cross = ctx.outcome_pool.cross(&target);
    let (accepted, report) = mc3_step(
        &ctx.outcome_pool,
        &ctx.outcome_free,
        &state.outcome.mask,
        &cross,
        v,
        ctx.g,
        rng,
    );
    if let Some(mask) = accepted {
        state.outcome.mask = mask;
    }
    let draw = ctx
        .outcome_pool
        .draw(&state.outcome.mask, &target, &cross, &ctx.y, v, ctx.g, rng)?;
    // ε = y - α - Xβ - Wγ uses the observed y, not the adjusted target
    state.epsilon = state.outcome.apply(draw);
    Ok(report)
}

/// Single-flip CBF move on first-stage equation `j`, followed by a redraw of
/// its coefficients and a refresh of `η_j`.
pub fn cbf_move_first_stage<R: Rng + ?Sized>(
    state: &mut GibbsState,
    ctx: &IvbmaContext,
    j: usize,
    rng: &mut R,
) -> Result<MoveReport> {
    if j >= ctx.p() {
        return Err(Error::Dimension(format!(
            "first-stage equation {j} does not exist (p = {})",
            ctx.p()
        )));
    }
    let (target, v) = state.first_stage_target(ctx, j);
    if !(v > 0.0) {
        return Err(Error::StateCorruption(format!("conditional first-stage variance {v}")));
    }
    let cross = ctx.first_pool.cross(&target);
    let (accepted, report) = mc3_step(
        &ctx.first_pool,
        &ctx.first_free,
        &state.first_stage[j].mask,
        &cross,
        v,
        ctx.g,
        rng,
    );
    if let Some(mask) = accepted {
        state.first_stage[j].mask = mask;
    }
    let x_j = ctx.x.column(j).into_owned();
    let draw = ctx
        .first_pool
        .draw(&state.first_stage[j].mask, &target, &cross, &target, v, ctx.g, rng)?;
    // the draw's residual is relative to the adjusted target; η_j is relative to X_j
    let adjustment = &x_j - &target;
    let eta_j = state.first_stage[j].apply(draw) + adjustment;
    state.eta.set_column(j, &eta_j);
    Ok(report)
}

/// Retained post-burn-in draws, stored row-major (one row per retained iteration).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IvbmaDraws {
    /// 1-based iteration number of each retained draw.
    pub iterations: Vec<usize>,
    pub second_stage_names: Vec<String>,
    pub second_stage: Vec<f64>,
    /// `sigma_0_j` (outcome row) and `sigma_j_j` (first-stage variances).
    pub sigma_names: Vec<String>,
    pub sigma: Vec<f64>,
    /// Coefficient of each first-stage equation on its own instrument.
    pub first_stage_names: Vec<String>,
    pub first_stage: Vec<f64>,
}

impl IvbmaDraws {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    fn column(data: &[f64], width: usize, j: usize) -> Vec<f64> {
        data.chunks(width.max(1)).map(|row| row[j]).collect()
    }

    pub fn second_stage_column(&self, j: usize) -> Vec<f64> {
        Self::column(&self.second_stage, self.second_stage_names.len(), j)
    }

    pub fn sigma_column(&self, j: usize) -> Vec<f64> {
        Self::column(&self.sigma, self.sigma_names.len(), j)
    }

    pub fn first_stage_column(&self, j: usize) -> Vec<f64> {
        Self::column(&self.first_stage, self.first_stage_names.len(), j)
    }
}

#[derive(Debug, Clone)]
pub struct IvbmaResult {
    pub second_stage: PosteriorSummary,
    /// One summary per endogenous regressor, over `[Z W]`.
    pub first_stage: Vec<PosteriorSummary>,
    pub first_stage_targets: Vec<String>,
    pub draws: IvbmaDraws,
    /// Posterior mean of Σ over post-burn-in iterations.
    pub sigma_summary: DMatrix<f64>,
    pub outcome_acceptance: f64,
    pub first_stage_acceptance: Vec<f64>,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
}

/// Hook for tests and diagnostics: called with each post-burn-in state.
pub trait IterationObserver {
    fn observe(&mut self, iteration: usize, state: &GibbsState);
}

impl IterationObserver for () {
    fn observe(&mut self, _: usize, _: &GibbsState) {}
}

impl<F: FnMut(usize, &GibbsState)> IterationObserver for F {
    fn observe(&mut self, iteration: usize, state: &GibbsState) {
        self(iteration, state)
    }
}

/// Runs the MC3-within-Gibbs chain: outcome move, first-stage moves in column
/// order, then Σ, for `config.iterations` sweeps.
pub fn run_ivbma(design: &DesignMatrices, config: &SamplerConfig) -> Result<IvbmaResult> {
    run_ivbma_observed(design, config, &mut ())
}

pub fn run_ivbma_observed(
    design: &DesignMatrices,
    config: &SamplerConfig,
    observer: &mut dyn IterationObserver,
) -> Result<IvbmaResult> {
    config.validate()?;
    if design.p() == 0 {
        return Err(Error::Config(
            "IVBMA needs at least one endogenous regressor; use plain BMA instead".into(),
        ));
    }
    design.check_estimable()?;
    let ctx = IvbmaContext::new(design, config)?;
    run_with_context(&ctx, config, observer)
}

pub fn run_with_context(
    ctx: &IvbmaContext,
    config: &SamplerConfig,
    observer: &mut dyn IterationObserver,
) -> Result<IvbmaResult> {
    config.validate()?;
    let p = ctx.p();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = GibbsState::initial(ctx, config)?;

    let mut outcome_acc = MomentAccumulator::new(ctx.outcome_k());
    let mut first_acc: Vec<MomentAccumulator> =
        (0..p).map(|_| MomentAccumulator::new(ctx.first_stage_k())).collect();
    let mut visits: HashMap<InclusionMask, u64> = HashMap::new();
    let mut sigma_sum = DMatrix::<f64>::zeros(p + 1, p + 1);
    let mut outcome_accepts = 0usize;
    let mut outcome_proposals = 0usize;
    let mut first_accepts = vec![0usize; p];
    let mut first_proposals = vec![0usize; p];

    let sigma_names: Vec<String> = (0..=p)
        .map(|j| format!("sigma_0_{j}"))
        .chain((1..=p).map(|j| format!("sigma_{j}_{j}")))
        .collect();
    let mut draws = IvbmaDraws {
        second_stage_names: ctx.outcome_names.clone(),
        first_stage_names: (0..p)
            .map(|j| format!("{}|{}", ctx.x_names[j], ctx.first_names[j]))
            .collect(),
        sigma_names,
        ..Default::default()
    };

    let abort = |iteration: usize| {
        move |e: Error| Error::SamplerAborted {
            iteration,
            message: e.to_string(),
        }
    };

    for it in 0..config.iterations {
        let report = cbf_move_outcome(&mut state, ctx, &mut rng).map_err(abort(it + 1))?;
        if report.flipped.is_some() {
            outcome_proposals += 1;
            outcome_accepts += report.accepted as usize;
        }
        for j in 0..p {
            let report = cbf_move_first_stage(&mut state, ctx, j, &mut rng).map_err(abort(it + 1))?;
            if report.flipped.is_some() {
                first_proposals[j] += 1;
                first_accepts[j] += report.accepted as usize;
            }
        }
        let sigma = draw_sigma(&state.residuals(), &ctx.sigma_prior, &mut rng).map_err(abort(it + 1))?;
        state.set_sigma(sigma).map_err(abort(it + 1))?;

        if it < config.burn_in {
            continue;
        }
        let m = &state.outcome.moments;
        outcome_acc.add(1.0, &m.indices, &m.mean, &m.var);
        for (acc, eq) in first_acc.iter_mut().zip(&state.first_stage) {
            let m = &eq.moments;
            acc.add(1.0, &m.indices, &m.mean, &m.var);
        }
        *visits.entry(state.outcome.mask.clone()).or_insert(0) += 1;
        sigma_sum += state.sigma();

        let t = it - config.burn_in + 1;
        if t % config.thinning == 0 {
            draws.iterations.push(it + 1);
            draws.second_stage.extend(state.outcome.coefficients.iter());
            let s = state.sigma();
            draws.sigma.extend((0..=p).map(|j| s[(0, j)]));
            draws.sigma.extend((1..=p).map(|j| s[(j, j)]));
            draws
                .first_stage
                .extend((0..p).map(|j| state.first_stage[j].coefficients[j]));
        }
        observer.observe(it + 1, &state);
    }

    let kept = (config.iterations - config.burn_in) as f64;
    let mut ranked: Vec<(InclusionMask, u64)> = visits.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let second_stage = PosteriorSummary {
        variables: outcome_acc.finish(&ctx.outcome_names),
        models_visited: ranked.len(),
        rank_deficient_models: 0,
        top_models: ranked
            .iter()
            .take(10)
            .map(|(m, c)| TopModel {
                mask: m.clone(),
                pmp: *c as f64 / kept,
            })
            .collect(),
    };
    let first_stage = first_acc
        .iter()
        .map(|acc| PosteriorSummary {
            variables: acc.finish(&ctx.first_names),
            models_visited: 0,
            rank_deficient_models: 0,
            top_models: Vec::new(),
        })
        .collect();
    let rate = |a: usize, n: usize| if n == 0 { 0.0 } else { a as f64 / n as f64 };

    Ok(IvbmaResult {
        second_stage,
        first_stage,
        first_stage_targets: ctx.x_names.clone(),
        draws,
        sigma_summary: sigma_sum / kept,
        outcome_acceptance: rate(outcome_accepts, outcome_proposals),
        first_stage_acceptance: first_accepts
            .iter()
            .zip(&first_proposals)
            .map(|(&a, &n)| rate(a, n))
            .collect(),
        iterations: config.iterations,
        burn_in: config.burn_in,
        thinning: config.thinning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bma::metropolis_acceptance;
    use crate::linalg::is_symmetric;
    use crate::model_space::ModelConstraints;
    use crate::synthetic::{generate_endogenous, SyntheticConfig};

    fn design(n: usize, q: usize, rho: f64, seed: u64) -> DesignMatrices {
        generate_endogenous(&SyntheticConfig::single_endogenous(n, q, 1.0, rho, 0.9, seed)).unwrap()
    }

    fn config(iterations: usize, burn_in: usize, seed: u64) -> SamplerConfig {
        let mut c = SamplerConfig::new(iterations, burn_in, seed);
        c.thinning = 5;
        c
    }

    #[test]
    fn identical_seeds_give_identical_results() {
        let d = design(80, 3, 0.5, 1);
        let a = run_ivbma(&d, &config(600, 100, 7)).unwrap();
        let b = run_ivbma(&d, &config(600, 100, 7)).unwrap();
        assert_eq!(a.second_stage, b.second_stage);
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.sigma_summary, b.sigma_summary);
        let c = run_ivbma(&d, &config(600, 100, 8)).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn retained_draw_count_follows_thinning() {
        let d = design(60, 2, 0.3, 2);
        let r = run_ivbma(&d, &config(1100, 100, 1)).unwrap();
        assert_eq!(r.draws.len(), 200);
        assert_eq!(r.draws.second_stage.len(), 200 * 3);
        assert_eq!(r.draws.sigma.len(), 200 * 3);
        assert_eq!(r.draws.first_stage.len(), 200);
        assert_eq!(r.draws.iterations[0], 105);
    }

    #[test]
    fn every_sigma_is_positive_definite() {
        let d = design(60, 3, 0.7, 3);
        let mut checked = 0;
        let mut observer = |_: usize, s: &GibbsState| {
            assert!(is_symmetric(s.sigma(), 1e-12));
            assert!(is_positive_definite(s.sigma()));
            assert!(s.outcome_target_variance() > 0.0);
            checked += 1;
        };
        run_ivbma_observed(&d, &config(2000, 0, 4), &mut observer).unwrap();
        assert_eq!(checked, 2000);
    }

    #[test]
    fn forced_columns_have_degenerate_pips() {
        let d = design(80, 4, 0.4, 5);
        let mut c = config(1500, 200, 9);
        c.constraints = ModelConstraints {
            forced_in: vec![2],
            forced_out: vec![4],
        };
        let r = run_ivbma(&d, &c).unwrap();
        assert_eq!(r.second_stage.variables[2].pip, 1.0);
        assert_eq!(r.second_stage.variables[4].pip, 0.0);
        assert_eq!(r.second_stage.variables[4].post_mean, 0.0);
        for t in &r.second_stage.top_models {
            assert!(t.mask.get(2) && !t.mask.get(4));
        }
    }

    #[test]
    fn needs_an_endogenous_regressor() {
        let d = design(40, 2, 0.0, 6);
        let exog = DesignMatrices::new(
            d.countries.clone(),
            d.outcome_name.clone(),
            d.y.clone(),
            DMatrix::zeros(40, 0),
            vec![],
            d.w.clone(),
            d.w_names.clone(),
            DMatrix::zeros(40, 0),
            vec![],
        )
        .unwrap();
        assert!(matches!(run_ivbma(&exog, &config(10, 0, 1)), Err(Error::Config(_))));
    }

    #[test]
    fn independent_errors_leave_targets_unadjusted() {
        let d = design(50, 2, 0.0, 7);
        let c = config(10, 0, 1);
        let ctx = IvbmaContext::new(&d, &c).unwrap();
        let mut s = GibbsState::initial(&ctx, &c).unwrap();
        s.set_sigma(DMatrix::identity(2, 2)).unwrap();
        let (t, v) = s.outcome_target(&ctx);
        assert_eq!((t, v), (d.y.clone(), 1.0));
        let (t, v) = s.first_stage_target(&ctx, 0);
        assert_eq!((t, v), (d.x.column(0).into_owned(), 1.0));
    }

    #[test]
    fn correlated_errors_adjust_the_outcome() {
        let d = design(50, 2, 0.0, 7);
        let c = config(10, 0, 1);
        let ctx = IvbmaContext::new(&d, &c).unwrap();
        let mut s = GibbsState::initial(&ctx, &c).unwrap();
        s.set_sigma(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0])).unwrap();
        let (t, v) = s.outcome_target(&ctx);
        let expected = &d.y - s.eta.column(0);
        assert!((t - expected).abs().max() < 1e-12);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_column_proposal_is_rejected() {
        let mut d = design(50, 2, 0.0, 8);
        let dup = d.w.column(0).into_owned();
        d.w.set_column(1, &dup);
        let c = config(10, 0, 1);
        let ctx = IvbmaContext::new(&d, &c).unwrap();
        let mut s = GibbsState::initial(&ctx, &c).unwrap();
        s.outcome.mask = InclusionMask::from_indices(3, &[1]);
        let proposal = InclusionMask::from_indices(3, &[1, 2]);
        let cbf = outcome_log_cbf(&s, &ctx, &proposal);
        assert_eq!(cbf, f64::NEG_INFINITY);
        assert_eq!(metropolis_acceptance(cbf), 0.0);
        assert_eq!(metropolis_acceptance(0.0), 1.0);
    }

    #[test]
    fn dropping_a_strong_instrument_is_usually_rejected() {
        let mut accepted = 0;
        for seed in 0..100 {
            let d = design(100, 2, 0.3, 100 + seed);
            let c = config(10, 0, seed);
            let ctx = IvbmaContext::new(&d, &c).unwrap();
            let mut s = GibbsState::initial(&ctx, &c).unwrap();
            s.first_stage[0].mask = InclusionMask::from_indices(3, &[0]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cbf = first_stage_log_cbf(&s, &ctx, 0, &InclusionMask::empty(3));
            accepted += metropolis_accept(cbf, &mut rng) as usize;
        }
        assert!(accepted < 50, "{accepted}");
    }

    /// Known-variance g-prior log marginal on centred columns, computed through
    /// an explicit inverse rather than the Cholesky path.
    fn known_variance_log_ml(y: &DVector<f64>, cols: &DMatrix<f64>, mask: &InclusionMask, g: f64) -> f64 {
        let idx = mask.indices();
        if idx.is_empty() {
            return 0.0;
        }
        let n = y.len() as f64;
        let c = DMatrix::from_fn(cols.nrows(), idx.len(), |r, a| {
            let col = cols.column(idx[a]);
            col[r] - col.sum() / n
        });
        let gram_inv = (c.transpose() * &c).try_inverse().unwrap();
        let cy = c.transpose() * y;
        let ess = (cy.transpose() * gram_inv * &cy)[(0, 0)];
        -(idx.len() as f64) / 2.0 * (1.0 + g).ln() + g / (2.0 * (1.0 + g)) * ess
    }

    #[test]
    fn outcome_chain_with_fixed_sigma_targets_known_variance_posterior() {
        let d = design(60, 4, 0.0, 9);
        let c = config(10, 0, 3);
        let ctx = IvbmaContext::new(&d, &c).unwrap();
        let mut s = GibbsState::initial(&ctx, &c).unwrap();
        s.set_sigma(DMatrix::identity(2, 2)).unwrap();
        let block = d.second_stage_block();
        let k = block.ncols();
        let g = ctx.g();
        let log_ml: Vec<f64> = (0..1u64 << k)
            .map(|r| known_variance_log_ml(&d.y, &block, &InclusionMask::from_rank(k, r), g))
            .collect();
        let max = log_ml.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = log_ml.iter().map(|l| (l - max).exp()).sum();
        let exact: Vec<f64> = log_ml.iter().map(|l| (l - max).exp() / z).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = vec![0u64; 1 << k];
        let draws = 200_000;
        for _ in 0..draws {
            cbf_move_outcome(&mut s, &ctx, &mut rng).unwrap();
            counts[s.outcome.mask.rank() as usize] += 1;
        }
        let tv: f64 = counts
            .iter()
            .zip(&exact)
            .map(|(&c, &p)| (c as f64 / draws as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv <= 0.03, "total variation {tv}");
    }
}
