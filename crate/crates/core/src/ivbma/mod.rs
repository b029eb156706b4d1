//! Instrumental-variable BMA: an MC3-within-Gibbs sampler over the outcome
//! equation `y = Xβ + Wγ + ε` and one first-stage equation `X_j = Zδ_j + Wτ_j + η_j`
//! per endogenous regressor, with jointly normal errors `(ε, η) ~ N(0, Σ)`.

mod conditioning;
mod sampler;
mod sigma;

pub use conditioning::{condition_outcome, ErrorConditionals};
pub use sampler::{
    cbf_move_first_stage, cbf_move_outcome, first_stage_log_cbf, outcome_log_cbf, run_ivbma,
    run_ivbma_observed, run_with_context, EquationState, GibbsState, IterationObserver, IvbmaContext,
    IvbmaDraws, IvbmaResult, MoveReport, StageMoments,
};
pub use sigma::{draw_sigma, InverseWishart};
