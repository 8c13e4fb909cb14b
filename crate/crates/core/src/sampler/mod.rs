//! Gibbs sampler with constrained inclusion-matrix updates.

pub mod block;
pub mod candidates;
pub mod chain;
pub mod checkpoint;
pub mod config;
pub mod design;

pub use block::{zeta_block_log_prob, zeta_log_prior, BlockPosterior};
pub use candidates::{candidate_models, transition_probabilities, CandidateSet, ModelClass};
pub use chain::{
    draw_inverse_gamma, run_chain, run_chains, run_chains_resumable, Chain, Checkpoint, ResumePoint,
};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use config::{SamplerConfig, ZetaUpdateMode};
pub use design::{DesignCache, Layout, XtMemo};
