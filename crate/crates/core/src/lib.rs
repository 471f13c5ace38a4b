//! Bias-corrected composition inference for tag-count data in which each
//! category is tagged with its own known probability.
//!
//! The crate provides the likelihood and closed-form estimators ([`model`]),
//! three Gibbs samplers ([`samplers`]), deterministic mode finders
//! ([`optimize`]), chain diagnostics ([`diagnostics`]), a forward simulator
//! with small-dimension grid oracles ([`synthetic`]) and file formats ([`io`]).

pub mod diagnostics;
pub mod error;
pub mod io;
pub mod model;
pub mod optimize;
pub mod random;
pub mod samplers;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{
    corrected_mle, log_likelihood, log_posterior_kernel, naive_mle, natural_population_estimate,
    tag_frequency, AlphaSpec, CompositionVector, GeneRecord, Hyperparams, SiteSpec, TagDataset,
};
pub use optimize::{dpb_lindley_smith, md_exact_mean, md_mode_iteration, OptimizerResult};
pub use samplers::{run_chain, run_chains, ChainConfig, Model, SampleStore};
