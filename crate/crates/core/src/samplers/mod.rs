//! Gibbs samplers for the three data-augmentation schemes and the chain
//! runner shared by all of them.
//!
//! A run performs `iterations` sweeps, discards the first `burn_in`, and
//! retains every `thin`-th composition together with the scalar population
//! trace (`N` for DPB/DMB, `r` for MD) and the compositions of any traced
//! categories. Given the dataset and the [`ChainConfig`] (seed included) the
//! retained draws are bit-reproducible.

mod dmb;
mod dpb;
mod md;

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use dmb::{dmb_step, DmbSampler, DmbState};
pub use dpb::{dpb_step, DpbSampler, DpbState};
pub use md::{md_step, MdSampler, MdState};

use crate::error::{Error, Result};
use crate::model::{corrected_mle, CompositionVector, Hyperparams, TagDataset};
use crate::random::chain_rng;

pub const DEFAULT_ITERATIONS: u64 = 500_000;
pub const DEFAULT_BURN_IN: u64 = 100_000;
pub const DEFAULT_THIN: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Dpb,
    Dmb,
    Md,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Dpb, Model::Dmb, Model::Md];

    pub fn name(self) -> &'static str {
        match self {
            Model::Dpb => "dpb",
            Model::Dmb => "dmb",
            Model::Md => "md",
        }
    }

    /// Name of the scalar latent traced for this model.
    pub fn scalar_name(self) -> &'static str {
        match self {
            Model::Dpb | Model::Dmb => "N",
            Model::Md => "r",
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dpb" => Ok(Model::Dpb),
            "dmb" => Ok(Model::Dmb),
            "md" => Ok(Model::Md),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub model: Model,
    pub hyper: Hyperparams,
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    #[serde(default)]
    pub traced_categories: Vec<String>,
}

impl ChainConfig {
    /// Desk-scale defaults: 500k sweeps, 100k burn-in, thinning 100.
    pub fn new(model: Model, hyper: Hyperparams, seed: u64) -> Self {
        Self {
            model,
            hyper,
            iterations: DEFAULT_ITERATIONS,
            burn_in: DEFAULT_BURN_IN,
            thin: DEFAULT_THIN,
            seed,
            traced_categories: Vec::new(),
        }
    }

    pub fn with_schedule(mut self, iterations: u64, burn_in: u64, thin: u64) -> Self {
        self.iterations = iterations;
        self.burn_in = burn_in;
        self.thin = thin;
        self
    }

    pub fn with_traces(mut self, ids: Vec<String>) -> Self {
        self.traced_categories = ids;
        self
    }

    /// Number of compositions a run retains.
    pub fn retained(&self) -> u64 {
        self.iterations.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    pub fn validate(&self, data: &TagDataset) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if data.is_empty() {
            return Err(Error::Config("dataset has no categories".into()));
        }
        self.hyper.validate()?;
        if self.hyper.alpha.len() != data.len() {
            return Err(Error::LengthMismatch {
                what: "alpha",
                got: self.hyper.alpha.len(),
                expected: data.len(),
            });
        }
        for id in &self.traced_categories {
            if data.index_of(id).is_none() {
                return Err(Error::Config(format!(
                    "traced category `{id}` not in dataset"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalTrace {
    pub id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub config: ChainConfig,
    pub chain: u64,
    pub wall_seconds: f64,
}

/// Retained draws of one chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleStore {
    pub retained_m: Vec<CompositionVector>,
    /// `N` (DPB, DMB) or `r` (MD) at each retained sweep.
    pub trace_n: Vec<f64>,
    pub trace_focal: Vec<FocalTrace>,
    pub meta: StoreMeta,
}

impl SampleStore {
    pub fn len(&self) -> usize {
        self.retained_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.retained_m.is_empty()
    }

    /// Equality of everything a run draws, ignoring wall time.
    pub fn same_draws(&self, other: &SampleStore) -> bool {
        self.retained_m == other.retained_m
            && self.trace_n == other.trace_n
            && self.trace_focal == other.trace_focal
            && self.meta.config == other.meta.config
            && self.meta.chain == other.meta.chain
    }

    /// Per-category mean over the final `window` retained draws (all when
    /// `None`).
    pub fn mean(&self, window: Option<usize>) -> Vec<f64> {
        let draws = self.window(window);
        let k = draws.first().map_or(0, |m| m.len());
        let mut acc = vec![0.0; k];
        for m in draws {
            for (a, v) in acc.iter_mut().zip(m.iter()) {
                *a += v;
            }
        }
        let n = draws.len().max(1) as f64;
        acc.into_iter().map(|a| a / n).collect()
    }

    pub fn window(&self, window: Option<usize>) -> &[CompositionVector] {
        let n = self.retained_m.len();
        let w = window.map_or(n, |w| w.min(n));
        &self.retained_m[n - w..]
    }

    /// Values of category `index` across the final `window` retained draws.
    pub fn series(&self, index: usize, window: Option<usize>) -> Vec<f64> {
        self.window(window).iter().map(|m| m[index]).collect()
    }
}

/// Borrowed latent state handed to chain observers after every sweep.
#[derive(Debug, Clone, Copy)]
pub enum StateView<'a> {
    Dpb(&'a DpbState),
    Dmb(&'a DmbState),
    Md(&'a MdState),
}

/// A Gibbs scheme: an initial state and a sweep over all full conditionals.
pub trait GibbsScheme {
    type State: Clone;

    fn initial_state(&self) -> Self::State;

    fn step<R: Rng + ?Sized>(&mut self, state: &mut Self::State, rng: &mut R);

    /// Writes the composition `m` implied by `state` into `out`.
    fn composition_into(&self, state: &Self::State, out: &mut [f64]);

    /// The traced scalar latent.
    fn scalar(&self, state: &Self::State) -> f64;

    fn view(state: &Self::State) -> StateView<'_>;
}

/// Starting composition: the corrected MLE, or uniform when nothing was
/// observed.
pub(crate) fn initial_composition(data: &TagDataset) -> CompositionVector {
    corrected_mle(data).unwrap_or_else(|_| CompositionVector::uniform(data.len()))
}

pub fn run_chain(data: &TagDataset, config: &ChainConfig) -> Result<SampleStore> {
    run_chain_observed(data, config, 0, |_, _| {})
}

/// Runs chain number `chain` of `config`, calling `observer` with the sweep
/// index (1-based) and the latent state after every sweep.
pub fn run_chain_observed<F>(
    data: &TagDataset,
    config: &ChainConfig,
    chain: u64,
    observer: F,
) -> Result<SampleStore>
where
    F: FnMut(u64, StateView<'_>),
{
    config.validate(data)?;
    let hyper = &config.hyper;
    match config.model {
        Model::Dpb => drive(DpbSampler::new(data, hyper), data, config, chain, observer),
        Model::Dmb => drive(DmbSampler::new(data, hyper), data, config, chain, observer),
        Model::Md => drive(MdSampler::new(data, hyper), data, config, chain, observer),
    }
}

/// Runs `chains` independent chains concurrently, chain `c` seeded by
/// `(config.seed, c)`.
pub fn run_chains(
    data: &TagDataset,
    config: &ChainConfig,
    chains: u64,
) -> Result<Vec<SampleStore>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|c| scope.spawn(move || run_chain_observed(data, config, c, |_, _| {})))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    })
}

fn drive<S, F>(
    mut scheme: S,
    data: &TagDataset,
    config: &ChainConfig,
    chain: u64,
    mut observer: F,
) -> Result<SampleStore>
where
    S: GibbsScheme,
    F: FnMut(u64, StateView<'_>),
{
    let start = Instant::now();
    let mut rng = chain_rng(config.seed, chain);
    let traced: Vec<usize> = config
        .traced_categories
        .iter()
        .map(|id| data.index_of(id).expect("validated"))
        .collect();
    let capacity = config.retained() as usize;
    let mut retained_m = Vec::with_capacity(capacity);
    let mut trace_n = Vec::with_capacity(capacity);
    let mut focal: Vec<Vec<f64>> = vec![Vec::with_capacity(capacity); traced.len()];

    let mut state = scheme.initial_state();
    for sweep in 1..=config.iterations {
        scheme.step(&mut state, &mut rng);
        observer(sweep, S::view(&state));
        if sweep > config.burn_in && (sweep - config.burn_in) % config.thin == 0 {
            let mut m = vec![0.0; data.len()];
            scheme.composition_into(&state, &mut m);
            for (series, &i) in focal.iter_mut().zip(&traced) {
                series.push(m[i]);
            }
            trace_n.push(scheme.scalar(&state));
            retained_m.push(CompositionVector::from_normalized(m));
        }
    }

    Ok(SampleStore {
        retained_m,
        trace_n,
        trace_focal: config
            .traced_categories
            .iter()
            .cloned()
            .zip(focal)
            .map(|(id, values)| FocalTrace { id, values })
            .collect(),
        meta: StoreMeta {
            config: config.clone(),
            chain,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    })
}
