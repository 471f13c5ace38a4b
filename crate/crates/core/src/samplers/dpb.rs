//! Dirichlet-Poisson-Binomial scheme: latent copy counts `g_i ~ Poisson(N m_i)`
//! thinned binomially into tags, with a gamma prior on the population size `N`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{initial_composition, GibbsScheme, StateView};
use crate::model::{natural_population_estimate, CompositionVector, Hyperparams, TagDataset};
use crate::random::{dirichlet_into, gamma, poisson};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpbState {
    pub m: CompositionVector,
    pub g: Vec<u64>,
    pub n: f64,
}

pub struct DpbSampler<'a> {
    hyper: &'a Hyperparams,
    tags: Vec<u64>,
    untagged: Vec<f64>,
    init_m: CompositionVector,
    init_n: f64,
}

impl<'a> DpbSampler<'a> {
    pub fn new(data: &'a TagDataset, hyper: &'a Hyperparams) -> Self {
        Self {
            hyper,
            tags: data.records().iter().map(|r| r.tag_count).collect(),
            untagged: data.phi().iter().map(|p| 1.0 - p).collect(),
            init_m: initial_composition(data),
            init_n: natural_population_estimate(data).round().max(1.0),
        }
    }
}

impl GibbsScheme for DpbSampler<'_> {
    type State = DpbState;

    fn initial_state(&self) -> DpbState {
        DpbState {
            m: self.init_m.clone(),
            g: self.tags.clone(),
            n: self.init_n,
        }
    }

    fn step<R: Rng + ?Sized>(&mut self, state: &mut DpbState, rng: &mut R) {
        let alpha = &self.hyper.alpha;
        let g = &mut state.g;
        let m = state.m.as_mut_slice();

        // m | g: independent Gamma(g_i + alpha_i, N) normalized, i.e. Dirichlet(g + alpha)
        dirichlet_into(rng, m, |i| g[i] as f64 + alpha[i]);

        // g | m, N: observed tags plus untagged copies
        let n = state.n;
        let mut total = 0u64;
        for i in 0..g.len() {
            g[i] = self.tags[i] + poisson(rng, n * m[i] * self.untagged[i]);
            total += g[i];
        }

        // N | g
        state.n = gamma(
            rng,
            total as f64 + self.hyper.gamma1,
            1.0 + self.hyper.gamma2,
        );
    }

    fn composition_into(&self, state: &DpbState, out: &mut [f64]) {
        out.copy_from_slice(&state.m);
    }

    fn scalar(&self, state: &DpbState) -> f64 {
        state.n
    }

    fn view(state: &DpbState) -> StateView<'_> {
        StateView::Dpb(state)
    }
}

/// One full DPB sweep from `state`.
pub fn dpb_step<R: Rng + ?Sized>(
    state: &DpbState,
    data: &TagDataset,
    hyper: &Hyperparams,
    rng: &mut R,
) -> DpbState {
    let mut next = state.clone();
    DpbSampler::new(data, hyper).step(&mut next, rng);
    next
}
