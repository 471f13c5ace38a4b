//! Dirichlet-Multinomial-Binomial scheme: `g ~ Multinomial(N, m)` thinned
//! binomially into tags, so that `sum_i g_i = N` at every step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{initial_composition, GibbsScheme, StateView};
use crate::model::{CompositionVector, Hyperparams, TagDataset};
use crate::random::{dirichlet_into, gamma, multinomial_into};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmbState {
    pub m: CompositionVector,
    pub g: Vec<u64>,
    pub n: u64,
}

pub struct DmbSampler<'a> {
    hyper: &'a Hyperparams,
    tags: Vec<u64>,
    total_tags: u64,
    untagged: Vec<f64>,
    init_m: CompositionVector,
    weights: Vec<f64>,
    extra: Vec<u64>,
}

impl<'a> DmbSampler<'a> {
    pub fn new(data: &'a TagDataset, hyper: &'a Hyperparams) -> Self {
        let k = data.len();
        Self {
            hyper,
            tags: data.records().iter().map(|r| r.tag_count).collect(),
            total_tags: data.total_tags(),
            untagged: data.phi().iter().map(|p| 1.0 - p).collect(),
            init_m: initial_composition(data),
            weights: vec![0.0; k],
            extra: vec![0; k],
        }
    }
}

impl GibbsScheme for DmbSampler<'_> {
    type State = DmbState;

    fn initial_state(&self) -> DmbState {
        DmbState {
            m: self.init_m.clone(),
            g: self.tags.clone(),
            n: self.total_tags,
        }
    }

    fn step<R: Rng + ?Sized>(&mut self, state: &mut DmbState, rng: &mut R) {
        let alpha = &self.hyper.alpha;
        let g = &mut state.g;
        let m = state.m.as_mut_slice();

        dirichlet_into(rng, m, |i| g[i] as f64 + alpha[i]);

        // N depends on the data and hyperparameters only; at least T_tot copies
        let t = self.total_tags;
        let x = gamma(rng, t as f64 + self.hyper.gamma1, 1.0 + self.hyper.gamma2);
        let mut n = (x.ceil() as u64).max(t);

        for (w, (m, u)) in self.weights.iter_mut().zip(m.iter().zip(&self.untagged)) {
            *w = m * u;
        }
        if !multinomial_into(rng, n - t, &self.weights, &mut self.extra) {
            // no untagged mass is possible
            n = t;
        }
        for i in 0..g.len() {
            g[i] = self.tags[i] + self.extra[i];
        }
        state.n = n;
    }

    fn composition_into(&self, state: &DmbState, out: &mut [f64]) {
        out.copy_from_slice(&state.m);
    }

    fn scalar(&self, state: &DmbState) -> f64 {
        state.n as f64
    }

    fn view(state: &DmbState) -> StateView<'_> {
        StateView::Dmb(state)
    }
}

/// One full DMB sweep from `state`.
pub fn dmb_step<R: Rng + ?Sized>(
    state: &DmbState,
    data: &TagDataset,
    hyper: &Hyperparams,
    rng: &mut R,
) -> DmbState {
    let mut next = state.clone();
    DmbSampler::new(data, hyper).step(&mut next, rng);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::chain_rng;

    #[test]
    fn fully_tagged_data_reduces_to_conjugate_model() {
        let data = TagDataset::from_counts(&[4, 1, 6], &[1.0; 3]).unwrap();
        let h = Hyperparams::new(vec![1.0; 3], 100.0, 0.005, 10.0, 1.0).unwrap();
        let mut s = DmbSampler::new(&data, &h);
        let mut state = s.initial_state();
        let mut rng = chain_rng(1, 0);
        for _ in 0..100 {
            s.step(&mut state, &mut rng);
            assert_eq!(state.n, 11);
            assert_eq!(state.g, vec![4, 1, 6]);
        }
    }

    #[test]
    fn untagged_units_go_where_they_can() {
        // category 1 always tags, so every untagged unit lands in category 2
        let data = TagDataset::from_counts(&[3, 1], &[1.0, 0.7]).unwrap();
        let h = Hyperparams::new(vec![1.0; 2], 50.0, 0.005, 10.0, 1.0).unwrap();
        let mut rng = chain_rng(2, 0);
        let mut state = DmbSampler::new(&data, &h).initial_state();
        for _ in 0..200 {
            state = dmb_step(&state, &data, &h, &mut rng);
            assert_eq!(state.g[0], 3);
            assert_eq!(state.g[1], state.n - 3);
            assert!(state.n >= 4);
        }
    }

    #[test]
    fn step_preserves_invariants() {
        let data = TagDataset::from_counts(&[3, 0, 1, 7], &[0.9, 0.2, 0.5, 1.0]).unwrap();
        let h = Hyperparams::new(vec![0.25; 4], 5.0, 0.1, 10.0, 1.0).unwrap();
        let mut rng = chain_rng(3, 0);
        let mut state = DmbSampler::new(&data, &h).initial_state();
        for _ in 0..500 {
            state = dmb_step(&state, &data, &h, &mut rng);
            assert!(CompositionVector::new(state.m.values().to_vec()).is_ok());
            assert_eq!(state.g.iter().sum::<u64>(), state.n);
            assert!(state.n >= data.total_tags());
            for (g, r) in state.g.iter().zip(data.records()) {
                assert!(*g >= r.tag_count);
            }
        }
    }
}
