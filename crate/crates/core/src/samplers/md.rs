//! Missing-data scheme: an extra category collects untagged copies, whose
//! count `r` carries a Poisson prior. In the coordinates `v_i = m_i phi_i`
//! (with leftover `v_0`) the conditional of `v` is Dirichlet.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{initial_composition, GibbsScheme, StateView};
use crate::model::{Hyperparams, TagDataset};
use crate::random::{dirichlet_into, poisson};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdState {
    /// `v[0]` is the untagged leftover; `v[i]` for `i >= 1` is the tagged mass
    /// of category `i - 1`.
    pub v: Vec<f64>,
    pub r: u64,
}

impl MdState {
    pub fn leftover(&self) -> f64 {
        self.v[0]
    }

    pub fn tagged(&self) -> &[f64] {
        &self.v[1..]
    }
}

pub struct MdSampler<'a> {
    hyper: &'a Hyperparams,
    shapes: Vec<f64>,
    phi: &'a [f64],
    init: MdState,
}

impl<'a> MdSampler<'a> {
    pub fn new(data: &'a TagDataset, hyper: &'a Hyperparams) -> Self {
        let m0 = initial_composition(data);
        let mut v = Vec::with_capacity(data.len() + 1);
        v.push(0.0);
        v.extend(m0.iter().zip(data.phi()).map(|(m, p)| m * p));
        let tagged: f64 = v[1..].iter().sum();
        v[0] = (1.0 - tagged).max(0.0);
        let r = (hyper.mu * v[0]).round() as u64;
        Self {
            hyper,
            shapes: hyper
                .alpha
                .iter()
                .zip(data.counts())
                .map(|(a, t)| a + t)
                .collect(),
            phi: data.phi(),
            init: MdState { v, r },
        }
    }
}

impl GibbsScheme for MdSampler<'_> {
    type State = MdState;

    fn initial_state(&self) -> MdState {
        self.init.clone()
    }

    fn step<R: Rng + ?Sized>(&mut self, state: &mut MdState, rng: &mut R) {
        state.r = poisson(rng, state.leftover() * self.hyper.mu);
        let leftover_shape = state.r as f64 + 1.0;
        let shapes = &self.shapes;
        dirichlet_into(rng, &mut state.v, |i| {
            if i == 0 {
                leftover_shape
            } else {
                shapes[i - 1]
            }
        });
    }

    /// `m_i` proportional to `v_i / phi_i`.
    fn composition_into(&self, state: &MdState, out: &mut [f64]) {
        let mut total = 0.0;
        for ((o, v), p) in out.iter_mut().zip(state.tagged()).zip(self.phi) {
            *o = v / p;
            total += *o;
        }
        if total > 0.0 {
            out.iter_mut().for_each(|o| *o /= total);
        } else {
            let k = out.len() as f64;
            out.iter_mut().for_each(|o| *o = 1.0 / k);
        }
    }

    fn scalar(&self, state: &MdState) -> f64 {
        state.r as f64
    }

    fn view(state: &MdState) -> StateView<'_> {
        StateView::Md(state)
    }
}

/// One full MD sweep from `state`.
pub fn md_step<R: Rng + ?Sized>(
    state: &MdState,
    data: &TagDataset,
    hyper: &Hyperparams,
    rng: &mut R,
) -> MdState {
    let mut next = state.clone();
    MdSampler::new(data, hyper).step(&mut next, rng);
    next
}
