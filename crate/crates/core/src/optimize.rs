//! Deterministic point estimators: Lindley-Smith conditional maximization for
//! the DPB model, the missing-data mode iteration, and the reweighted
//! missing-data posterior mean.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    log_posterior_kernel, natural_population_estimate, CompositionVector, Hyperparams, TagDataset,
};
use crate::samplers::initial_composition;

/// Convergence threshold on the L1 change of `m` between iterations.
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Longest cycle of the integer `g` updates that is detected.
const MAX_CYCLE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Latent {
    Dpb { g: Vec<u64>, n: f64 },
    Md { r: u64, leftover: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    /// The integer updates entered a cycle; the reported state is the cycle
    /// member with the largest posterior kernel.
    Cycle {
        period: usize,
    },
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerResult {
    /// Estimate normalized onto the simplex.
    pub m: CompositionVector,
    /// The fixed point before normalization (`(g_i + alpha_i) / N` for DPB,
    /// `v_i` for MD).
    pub raw: Vec<f64>,
    pub latent: Latent,
    pub iterations_used: usize,
    pub final_residual: f64,
    pub termination: Termination,
}

#[derive(Clone)]
struct DpbPoint {
    raw_m: Vec<f64>,
    g: Vec<u64>,
    n: f64,
}

/// Lindley-Smith maximization of the DPB full conditionals, iterating
///
/// ```text
/// m_i <- (g_i + alpha_i) / N
/// g_i <- t_i + floor(N m_i (1 - phi_i))
/// N   <- (sum_i g_i + gamma1) / (1 + gamma2)
/// ```
///
/// until the L1 change in `m` is at most `tol`. The start is `N` at the
/// natural population estimate, `m` at the corrected MLE and `g` at its
/// conditional maximum given those.
pub fn dpb_lindley_smith(
    data: &TagDataset,
    hyper: &Hyperparams,
    tol: f64,
    max_iter: usize,
) -> Result<OptimizerResult> {
    hyper.validate()?;
    check_alpha(data, &hyper.alpha)?;
    let k = data.len();
    let tags: Vec<u64> = data.records().iter().map(|r| r.tag_count).collect();
    let untagged: Vec<f64> = data.phi().iter().map(|p| 1.0 - p).collect();
    let alpha = &hyper.alpha;

    let mut n = natural_population_estimate(data).max(1.0);
    let mut m = initial_composition(data).into_inner();
    let mut g: Vec<u64> = (0..k)
        .map(|i| tags[i] + (n * m[i] * untagged[i]).floor() as u64)
        .collect();
    let mut history: VecDeque<DpbPoint> = VecDeque::with_capacity(MAX_CYCLE + 1);
    let mut m_new = vec![0.0; k];
    let mut residual = f64::INFINITY;

    for iter in 1..=max_iter {
        for i in 0..k {
            m_new[i] = (g[i] as f64 + alpha[i]) / n;
        }
        let mut total = 0u64;
        for i in 0..k {
            g[i] = tags[i] + (n * m_new[i] * untagged[i]).floor() as u64;
            total += g[i];
        }
        n = (total as f64 + hyper.gamma1) / (1.0 + hyper.gamma2);
        residual = m_new.iter().zip(&m).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut m, &mut m_new);

        if residual <= tol {
            return Ok(dpb_result(&m, g, n, iter, residual, Termination::Converged));
        }

        // g determines N and the next m, so a repeated g repeats the whole orbit
        if let Some(period) = history
            .iter()
            .rev()
            .position(|p| p.g == g)
            .map(|lag| lag + 1)
            .filter(|&p| p >= 2)
        {
            let members = history.iter().rev().take(period);
            let best = members
                .max_by(|a, b| {
                    let ka = kernel_at(data, alpha, &a.raw_m);
                    let kb = kernel_at(data, alpha, &b.raw_m);
                    ka.total_cmp(&kb)
                })
                .expect("cycle has members")
                .clone();
            return Ok(dpb_result(
                &best.raw_m,
                best.g,
                best.n,
                iter,
                residual,
                Termination::Cycle { period },
            ));
        }
        if history.len() == MAX_CYCLE {
            history.pop_front();
        }
        history.push_back(DpbPoint {
            raw_m: m.clone(),
            g: g.clone(),
            n,
        });
    }

    Err(Error::NotConverged {
        last: Box::new(dpb_result(
            &m,
            g,
            n,
            max_iter,
            residual,
            Termination::MaxIterations,
        )),
    })
}

fn kernel_at(data: &TagDataset, alpha: &[f64], raw_m: &[f64]) -> f64 {
    CompositionVector::from_weights(raw_m.to_vec())
        .and_then(|m| log_posterior_kernel(data, &m, alpha))
        .unwrap_or(f64::NEG_INFINITY)
}

fn dpb_result(
    raw_m: &[f64],
    g: Vec<u64>,
    n: f64,
    iterations_used: usize,
    final_residual: f64,
    termination: Termination,
) -> OptimizerResult {
    OptimizerResult {
        m: CompositionVector::from_weights(raw_m.to_vec()).expect("alpha > 0 keeps m positive"),
        raw: raw_m.to_vec(),
        latent: Latent::Dpb { g, n },
        iterations_used,
        final_residual,
        termination,
    }
}

fn check_alpha(data: &TagDataset, alpha: &[f64]) -> Result<()> {
    if alpha.len() != data.len() {
        return Err(Error::LengthMismatch {
            what: "alpha",
            got: alpha.len(),
            expected: data.len(),
        });
    }
    if let Some(&a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::Hyperparameter {
            name: "alpha",
            value: a,
        });
    }
    Ok(())
}

/// Mode iteration for the missing-data model: alternates the Poisson mode
/// `r <- floor(v_0 mu)` with the Dirichlet mode
/// `v_i <- max(t_i + alpha_i - 1, 0) / (sum_j (alpha_j + t_j) + r - k)`,
/// with `v_0 = 1 - sum_i v_i`, and reports `m_i` proportional to
/// `v_i / phi_i`.
pub fn md_mode_iteration(
    data: &TagDataset,
    alpha: &[f64],
    mu: f64,
    tol: f64,
    max_iter: usize,
) -> Result<OptimizerResult> {
    check_alpha(data, alpha)?;
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::Hyperparameter {
            name: "mu",
            value: mu,
        });
    }
    let k = data.len();
    let phi = data.phi();
    let numerators: Vec<f64> = data
        .counts()
        .iter()
        .zip(alpha)
        .map(|(t, a)| (t + a - 1.0).max(0.0))
        .collect();
    let mass: f64 = data.counts().iter().zip(alpha).map(|(t, a)| t + a).sum();

    let m0 = initial_composition(data);
    let mut v: Vec<f64> = m0.iter().zip(phi).map(|(m, p)| m * p).collect();
    let mut leftover = (1.0 - v.iter().sum::<f64>()).max(0.0);
    let mut residual = f64::INFINITY;
    let mut r = 0;

    for iter in 1..=max_iter {
        r = (leftover * mu).floor() as u64;
        let denominator = mass + r as f64 - k as f64;
        if denominator <= 0.0 {
            return Err(Error::NonPositiveDenominator { denominator, r });
        }
        residual = 0.0;
        let mut tagged = 0.0;
        for (vi, num) in v.iter_mut().zip(&numerators) {
            let next = num / denominator;
            residual += (next - *vi).abs();
            tagged += next;
            *vi = next;
        }
        let next_leftover = (1.0 - tagged).max(0.0);
        residual += (next_leftover - leftover).abs();
        leftover = next_leftover;
        if residual <= tol {
            return md_result(&v, phi, r, leftover, iter, residual, Termination::Converged);
        }
    }
    let last = md_result(
        &v,
        phi,
        r,
        leftover,
        max_iter,
        residual,
        Termination::MaxIterations,
    )?;
    Err(Error::NotConverged {
        last: Box::new(last),
    })
}

fn md_result(
    v: &[f64],
    phi: &[f64],
    r: u64,
    leftover: f64,
    iterations_used: usize,
    final_residual: f64,
    termination: Termination,
) -> Result<OptimizerResult> {
    let m = CompositionVector::from_weights(v.iter().zip(phi).map(|(v, p)| v / p).collect())?;
    Ok(OptimizerResult {
        m,
        raw: v.to_vec(),
        latent: Latent::Md { r, leftover },
        iterations_used,
        final_residual,
        termination,
    })
}

/// Reweighted missing-data posterior mean: with
/// `w_i = (alpha_i + t_i) / sum_j (alpha_j + t_j)`, returns `m_i`
/// proportional to `w_i / phi_i`.
pub fn md_exact_mean(data: &TagDataset, alpha: &[f64]) -> Result<CompositionVector> {
    if alpha.len() != data.len() {
        return Err(Error::LengthMismatch {
            what: "alpha",
            got: alpha.len(),
            expected: data.len(),
        });
    }
    let mass: f64 = data.counts().iter().zip(alpha).map(|(t, a)| t + a).sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroWeightedSum);
    }
    CompositionVector::from_weights(
        data.counts()
            .iter()
            .zip(alpha)
            .zip(data.phi())
            .map(|((t, a), p)| (t + a) / mass / p)
            .collect(),
    )
}

/// Outcome of the `(gamma1, gamma2)` grid search.
#[derive(Debug, Clone)]
pub struct GammaSelection {
    pub gamma1: f64,
    pub gamma2: f64,
    /// L1 distance between the unnormalized fixed point and the target mode.
    pub distance: f64,
    pub result: OptimizerResult,
}

/// Picks `(gamma1, gamma2)` from a grid so that the unnormalized Lindley-Smith
/// fixed point `(g_i + alpha_i) / N` lies closest (L1) to `target`, typically
/// the analytical posterior mode.
///
/// `N` cancels from the `g` updates, so the hyperparameters only rescale the
/// raw fixed point; the normalized estimate is the same across the grid.
pub fn select_gamma_by_mode_distance(
    data: &TagDataset,
    alpha: &[f64],
    gamma1_grid: &[f64],
    gamma2_grid: &[f64],
    target: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<GammaSelection> {
    let mut best: Option<GammaSelection> = None;
    for &g1 in gamma1_grid {
        for &g2 in gamma2_grid {
            let hyper = Hyperparams::new(alpha.to_vec(), g1, g2, 1.0, 1.0)?;
            let result = dpb_lindley_smith(data, &hyper, tol, max_iter)?;
            let distance: f64 = result
                .raw
                .iter()
                .zip(target)
                .map(|(a, b)| (a - b).abs())
                .sum();
            if best.as_ref().is_none_or(|b| distance < b.distance) {
                best = Some(GammaSelection {
                    gamma1: g1,
                    gamma2: g2,
                    distance,
                    result,
                });
            }
        }
    }
    best.ok_or_else(|| Error::Config("empty hyperparameter grid".into()))
}
