//! Forward simulation of the biased tagging process, a synthetic dataset at
//! the scale of a yeast SAGE library, and quadrature oracles for two- and
//! three-category posteriors.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    compute_phi, log_posterior_kernel, natural_population_estimate, CompositionVector, GeneRecord,
    SiteSpec, TagDataset,
};
use crate::random::{binomial, chain_rng, multinomial_into, poisson};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Fixed(u64),
    Poisson(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub m_true: CompositionVector,
    pub phi: Vec<f64>,
    pub population: Population,
    pub seed: u64,
    /// Category ids; `c1, c2, ...` when absent.
    pub ids: Option<Vec<String>>,
}

impl SimSpec {
    pub fn new(
        m_true: CompositionVector,
        phi: Vec<f64>,
        population: Population,
        seed: u64,
    ) -> Self {
        Self {
            m_true,
            phi,
            population,
            seed,
            ids: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.m_true.len();
        if self.phi.len() != k {
            return Err(Error::LengthMismatch {
                what: "phi",
                got: self.phi.len(),
                expected: k,
            });
        }
        if let Some(ids) = &self.ids {
            if ids.len() != k {
                return Err(Error::LengthMismatch {
                    what: "ids",
                    got: ids.len(),
                    expected: k,
                });
            }
        }
        if let Population::Poisson(rate) = self.population {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(Error::Hyperparameter {
                    name: "lambda",
                    value: rate,
                });
            }
        }
        Ok(())
    }
}

/// Resolves per-category site layouts to tag formation probabilities.
pub fn phi_from_sites(sites: &[SiteSpec]) -> Result<Vec<f64>> {
    sites.iter().map(SiteSpec::phi).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub data: TagDataset,
    pub g_true: Vec<u64>,
    pub n_true: u64,
}

/// Draws `N` (fixed or Poisson), `g ~ Multinomial(N, m_true)` and
/// `t_i ~ Binomial(g_i, phi_i)`.
pub fn simulate_dataset(spec: &SimSpec) -> Result<Simulation> {
    spec.validate()?;
    let mut rng = chain_rng(spec.seed, 0);
    simulate_with(spec, &mut rng)
}

fn simulate_with<R: Rng + ?Sized>(spec: &SimSpec, rng: &mut R) -> Result<Simulation> {
    let k = spec.m_true.len();
    let n_true = match spec.population {
        Population::Fixed(n) => n,
        Population::Poisson(rate) => poisson(rng, rate),
    };
    let mut g_true = vec![0; k];
    multinomial_into(rng, n_true, &spec.m_true, &mut g_true);
    let records = g_true
        .iter()
        .zip(&spec.phi)
        .enumerate()
        .map(|(i, (&g, &p))| {
            let id = match &spec.ids {
                Some(ids) => ids[i].clone(),
                None => format!("c{}", i + 1),
            };
            GeneRecord::new(id, binomial(rng, g, p), p)
        })
        .collect();
    Ok(Simulation {
        data: TagDataset::new(records)?,
        g_true,
        n_true,
    })
}

/// Summary statistics compared against the library targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureStats {
    pub categories: usize,
    pub total_tags: u64,
    pub zero_counts: usize,
    pub max_count: u64,
    pub natural_estimate: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

pub fn fixture_stats(data: &TagDataset) -> FixtureStats {
    let records = data.records();
    FixtureStats {
        categories: records.len(),
        total_tags: data.total_tags(),
        zero_counts: records.iter().filter(|r| r.tag_count == 0).count(),
        max_count: records.iter().map(|r| r.tag_count).max().unwrap_or(0),
        natural_estimate: natural_population_estimate(data),
        phi_min: data.phi().iter().copied().fold(f64::INFINITY, f64::min),
        phi_max: data.phi().iter().copied().fold(0.0, f64::max),
    }
}

pub const FIXTURE_CATEGORIES: usize = 6096;
pub const FIXTURE_TOTAL_TAGS: u64 = 12_799;
pub const FIXTURE_ZERO_COUNTS: usize = 3560;
pub const FIXTURE_MAX_COUNT: u64 = 392;
pub const FIXTURE_NATURAL_RANGE: (f64, f64) = (14_000.0, 19_000.0);
const FIXTURE_TOLERANCE: f64 = 0.05;
const FIXTURE_ATTEMPTS: u64 = 64;
const FIXTURE_CLEAVAGE: f64 = 0.7;
const FIXTURE_MEAN_EXTRA_SITES: f64 = 3.0;
const FIXTURE_AMBIGUITY: f64 = 0.08;
const FIXTURE_PHI_FLOOR: f64 = 0.003;

impl FixtureStats {
    pub fn meets_targets(&self) -> bool {
        let within = |got: f64, target: f64| (got - target).abs() <= FIXTURE_TOLERANCE * target;
        self.categories == FIXTURE_CATEGORIES
            && within(self.total_tags as f64, FIXTURE_TOTAL_TAGS as f64)
            && within(self.zero_counts as f64, FIXTURE_ZERO_COUNTS as f64)
            && within(self.max_count as f64, FIXTURE_MAX_COUNT as f64)
            && (FIXTURE_NATURAL_RANGE.0..=FIXTURE_NATURAL_RANGE.1).contains(&self.natural_estimate)
    }
}

/// Synthetic library with 6096 categories whose realized counts match the
/// targets above (total tags, zero counts and largest count within 5%,
/// natural population estimate within [`FIXTURE_NATURAL_RANGE`]).
///
/// Tag formation probabilities follow the site mechanism with cleavage
/// probability 0.7, `1 + Poisson(3)` sites and each site ambiguous with
/// probability 0.08, floored at 0.003. Expected tag frequencies follow a
/// shifted power law `(r + b)^(-a)` whose parameters put the expected largest
/// count and expected number of zeros on target; ranks are shuffled across
/// categories and `m_true` is proportional to frequency over `phi`.
pub fn make_paper_scale_fixture(seed: u64) -> Result<TagDataset> {
    let frequencies = power_law_profile(
        FIXTURE_CATEGORIES,
        FIXTURE_TOTAL_TAGS as f64,
        FIXTURE_MAX_COUNT as f64,
        FIXTURE_ZERO_COUNTS as f64,
    );
    let mut last = None;
    for attempt in 0..FIXTURE_ATTEMPTS {
        let mut rng = chain_rng(seed, attempt);
        let phi: Vec<f64> = (0..FIXTURE_CATEGORIES)
            .map(|_| fixture_phi(&mut rng))
            .collect::<Result<_>>()?;
        let mut theta = frequencies.clone();
        theta.shuffle(&mut rng);
        let m_true =
            CompositionVector::from_weights(theta.iter().zip(&phi).map(|(t, p)| t / p).collect())?;
        let s: f64 = m_true.iter().zip(&phi).map(|(m, p)| m * p).sum();
        let spec = SimSpec {
            m_true,
            phi,
            population: Population::Fixed((FIXTURE_TOTAL_TAGS as f64 / s).round() as u64),
            seed,
            ids: Some(
                (1..=FIXTURE_CATEGORIES)
                    .map(|i| format!("g{i:04}"))
                    .collect(),
            ),
        };
        let sim = simulate_with(&spec, &mut rng)?;
        let stats = fixture_stats(&sim.data);
        if stats.meets_targets() {
            log::debug!("fixture accepted on attempt {attempt}: {stats:?}");
            return Ok(sim.data);
        }
        last = Some(stats);
    }
    Err(Error::FixtureTargets {
        attempts: FIXTURE_ATTEMPTS as usize,
        achieved: format!("{:?}", last.expect("at least one attempt")),
    })
}

fn fixture_phi<R: Rng + ?Sized>(rng: &mut R) -> Result<f64> {
    loop {
        let num_sites = 1 + poisson(rng, FIXTURE_MEAN_EXTRA_SITES) as usize;
        let ambiguous: BTreeSet<usize> = (1..=num_sites)
            .filter(|_| rng.random::<f64>() < FIXTURE_AMBIGUITY)
            .collect();
        let phi = compute_phi(FIXTURE_CLEAVAGE, num_sites, &ambiguous)?;
        if phi > 0.0 {
            return Ok(phi.max(FIXTURE_PHI_FLOOR));
        }
    }
}

/// Frequencies `theta_r` proportional to `(r + b)^(-a)`, `r = 1..k`, with
/// `total * theta_1 = top` and `sum_r exp(-total * theta_r) = zeros`.
fn power_law_profile(k: usize, total: f64, top: f64, zeros: f64) -> Vec<f64> {
    let profile = |a: f64, b: f64| -> Vec<f64> {
        let w: Vec<f64> = (1..=k).map(|r| (r as f64 + b).powf(-a)).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    };
    // the expected top count falls as b grows
    let solve_b = |a: f64| -> f64 {
        let (mut lo, mut hi) = (0.0, 1e4);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if total * profile(a, mid)[0] > top {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    // expected zeros rise with a once b tracks the top count
    let expected_zeros = |a: f64| -> f64 {
        profile(a, solve_b(a))
            .iter()
            .map(|t| (-total * t).exp())
            .sum()
    };
    let (mut lo, mut hi) = (0.8, 3.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if expected_zeros(mid) < zeros {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    profile(a, solve_b(a))
}

/// Posterior quantities obtained by quadrature of the posterior kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub mean: CompositionVector,
    pub sd: Vec<f64>,
    pub lower95: Vec<f64>,
    pub upper95: Vec<f64>,
    /// Grid node with the largest kernel value.
    pub argmax: Vec<f64>,
}

/// Quadrature of `exp(log_posterior_kernel)` over the simplex for two or
/// three categories.
///
/// With two categories the grid is `grid_points` equal cells in `m_1` (at
/// least 1000) integrated by the trapezoid rule; end cells where the kernel
/// diverges are integrated as power laws. With three categories each axis is
/// cut into `grid_points` parts (at least 100) and every triangle of the
/// barycentric grid contributes at its centroid.
pub fn grid_oracle(data: &TagDataset, alpha: &[f64], grid_points: usize) -> Result<OracleResult> {
    if alpha.len() != data.len() {
        return Err(Error::LengthMismatch {
            what: "alpha",
            got: alpha.len(),
            expected: data.len(),
        });
    }
    match data.len() {
        2 => {
            if grid_points < 1000 {
                return Err(Error::OracleResolution {
                    min: 1000,
                    got: grid_points,
                });
            }
            Ok(oracle_line(data, alpha, grid_points))
        }
        3 => {
            if grid_points < 100 {
                return Err(Error::OracleResolution {
                    min: 100,
                    got: grid_points,
                });
            }
            Ok(oracle_triangle(data, alpha, grid_points))
        }
        k => Err(Error::OracleDimension(k)),
    }
}

fn kernel(data: &TagDataset, alpha: &[f64], m: &[f64]) -> f64 {
    log_posterior_kernel(data, m, alpha).unwrap_or(f64::NEG_INFINITY)
}

/// Integrals of `c x^e`, `c x^(e+1)` and `c x^(e+2)` over `[0, h]`, given the
/// value `f_h = c h^e` at the inner end.
fn power_cell(f_h: f64, e: f64, h: f64) -> [f64; 3] {
    [
        f_h * h / (e + 1.0),
        f_h * h * h / (e + 2.0),
        f_h * h * h * h / (e + 3.0),
    ]
}

fn oracle_line(data: &TagDataset, alpha: &[f64], n: usize) -> OracleResult {
    let h = 1.0 / n as f64;
    let nodes: Vec<f64> = (0..=n).map(|j| j as f64 * h).collect();
    let logf: Vec<f64> = nodes
        .iter()
        .map(|&x| kernel(data, alpha, &[x, 1.0 - x]))
        .collect();
    let exponents = [
        alpha[0] + data.counts()[0] - 1.0,
        alpha[1] + data.counts()[1] - 1.0,
    ];
    let peak = logf[1..n].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let f: Vec<f64> = logf.iter().map(|l| (l - peak).exp()).collect();

    // per-cell integrals of f, x f and x^2 f
    let mut cells = vec![[0.0; 3]; n];
    for (j, cell) in cells.iter_mut().enumerate() {
        let (a, b) = (nodes[j], nodes[j + 1]);
        if j == 0 && exponents[0] < 0.0 {
            *cell = power_cell(f[1], exponents[0], h);
        } else if j == n - 1 && exponents[1] < 0.0 {
            // y = 1 - x near zero: x = 1 - y
            let [i0, i1, i2] = power_cell(f[n - 1], exponents[1], h);
            *cell = [i0, i0 - i1, i0 - 2.0 * i1 + i2];
        } else {
            let (fa, fb) = (f[j], f[j + 1]);
            *cell = [
                0.5 * h * (fa + fb),
                0.5 * h * (a * fa + b * fb),
                0.5 * h * (a * a * fa + b * b * fb),
            ];
        }
    }
    let z: f64 = cells.iter().map(|c| c[0]).sum();
    let mean = cells.iter().map(|c| c[1]).sum::<f64>() / z;
    let second = cells.iter().map(|c| c[2]).sum::<f64>() / z;
    let sd = (second - mean * mean).max(0.0).sqrt();

    let quantile = |p: f64| -> f64 {
        let target = p * z;
        let mut acc = 0.0;
        for (j, c) in cells.iter().enumerate() {
            if acc + c[0] >= target {
                let frac = if c[0] > 0.0 {
                    (target - acc) / c[0]
                } else {
                    0.0
                };
                return nodes[j] + frac * h;
            }
            acc += c[0];
        }
        1.0
    };
    let (q_lo, q_hi) = (quantile(0.025), quantile(0.975));
    let best = (0..=n)
        .max_by(|&a, &b| logf[a].total_cmp(&logf[b]))
        .expect("non-empty grid");
    let x_best = nodes[best];

    OracleResult {
        mean: CompositionVector::from_normalized(vec![mean, 1.0 - mean]),
        sd: vec![sd, sd],
        lower95: vec![q_lo, 1.0 - q_hi],
        upper95: vec![q_hi, 1.0 - q_lo],
        argmax: vec![x_best, 1.0 - x_best],
    }
}

fn oracle_triangle(data: &TagDataset, alpha: &[f64], n: usize) -> OracleResult {
    let nf = n as f64;
    // centroids of the upward (i + 1/3, j + 1/3) and downward (i + 2/3, j + 2/3)
    // triangles, all of equal area
    let mut points: Vec<[f64; 3]> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n - i {
            let (a, b) = ((i as f64 + 1.0 / 3.0) / nf, (j as f64 + 1.0 / 3.0) / nf);
            points.push([a, b, 1.0 - a - b]);
            if i + j + 1 < n {
                let (a, b) = ((i as f64 + 2.0 / 3.0) / nf, (j as f64 + 2.0 / 3.0) / nf);
                points.push([a, b, 1.0 - a - b]);
            }
        }
    }
    let logf: Vec<f64> = points
        .iter()
        .map(|p| kernel(data, alpha, &[p[0], p[1], p[2].max(0.0)]))
        .collect();
    let peak = logf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logf.iter().map(|l| (l - peak).exp()).collect();
    let z: f64 = w.iter().sum();

    let mut mean = [0.0; 3];
    let mut second = [0.0; 3];
    for (p, wi) in points.iter().zip(&w) {
        for c in 0..3 {
            mean[c] += wi * p[c] / z;
            second[c] += wi * p[c] * p[c] / z;
        }
    }
    let mut lower95 = vec![0.0; 3];
    let mut upper95 = vec![0.0; 3];
    for c in 0..3 {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a][c].total_cmp(&points[b][c]));
        let weighted_quantile = |p: f64| -> f64 {
            let target = p * z;
            let mut acc = 0.0;
            for &idx in &order {
                acc += w[idx];
                if acc >= target {
                    return points[idx][c];
                }
            }
            points[*order.last().expect("non-empty grid")][c]
        };
        lower95[c] = weighted_quantile(0.025);
        upper95[c] = weighted_quantile(0.975);
    }
    let best = (0..points.len())
        .max_by(|&a, &b| logf[a].total_cmp(&logf[b]))
        .expect("non-empty grid");
    let total: f64 = mean.iter().sum();

    OracleResult {
        mean: CompositionVector::from_normalized(mean.iter().map(|m| m / total).collect()),
        sd: (0..3)
            .map(|c| (second[c] - mean[c] * mean[c]).max(0.0).sqrt())
            .collect(),
        lower95,
        upper95,
        argmax: points[best].to_vec(),
    }
}
