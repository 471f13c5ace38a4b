//! Data model and closed-form quantities of the biased tagging process.
//!
//! A category `i` with latent proportion `m_i` is observed only through tags,
//! and each copy forms a tag with known probability `phi_i`. Observed tag
//! frequencies are therefore `theta_i = m_i phi_i / sum_j m_j phi_j`, and the
//! estimators here invert that map.

use std::collections::{BTreeSet, HashSet};
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Tolerance on `|sum - 1|` accepted for a composition.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Default gamma shape for the DPB population-size prior.
pub const DEFAULT_GAMMA1: f64 = 100.0;
/// Default gamma rate for the DPB population-size prior (scale 200).
pub const DEFAULT_GAMMA2: f64 = 0.005;

/// Restriction-site layout of one category, from which `phi` is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSpec {
    /// Cleavage probability of a single site.
    pub p: f64,
    /// Number of cleavable sites; site 1 is the 3'-most.
    pub num_sites: usize,
    /// 1-based indices of sites whose tags cannot be attributed uniquely.
    pub ambiguous: BTreeSet<usize>,
}

impl SiteSpec {
    pub fn phi(&self) -> Result<f64> {
        compute_phi(self.p, self.num_sites, &self.ambiguous)
    }
}

/// One observed category: its identifier, informative tag count and tag
/// formation probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneRecord {
    pub id: String,
    pub tag_count: u64,
    pub phi: f64,
}

impl GeneRecord {
    pub fn new(id: impl Into<String>, tag_count: u64, phi: f64) -> Self {
        Self {
            id: id.into(),
            tag_count,
            phi,
        }
    }

    /// Resolves `phi` from a site layout.
    pub fn from_sites(id: impl Into<String>, tag_count: u64, sites: &SiteSpec) -> Result<Self> {
        Ok(Self::new(id, tag_count, sites.phi()?))
    }
}

/// Observed counts for every category together with their known tag
/// formation probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TagDataset {
    records: Vec<GeneRecord>,
    total_tags: u64,
    counts: Vec<f64>,
    phi: Vec<f64>,
}

impl TagDataset {
    /// Validates ids (unique) and tag formation probabilities (in `(0, 1]`).
    pub fn new(records: Vec<GeneRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !(r.phi > 0.0 && r.phi <= 1.0) {
                return Err(Error::InvalidPhi {
                    id: r.id.clone(),
                    phi: r.phi,
                });
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        let total_tags = records.iter().map(|r| r.tag_count).sum();
        let counts = records.iter().map(|r| r.tag_count as f64).collect();
        let phi = records.iter().map(|r| r.phi).collect();
        Ok(Self {
            records,
            total_tags,
            counts,
            phi,
        })
    }

    /// Builds a dataset with generated ids `c1, c2, ...`.
    pub fn from_counts(counts: &[u64], phi: &[f64]) -> Result<Self> {
        if counts.len() != phi.len() {
            return Err(Error::LengthMismatch {
                what: "phi",
                got: phi.len(),
                expected: counts.len(),
            });
        }
        let records = counts
            .iter()
            .zip(phi)
            .enumerate()
            .map(|(i, (&t, &p))| GeneRecord::new(format!("c{}", i + 1), t, p))
            .collect();
        Self::new(records)
    }

    pub fn records(&self) -> &[GeneRecord] {
        &self.records
    }

    /// Number of categories `k`.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `T_tot`, the total number of observed tags.
    pub fn total_tags(&self) -> u64 {
        self.total_tags
    }

    /// Tag counts as reals, in record order.
    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.id == id)
    }
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CompositionVector(Vec<f64>);

impl CompositionVector {
    /// Accepts values that are non-negative and sum to one within
    /// [`SIMPLEX_TOLERANCE`].
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_simplex(&values)?;
        Ok(Self(values))
    }

    /// Normalizes non-negative weights onto the simplex.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::NotComposition(format!("invalid weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroWeightedSum);
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self(weights))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    /// Wraps values the caller has just normalized.
    pub(crate) fn from_normalized(values: Vec<f64>) -> Self {
        debug_assert!(check_simplex(&values).is_ok());
        Self(values)
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| (a - b).abs()).sum()
    }
}

impl Deref for CompositionVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn check_simplex(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::NotComposition("empty vector".into()));
    }
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
    {
        return Err(Error::NotComposition(format!("entry {i} is {v}")));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::NotComposition(format!("entries sum to {total}")));
    }
    Ok(())
}

/// How the Dirichlet prior parameter is specified before the number of
/// categories is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSpec {
    /// Every `alpha_i = 1`.
    One,
    /// Every `alpha_i = 1/k`.
    OverK,
    /// Every `alpha_i` equal to the given value.
    Constant(f64),
    /// One value per category.
    Vector(Vec<f64>),
}

impl AlphaSpec {
    pub fn resolve(&self, k: usize) -> Result<Vec<f64>> {
        let alpha = match self {
            AlphaSpec::One => vec![1.0; k],
            AlphaSpec::OverK => vec![1.0 / k as f64; k],
            AlphaSpec::Constant(c) => vec![*c; k],
            AlphaSpec::Vector(v) => {
                if v.len() != k {
                    return Err(Error::LengthMismatch {
                        what: "alpha",
                        got: v.len(),
                        expected: k,
                    });
                }
                v.clone()
            }
        };
        if let Some(&a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::Hyperparameter {
                name: "alpha",
                value: a,
            });
        }
        Ok(alpha)
    }
}

/// Prior hyperparameters shared by the three samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha: Vec<f64>,
    /// Gamma shape of the population-size prior.
    pub gamma1: f64,
    /// Gamma rate of the population-size prior.
    pub gamma2: f64,
    /// Poisson mean of the population size in the multinomial model.
    pub lambda: f64,
    /// Poisson prior mean of the untagged count in the missing-data model.
    pub mu: f64,
}

impl Hyperparams {
    pub fn new(alpha: Vec<f64>, gamma1: f64, gamma2: f64, lambda: f64, mu: f64) -> Result<Self> {
        let h = Self {
            alpha,
            gamma1,
            gamma2,
            lambda,
            mu,
        };
        h.validate()?;
        Ok(h)
    }

    /// Defaults for a dataset: `gamma1 = 100`, `gamma2 = 0.005`, `lambda` the
    /// natural population estimate and `mu = T (1 - s) / s` with `s` the
    /// tagged fraction implied by the corrected MLE.
    pub fn defaults_for(data: &TagDataset, alpha: &AlphaSpec) -> Result<Self> {
        let alpha = alpha.resolve(data.len())?;
        let lambda = natural_population_estimate(data).max(1.0);
        Self::new(
            alpha,
            DEFAULT_GAMMA1,
            DEFAULT_GAMMA2,
            lambda,
            default_mu(data),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() {
            return Err(Error::NotComposition("alpha is empty".into()));
        }
        if let Some(&a) = self.alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::Hyperparameter {
                name: "alpha",
                value: a,
            });
        }
        for (name, value) in [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("lambda", self.lambda),
            ("mu", self.mu),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Hyperparameter { name, value });
            }
        }
        Ok(())
    }
}

/// `mu = T_tot (1 - s) / s` where `s = sum_i mhat_i phi_i` at the corrected
/// MLE. Floored at a tiny positive value when every category is always
/// tagged.
pub fn default_mu(data: &TagDataset) -> f64 {
    const FLOOR: f64 = 1e-12;
    match corrected_mle(data) {
        Ok(m) => {
            let s: f64 = m.iter().zip(data.phi()).map(|(m, p)| m * p).sum();
            (data.total_tags() as f64 * (1.0 - s) / s).max(FLOOR)
        }
        Err(_) => FLOOR,
    }
}

/// Probability that a copy yields an informative tag when the 3'-most
/// cleaved site determines the tag: the geometric site probabilities summed
/// over all non-ambiguous sites.
pub fn compute_phi(p: f64, num_sites: usize, ambiguous: &BTreeSet<usize>) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::CleavageProbability(p));
    }
    if let Some(&site) = ambiguous.iter().find(|&&s| s == 0 || s > num_sites) {
        return Err(Error::AmbiguousSite { site, num_sites });
    }
    if ambiguous.is_empty() {
        return Ok(1.0 - (1.0 - p).powi(num_sites as i32));
    }
    Ok((1..=num_sites)
        .filter(|j| !ambiguous.contains(j))
        .map(|j| (1.0 - p).powi(j as i32 - 1) * p)
        .sum())
}

/// Tag-pool frequencies `theta_i = m_i phi_i / sum_j m_j phi_j`.
pub fn tag_frequency(m: &[f64], phi: &[f64]) -> Result<CompositionVector> {
    if m.len() != phi.len() {
        return Err(Error::LengthMismatch {
            what: "phi",
            got: phi.len(),
            expected: m.len(),
        });
    }
    let weighted: Vec<f64> = m.iter().zip(phi).map(|(m, p)| m * p).collect();
    CompositionVector::from_weights(weighted)
}

/// `x log y` with `0 log 0 = 0`.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn weighted_sum(data: &TagDataset, m: &[f64]) -> Result<f64> {
    if m.len() != data.len() {
        return Err(Error::LengthMismatch {
            what: "composition",
            got: m.len(),
            expected: data.len(),
        });
    }
    let s: f64 = m.iter().zip(data.phi()).map(|(m, p)| m * p).sum();
    if s <= 0.0 {
        return Err(Error::ZeroWeightedSum);
    }
    Ok(s)
}

/// `log (T_tot! / prod_i t_i!)`.
pub fn log_multinomial_coefficient(data: &TagDataset) -> f64 {
    let total = data.total_tags() as f64;
    ln_factorial(total) - data.counts().iter().map(|&t| ln_factorial(t)).sum::<f64>()
}

fn ln_factorial(n: f64) -> f64 {
    if n <= 1.0 {
        0.0
    } else {
        ln_gamma(n + 1.0)
    }
}

/// Bias-corrected multinomial log-likelihood of the observed counts at `m`.
///
/// Returns `-inf` when a category with observed tags has `m_i = 0`.
pub fn log_likelihood(data: &TagDataset, m: &[f64]) -> Result<f64> {
    let s = weighted_sum(data, m)?;
    let total = data.total_tags() as f64;
    let body: f64 = data
        .counts()
        .iter()
        .zip(m)
        .zip(data.phi())
        .map(|((&t, &m), &p)| xlogy(t, m * p))
        .sum();
    Ok(log_multinomial_coefficient(data) + body - xlogy(total, s))
}

/// Log of the unnormalized posterior of `m` under a Dirichlet(`alpha`) prior:
/// `-T_tot log(sum_i m_i phi_i) + sum_i (alpha_i + t_i - 1) log(m_i phi_i)`.
pub fn log_posterior_kernel(data: &TagDataset, m: &[f64], alpha: &[f64]) -> Result<f64> {
    if alpha.len() != data.len() {
        return Err(Error::LengthMismatch {
            what: "alpha",
            got: alpha.len(),
            expected: data.len(),
        });
    }
    let s = weighted_sum(data, m)?;
    let total = data.total_tags() as f64;
    let body: f64 = data
        .counts()
        .iter()
        .zip(alpha)
        .zip(m.iter().zip(data.phi()))
        .map(|((&t, &a), (&m, &p))| xlogy(a + t - 1.0, m * p))
        .sum();
    Ok(body - xlogy(total, s))
}

/// Observed tag proportions `t_i / T_tot`.
pub fn naive_mle(data: &TagDataset) -> Result<CompositionVector> {
    if data.total_tags() == 0 {
        return Err(Error::EmptySample);
    }
    let total = data.total_tags() as f64;
    Ok(CompositionVector::from_normalized(
        data.counts().iter().map(|t| t / total).collect(),
    ))
}

/// Corrected MLE `mhat_i = (theta_i / phi_i) / sum_j (theta_j / phi_j)`.
pub fn corrected_mle(data: &TagDataset) -> Result<CompositionVector> {
    if data.total_tags() == 0 {
        return Err(Error::EmptySample);
    }
    let weights = data
        .counts()
        .iter()
        .zip(data.phi())
        .map(|(t, p)| t / p)
        .collect();
    CompositionVector::from_weights(weights)
}

/// `sum_i t_i / phi_i`, the number of copies implied by the observed tags.
pub fn natural_population_estimate(data: &TagDataset) -> f64 {
    data.counts()
        .iter()
        .zip(data.phi())
        .map(|(t, p)| t / p)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    fn example() -> TagDataset {
        TagDataset::from_counts(&[2, 1, 1], &[1.0, 0.5, 0.5]).unwrap()
    }

    #[test]
    fn phi_single_site() {
        assert_eq!(compute_phi(0.5, 1, &set(&[])).unwrap(), 0.5);
    }

    #[test]
    fn phi_no_sites_is_zero() {
        assert_eq!(compute_phi(0.1, 0, &set(&[])).unwrap(), 0.0);
    }

    #[test]
    fn phi_skips_ambiguous_sites() {
        // sites 1 and 3 contribute: 0.1 and 0.9^2 * 0.1
        let expected = 0.1 + 0.81 * 0.1;
        assert!((compute_phi(0.1, 3, &set(&[2])).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.181).abs() < 1e-15);
    }

    #[test]
    fn phi_closed_form_matches_site_sum() {
        let direct: f64 = (1..=7).map(|j| 0.3f64.powi(j - 1) * 0.7).sum();
        assert!((compute_phi(0.7, 7, &set(&[])).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn phi_rejects_bad_inputs() {
        assert!(matches!(
            compute_phi(0.0, 2, &set(&[])),
            Err(Error::CleavageProbability(_))
        ));
        assert!(matches!(
            compute_phi(1.0, 2, &set(&[])),
            Err(Error::CleavageProbability(_))
        ));
        assert!(matches!(
            compute_phi(0.5, 2, &set(&[3])),
            Err(Error::AmbiguousSite { site: 3, .. })
        ));
    }

    #[test]
    fn tag_frequency_examples() {
        let th = tag_frequency(&[0.5, 0.5], &[1.0, 1.0]).unwrap();
        assert_eq!(th.values(), &[0.5, 0.5]);
        let th = tag_frequency(&[0.5, 0.5], &[1.0, 0.5]).unwrap();
        assert!((th[0] - 0.5 / 0.75).abs() < 1e-15);
        assert!((th[1] - 0.25 / 0.75).abs() < 1e-15);
        let th = tag_frequency(&[1.0, 0.0], &[0.3, 0.9]).unwrap();
        assert_eq!(th.values(), &[1.0, 0.0]);
    }

    #[test]
    fn tag_frequency_errors() {
        assert!(matches!(
            tag_frequency(&[0.5, 0.5], &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            tag_frequency(&[1.0, 0.0], &[0.0, 0.5]),
            Err(Error::ZeroWeightedSum)
        ));
    }

    #[test]
    fn likelihood_direct_substitution() {
        let data = example();
        let third = 1.0 / 3.0;
        let got = log_likelihood(&data, &[third, third, third]).unwrap();
        let expected =
            12f64.ln() + 2.0 * third.ln() + 2.0 * (1.0f64 / 6.0).ln() - 4.0 * (2.0f64 / 3.0).ln();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn likelihood_uniform_phi_is_plain_multinomial() {
        let data = TagDataset::from_counts(&[4, 0, 3], &[0.4, 0.4, 0.4]).unwrap();
        let m = [0.5, 0.2, 0.3];
        let plain = log_multinomial_coefficient(&data) + 4.0 * 0.5f64.ln() + 3.0 * 0.3f64.ln();
        assert!((log_likelihood(&data, &m).unwrap() - plain).abs() < 1e-12);
    }

    #[test]
    fn likelihood_empty_sample_is_zero() {
        let data = TagDataset::from_counts(&[0, 0], &[0.2, 0.9]).unwrap();
        assert_eq!(log_likelihood(&data, &[0.3, 0.7]).unwrap(), 0.0);
    }

    #[test]
    fn likelihood_impossible_configuration_is_neg_infinity() {
        let data = example();
        assert_eq!(
            log_likelihood(&data, &[0.0, 0.5, 0.5]).unwrap(),
            f64::NEG_INFINITY
        );
        // zero count with zero mass is fine
        let data = TagDataset::from_counts(&[0, 3], &[0.5, 0.5]).unwrap();
        assert!(log_likelihood(&data, &[0.0, 1.0]).unwrap().is_finite());
    }

    #[test]
    fn kernel_two_point_difference() {
        let data = TagDataset::from_counts(&[3, 1], &[1.0, 0.5]).unwrap();
        let alpha = [1.0, 1.0];
        let at = |m1: f64| {
            let m2 = 1.0 - m1;
            -4.0 * (m1 + 0.5 * m2).ln() + 3.0 * m1.ln() + (0.5 * m2).ln()
        };
        let expected = at(0.5) - at(0.9);
        let got = log_posterior_kernel(&data, &[0.5, 0.5], &alpha).unwrap()
            - log_posterior_kernel(&data, &[0.9, 0.1], &alpha).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn corrected_mle_examples() {
        let m = corrected_mle(&example()).unwrap();
        for v in m.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let naive = naive_mle(&example()).unwrap();
        let sum_theta_over_phi: f64 = naive.iter().zip(example().phi()).map(|(t, p)| t / p).sum();
        assert!((sum_theta_over_phi - 1.5).abs() < 1e-15);
        let s: f64 = m.iter().zip(example().phi()).map(|(m, p)| m * p).sum();
        assert!((s - 2.0 / 3.0).abs() < 1e-15);

        let data = TagDataset::from_counts(&[0, 4], &[0.5, 1.0]).unwrap();
        assert_eq!(corrected_mle(&data).unwrap().values(), &[0.0, 1.0]);
    }

    #[test]
    fn naive_mle_examples() {
        assert_eq!(naive_mle(&example()).unwrap().values(), &[0.5, 0.25, 0.25]);
        let data = TagDataset::from_counts(&[0, 4], &[1.0, 1.0]).unwrap();
        assert_eq!(naive_mle(&data).unwrap().values(), &[0.0, 1.0]);
        let empty = TagDataset::from_counts(&[0, 0], &[1.0, 1.0]).unwrap();
        assert!(matches!(naive_mle(&empty), Err(Error::EmptySample)));
        assert!(matches!(corrected_mle(&empty), Err(Error::EmptySample)));
    }

    #[test]
    fn natural_population_examples() {
        assert!((natural_population_estimate(&example()) - 6.0).abs() < 1e-15);
        let data = TagDataset::from_counts(&[5, 7, 0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(natural_population_estimate(&data), 12.0);
    }

    #[test]
    fn dataset_validation() {
        let dup = vec![GeneRecord::new("a", 1, 0.5), GeneRecord::new("a", 2, 0.5)];
        assert!(matches!(TagDataset::new(dup), Err(Error::DuplicateId(_))));
        let zero = vec![GeneRecord::new("a", 1, 0.0)];
        assert!(matches!(
            TagDataset::new(zero),
            Err(Error::InvalidPhi { .. })
        ));
        let big = vec![GeneRecord::new("a", 1, 1.5)];
        assert!(matches!(
            TagDataset::new(big),
            Err(Error::InvalidPhi { .. })
        ));
        let sites = SiteSpec {
            p: 0.1,
            num_sites: 3,
            ambiguous: set(&[2]),
        };
        let r = GeneRecord::from_sites("g", 2, &sites).unwrap();
        assert!((r.phi - 0.181).abs() < 1e-15);
    }

    #[test]
    fn composition_validation() {
        assert!(CompositionVector::new(vec![0.5, 0.5]).is_ok());
        assert!(CompositionVector::new(vec![0.5, 0.6]).is_err());
        assert!(CompositionVector::new(vec![1.5, -0.5]).is_err());
        assert!(CompositionVector::from_weights(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn alpha_spec_resolution() {
        assert_eq!(AlphaSpec::OverK.resolve(4).unwrap(), vec![0.25; 4]);
        assert!(AlphaSpec::Constant(0.0).resolve(2).is_err());
        assert!(AlphaSpec::Vector(vec![1.0]).resolve(2).is_err());
    }

    fn instance() -> impl Strategy<Value = (Vec<u64>, Vec<f64>)> {
        (2usize..=100).prop_flat_map(|k| {
            (
                prop::collection::vec(0u64..500, k),
                prop::collection::vec(0.01f64..=1.0, k),
            )
        })
    }

    fn with_tags((mut t, phi): (Vec<u64>, Vec<f64>)) -> TagDataset {
        if t.iter().all(|&x| x == 0) {
            t[0] = 1;
        }
        TagDataset::from_counts(&t, &phi).unwrap()
    }

    proptest! {
        #[test]
        fn tag_frequency_on_simplex_and_scale_free(
            w in prop::collection::vec(0.0f64..1.0, 2..40),
            c in 0.01f64..100.0,
            seed_phi in prop::collection::vec(0.01f64..=1.0, 40),
        ) {
            prop_assume!(w.iter().sum::<f64>() > 1e-6);
            let m = CompositionVector::from_weights(w).unwrap();
            let phi = &seed_phi[..m.len()];
            let th = tag_frequency(&m, phi).unwrap();
            prop_assert!((th.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let scaled: Vec<f64> = phi.iter().map(|p| p * c).collect();
            let th2 = tag_frequency(&m, &scaled).unwrap();
            for (a, b) in th.iter().zip(th2.iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn corrected_mle_inverts_the_bias_map(inst in instance()) {
            let data = with_tags(inst);
            let m = corrected_mle(&data).unwrap();
            let theta = naive_mle(&data).unwrap();
            let lhs: f64 = theta.iter().zip(data.phi()).map(|(t, p)| t / p).sum();
            let s: f64 = m.iter().zip(data.phi()).map(|(m, p)| m * p).sum();
            prop_assert!((lhs - 1.0 / s).abs() <= 1e-10 * lhs.max(1.0));
            let back = tag_frequency(&m, data.phi()).unwrap();
            for (a, b) in back.iter().zip(theta.iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn flat_prior_kernel_tracks_likelihood(
            inst in instance(),
            w1 in prop::collection::vec(0.01f64..1.0, 100),
            w2 in prop::collection::vec(0.01f64..1.0, 100),
        ) {
            let data = with_tags(inst);
            let k = data.len();
            let alpha = vec![1.0; k];
            let diff = |w: &[f64]| {
                let m = CompositionVector::from_weights(w[..k].to_vec()).unwrap();
                log_posterior_kernel(&data, &m, &alpha).unwrap() - log_likelihood(&data, &m).unwrap()
            };
            let (d1, d2) = (diff(&w1), diff(&w2));
            prop_assert!((d1 - d2).abs() <= 1e-8 * d1.abs().max(1.0));
            prop_assert!((d1 + log_multinomial_coefficient(&data)).abs() <= 1e-8 * d1.abs().max(1.0));
        }
    }
}
