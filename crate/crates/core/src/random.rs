//! Seeded random source and the variates the samplers draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};

pub type ChainRng = ChaCha8Rng;

/// Random source for chain `chain` of a run seeded with `seed`.
pub fn chain_rng(seed: u64, chain: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

/// Gamma(shape, rate) variate.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma shape and rate must be positive")
        .sample(rng)
}

/// Log of a Gamma(shape, 1) variate; stays finite for tiny shapes where the
/// variate itself underflows.
fn ln_gamma_variate<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        gamma(rng, shape, 1.0).ln()
    } else {
        // G(a) = G(a + 1) * U^(1/a)
        let u: f64 = rng.random();
        gamma(rng, shape + 1.0, 1.0).ln() + u.ln() / shape
    }
}

/// Poisson variate; a non-positive rate yields 0.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("finite Poisson rate").sample(rng) as u64
}

pub fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p in (0, 1)").sample(rng)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Fills `out` with a Dirichlet draw with parameters `shape(i)`.
///
/// All shapes must be positive.
pub fn dirichlet_into<R, F>(rng: &mut R, out: &mut [f64], shape: F)
where
    R: Rng + ?Sized,
    F: Fn(usize) -> f64,
{
    let small = (0..out.len()).any(|i| shape(i) < 1.0);
    if !small {
        let mut total = 0.0;
        for (i, x) in out.iter_mut().enumerate() {
            *x = gamma(rng, shape(i), 1.0);
            total += *x;
        }
        out.iter_mut().for_each(|x| *x /= total);
        return;
    }
    let mut max = f64::NEG_INFINITY;
    for (i, x) in out.iter_mut().enumerate() {
        *x = ln_gamma_variate(rng, shape(i));
        max = max.max(*x);
    }
    let mut total = 0.0;
    for x in out.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    out.iter_mut().for_each(|x| *x /= total);
}

/// Fills `out` with a Multinomial(`n`, weights / sum(weights)) draw. Small
/// `n` is allocated unit by unit through the cumulative weights, larger `n`
/// by conditional binomials. Returns `false` and leaves `out` zeroed when the
/// weights sum to zero and `n > 0`.
pub fn multinomial_into<R: Rng + ?Sized>(
    rng: &mut R,
    n: u64,
    weights: &[f64],
    out: &mut [u64],
) -> bool {
    out.iter_mut().for_each(|x| *x = 0);
    if n == 0 {
        return true;
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return false;
    }
    let last = match weights.iter().rposition(|&w| w > 0.0) {
        Some(i) => i,
        None => return false,
    };
    if n < weights.len() as u64 {
        let mut cumulative = Vec::with_capacity(last + 1);
        let mut acc = 0.0;
        for &w in &weights[..=last] {
            acc += w.max(0.0);
            cumulative.push(acc);
        }
        for _ in 0..n {
            let u = rng.random::<f64>() * acc;
            let i = cumulative.partition_point(|&c| c <= u).min(last);
            out[i] += 1;
        }
        return true;
    }
    let mut left = n;
    let mut consumed = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        if i == last {
            out[i] = left;
            break;
        }
        let rest = total - consumed;
        let draw = binomial(rng, left, (w / rest).min(1.0));
        out[i] = draw;
        left -= draw;
        consumed += w;
        if left == 0 {
            break;
        }
    }
    true
}
