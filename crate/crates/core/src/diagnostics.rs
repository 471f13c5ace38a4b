//! Chain diagnostics and posterior summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{corrected_mle, naive_mle, TagDataset};
use crate::samplers::SampleStore;

pub const DEFAULT_LAGS: [usize; 4] = [10, 20, 40, 80];
pub const DEFAULT_TOP_N: usize = 20;
pub const DEFAULT_WINDOW: usize = 1000;

/// Sample autocorrelation of `series` at each lag, mean-centered and divided
/// by the lag-0 autocovariance.
///
/// Requires `series.len() > max(lags) + 2` and a non-constant series.
pub fn autocorrelation(series: &[f64], lags: &[usize]) -> Result<BTreeMap<usize, f64>> {
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    if series.len() <= max_lag + 2 {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            lag: max_lag,
        });
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0: f64 = centered.iter().map(|x| x * x).sum();
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(Error::ZeroVariance);
    }
    Ok(lags
        .iter()
        .map(|&lag| {
            if lag == 0 {
                return (0, 1.0);
            }
            let c: f64 = centered
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum();
            (lag, c / c0)
        })
        .collect())
}

/// Empirical quantile by linear interpolation between order statistics placed
/// at the midpoints `(j - 0.5) / n`; probabilities outside
/// `[0.5/n, 1 - 0.5/n]` return the extreme order statistic.
///
/// `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = n as f64 * prob + 0.5;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor();
    let j = lo as usize - 1;
    let frac = h - lo;
    sorted[j] + frac * (sorted[j + 1] - sorted[j])
}

pub fn quantile(values: &[f64], prob: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, prob)
}

/// Monte Carlo standard error of the mean by non-overlapping batch means,
/// using `floor(sqrt(n))` batches of equal size.
pub fn batch_means_mcse(series: &[f64]) -> Result<f64> {
    let n = series.len();
    let batches = (n as f64).sqrt().floor() as usize;
    if batches < 2 {
        return Err(Error::SeriesTooShort { len: n, lag: 0 });
    }
    let size = n / batches;
    let means: Vec<f64> = series
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Ok((var / batches as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrelationTable {
    /// Name of the traced series (`N`, `r`, or a category id).
    pub series: String,
    pub lags: BTreeMap<usize, f64>,
}

/// Autocorrelation tables for the scalar latent and each traced category of
/// a stored chain.
pub fn chain_autocorrelations(
    store: &SampleStore,
    lags: &[usize],
) -> Result<Vec<AutocorrelationTable>> {
    let mut out = vec![AutocorrelationTable {
        series: store.meta.config.model.scalar_name().to_string(),
        lags: autocorrelation(&store.trace_n, lags)?,
    }];
    for focal in &store.trace_focal {
        out.push(AutocorrelationTable {
            series: focal.id.clone(),
            lags: autocorrelation(&focal.values, lags)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SummaryOptions<'a> {
    pub top_n: usize,
    /// Summarize only the final `window` retained draws.
    pub window: Option<usize>,
    /// A point estimate reported alongside, such as a mode.
    pub mode: Option<&'a [f64]>,
}

impl Default for SummaryOptions<'_> {
    fn default() -> Self {
        Self {
            top_n: DEFAULT_TOP_N,
            window: Some(DEFAULT_WINDOW),
            mode: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// 1 for the largest tag count.
    pub rank: usize,
    pub id: String,
    pub tag_count: u64,
    pub mean: f64,
    pub lower95: f64,
    pub upper95: f64,
    /// Absent when no tags were observed.
    pub naive_mle: Option<f64>,
    pub corrected_mle: Option<f64>,
    pub mode: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub rows: Vec<SummaryRow>,
    pub draws_used: usize,
    pub warnings: Vec<String>,
}

/// Per-category posterior mean and 95% equal-tailed interval, ordered by
/// descending tag count (ties by id) and truncated to `top_n`.
pub fn summarize(
    store: &SampleStore,
    data: &TagDataset,
    options: &SummaryOptions<'_>,
) -> Result<PosteriorSummary> {
    if store.is_empty() {
        return Err(Error::Config("sample store holds no retained draws".into()));
    }
    let k = data.len();
    if store.retained_m[0].len() != k {
        return Err(Error::LengthMismatch {
            what: "retained draws",
            got: store.retained_m[0].len(),
            expected: k,
        });
    }
    if let Some(mode) = options.mode {
        if mode.len() != k {
            return Err(Error::LengthMismatch {
                what: "mode",
                got: mode.len(),
                expected: k,
            });
        }
    }
    let mut warnings = Vec::new();
    let top_n = if options.top_n > k {
        warnings.push(format!(
            "top_n {} exceeds {k} categories; clamped",
            options.top_n
        ));
        k
    } else {
        options.top_n
    };

    let naive = naive_mle(data).ok();
    let corrected = corrected_mle(data).ok();
    let draws = store.window(options.window);

    let mut order: Vec<usize> = (0..k).collect();
    let records = data.records();
    order.sort_by(|&a, &b| {
        records[b]
            .tag_count
            .cmp(&records[a].tag_count)
            .then_with(|| records[a].id.cmp(&records[b].id))
    });

    let mut column = Vec::with_capacity(draws.len());
    let rows = order
        .into_iter()
        .take(top_n)
        .enumerate()
        .map(|(pos, i)| {
            column.clear();
            column.extend(draws.iter().map(|m| m[i]));
            // shifted by the first draw so that constant columns are exact
            let pivot = column[0];
            let mean = pivot + column.iter().map(|x| x - pivot).sum::<f64>() / column.len() as f64;
            column.sort_by(f64::total_cmp);
            let lower95 = quantile_sorted(&column, 0.025);
            let upper95 = quantile_sorted(&column, 0.975);
            if !(lower95 <= mean && mean <= upper95) {
                warnings.push(format!(
                    "{}: mean {mean} outside interval [{lower95}, {upper95}]",
                    records[i].id
                ));
            }
            SummaryRow {
                rank: pos + 1,
                id: records[i].id.clone(),
                tag_count: records[i].tag_count,
                mean,
                lower95,
                upper95,
                naive_mle: naive.as_ref().map(|v| v[i]),
                corrected_mle: corrected.as_ref().map(|v| v[i]),
                mode: options.mode.map(|v| v[i]),
            }
        })
        .collect();

    Ok(PosteriorSummary {
        rows,
        draws_used: draws.len(),
        warnings,
    })
}
