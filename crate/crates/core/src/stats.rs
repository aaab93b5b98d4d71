//! Error analysis for Markov-chain time series: blocking with automatic
//! block-size doubling and block jackknife for derived quantities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest number of blocks a blocking level may use.
pub const MIN_BLOCKS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub mean: f64,
    pub std_error: f64,
    pub n_effective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blocking {
    pub estimate: EstimatorResult,
    /// Samples per block at the selected level.
    pub block_size: usize,
    /// Standard error at each level, block size 1, 2, 4, ...
    pub levels: Vec<f64>,
    pub plateau: bool,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Block means of each chain at the given block size, concatenated in chain
/// order. Blocks never straddle chains; trailing partial blocks are dropped.
pub fn block_means(chains: &[&[f64]], block_size: usize) -> Vec<f64> {
    chains
        .iter()
        .flat_map(|c| c.chunks_exact(block_size).map(mean))
        .collect()
}

/// Standard error of the mean of one or more independent chains. The block
/// size doubles until the error estimate stops growing by more than its own
/// statistical uncertainty.
pub fn blocking(chains: &[&[f64]]) -> Result<Blocking> {
    let n: usize = chains.iter().map(|c| c.len()).sum();
    if n < 2 {
        return Err(Error::Precondition(format!("need at least 2 samples, got {n}")));
    }
    let all_mean = chains.iter().flat_map(|c| c.iter()).sum::<f64>() / n as f64;
    let sample_var = {
        let v: f64 = chains.iter().flat_map(|c| c.iter()).map(|x| (x - all_mean).powi(2)).sum();
        v / (n as f64 - 1.0)
    };
    let mut levels = Vec::new();
    let mut size = 1;
    loop {
        let means = block_means(chains, size);
        if means.len() < MIN_BLOCKS.min(n / 2).max(2) {
            break;
        }
        levels.push((variance(&means) / means.len() as f64).sqrt());
        size *= 2;
    }
    let counts: Vec<usize> = (0..levels.len()).map(|l| block_means(chains, 1 << l).len()).collect();
    let mut chosen = None;
    for l in 0..levels.len().saturating_sub(1) {
        let sigma_of_sigma = levels[l] / (2.0 * (counts[l] as f64 - 1.0)).sqrt();
        if levels[l + 1] - levels[l] <= sigma_of_sigma {
            chosen = Some(l);
            break;
        }
    }
    let plateau = chosen.is_some();
    let level = chosen.unwrap_or_else(|| {
        (0..levels.len())
            .max_by(|&a, &b| levels[a].total_cmp(&levels[b]))
            .unwrap_or(0)
    });
    let std_error = levels.get(level).copied().unwrap_or(0.0);
    let n_effective = if std_error > 0.0 { (sample_var / (std_error * std_error)).min(n as f64) } else { n as f64 };
    Ok(Blocking {
        estimate: EstimatorResult { mean: all_mean, std_error, n_effective },
        block_size: 1 << level,
        levels,
        plateau,
    })
}

/// Delete-one-block jackknife of `f` applied to block averages of several
/// series. `series[i]` holds the per-chain samples of input `i`; all inputs
/// must share chain lengths.
pub fn jackknife(
    series: &[Vec<&[f64]>],
    block_size: usize,
    f: impl Fn(&[f64]) -> Option<f64>,
) -> Result<EstimatorResult> {
    if series.is_empty() || block_size == 0 {
        return Err(Error::Precondition("jackknife needs at least one input and block size > 0".into()));
    }
    let blocks: Vec<Vec<f64>> = series.iter().map(|chains| block_means(chains, block_size)).collect();
    let nb = blocks[0].len();
    if nb < 2 || blocks.iter().any(|b| b.len() != nb) {
        return Err(Error::Precondition(format!("jackknife needs >= 2 aligned blocks, got {nb}")));
    }
    let totals: Vec<f64> = blocks.iter().map(|b| b.iter().sum()).collect();
    let full_args: Vec<f64> = totals.iter().map(|t| t / nb as f64).collect();
    let full = f(&full_args).ok_or_else(|| Error::domain("estimator undefined on the full sample"))?;
    let mut leave_out = Vec::with_capacity(nb);
    for k in 0..nb {
        let args: Vec<f64> = blocks.iter().zip(&totals).map(|(b, t)| (t - b[k]) / (nb as f64 - 1.0)).collect();
        leave_out.push(f(&args).ok_or_else(|| Error::domain(format!("estimator undefined with block {k} removed")))?);
    }
    let jm = mean(&leave_out);
    let var = leave_out.iter().map(|x| (x - jm).powi(2)).sum::<f64>() * (nb as f64 - 1.0) / nb as f64;
    let bias_corrected = nb as f64 * full - (nb as f64 - 1.0) * jm;
    Ok(EstimatorResult { mean: bias_corrected, std_error: var.sqrt(), n_effective: nb as f64 })
}
