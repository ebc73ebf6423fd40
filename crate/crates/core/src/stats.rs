//! Paired tests, rank correlation, bootstrap intervals and the summation
//! helpers shared by the Monte Carlo code.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::factorial::ln_binomial;

use crate::error::{invalid, Error, Result};
use crate::rng::{self, streams};
use crate::train::loss::log_sum_exp;

/// Largest number of nonzero differences handled by the exact Wilcoxon null.
pub const WILCOXON_EXACT_MAX: usize = 20;
pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 10_000;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;

/// Sum by recursive halving. The split points depend only on the length, so
/// the rounding is the same however the caller produced the slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (l, r) = xs.split_at(xs.len() / 2);
    pairwise_sum(l) + pairwise_sum(r)
}

/// A sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over `√n`; zero for a single value.
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    /// `mean / se`, infinite when the standard error vanishes.
    pub fn z(&self) -> f64 {
        self.mean / self.se
    }
}

pub fn mean_se(xs: &[f64]) -> Result<Estimate> {
    if xs.is_empty() {
        return Err(invalid("mean of an empty sample"));
    }
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let se = if xs.len() > 1 {
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        (pairwise_sum(&dev) / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    Ok(Estimate { mean, se, n: xs.len() })
}

/// Linear-interpolation quantile (Hyndman and Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_finite(xs: &[f64], what: &'static str) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// 1-based ranks with ties sharing the mean of the positions they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && xs[idx[end]] == xs[idx[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    /// Sum of the ranks of the positive differences.
    pub statistic: f64,
    /// Number of nonzero differences.
    pub n: usize,
    pub p: f64,
    pub method: PMethod,
}

fn signed_ranks(diffs: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
    check_finite(diffs, "wilcoxon differences")?;
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    if nz.is_empty() {
        return Err(Error::Undefined("every paired difference is zero".into()));
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    Ok((average_ranks(&abs), nz.iter().map(|&d| d > 0.0).collect()))
}

fn positive_rank_sum(ranks: &[f64], positive: &[bool]) -> f64 {
    ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum()
}

/// Exact two-sided p under the sign-flip null for the tie-adjusted ranks.
///
/// Average ranks are multiples of ½, so the null distribution is tabulated
/// over doubled rank sums.
pub fn wilcoxon_exact_p(diffs: &[f64]) -> Result<f64> {
    let (ranks, positive) = signed_ranks(diffs)?;
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let w = (2.0 * positive_rank_sum(&ranks, &positive)).round() as usize;
    let all: f64 = counts.iter().sum();
    let lower: f64 = counts[..=w].iter().sum::<f64>() / all;
    let upper: f64 = counts[w..].iter().sum::<f64>() / all;
    Ok((2.0 * lower.min(upper)).min(1.0))
}

/// Normal approximation with tie-corrected variance and a continuity correction of ½.
pub fn wilcoxon_normal_p(diffs: &[f64]) -> Result<f64> {
    let (ranks, positive) = signed_ranks(diffs)?;
    let n = ranks.len() as f64;
    let w = positive_rank_sum(&ranks, &positive);
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    for run in sorted.chunk_by(|a, b| a == b) {
        let t = run.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(erfc(z / std::f64::consts::SQRT_2).min(1.0))
}

/// Two-sided signed-rank test on `x − y`. Zero differences are dropped; the
/// exact null is used up to [`WILCOXON_EXACT_MAX`] nonzero differences.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<Wilcoxon> {
    let diffs: Vec<f64> = pairs.iter().map(|(x, y)| x - y).collect();
    let (ranks, positive) = signed_ranks(&diffs)?;
    let n = ranks.len();
    let (p, method) = if n <= WILCOXON_EXACT_MAX {
        (wilcoxon_exact_p(&diffs)?, PMethod::Exact)
    } else {
        (wilcoxon_normal_p(&diffs)?, PMethod::Normal)
    };
    Ok(Wilcoxon { statistic: positive_rank_sum(&ranks, &positive), n, p, method })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    pub b: u64,
    pub c: u64,
    pub p: f64,
    pub log10_p: f64,
}

/// Exact two-sided McNemar test on discordant counts: twice the smaller
/// binomial tail, capped at one. The tail is summed in log space.
pub fn mcnemar_exact(b: u64, c: u64) -> McNemar {
    let n = b + c;
    let ln_p = if n == 0 {
        0.0
    } else {
        let terms: Vec<f64> = (0..=b.min(c)).map(|i| ln_binomial(n, i)).collect();
        (log_sum_exp(&terms) - n as f64 * std::f64::consts::LN_2 + std::f64::consts::LN_2).min(0.0)
    };
    McNemar { b, c, p: ln_p.exp(), log10_p: ln_p / std::f64::consts::LN_10 }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedT {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub mean_difference: f64,
}

/// Student's paired t test on `x − y`, two-sided.
pub fn paired_t(pairs: &[(f64, f64)]) -> Result<PairedT> {
    if pairs.len() < 2 {
        return Err(invalid("paired t test needs at least two pairs"));
    }
    let diffs: Vec<f64> = pairs.iter().map(|(x, y)| x - y).collect();
    check_finite(&diffs, "paired differences")?;
    let est = mean_se(&diffs)?;
    if est.se == 0.0 || diffs.iter().all(|&d| d == diffs[0]) {
        return Err(Error::Undefined("paired differences have zero variance".into()));
    }
    let df = (diffs.len() - 1) as f64;
    let t = est.mean / est.se;
    let p = if t == 0.0 { 1.0 } else { beta_reg(df / 2.0, 0.5, df / (df + t * t)) };
    Ok(PairedT { t, df, p, mean_difference: est.mean })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if x.len() < 2 {
        return Err(invalid("correlation needs at least two points"));
    }
    check_finite(x, "correlation input")?;
    check_finite(y, "correlation input")?;
    let n = x.len() as f64;
    let (mx, my) = (pairwise_sum(x) / n, pairwise_sum(y) / n);
    let dx: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let dy: Vec<f64> = y.iter().map(|v| v - my).collect();
    let sxy = pairwise_sum(&dx.iter().zip(&dy).map(|(a, b)| a * b).collect::<Vec<_>>());
    let sxx = pairwise_sum(&dx.iter().map(|a| a * a).collect::<Vec<_>>());
    let syy = pairwise_sum(&dy.iter().map(|b| b * b).collect::<Vec<_>>());
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation with a constant input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    check_finite(x, "spearman input")?;
    check_finite(y, "spearman input")?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Percentile bootstrap interval for `statistic`, resampling with replacement.
pub fn bootstrap_ci<F>(values: &[f64], statistic: F, n_boot: usize, level: f64, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    if values.len() < 2 {
        return Err(invalid("bootstrap needs at least two values"));
    }
    if n_boot == 0 {
        return Err(invalid("bootstrap needs at least one resample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("confidence level must lie strictly between 0 and 1, got {level}")));
    }
    check_finite(values, "bootstrap input")?;
    let mut r = rng::stream(seed, streams::BOOTSTRAP);
    let mut buf = vec![0.0; values.len()];
    let mut stats: Vec<f64> = (0..n_boot)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = values[rng::below(&mut r, values.len())];
            }
            statistic(&buf)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&stats, alpha), quantile_sorted(&stats, 1.0 - alpha)))
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_mean_ci(values: &[f64], n_boot: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    bootstrap_ci(values, mean, n_boot, level, seed)
}
