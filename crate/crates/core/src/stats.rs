//! Two-sample rank-sum testing, equal-size subsampling and density histograms.

use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator used for every seeded draw in the crate: PCG-XSL-RR 128/64
/// (`rand_pcg::Pcg64`) initialised with `seed_from_u64`.
pub type SeededRng = Pcg64;

pub fn seeded_rng(seed: u64) -> SeededRng {
    Pcg64::seed_from_u64(seed)
}

/// Two-sided normal tail `P(|Z| >= |z|)` and its base-10 logarithm.
///
/// `erfc` is used directly while it is representable; past that the log is
/// taken from the asymptotic expansion of `erfc`, which is accurate to far
/// better than 1e-12 relative once `|z| > 37`.
pub fn normal_two_sided(z: f64) -> (f64, f64) {
    let x = z.abs() / std::f64::consts::SQRT_2;
    let p = libm::erfc(x);
    if p > 1e-300 {
        return (p.min(1.0), p.min(1.0).log10());
    }
    let inv2 = 1.0 / (x * x);
    let series = 1.0 - 0.5 * inv2 + 0.75 * inv2 * inv2 - 1.875 * inv2.powi(3)
        + 6.5625 * inv2.powi(4);
    let ln_p = -x * x - (x * std::f64::consts::PI.sqrt()).ln() + series.ln();
    (p, ln_p / std::f64::consts::LN_10)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Negative when sample A ranks below its null expectation.
    pub z: f64,
    pub p_two_sided: f64,
    pub log10_p: f64,
    /// Set when `|z| > 8`; `p_two_sided` is then only an upper bound of the
    /// reported precision and `log10_p` should be used.
    pub p_is_bound: bool,
    pub rank_sum_a: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub tie_groups: usize,
    pub variance: f64,
}

/// Midranks (1-based, ties averaged) of `values`, and the tie correction
/// term `sum(t^3 - t)` with the number of tied groups.
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64, usize) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut tie_term = 0.0;
    let mut groups = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        let t = (j - i) as f64;
        if j - i > 1 {
            groups += 1;
            tie_term += t * t * t - t;
        }
        i = j;
    }
    (ranks, tie_term, groups)
}

/// Wilcoxon rank-sum z-test with tie-corrected variance and no continuity
/// correction.
pub fn wilcoxon_rank_sum(sample_a: &[f64], sample_b: &[f64]) -> Result<RankSumResult> {
    let (n_a, n_b) = (sample_a.len(), sample_b.len());
    if n_a == 0 || n_b == 0 || n_a + n_b < 4 {
        return Err(Error::EmptyData(format!(
            "rank-sum test needs both samples non-empty and 4 values in total, got {n_a} + {n_b}"
        )));
    }
    if let Some(v) = sample_a.iter().chain(sample_b).find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite value {v} in rank-sum sample")));
    }
    let pooled: Vec<f64> = sample_a.iter().chain(sample_b).copied().collect();
    let (ranks, tie_term, tie_groups) = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..n_a].iter().sum();

    let (na, nb) = (n_a as f64, n_b as f64);
    let n = na + nb;
    let variance = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        return Err(Error::Degenerate(
            "all pooled values are identical; rank-sum variance is zero".into(),
        ));
    }
    let z = (rank_sum_a - na * (n + 1.0) / 2.0) / variance.sqrt();
    let (p, log10_p) = normal_two_sided(z);
    Ok(RankSumResult {
        z,
        p_two_sided: p.max(f64::MIN_POSITIVE),
        log10_p,
        p_is_bound: z.abs() > 8.0,
        rank_sum_a,
        n_a,
        n_b,
        tie_groups,
        variance,
    })
}

/// Uniform subset of `target_size` elements, kept in input order.
pub fn equal_size_subsample(larger: &[f64], target_size: usize, seed: u64) -> Result<Vec<f64>> {
    if target_size > larger.len() {
        return Err(Error::Parameter(format!(
            "cannot draw {target_size} of {} elements",
            larger.len()
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut picked = rand::seq::index::sample(&mut rng, larger.len(), target_size).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| larger[i]).collect())
}

/// Trims the larger of two samples down to the size of the smaller one.
pub fn balance_samples(a: &[f64], b: &[f64], seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() > b.len() {
        Ok((equal_size_subsample(a, b.len(), seed)?, b.to_vec()))
    } else {
        Ok((a.to_vec(), equal_size_subsample(b, a.len(), seed)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HistogramBins {
    Count(usize),
    Edges(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub densities: Vec<f64>,
    pub sample_count: usize,
}

impl DistributionHistogram {
    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn mass(&self) -> f64 {
        self.densities
            .iter()
            .zip(self.bin_edges.windows(2))
            .map(|(d, w)| d * (w[1] - w[0]))
            .sum()
    }
}

/// Density histogram. With a bin count the range is `[min, max]` (widened by
/// half a unit each side when all values coincide); values outside explicit
/// edges are dropped. The last bin is closed on the right.
pub fn distribution_histogram(values: &[f64], bins: &HistogramBins) -> Result<DistributionHistogram> {
    if values.is_empty() {
        return Err(Error::EmptyData("histogram of an empty sample".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite value {v} in histogram input")));
    }
    let edges = match bins {
        HistogramBins::Count(0) => {
            return Err(Error::Parameter("histogram needs at least one bin".into()))
        }
        HistogramBins::Count(n) => {
            let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                lo -= 0.5;
                hi += 0.5;
            }
            let width = (hi - lo) / *n as f64;
            let mut edges: Vec<f64> = (0..*n).map(|i| lo + i as f64 * width).collect();
            edges.push(hi);
            edges
        }
        HistogramBins::Edges(e) => {
            if e.len() < 2 || e.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Parameter(
                    "histogram edges must be strictly increasing with >= 2 entries".into(),
                ));
            }
            e.clone()
        }
    };
    let n_bins = edges.len() - 1;
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        if v < edges[0] || v > edges[n_bins] {
            continue;
        }
        let bin = (edges.partition_point(|&e| e <= v) - 1).min(n_bins - 1);
        counts[bin] += 1;
    }
    let sample_count: usize = counts.iter().sum();
    if sample_count == 0 {
        return Err(Error::EmptyData("no value falls inside the histogram edges".into()));
    }
    let densities = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, w)| c as f64 / (sample_count as f64 * (w[1] - w[0])))
        .collect();
    Ok(DistributionHistogram {
        bin_edges: edges,
        counts,
        densities,
        sample_count,
    })
}
