//! Prefix-sum engine for the windowed correlation pipeline.
//!
//! Window moments come from prefix sums of mean-centred returns, so one
//! window costs O(1) per pair regardless of its span. A window whose returns
//! are all identical (zero volatility) is detected exactly from run lengths
//! rather than from a rounded variance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::panel::ReturnPanel;
use super::{qualifies, WindowAverage};
use crate::error::{Error, Result};

/// Fixed partition of the pair loop; results do not depend on thread count.
const PAIR_GROUPS: usize = 16;

pub(crate) struct Prepared {
    centered: Vec<Vec<f64>>,
    prefix: Vec<Vec<f64>>,
    prefix_sq: Vec<Vec<f64>>,
    run_len: Vec<Vec<u32>>,
}

fn cumulative(values: impl Iterator<Item = f64>, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for v in values {
        acc += v;
        out.push(acc);
    }
    out
}

impl Prepared {
    pub(crate) fn new(panel: &ReturnPanel) -> Self {
        let len = panel.len();
        let mut centered = Vec::with_capacity(panel.n_stocks());
        let mut prefix = Vec::with_capacity(panel.n_stocks());
        let mut prefix_sq = Vec::with_capacity(panel.n_stocks());
        let mut run_len = Vec::with_capacity(panel.n_stocks());
        for s in 0..panel.n_stocks() {
            let r = panel.returns(s);
            let mean = r.iter().sum::<f64>() / len as f64;
            let c: Vec<f64> = r.iter().map(|v| v - mean).collect();
            prefix.push(cumulative(c.iter().copied(), len));
            prefix_sq.push(cumulative(c.iter().map(|v| v * v), len));
            let mut run = vec![1u32; len];
            for t in (0..len.saturating_sub(1)).rev() {
                if r[t] == r[t + 1] {
                    run[t] = run[t + 1] + 1;
                }
            }
            run_len.push(run);
            centered.push(c);
        }
        Self {
            centered,
            prefix,
            prefix_sq,
            run_len,
        }
    }

    /// Window means and inverse volatilities for every start; the inverse
    /// volatility is NaN for constant windows.
    fn moments(&self, stock: usize, span: usize, starts: usize) -> (Vec<f64>, Vec<f64>) {
        let n = (span + 1) as f64;
        let p = &self.prefix[stock];
        let q = &self.prefix_sq[stock];
        let run = &self.run_len[stock];
        let mut mean = Vec::with_capacity(starts);
        let mut inv_sd = Vec::with_capacity(starts);
        for t in 0..starts {
            let m = (p[t + span + 1] - p[t]) / n;
            let var = (q[t + span + 1] - q[t]) / n - m * m;
            mean.push(m);
            inv_sd.push(if run[t] as usize > span || var <= 0.0 {
                f64::NAN
            } else {
                1.0 / var.sqrt()
            });
        }
        (mean, inv_sd)
    }

    fn product_prefix(&self, x: usize, y: usize, out: &mut Vec<f64>) {
        out.clear();
        out.push(0.0);
        let mut acc = 0.0;
        for (a, b) in self.centered[x].iter().zip(&self.centered[y]) {
            acc += a * b;
            out.push(acc);
        }
    }
}

/// Correlation of one pair for every window start; NaN where undefined.
pub(crate) fn pair_series(prep: &Prepared, x: usize, y: usize, span: usize, starts: usize) -> Vec<f64> {
    let (mx, ix) = prep.moments(x, span, starts);
    let (my, iy) = prep.moments(y, span, starts);
    let mut prod = Vec::new();
    prep.product_prefix(x, y, &mut prod);
    let n = (span + 1) as f64;
    (0..starts)
        .map(|t| ((prod[t + span + 1] - prod[t]) / n - mx[t] * my[t]) * (ix[t] * iy[t]))
        .collect()
}

/// Everything one window span contributes to the sweep.
pub(crate) struct WindowPass {
    /// Market component correlation per start; NaN where no pair is defined.
    pub s0: Vec<f64>,
    pub pair_counts: Vec<u32>,
    /// Per start, the number of thresholds at or below the index return.
    pub buckets: Vec<u16>,
    /// Per pair, per bucket: summed correlation and count of defined windows.
    pub pair_buckets: Vec<Vec<(f64, u32)>>,
}

struct GroupPartial {
    weighted: Vec<f64>,
    weight: Vec<f64>,
    count: Vec<u32>,
    pair_buckets: Vec<Vec<(f64, u32)>>,
}

pub(crate) fn window_pass(
    panel: &ReturnPanel,
    prep: &Prepared,
    span: usize,
    thresholds: &[f64],
) -> WindowPass {
    let starts = panel.window_starts(span);
    let n = (span + 1) as f64;
    let stats: Vec<(Vec<f64>, Vec<f64>)> = (0..panel.n_stocks())
        .into_par_iter()
        .map(|s| prep.moments(s, span, starts))
        .collect();
    let buckets: Vec<u16> = (0..starts)
        .map(|t| {
            let r = panel.index_return(t, span);
            thresholds.partition_point(|&th| th <= r) as u16
        })
        .collect();
    let n_buckets = thresholds.len() + 1;

    let pairs = panel.pairs();
    let group_size = pairs.len().div_ceil(PAIR_GROUPS).max(1);
    let partials: Vec<GroupPartial> = pairs
        .par_chunks(group_size)
        .enumerate()
        .map(|(g, chunk)| {
            let mut part = GroupPartial {
                weighted: vec![0.0; starts],
                weight: vec![0.0; starts],
                count: vec![0; starts],
                pair_buckets: Vec::with_capacity(chunk.len()),
            };
            let mut prod = Vec::with_capacity(panel.len() + 1);
            for (k, &(x, y)) in chunk.iter().enumerate() {
                let w = panel.pair_weight(g * group_size + k);
                prep.product_prefix(x, y, &mut prod);
                let (mx, ix) = (&stats[x].0, &stats[x].1);
                let (my, iy) = (&stats[y].0, &stats[y].1);
                let mut bucket_sums = vec![(0.0, 0u32); n_buckets];
                for t in 0..starts {
                    let s = ((prod[t + span + 1] - prod[t]) / n - mx[t] * my[t]) * (ix[t] * iy[t]);
                    if s.is_nan() {
                        continue;
                    }
                    part.weighted[t] += w * s;
                    part.weight[t] += w;
                    part.count[t] += 1;
                    let b = &mut bucket_sums[buckets[t] as usize];
                    b.0 += s;
                    b.1 += 1;
                }
                part.pair_buckets.push(bucket_sums);
            }
            part
        })
        .collect();

    let mut weighted = vec![0.0; starts];
    let mut weight = vec![0.0; starts];
    let mut pair_counts = vec![0u32; starts];
    let mut pair_buckets = Vec::with_capacity(pairs.len());
    for part in partials {
        for t in 0..starts {
            weighted[t] += part.weighted[t];
            weight[t] += part.weight[t];
            pair_counts[t] += part.count[t];
        }
        pair_buckets.extend(part.pair_buckets);
    }
    let s0 = weighted
        .iter()
        .zip(&weight)
        .zip(&pair_counts)
        .map(|((s, w), &c)| if c == 0 { f64::NAN } else { s / w })
        .collect();
    WindowPass {
        s0,
        pair_counts,
        buckets,
        pair_buckets,
    }
}

/// Options for a full conditional sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub levels: Vec<f64>,
    pub window_range: (usize, usize),
    /// Contiguous time blocks used for the batch standard error of each point.
    pub se_blocks: usize,
    /// Points whose pooled conditional sample is smaller are flagged.
    pub min_samples: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.window_range;
        if lo == 0 || lo >= hi {
            return Err(Error::Parameter(format!(
                "window range needs 1 <= dt1 < dt2, got [{lo}, {hi}]"
            )));
        }
        if self.levels.is_empty() {
            return Err(Error::Parameter("level grid is empty".into()));
        }
        if self.levels.iter().any(|l| !l.is_finite()) {
            return Err(Error::Parameter("levels must be finite".into()));
        }
        if self.se_blocks < 2 {
            return Err(Error::Parameter("need at least 2 standard-error blocks".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub rho: f64,
    pub value: f64,
    /// Conditional-set sizes summed over all window spans.
    pub n_samples: usize,
    /// Window spans that contributed no sample.
    pub n_excluded: usize,
    /// Batch-means standard error over contiguous time blocks.
    pub stderr: Option<f64>,
    pub poor_statistics: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub horizon: usize,
    pub window_range: (usize, usize),
    pub points: Vec<CurvePoint>,
}

impl CorrelationCurve {
    pub fn point(&self, rho: f64) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.rho == rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeResolvedPoint {
    pub t: usize,
    pub value: f64,
    /// Window spans for which `t` met the condition.
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Levels in the caller's order.
    pub levels: Vec<f64>,
    pub curve: CorrelationCurve,
    /// `[level][span - dt1]`: conditional market correlation per span.
    pub by_window: Vec<Vec<Option<(f64, usize)>>>,
    pub pairs: Vec<(usize, usize)>,
    /// `[pair][level]`: conditional pair correlation averaged over spans.
    pub pair_levels: Vec<Vec<Option<WindowAverage>>>,
    /// `[level]`: per-time averages over spans.
    pub time_resolved: Vec<Vec<TimeResolvedPoint>>,
}

impl SweepResult {
    pub fn level_index(&self, rho: f64) -> Option<usize> {
        self.levels.iter().position(|&l| l == rho)
    }

    /// Conditional pair correlations at `rho` for pairs where it is defined.
    pub fn pair_values(&self, rho: f64) -> Vec<f64> {
        let Some(l) = self.level_index(rho) else {
            return Vec::new();
        };
        self.pair_levels
            .iter()
            .filter_map(|p| p[l].map(|a| a.value))
            .collect()
    }

    pub fn time_values(&self, rho: f64) -> Vec<f64> {
        self.level_index(rho)
            .map(|l| self.time_resolved[l].iter().map(|p| p.value).collect())
            .unwrap_or_default()
    }
}

/// Runs the whole conditional pipeline for every level and window span.
pub fn conditional_sweep(panel: &ReturnPanel, config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let (lo, hi) = config.window_range;
    let mut thresholds = config.levels.clone();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let slot: Vec<usize> = config
        .levels
        .iter()
        .map(|l| thresholds.iter().position(|t| t == l).unwrap())
        .collect();
    // bucket ranges that satisfy each level's condition
    let accepted: Vec<std::ops::Range<usize>> = config
        .levels
        .iter()
        .zip(&slot)
        .map(|(&l, &i)| if l >= 0.0 { i + 1..thresholds.len() + 1 } else { 0..i + 1 })
        .collect();

    let n_levels = config.levels.len();
    let len = panel.len();
    let block_len = len.div_ceil(config.se_blocks).max(1);
    let n_blocks = len.div_ceil(block_len);
    let prep = Prepared::new(panel);
    let pairs = panel.pairs();

    let mut by_window = vec![Vec::with_capacity(hi - lo + 1); n_levels];
    // [level][span][block] -> (sum, count)
    let mut block_sums = vec![vec![vec![(0.0, 0usize); n_blocks]; hi - lo + 1]; n_levels];
    let mut ct_sum = vec![vec![0.0; len]; n_levels];
    let mut ct_cnt = vec![vec![0u32; len]; n_levels];
    let mut pair_acc = vec![vec![(0.0, 0usize, 0usize); n_levels]; pairs.len()];

    for span in lo..=hi {
        let starts = panel.window_starts(span);
        if starts == 0 {
            for w in by_window.iter_mut() {
                w.push(None);
            }
            continue;
        }
        let pass = window_pass(panel, &prep, span, &thresholds);
        for (l, range) in accepted.iter().enumerate() {
            let mut sum = 0.0;
            let mut count = 0usize;
            let blocks = &mut block_sums[l][span - lo];
            for t in 0..starts {
                let s = pass.s0[t];
                if s.is_nan() || !range.contains(&(pass.buckets[t] as usize)) {
                    continue;
                }
                sum += s;
                count += 1;
                let b = &mut blocks[t / block_len];
                b.0 += s;
                b.1 += 1;
                ct_sum[l][t] += s;
                ct_cnt[l][t] += 1;
            }
            by_window[l].push((count > 0).then(|| (sum / count as f64, count)));

            for (acc, buckets) in pair_acc.iter_mut().zip(&pass.pair_buckets) {
                let (s, c) = buckets[range.clone()]
                    .iter()
                    .fold((0.0, 0u32), |(s, c), b| (s + b.0, c + b.1));
                if c > 0 {
                    let a = &mut acc[l];
                    a.0 += s / c as f64;
                    a.1 += c as usize;
                    a.2 += 1;
                }
            }
        }
    }

    let n_spans = hi - lo + 1;
    let mut points = Vec::new();
    for l in 0..n_levels {
        let used: Vec<(usize, f64, usize)> = by_window[l]
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|(c, n)| (k, c, n)))
            .collect();
        if used.is_empty() {
            continue;
        }
        let k_used = used.len() as f64;
        let value = used.iter().map(|u| u.1).sum::<f64>() / k_used;
        let n_samples: usize = used.iter().map(|u| u.2).sum();

        let mut influence = vec![0.0; n_blocks];
        for &(k, c0, n_k) in &used {
            for (b, &(s, c)) in block_sums[l][k].iter().enumerate() {
                influence[b] += (s - c0 * c as f64) / (n_k as f64 * k_used);
            }
        }
        let active: Vec<f64> = influence
            .iter()
            .enumerate()
            .filter(|(b, _)| used.iter().any(|&(k, _, _)| block_sums[l][k][*b].1 > 0))
            .map(|(_, v)| *v)
            .collect();
        let stderr = (active.len() >= 2).then(|| {
            let g = active.len() as f64;
            (g / (g - 1.0) * active.iter().map(|v| v * v).sum::<f64>()).sqrt()
        });

        points.push(CurvePoint {
            rho: config.levels[l],
            value,
            n_samples,
            n_excluded: n_spans - used.len(),
            stderr,
            poor_statistics: n_samples < config.min_samples,
        });
    }
    points.sort_by(|a, b| a.rho.total_cmp(&b.rho));

    let pair_levels = pair_acc
        .into_iter()
        .map(|levels| {
            levels
                .into_iter()
                .map(|(s, n, used)| {
                    (used > 0).then(|| WindowAverage {
                        value: s / used as f64,
                        sample_count: n,
                        windows_used: used,
                        windows_excluded: n_spans - used,
                    })
                })
                .collect()
        })
        .collect();

    let time_resolved = (0..n_levels)
        .map(|l| {
            (0..len)
                .filter(|&t| ct_cnt[l][t] > 0)
                .map(|t| TimeResolvedPoint {
                    t,
                    value: ct_sum[l][t] / ct_cnt[l][t] as f64,
                    windows: ct_cnt[l][t] as usize,
                })
                .collect()
        })
        .collect();

    debug_assert!(config
        .levels
        .iter()
        .zip(&accepted)
        .all(|(&l, r)| thresholds.iter().enumerate().all(|(i, &th)| {
            // bucket i+1 holds returns in [th_i, th_{i+1}); th_i itself qualifies iff in range
            qualifies(l, th) == r.contains(&(i + 1))
        })));

    Ok(SweepResult {
        levels: config.levels.clone(),
        curve: CorrelationCurve {
            horizon: panel.horizon(),
            window_range: config.window_range,
            points,
        },
        by_window,
        pairs,
        pair_levels,
        time_resolved,
    })
}
