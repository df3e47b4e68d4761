//! Inverse statistics: first-passage waiting times to fixed log-return
//! levels, their histograms, power-law tail fits and gain/loss comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaitingTimeSample {
    pub start_index: usize,
    pub waiting_time: usize,
    pub level: f64,
}

/// All first-passage samples for one level, plus starts that never crossed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstPassage {
    pub level: f64,
    pub samples: Vec<WaitingTimeSample>,
    pub censored: usize,
}

/// Max segment tree answering "first index >= lo whose value >= v".
struct CrossingIndex {
    size: usize,
    tree: Vec<f64>,
}

impl CrossingIndex {
    fn new(values: impl ExactSizeIterator<Item = f64>) -> Self {
        let size = values.len().next_power_of_two().max(1);
        let mut tree = vec![f64::NEG_INFINITY; 2 * size];
        for (i, v) in values.enumerate() {
            tree[size + i] = v;
        }
        for i in (1..size).rev() {
            tree[i] = tree[2 * i].max(tree[2 * i + 1]);
        }
        Self { size, tree }
    }

    fn first_at_least(&self, lo: usize, v: f64) -> Option<usize> {
        if lo >= self.size {
            return None;
        }
        let mut i = lo + self.size;
        while self.tree[i] < v {
            // climb while we are a right child, then step to the right sibling
            while i & 1 == 1 {
                i >>= 1;
            }
            if i == 0 {
                return None;
            }
            i += 1;
        }
        while i < self.size {
            i *= 2;
            if self.tree[i] < v {
                i += 1;
            }
        }
        Some(i - self.size)
    }
}

/// Shortest waiting time from every start `t0` until `s(t0 + k) - s(t0)`
/// reaches `level` (`>=` for gains, `<=` for losses).
pub fn first_passage_times(series: &[f64], level: f64) -> Result<FirstPassage> {
    if level == 0.0 || !level.is_finite() {
        return Err(Error::Parameter(format!(
            "return level must be finite and non-zero, got {level}"
        )));
    }
    if series.len() < 2 {
        return Err(Error::Length {
            needed: 1,
            got: series.len(),
        });
    }
    // losses become gains on the negated path
    let sign = level.signum();
    let index = CrossingIndex::new(series.iter().map(|s| sign * s));
    let target = level.abs();

    let mut samples = Vec::new();
    let mut censored = 0;
    for t0 in 0..series.len() {
        let threshold = sign * series[t0] + target;
        match index.first_at_least(t0 + 1, threshold) {
            Some(t) if t < series.len() => samples.push(WaitingTimeSample {
                start_index: t0,
                waiting_time: t - t0,
                level,
            }),
            _ => censored += 1,
        }
    }
    Ok(FirstPassage {
        level,
        samples,
        censored,
    })
}

/// A scheme for grouping integer waiting times into bins.
///
/// Bins are contiguous integer ranges `[lo, hi]`; edges sit at half-integers
/// so that densities are per unit of waiting time.
pub trait Binning: Send + Sync {
    fn name(&self) -> &'static str;
    /// First integer of each bin covering `1..=max_tau`, plus one past the end.
    fn starts(&self, max_tau: usize) -> Vec<usize>;
    /// Representative waiting time for the bin holding `lo..=hi`.
    fn center(&self, lo: usize, hi: usize) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct LogBinning {
    pub ratio: f64,
}

impl Binning for LogBinning {
    fn name(&self) -> &'static str {
        "log"
    }

    fn starts(&self, max_tau: usize) -> Vec<usize> {
        let mut starts = vec![1usize];
        let mut edge = 1.0f64;
        while *starts.last().unwrap() <= max_tau {
            edge *= self.ratio;
            let next = edge.ceil() as usize;
            let last = *starts.last().unwrap();
            if next > last {
                starts.push(next);
            }
        }
        starts
    }

    fn center(&self, lo: usize, hi: usize) -> f64 {
        ((lo as f64) * (hi as f64)).sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearBinning {
    pub width: usize,
}

impl Binning for LinearBinning {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn starts(&self, max_tau: usize) -> Vec<usize> {
        (0..)
            .map(|k| 1 + k * self.width)
            .take_while(|&s| s <= max_tau + self.width)
            .collect()
    }

    fn center(&self, lo: usize, hi: usize) -> f64 {
        0.5 * (lo + hi) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningParams {
    pub ratio: f64,
    pub width: usize,
}

impl Default for BinningParams {
    fn default() -> Self {
        Self {
            ratio: 1.25,
            width: 1,
        }
    }
}

pub fn binnings() -> Registry<dyn Binning, BinningParams> {
    let mut reg: Registry<dyn Binning, BinningParams> = Registry::new("binning");
    reg.register("log", |p: &BinningParams| {
        if !(p.ratio > 1.0 && p.ratio.is_finite()) {
            return Err(Error::Parameter(format!(
                "log bin ratio must exceed 1, got {}",
                p.ratio
            )));
        }
        Ok(Box::new(LogBinning { ratio: p.ratio }))
    })
    .register("linear", |p: &BinningParams| {
        if p.width == 0 {
            return Err(Error::Parameter("linear bin width must be >= 1".into()));
        }
        Ok(Box::new(LinearBinning { width: p.width }))
    });
    reg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaitingTimeHistogram {
    pub level: f64,
    pub bin_edges: Vec<f64>,
    pub centers: Vec<f64>,
    pub counts: Vec<usize>,
    pub densities: Vec<f64>,
    pub total_samples: usize,
    pub censored_count: usize,
}

impl WaitingTimeHistogram {
    pub fn width(&self, bin: usize) -> f64 {
        self.bin_edges[bin + 1] - self.bin_edges[bin]
    }

    /// Centre of the highest-density bin (earliest on ties).
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (i, d) in self.densities.iter().enumerate() {
            if *d > self.densities[best] {
                best = i;
            }
        }
        self.centers[best]
    }

    pub fn mass(&self) -> f64 {
        (0..self.densities.len())
            .map(|i| self.densities[i] * self.width(i))
            .sum()
    }
}

pub fn waiting_time_histogram(
    passage: &FirstPassage,
    binning: &dyn Binning,
) -> Result<WaitingTimeHistogram> {
    let max_tau = passage
        .samples
        .iter()
        .map(|s| s.waiting_time)
        .max()
        .ok_or_else(|| {
            Error::EmptyData(format!(
                "no start reached level {} ({} censored)",
                passage.level, passage.censored
            ))
        })?;
    let starts = binning.starts(max_tau);
    let n_bins = starts.len() - 1;
    let mut counts = vec![0usize; n_bins];
    for s in &passage.samples {
        // last start <= tau
        let bin = starts.partition_point(|&b| b <= s.waiting_time) - 1;
        counts[bin] += 1;
    }
    let total = passage.samples.len();
    let bin_edges: Vec<f64> = starts.iter().map(|&s| s as f64 - 0.5).collect();
    let centers = starts
        .windows(2)
        .map(|w| binning.center(w[0], w[1] - 1))
        .collect();
    let densities = counts
        .iter()
        .zip(starts.windows(2))
        .map(|(&c, w)| c as f64 / (total as f64 * (w[1] - w[0]) as f64))
        .collect();
    Ok(WaitingTimeHistogram {
        level: passage.level,
        bin_edges,
        centers,
        counts,
        densities,
        total_samples: total,
        censored_count: passage.censored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub exponent: f64,
    pub fit_range: (f64, f64),
    pub stderr: f64,
    pub bins_used: usize,
}

/// Least-squares power law through the non-empty bins whose centre lies in
/// `fit_range`; the exponent is the negated log-log slope.
pub fn fit_tail_exponent(hist: &WaitingTimeHistogram, fit_range: (f64, f64)) -> Result<TailFit> {
    let (lo, hi) = fit_range;
    if !(lo < hi) {
        return Err(Error::Fit(format!("empty fit range [{lo}, {hi}]")));
    }
    let points: Vec<(f64, f64)> = hist
        .centers
        .iter()
        .zip(&hist.densities)
        .filter(|(c, d)| **c >= lo && **c <= hi && **d > 0.0)
        .map(|(c, d)| (c.ln(), d.ln()))
        .collect();
    if points.len() < 4 {
        return Err(Error::Fit(format!(
            "need >= 4 non-empty bins in [{lo}, {hi}], found {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let stderr = (ssr / (n - 2.0) / sxx).sqrt();
    if !slope.is_finite() {
        return Err(Error::Fit("non-finite slope".into()));
    }
    Ok(TailFit {
        exponent: -slope,
        fit_range,
        stderr,
        bins_used: points.len(),
    })
}

/// From three times the mode to the last bin holding at least `min_count` samples.
pub fn default_fit_range(hist: &WaitingTimeHistogram, min_count: usize) -> Result<(f64, f64)> {
    let lo = 3.0 * hist.mode();
    let hi = hist
        .counts
        .iter()
        .rposition(|&c| c >= min_count)
        .map(|i| hist.centers[i])
        .ok_or_else(|| Error::Fit(format!("no bin holds {min_count} samples")))?;
    if lo >= hi {
        return Err(Error::Fit(format!(
            "tail too short: 3 x mode = {lo} but last well-populated bin is at {hi}"
        )));
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelAsymmetry {
    pub level: f64,
    pub gain: WaitingTimeHistogram,
    pub loss: WaitingTimeHistogram,
    pub gain_mode: f64,
    pub loss_mode: f64,
    /// `gain_mode - loss_mode`; positive when losses arrive sooner.
    pub asymmetry: f64,
}

/// Paired gain and loss waiting-time histograms for every `|rho|` in `levels`.
pub fn gain_loss_report(
    series: &[f64],
    levels: &[f64],
    binning: &dyn Binning,
) -> Result<Vec<LevelAsymmetry>> {
    levels
        .iter()
        .map(|&l| {
            let level = l.abs();
            let gain = waiting_time_histogram(&first_passage_times(series, level)?, binning)?;
            let loss = waiting_time_histogram(&first_passage_times(series, -level)?, binning)?;
            let (gain_mode, loss_mode) = (gain.mode(), loss.mode());
            Ok(LevelAsymmetry {
                level,
                gain,
                loss,
                gain_mode,
                loss_mode,
                asymmetry: gain_mode - loss_mode,
            })
        })
        .collect()
}
