//! Stock-stock correlations conditioned on the direction of the index.
//!
//! For a window of `span + 1` returns starting at `t`, the pair correlation
//! is the population Pearson coefficient of the two stocks' returns. The
//! market component correlation averages it over all defined pairs. Both
//! are then averaged over the times at which the index log return over the
//! same window clears a level `rho` (`r >= rho` for `rho >= 0`, `r < rho`
//! otherwise), and finally over a range of window spans.
//!
//! The functions here follow that definition step by step and are meant for
//! single evaluations. [`conditional_sweep`] computes the full set of
//! results for a level grid in one pass and is what the pipelines use.

mod panel;
mod sweep;

use serde::{Deserialize, Serialize};

pub use panel::ReturnPanel;
pub use sweep::{
    conditional_sweep, CorrelationCurve, CurvePoint, SweepConfig, SweepResult, TimeResolvedPoint,
};

use crate::error::{Error, Result};
use crate::timeseries::window_moments;

pub const DEFAULT_WINDOW_RANGE: (usize, usize) = (10, 35);
pub const DEFAULT_CHI_EPSILON: f64 = 1e-6;

/// Condition applied to the index return: `>=` for non-negative levels,
/// strict `<` for negative ones.
pub fn qualifies(level: f64, index_return: f64) -> bool {
    if level >= 0.0 {
        index_return >= level
    } else {
        index_return < level
    }
}

/// Correlation of stocks `x` and `y` over returns `t..=t + span`; `None`
/// when either window has zero volatility.
pub fn pair_correlation(
    panel: &ReturnPanel,
    x: usize,
    y: usize,
    t: usize,
    span: usize,
) -> Result<Option<f64>> {
    panel.check_window(t, span)?;
    for s in [x, y] {
        if s >= panel.n_stocks() {
            return Err(Error::Range(format!("no stock with index {s}")));
        }
    }
    let (rx, ry) = (panel.returns(x), panel.returns(y));
    let (_, sx) = window_moments(rx, t, span)?;
    let (_, sy) = window_moments(ry, t, span)?;
    if sx == 0.0 || sy == 0.0 {
        return Ok(None);
    }
    let (ax, ay) = (rx[t], ry[t]);
    let n = (span + 1) as f64;
    let (mut mx, mut my, mut mxy) = (0.0, 0.0, 0.0);
    for k in t..=t + span {
        let (dx, dy) = (rx[k] - ax, ry[k] - ay);
        mx += dx;
        my += dy;
        mxy += dx * dy;
    }
    let cov = mxy / n - (mx / n) * (my / n);
    Ok(Some(cov / (sx * sy)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelationSeries {
    pub pair: (String, String),
    pub window_span: usize,
    pub horizon: usize,
    /// Indexed by window start; `None` where a window has zero volatility.
    pub values: Vec<Option<f64>>,
    pub undefined_count: usize,
}

pub fn pair_correlation_series(
    panel: &ReturnPanel,
    x: usize,
    y: usize,
    span: usize,
) -> Result<PairCorrelationSeries> {
    if span == 0 {
        return Err(Error::Parameter("window span must be >= 1".into()));
    }
    if x >= panel.n_stocks() || y >= panel.n_stocks() {
        return Err(Error::Range(format!("no pair ({x}, {y})")));
    }
    let prep = sweep::Prepared::new(panel);
    let raw = sweep::pair_series(&prep, x, y, span, panel.window_starts(span));
    let values: Vec<Option<f64>> = raw.iter().map(|v| (!v.is_nan()).then_some(*v)).collect();
    Ok(PairCorrelationSeries {
        pair: (panel.tickers()[x].clone(), panel.tickers()[y].clone()),
        window_span: span,
        horizon: panel.horizon(),
        undefined_count: values.iter().filter(|v| v.is_none()).count(),
        values,
    })
}

/// Average pair correlation at one window; `None` when no pair is defined.
/// Returns the value and the number of pairs entering it.
pub fn market_component_correlation(
    panel: &ReturnPanel,
    t: usize,
    span: usize,
) -> Result<Option<(f64, usize)>> {
    panel.check_window(t, span)?;
    let (mut sum, mut weight, mut count) = (0.0, 0.0, 0);
    for (k, (x, y)) in panel.pairs().into_iter().enumerate() {
        if let Some(s) = pair_correlation(panel, x, y, t, span)? {
            let w = panel.pair_weight(k);
            sum += w * s;
            weight += w;
            count += 1;
        }
    }
    Ok((count > 0).then(|| (sum / weight, count)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketCorrelationSeries {
    pub window_span: usize,
    pub horizon: usize,
    pub values: Vec<Option<f64>>,
    pub pair_counts: Vec<usize>,
}

pub fn market_correlation_series(panel: &ReturnPanel, span: usize) -> Result<MarketCorrelationSeries> {
    if span == 0 {
        return Err(Error::Parameter("window span must be >= 1".into()));
    }
    let prep = sweep::Prepared::new(panel);
    let pass = sweep::window_pass(panel, &prep, span, &[]);
    Ok(MarketCorrelationSeries {
        window_span: span,
        horizon: panel.horizon(),
        values: pass.s0.iter().map(|v| (!v.is_nan()).then_some(*v)).collect(),
        pair_counts: pass.pair_counts.iter().map(|&c| c as usize).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSet {
    pub level: f64,
    pub member_times: Vec<usize>,
    pub member_values: Vec<f64>,
}

impl ConditionalSet {
    pub fn mean(&self) -> Option<f64> {
        (!self.member_values.is_empty())
            .then(|| self.member_values.iter().sum::<f64>() / self.member_values.len() as f64)
    }

    pub fn len(&self) -> usize {
        self.member_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_values.is_empty()
    }
}

/// Times whose index return meets the level condition and whose correlation
/// is defined.
pub fn conditional_select(
    correlations: &[Option<f64>],
    index_returns: &[f64],
    level: f64,
) -> Result<ConditionalSet> {
    if correlations.len() != index_returns.len() {
        return Err(Error::Alignment(format!(
            "{} correlations but {} index returns",
            correlations.len(),
            index_returns.len()
        )));
    }
    let (member_times, member_values) = correlations
        .iter()
        .zip(index_returns)
        .enumerate()
        .filter_map(|(t, (c, r))| c.filter(|_| qualifies(level, *r)).map(|c| (t, c)))
        .unzip();
    Ok(ConditionalSet {
        level,
        member_times,
        member_values,
    })
}

/// Mean of the market component correlation over the conditional set for one
/// span, with the set size; `None` for an empty set.
pub fn conditional_market_correlation(
    panel: &ReturnPanel,
    level: f64,
    span: usize,
) -> Result<Option<(f64, usize)>> {
    let series = market_correlation_series(panel, span)?;
    let set = conditional_select(&series.values, &panel.index_window_returns(span), level)?;
    Ok(set.mean().map(|m| (m, set.len())))
}

/// A quantity averaged over the spans of a window range that had data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowAverage {
    pub value: f64,
    pub sample_count: usize,
    pub windows_used: usize,
    pub windows_excluded: usize,
}

fn check_range(range: (usize, usize)) -> Result<()> {
    if range.0 == 0 || range.0 >= range.1 {
        return Err(Error::Parameter(format!(
            "window range needs 1 <= dt1 < dt2, got [{}, {}]",
            range.0, range.1
        )));
    }
    Ok(())
}

fn average_spans(
    range: (usize, usize),
    mut per_span: impl FnMut(usize) -> Result<Option<(f64, usize)>>,
) -> Result<Option<WindowAverage>> {
    check_range(range)?;
    let (mut sum, mut samples, mut used) = (0.0, 0, 0);
    for span in range.0..=range.1 {
        if let Some((v, n)) = per_span(span)? {
            sum += v;
            samples += n;
            used += 1;
        }
    }
    Ok((used > 0).then(|| WindowAverage {
        value: sum / used as f64,
        sample_count: samples,
        windows_used: used,
        windows_excluded: range.1 - range.0 + 1 - used,
    }))
}

/// Conditional market correlation averaged over every integer span in `range`.
pub fn average_over_windows(
    panel: &ReturnPanel,
    level: f64,
    range: (usize, usize),
) -> Result<Option<WindowAverage>> {
    average_spans(range, |span| {
        if panel.window_starts(span) == 0 {
            return Ok(None);
        }
        conditional_market_correlation(panel, level, span)
    })
}

/// The same pipeline as [`average_over_windows`] for a single pair.
pub fn pair_conditional_correlation(
    panel: &ReturnPanel,
    x: usize,
    y: usize,
    level: f64,
    range: (usize, usize),
) -> Result<Option<WindowAverage>> {
    average_spans(range, |span| {
        if panel.window_starts(span) == 0 {
            return Ok(None);
        }
        let series = pair_correlation_series(panel, x, y, span)?;
        let set = conditional_select(&series.values, &panel.index_window_returns(span), level)?;
        Ok(set.mean().map(|m| (m, set.len())))
    })
}

/// Relative excess of the down-market over the up-market correlation;
/// `None` when `|c_plus| <= epsilon`.
pub fn relative_difference_chi(c_minus: f64, c_plus: f64, epsilon: f64) -> Option<f64> {
    (c_plus.abs() > epsilon).then(|| (c_minus - c_plus) / c_plus.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSample {
    pub pair: (String, String),
    pub level: f64,
    pub c_minus: f64,
    pub c_plus: f64,
    pub chi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiDistribution {
    pub level: f64,
    pub samples: Vec<ChiSample>,
    /// Pairs dropped because `|C(+|rho|)|` was within epsilon of zero.
    pub excluded_small_denominator: usize,
    /// Pairs lacking a value at either sign.
    pub excluded_missing: usize,
}

/// Per-pair relative differences at `|level|` from a finished sweep.
pub fn chi_distribution(result: &SweepResult, tickers: &[String], level: f64, epsilon: f64) -> ChiDistribution {
    let level = level.abs();
    let plus = result.level_index(level);
    let minus = result.level_index(-level);
    let mut out = ChiDistribution {
        level,
        samples: Vec::new(),
        excluded_small_denominator: 0,
        excluded_missing: 0,
    };
    for (p, &(x, y)) in result.pairs.iter().enumerate() {
        let values = plus
            .zip(minus)
            .and_then(|(ip, im)| Some((result.pair_levels[p][im]?, result.pair_levels[p][ip]?)));
        match values {
            None => out.excluded_missing += 1,
            Some((m, pl)) => match relative_difference_chi(m.value, pl.value, epsilon) {
                Some(chi) => out.samples.push(ChiSample {
                    pair: (tickers[x].clone(), tickers[y].clone()),
                    level,
                    c_minus: m.value,
                    c_plus: pl.value,
                    chi,
                }),
                None => out.excluded_small_denominator += 1,
            },
        }
    }
    out
}

/// For each time that meets the condition at one or more spans, the mean of
/// the market component correlation over those spans.
pub fn time_resolved_correlation(
    panel: &ReturnPanel,
    level: f64,
    range: (usize, usize),
) -> Result<Vec<TimeResolvedPoint>> {
    check_range(range)?;
    let mut sum = vec![0.0; panel.len()];
    let mut count = vec![0usize; panel.len()];
    for span in range.0..=range.1 {
        if panel.window_starts(span) == 0 {
            continue;
        }
        let series = market_correlation_series(panel, span)?;
        let set = conditional_select(&series.values, &panel.index_window_returns(span), level)?;
        for (&t, &v) in set.member_times.iter().zip(&set.member_values) {
            sum[t] += v;
            count[t] += 1;
        }
    }
    Ok((0..panel.len())
        .filter(|&t| count[t] > 0)
        .map(|t| TimeResolvedPoint {
            t,
            value: sum[t] / count[t] as f64,
            windows: count[t],
        })
        .collect())
}

/// Sweep over a level grid; the grid must hold both signs.
pub fn correlation_curve(
    panel: &ReturnPanel,
    levels: &[f64],
    range: (usize, usize),
    min_samples: usize,
) -> Result<CorrelationCurve> {
    if !(levels.iter().any(|l| *l < 0.0) && levels.iter().any(|l| *l >= 0.0)) {
        return Err(Error::Parameter(
            "level grid must contain both negative and non-negative levels".into(),
        ));
    }
    let config = SweepConfig {
        levels: levels.to_vec(),
        window_range: range,
        se_blocks: 20,
        min_samples,
    };
    Ok(conditional_sweep(panel, &config)?.curve)
}
