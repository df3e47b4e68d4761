//! Removal of slow drift from log-price paths before first-passage analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::timeseries::PriceSeries;

pub const DEFAULT_DETREND_WINDOW: usize = 251;

/// Log prices with a trend subtracted. `values[i]` belongs to source index
/// `offset + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detrended {
    pub values: Vec<f64>,
    pub offset: usize,
}

pub trait Detrender: Send + Sync {
    fn name(&self) -> &'static str;
    fn detrend(&self, log_prices: &[f64]) -> Result<Detrended>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetrendParams {
    pub window: usize,
}

impl Default for DetrendParams {
    fn default() -> Self {
        Self {
            window: DEFAULT_DETREND_WINDOW,
        }
    }
}

/// Prefix sums of `values - values[0]`.
fn prefix(values: &[f64]) -> Vec<f64> {
    let base = values.first().copied().unwrap_or(0.0);
    let mut out = Vec::with_capacity(values.len() + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for v in values {
        acc += v - base;
        out.push(acc);
    }
    out
}

/// `s(t)` minus the mean of `s` over the `window` days centred on `t`.
#[derive(Debug, Clone, Copy)]
pub struct CenteredMovingAverage {
    pub window: usize,
}

impl Detrender for CenteredMovingAverage {
    fn name(&self) -> &'static str {
        "centered"
    }

    fn detrend(&self, log_prices: &[f64]) -> Result<Detrended> {
        let w = self.window;
        if w < 3 || w % 2 == 0 {
            return Err(Error::Parameter(format!(
                "centered detrend window must be odd and >= 3, got {w}"
            )));
        }
        if w > log_prices.len() {
            return Err(Error::Parameter(format!(
                "detrend window {w} longer than series of length {}",
                log_prices.len()
            )));
        }
        let half = w / 2;
        let base = log_prices[0];
        let cum = prefix(log_prices);
        let values = (half..log_prices.len() - half)
            .map(|c| {
                let avg = (cum[c + half + 1] - cum[c - half]) / w as f64;
                (log_prices[c] - base) - avg
            })
            .collect();
        Ok(Detrended {
            values,
            offset: half,
        })
    }
}

/// `s(t)` minus the mean of the `window` days ending at `t`.
#[derive(Debug, Clone, Copy)]
pub struct TrailingMovingAverage {
    pub window: usize,
}

impl Detrender for TrailingMovingAverage {
    fn name(&self) -> &'static str {
        "trailing"
    }

    fn detrend(&self, log_prices: &[f64]) -> Result<Detrended> {
        let w = self.window;
        if w < 2 || w > log_prices.len() {
            return Err(Error::Parameter(format!(
                "trailing detrend window must be in [2, {}], got {w}",
                log_prices.len()
            )));
        }
        let base = log_prices[0];
        let cum = prefix(log_prices);
        let values = (w - 1..log_prices.len())
            .map(|t| (log_prices[t] - base) - (cum[t + 1] - cum[t + 1 - w]) / w as f64)
            .collect();
        Ok(Detrended {
            values,
            offset: w - 1,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NoDetrend;

impl Detrender for NoDetrend {
    fn name(&self) -> &'static str {
        "none"
    }

    fn detrend(&self, log_prices: &[f64]) -> Result<Detrended> {
        Ok(Detrended {
            values: log_prices.to_vec(),
            offset: 0,
        })
    }
}

pub fn detrenders() -> Registry<dyn Detrender, DetrendParams> {
    let mut reg: Registry<dyn Detrender, DetrendParams> = Registry::new("detrender");
    reg.register("centered", |p: &DetrendParams| {
        Ok(Box::new(CenteredMovingAverage { window: p.window }))
    })
    .register("trailing", |p: &DetrendParams| {
        Ok(Box::new(TrailingMovingAverage { window: p.window }))
    })
    .register("none", |_: &DetrendParams| Ok(Box::new(NoDetrend)));
    reg
}

/// Centred moving-average detrend of a price series in log space.
pub fn detrend_log_price(series: &PriceSeries, drift_window: usize) -> Result<Detrended> {
    CenteredMovingAverage {
        window: drift_window,
    }
    .detrend(&series.log_prices())
}
