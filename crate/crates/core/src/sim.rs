//! Seeded synthetic markets built from binary log-price steps.
//!
//! The fear-factor model: on each step, with probability `p`, every stock
//! drops by `delta` together. Otherwise each stock independently moves up
//! with probability `q` or down with `1 - q`, where `q` is chosen so every
//! stock on its own is a fair walk (`P(down) = p + (1 - p)(1 - q) = 1/2`).

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::stats::{seeded_rng, SeededRng};
use crate::timeseries::{align_panel, AlignedPanel, PriceSeries};

pub const INDEX_TICKER: &str = "INDEX";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_stocks: usize,
    pub n_steps: usize,
    pub fear_probability: f64,
    pub step_size: f64,
    pub seed: u64,
    pub initial_log_price: f64,
    pub model: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_stocks: 30,
            n_steps: 10_000,
            fear_probability: 0.05,
            step_size: 0.01,
            seed: 1,
            initial_log_price: 0.0,
            model: "fear-factor".into(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_stocks == 0 {
            return Err(Error::Parameter("n_stocks must be >= 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Parameter(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if !self.initial_log_price.is_finite() {
            return Err(Error::Parameter("initial log price must be finite".into()));
        }
        derive_up_probability(self.fear_probability).map(|_| ())
    }
}

/// Up-move probability on calm steps that keeps each stock's marginal fair.
pub fn derive_up_probability(fear_probability: f64) -> Result<f64> {
    let p = fear_probability;
    if !(0.0..0.5).contains(&p) {
        return Err(Error::Parameter(format!(
            "fear probability must lie in [0, 0.5), got {p}"
        )));
    }
    Ok(1.0 / (2.0 * (1.0 - p)))
}

/// One step of a synthetic market: fills `increments` and reports whether the
/// step was a synchronized fear move.
pub trait MarketModel: Send + Sync {
    fn name(&self) -> &'static str;
    fn step(&self, rng: &mut SeededRng, increments: &mut [f64]) -> bool;
}

#[derive(Debug, Clone, Copy)]
pub struct FearFactor {
    pub fear_probability: f64,
    pub up_probability: f64,
    pub step_size: f64,
}

impl FearFactor {
    pub fn new(fear_probability: f64, step_size: f64) -> Result<Self> {
        Ok(Self {
            fear_probability,
            up_probability: derive_up_probability(fear_probability)?,
            step_size,
        })
    }
}

impl MarketModel for FearFactor {
    fn name(&self) -> &'static str {
        "fear-factor"
    }

    fn step(&self, rng: &mut SeededRng, increments: &mut [f64]) -> bool {
        let u: f64 = rng.random();
        if u < self.fear_probability {
            increments.fill(-self.step_size);
            return true;
        }
        for inc in increments.iter_mut() {
            let v: f64 = rng.random();
            *inc = if v < self.up_probability {
                self.step_size
            } else {
                -self.step_size
            };
        }
        false
    }
}

/// Independent fair coin flips per stock; ignores the fear probability.
#[derive(Debug, Clone, Copy)]
pub struct IndependentWalks {
    pub step_size: f64,
}

impl MarketModel for IndependentWalks {
    fn name(&self) -> &'static str {
        "independent"
    }

    fn step(&self, rng: &mut SeededRng, increments: &mut [f64]) -> bool {
        for inc in increments.iter_mut() {
            *inc = if rng.random::<bool>() {
                self.step_size
            } else {
                -self.step_size
            };
        }
        false
    }
}

pub fn market_models() -> Registry<dyn MarketModel, SimConfig> {
    let mut reg: Registry<dyn MarketModel, SimConfig> = Registry::new("market model");
    reg.register("fear-factor", |c: &SimConfig| {
        Ok(Box::new(FearFactor::new(c.fear_probability, c.step_size)?))
    })
    .register("independent", |c: &SimConfig| {
        Ok(Box::new(IndependentWalks {
            step_size: c.step_size,
        }))
    });
    reg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPanel {
    /// One path of `n_steps + 1` log prices per stock.
    pub log_prices: Vec<Vec<f64>>,
    pub fear_step_flags: Vec<bool>,
    pub index_log_price: Vec<f64>,
}

impl SimPanel {
    pub fn n_stocks(&self) -> usize {
        self.log_prices.len()
    }

    pub fn n_steps(&self) -> usize {
        self.fear_step_flags.len()
    }

    pub fn increments(&self, stock: usize) -> Vec<f64> {
        self.log_prices[stock].windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn ticker(i: usize) -> String {
        format!("S{i:02}")
    }

    /// Stocks and index on a synthetic weekday calendar.
    pub fn to_aligned_panel(&self) -> Result<AlignedPanel> {
        let stocks = self
            .log_prices
            .iter()
            .enumerate()
            .map(|(i, s)| PriceSeries::from_log_prices(Self::ticker(i), s))
            .collect::<Result<Vec<_>>>()?;
        let index = PriceSeries::from_log_prices(INDEX_TICKER, &self.index_log_price)?;
        align_panel(stocks, index, 1)
    }
}

pub fn simulate_market(config: &SimConfig) -> Result<SimPanel> {
    config.validate()?;
    let model = market_models().build(&config.model, config)?;
    let n = config.n_stocks;
    let mut rng = seeded_rng(config.seed);
    let mut log_prices: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut v = Vec::with_capacity(config.n_steps + 1);
            v.push(config.initial_log_price);
            v
        })
        .collect();
    let mut flags = Vec::with_capacity(config.n_steps);
    let mut increments = vec![0.0; n];
    for _ in 0..config.n_steps {
        flags.push(model.step(&mut rng, &mut increments));
        for (path, inc) in log_prices.iter_mut().zip(&increments) {
            let last = *path.last().unwrap();
            path.push(last + inc);
        }
    }
    let index_log_price = index_log_prices(&log_prices);
    Ok(SimPanel {
        log_prices,
        fear_step_flags: flags,
        index_log_price,
    })
}

/// Log of the equal-weight mean price, via log-sum-exp.
pub fn index_log_prices(log_prices: &[Vec<f64>]) -> Vec<f64> {
    let len = log_prices.iter().map(Vec::len).min().unwrap_or(0);
    let ln_n = (log_prices.len() as f64).ln();
    (0..len)
        .map(|t| {
            let top = log_prices
                .iter()
                .map(|s| s[t])
                .fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = log_prices.iter().map(|s| (s[t] - top).exp()).sum();
            top + sum.ln() - ln_n
        })
        .collect()
}

/// Equal-weight average of member closing prices on a shared calendar.
pub fn build_index(stocks: &[PriceSeries]) -> Result<Vec<f64>> {
    let first = stocks
        .first()
        .ok_or_else(|| Error::Input("index needs at least one stock".into()))?;
    if stocks.iter().any(|s| s.dates() != first.dates()) {
        return Err(Error::Alignment(
            "index members must share one calendar".into(),
        ));
    }
    let n = stocks.len() as f64;
    Ok((0..first.len())
        .map(|t| stocks.iter().map(|s| s.closes()[t]).sum::<f64>() / n)
        .collect())
}
