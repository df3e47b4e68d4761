use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{log_returns_of, AlignedPanel};

/// Stock log returns and index log prices on one calendar, ready for the
/// windowed correlation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPanel {
    tickers: Vec<String>,
    returns: Vec<Vec<f64>>,
    index_log_prices: Vec<f64>,
    horizon: usize,
    pair_weights: Option<Vec<f64>>,
}

impl ReturnPanel {
    pub fn from_aligned(panel: &AlignedPanel, horizon: usize) -> Result<Self> {
        let returns = panel
            .stocks()
            .iter()
            .map(|s| {
                log_returns_of(s.closes(), horizon)
                    .map_err(|e| e.context(format!("returns of {}", s.ticker())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tickers: panel.tickers().into_iter().map(str::to_owned).collect(),
            returns,
            index_log_prices: panel.index().log_prices(),
            horizon,
            pair_weights: None,
        })
    }

    /// Builds a panel straight from log-price paths of equal length.
    pub fn from_log_prices(
        tickers: Vec<String>,
        stock_log_prices: &[Vec<f64>],
        index_log_prices: Vec<f64>,
        horizon: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Parameter("return horizon must be >= 1".into()));
        }
        if tickers.len() != stock_log_prices.len() {
            return Err(Error::Input("one ticker per stock path required".into()));
        }
        let len = index_log_prices.len();
        if stock_log_prices.iter().any(|s| s.len() != len) {
            return Err(Error::Alignment(
                "stock and index paths differ in length".into(),
            ));
        }
        if len <= horizon {
            return Err(Error::Length {
                needed: horizon,
                got: len,
            });
        }
        let returns = stock_log_prices
            .iter()
            .map(|s| s.iter().zip(&s[horizon..]).map(|(a, b)| b - a).collect())
            .collect();
        Ok(Self {
            tickers,
            returns,
            index_log_prices,
            horizon,
            pair_weights: None,
        })
    }

    /// Builds a panel from precomputed `horizon`-day stock returns; the index
    /// path must hold `horizon` more points than each return series.
    pub fn from_returns(
        tickers: Vec<String>,
        returns: Vec<Vec<f64>>,
        index_log_prices: Vec<f64>,
        horizon: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Parameter("return horizon must be >= 1".into()));
        }
        if tickers.len() != returns.len() {
            return Err(Error::Input("one ticker per return series required".into()));
        }
        if returns
            .iter()
            .any(|r| r.len() + horizon != index_log_prices.len())
        {
            return Err(Error::Alignment(
                "return series and index path lengths disagree".into(),
            ));
        }
        if index_log_prices.len() <= horizon {
            return Err(Error::Length {
                needed: horizon,
                got: index_log_prices.len(),
            });
        }
        if returns.iter().flatten().chain(&index_log_prices).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite return or index value".into()));
        }
        Ok(Self {
            tickers,
            returns,
            index_log_prices,
            horizon,
            pair_weights: None,
        })
    }

    /// Per-pair weights for the market average, indexed like [`Self::pairs`].
    /// Without weights every defined pair counts equally.
    pub fn with_pair_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        let n_pairs = self.pairs().len();
        if weights.len() != n_pairs {
            return Err(Error::Parameter(format!(
                "expected {n_pairs} pair weights, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Parameter("pair weights must be positive".into()));
        }
        self.pair_weights = Some(weights);
        Ok(self)
    }

    pub fn pair_weight(&self, pair: usize) -> f64 {
        self.pair_weights.as_ref().map_or(1.0, |w| w[pair])
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn n_stocks(&self) -> usize {
        self.returns.len()
    }

    pub fn returns(&self, stock: usize) -> &[f64] {
        &self.returns[stock]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of return observations per stock.
    pub fn len(&self) -> usize {
        self.index_log_prices.len() - self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unordered pairs `(x, y)` with `x < y`, in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_stocks();
        (0..n)
            .flat_map(|x| (x + 1..n).map(move |y| (x, y)))
            .collect()
    }

    /// Count of window starts `t` whose window `[t, t + span]` fits the data.
    pub fn window_starts(&self, span: usize) -> usize {
        self.len().saturating_sub(span)
    }

    /// Index log return `ln I(t + span) - ln I(t)` over the correlation window.
    pub fn index_return(&self, t: usize, span: usize) -> f64 {
        self.index_log_prices[t + span] - self.index_log_prices[t]
    }

    pub fn index_window_returns(&self, span: usize) -> Vec<f64> {
        (0..self.window_starts(span))
            .map(|t| self.index_return(t, span))
            .collect()
    }

    pub fn negated(&self) -> Self {
        let neg = |v: &Vec<f64>| v.iter().map(|x| -x).collect::<Vec<_>>();
        Self {
            tickers: self.tickers.clone(),
            returns: self.returns.iter().map(neg).collect(),
            index_log_prices: neg(&self.index_log_prices),
            horizon: self.horizon,
            pair_weights: self.pair_weights.clone(),
        }
    }

    pub(crate) fn check_window(&self, t: usize, span: usize) -> Result<()> {
        if span == 0 {
            return Err(Error::Parameter("window span must be >= 1".into()));
        }
        if t + span >= self.len() {
            return Err(Error::Range(format!(
                "window [{t}, {}] exceeds {} return observations",
                t + span,
                self.len()
            )));
        }
        Ok(())
    }
}
