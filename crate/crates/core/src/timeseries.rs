//! Date-indexed price series, log returns, windowed moments and panel alignment.

use std::collections::{BTreeSet, HashSet};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Dated daily closing prices of one asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    ticker: String,
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(ticker: impl Into<String>, dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        let ticker = ticker.into();
        if dates.len() != closes.len() {
            return Err(Error::Input(format!(
                "{ticker}: {} dates but {} prices",
                dates.len(),
                closes.len()
            )));
        }
        if let Some(w) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Input(format!(
                "{ticker}: dates not strictly increasing at {}",
                dates[w + 1]
            )));
        }
        if let Some(i) = closes.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Domain(format!(
                "{ticker}: non-positive price {} on {}",
                closes[i], dates[i]
            )));
        }
        Ok(Self {
            ticker,
            dates,
            closes,
        })
    }

    /// Builds a series from log prices on a synthetic weekday calendar.
    pub fn from_log_prices(ticker: impl Into<String>, log_prices: &[f64]) -> Result<Self> {
        let closes = log_prices.iter().map(|s| s.exp()).collect();
        Self::new(ticker, synthetic_calendar(log_prices.len()), closes)
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }

    pub fn log_prices(&self) -> Vec<f64> {
        self.closes.iter().map(|p| p.ln()).collect()
    }

    /// Keeps only the observations whose date is in `keep`.
    pub fn restrict_to(&self, keep: &BTreeSet<NaiveDate>) -> PriceSeries {
        let (dates, closes) = self
            .dates
            .iter()
            .zip(&self.closes)
            .filter(|(d, _)| keep.contains(d))
            .map(|(d, p)| (*d, *p))
            .unzip();
        PriceSeries {
            ticker: self.ticker.clone(),
            dates,
            closes,
        }
    }
}

/// Weekday dates starting on 2000-01-03, used for synthetic panels.
pub fn synthetic_calendar(len: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(len);
    let mut d = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    while out.len() < len {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogReturnSeries {
    pub ticker: String,
    /// Date of the interval start `t`.
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    pub horizon: usize,
}

impl LogReturnSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `ln(p[i + horizon] / p[i])` over raw prices.
pub fn log_returns_of(closes: &[f64], horizon: usize) -> Result<Vec<f64>> {
    ensure(horizon >= 1, || "return horizon must be >= 1".into())?;
    if closes.len() <= horizon {
        return Err(Error::Length {
            needed: horizon,
            got: closes.len(),
        });
    }
    if let Some(p) = closes.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::Domain(format!("non-positive price {p}")));
    }
    Ok(closes
        .iter()
        .zip(&closes[horizon..])
        .map(|(a, b)| (b / a).ln())
        .collect())
}

pub fn log_returns(series: &PriceSeries, horizon: usize) -> Result<LogReturnSeries> {
    let values = log_returns_of(series.closes(), horizon)
        .map_err(|e| e.context(format!("log returns of {}", series.ticker())))?;
    Ok(LogReturnSeries {
        ticker: series.ticker().to_owned(),
        dates: series.dates()[..values.len()].to_vec(),
        values,
        horizon,
    })
}

/// Mean and volatility of the `span + 1` returns starting at `window_start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub mean: f64,
    pub volatility: f64,
    pub window_start: usize,
    pub window_span: usize,
    pub sample_count: usize,
}

/// Population moments of `values[start..=start + span]`.
///
/// The volatility is the square root of mean-of-squares minus squared mean.
/// Values are shifted by the first window element before accumulating; the
/// variance is shift-invariant and the shift removes most of the cancellation.
pub fn window_moments(values: &[f64], start: usize, span: usize) -> Result<(f64, f64)> {
    ensure(span >= 1, || "window span must be >= 1".into())?;
    let end = start
        .checked_add(span)
        .filter(|&e| e < values.len())
        .ok_or_else(|| {
            Error::Range(format!(
                "window [{start}, {start}+{span}] exceeds series of length {}",
                values.len()
            ))
        })?;
    let window = &values[start..=end];
    let shift = window[0];
    let n = window.len() as f64;
    let (sum, sum_sq) = window.iter().fold((0.0, 0.0), |(s, q), v| {
        let d = v - shift;
        (s + d, q + d * d)
    });
    let m = sum / n;
    let var = (sum_sq / n - m * m).max(0.0);
    Ok((shift + m, var.sqrt()))
}

pub fn window_stats(
    returns: &LogReturnSeries,
    window_start: usize,
    window_span: usize,
) -> Result<WindowStats> {
    let (mean, volatility) = window_moments(&returns.values, window_start, window_span)?;
    Ok(WindowStats {
        mean,
        volatility,
        window_start,
        window_span,
        sample_count: window_span + 1,
    })
}

/// Stocks and index restricted to their common trading calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPanel {
    calendar: Vec<NaiveDate>,
    stocks: Vec<PriceSeries>,
    index: PriceSeries,
}

impl AlignedPanel {
    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn stocks(&self) -> &[PriceSeries] {
        &self.stocks
    }

    pub fn index(&self) -> &PriceSeries {
        &self.index
    }

    pub fn n_stocks(&self) -> usize {
        self.stocks.len()
    }

    pub fn len(&self) -> usize {
        self.calendar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calendar.is_empty()
    }

    pub fn tickers(&self) -> Vec<&str> {
        self.stocks.iter().map(PriceSeries::ticker).collect()
    }
}

/// Intersects all calendars and restricts every series to the result.
pub fn align_panel(
    stocks: Vec<PriceSeries>,
    index: PriceSeries,
    min_calendar: usize,
) -> Result<AlignedPanel> {
    if stocks.len() < 2 {
        return Err(Error::Input(format!(
            "panel needs at least 2 stocks, got {}",
            stocks.len()
        )));
    }
    let mut seen = HashSet::new();
    for s in &stocks {
        if !seen.insert(s.ticker()) {
            return Err(Error::Input(format!("duplicate ticker `{}`", s.ticker())));
        }
        if s.is_empty() {
            return Err(Error::Input(format!("series `{}` is empty", s.ticker())));
        }
    }
    if index.is_empty() {
        return Err(Error::Input("index series is empty".into()));
    }

    let mut common: BTreeSet<NaiveDate> = index.dates().iter().copied().collect();
    for s in &stocks {
        let dates: HashSet<&NaiveDate> = s.dates().iter().collect();
        common.retain(|d| dates.contains(d));
    }
    if common.is_empty() {
        return Err(Error::Alignment("calendars have no date in common".into()));
    }
    if common.len() < min_calendar {
        return Err(Error::Alignment(format!(
            "common calendar has {} dates, fewer than the required {min_calendar}",
            common.len()
        )));
    }

    Ok(AlignedPanel {
        calendar: common.iter().copied().collect(),
        stocks: stocks.iter().map(|s| s.restrict_to(&common)).collect(),
        index: index.restrict_to(&common),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, day).unwrap()
    }

    fn series(t: &str, days: &[u32], closes: &[f64]) -> PriceSeries {
        PriceSeries::new(t, days.iter().map(|&x| d(x)).collect(), closes.to_vec()).unwrap()
    }

    #[test]
    fn log_return_examples() {
        let r = log_returns_of(&[100.0, 105.0], 1).unwrap();
        assert!((r[0] - 0.048790164169432).abs() < 1e-12);
        assert_eq!(log_returns_of(&[50.0, 50.0, 50.0], 1).unwrap(), vec![0.0, 0.0]);
        let e = std::f64::consts::E;
        assert!((log_returns_of(&[100.0, 100.0 * e], 1).unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_return_errors() {
        assert!(matches!(log_returns_of(&[1.0], 1), Err(Error::Length { .. })));
        assert!(matches!(log_returns_of(&[1.0, 2.0], 2), Err(Error::Length { .. })));
        assert!(matches!(log_returns_of(&[1.0, 0.0], 1), Err(Error::Domain(_))));
        assert!(log_returns_of(&[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn log_return_series_keeps_start_dates() {
        let s = series("A", &[1, 2, 3, 6], &[1.0, 2.0, 4.0, 8.0]);
        let r = log_returns(&s, 2).unwrap();
        assert_eq!(r.dates, vec![d(1), d(2)]);
        assert_eq!(r.len(), 2);
        assert!((r.values[1] - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn window_stat_examples() {
        let ret = |v: &[f64]| LogReturnSeries {
            ticker: "A".into(),
            dates: synthetic_calendar(v.len()),
            values: v.to_vec(),
            horizon: 1,
        };
        let w = window_stats(&ret(&[0.01, 0.01, 0.01]), 0, 2).unwrap();
        assert!((w.mean - 0.01).abs() < 1e-15);
        assert_eq!(w.volatility, 0.0);
        assert_eq!(w.sample_count, 3);

        let w = window_stats(&ret(&[-0.01, 0.01]), 0, 1).unwrap();
        assert!(w.mean.abs() < 1e-15);
        assert!((w.volatility - 0.01).abs() < 1e-15);

        // two-pass: mean 0.02/3, deviations squared summed / 3
        let w = window_stats(&ret(&[0.01, -0.02, 0.03]), 0, 2).unwrap();
        assert!((w.mean - 0.006666666666666667).abs() < 1e-15);
        assert!((w.volatility - 0.020548046676563257).abs() < 1e-12);

        assert!(matches!(
            window_stats(&ret(&[0.01, 0.02]), 1, 1),
            Err(Error::Range(_))
        ));
        assert!(window_stats(&ret(&[0.01, 0.02]), 0, 0).is_err());
    }

    #[test]
    fn align_examples() {
        let a = series("A", &[1, 2, 3], &[1.0, 2.0, 3.0]);
        let b = series("B", &[1, 2, 3], &[3.0, 2.0, 1.0]);
        let idx = series("IDX", &[1, 2, 3], &[2.0, 2.0, 2.0]);
        let p = align_panel(vec![a.clone(), b], idx.clone(), 1).unwrap();
        assert_eq!(p.calendar(), &[d(1), d(2), d(3)]);

        let b = series("B", &[2, 3, 4], &[1.0, 2.0, 3.0]);
        let idx4 = series("IDX", &[1, 2, 3, 4], &[1.0; 4]);
        let p = align_panel(vec![a.clone(), b], idx4, 1).unwrap();
        assert_eq!(p.calendar(), &[d(2), d(3)]);
        assert_eq!(p.stocks()[0].closes(), &[2.0, 3.0]);
        assert_eq!(p.stocks()[1].closes(), &[1.0, 2.0]);
        assert_eq!(p.index().len(), 2);

        let c = series("C", &[10, 11], &[1.0, 1.0]);
        assert!(matches!(
            align_panel(vec![a.clone(), c], idx.clone(), 1),
            Err(Error::Alignment(_))
        ));
        assert!(matches!(
            align_panel(vec![a.clone(), a.clone()], idx.clone(), 1),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            align_panel(vec![a.clone()], idx.clone(), 1),
            Err(Error::Input(_))
        ));
        let b = series("B", &[1, 2, 3], &[1.0, 2.0, 3.0]);
        assert!(matches!(
            align_panel(vec![a, b], idx, 10),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn price_series_validation() {
        assert!(PriceSeries::new("A", vec![d(2), d(1)], vec![1.0, 1.0]).is_err());
        assert!(PriceSeries::new("A", vec![d(1), d(1)], vec![1.0, 1.0]).is_err());
        assert!(PriceSeries::new("A", vec![d(1)], vec![0.0]).is_err());
        assert!(PriceSeries::new("A", vec![d(1)], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn synthetic_calendar_skips_weekends() {
        let cal = synthetic_calendar(10);
        assert_eq!(cal.len(), 10);
        assert!(cal.windows(2).all(|w| w[0] < w[1]));
        assert!(cal
            .iter()
            .all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)));
    }

    proptest! {
        #[test]
        fn returns_telescope(
            closes in prop::collection::vec(0.5f64..2.0, 3..40),
            k in 1usize..10,
        ) {
            prop_assume!(k < closes.len());
            let one = log_returns_of(&closes, 1).unwrap();
            let multi = log_returns_of(&closes, k).unwrap();
            for t in 0..multi.len() {
                let s: f64 = one[t..t + k].iter().sum();
                prop_assert!((s - multi[t]).abs() < 1e-12);
            }
        }

        #[test]
        fn volatility_matches_two_pass(
            values in prop::collection::vec(-0.1f64..0.1, 2..80),
            offset in -1e3f64..1e3,
        ) {
            let shifted: Vec<f64> = values.iter().map(|v| v + offset).collect();
            let span = shifted.len() - 1;
            let (_, vol) = window_moments(&shifted, 0, span).unwrap();
            let n = shifted.len() as f64;
            let mean = shifted.iter().sum::<f64>() / n;
            let two_pass = (shifted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!((vol - two_pass).abs() < 1e-12, "{vol} vs {two_pass}");
        }

        #[test]
        fn aligned_calendar_is_subset(
            a in prop::collection::btree_set(1u32..28, 1..20),
            b in prop::collection::btree_set(1u32..28, 1..20),
            i in prop::collection::btree_set(1u32..28, 1..20),
        ) {
            let mk = |t: &str, days: &BTreeSet<u32>| {
                let days: Vec<u32> = days.iter().copied().collect();
                series(t, &days, &vec![1.0; days.len()])
            };
            match align_panel(vec![mk("A", &a), mk("B", &b)], mk("I", &i), 1) {
                Ok(p) => {
                    prop_assert!(p.calendar().windows(2).all(|w| w[0] < w[1]));
                    for day in p.calendar() {
                        let day = day.day();
                        prop_assert!(a.contains(&day) && b.contains(&day) && i.contains(&day));
                    }
                }
                Err(Error::Alignment(_)) => {
                    prop_assert!(a.iter().all(|x| !(b.contains(x) && i.contains(x))));
                }
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
    }
}
