//! Direction-conditioned stock-stock correlation and gain/loss asymmetry
//! analysis for daily price panels, with a seeded fear-factor market
//! simulator for controlled experiments.

pub mod condcorr;
pub mod config;
pub mod detrend;
pub mod error;
pub mod invstats;
pub mod io;
pub mod pipeline;
pub mod registry;
pub mod sim;
pub mod stats;
pub mod timeseries;

pub use error::{Error, ErrorKind, Result};
