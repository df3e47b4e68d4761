//! Run configuration shared by every analysis command.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::condcorr::{DEFAULT_CHI_EPSILON, DEFAULT_WINDOW_RANGE};
use crate::detrend::{detrenders, Detrender, DetrendParams, DEFAULT_DETREND_WINDOW};
use crate::error::{Error, Result};
use crate::invstats::{binnings, Binning, BinningParams};

/// Flat, JSON-serialisable run settings. Every field has a default, so a
/// config file only needs the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Return horizon in trading days.
    pub delta_t: usize,
    pub dt1: usize,
    pub dt2: usize,
    /// Signed return levels. Each `|rho|` is analysed at both signs.
    pub rho_grid: Vec<f64>,
    pub detrend: String,
    pub detrend_window: usize,
    pub binning: String,
    pub bin_ratio: f64,
    pub bin_width: usize,
    pub seed: u64,
    /// Smallest pooled conditional sample for a curve point to count as
    /// well-estimated.
    pub min_samples: usize,
    pub chi_epsilon: f64,
    /// Contiguous time blocks for curve standard errors.
    pub se_blocks: usize,
    /// Smallest acceptable common calendar when aligning a panel.
    pub min_calendar: usize,
    /// Bins for exported correlation distributions.
    pub distribution_bins: usize,
    /// Minimum count in the last bin of a waiting-time tail fit.
    pub tail_min_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            delta_t: 1,
            dt1: DEFAULT_WINDOW_RANGE.0,
            dt2: DEFAULT_WINDOW_RANGE.1,
            rho_grid: vec![-0.10, -0.05, -0.03, 0.03, 0.05, 0.10],
            detrend: "centered".into(),
            detrend_window: DEFAULT_DETREND_WINDOW,
            binning: "log".into(),
            bin_ratio: 1.25,
            bin_width: 1,
            seed: 1,
            min_samples: 100,
            chi_epsilon: DEFAULT_CHI_EPSILON,
            se_blocks: 20,
            min_calendar: 60,
            distribution_bins: 40,
            tail_min_count: 5,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            context: format!("parsing config {}", path.display()),
            source,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Parameter(m));
        if self.delta_t < 1 {
            return fail("delta_t must be >= 1".into());
        }
        if self.dt1 < 1 || self.dt1 >= self.dt2 {
            return fail(format!(
                "need 1 <= dt1 < dt2, got dt1 = {}, dt2 = {}",
                self.dt1, self.dt2
            ));
        }
        if self.rho_grid.is_empty() {
            return fail("rho_grid is empty".into());
        }
        if self.rho_grid.iter().any(|r| !r.is_finite()) {
            return fail("rho_grid values must be finite".into());
        }
        if !(self.chi_epsilon >= 0.0) {
            return fail("chi_epsilon must be >= 0".into());
        }
        if self.se_blocks < 2 {
            return fail("se_blocks must be >= 2".into());
        }
        if self.distribution_bins == 0 {
            return fail("distribution_bins must be >= 1".into());
        }
        self.build_detrender()?;
        self.build_binning()?;
        Ok(())
    }

    /// The magnitudes `|rho|` of the grid, sorted and deduplicated. Fails when
    /// the grid holds a zero level.
    pub fn abs_levels(&self) -> Result<Vec<f64>> {
        if self.rho_grid.iter().any(|r| *r == 0.0) {
            return Err(Error::Parameter(
                "rho_grid contains 0; waiting times need a non-zero level".into(),
            ));
        }
        let mut levels: Vec<f64> = self.rho_grid.iter().map(|r| r.abs()).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        Ok(levels)
    }

    /// `±|rho|` for every grid magnitude, ascending. A zero entry stays a
    /// single level.
    pub fn signed_levels(&self) -> Vec<f64> {
        let mut levels: Vec<f64> = self
            .rho_grid
            .iter()
            .flat_map(|r| [r.abs(), -r.abs()])
            .map(|r| if r == 0.0 { 0.0 } else { r })
            .collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        levels
    }

    pub fn detrend_params(&self) -> DetrendParams {
        DetrendParams {
            window: self.detrend_window,
        }
    }

    pub fn build_detrender(&self) -> Result<Box<dyn Detrender>> {
        detrenders().build(&self.detrend, &self.detrend_params())
    }

    pub fn build_binning(&self) -> Result<Box<dyn Binning>> {
        binnings().build(
            &self.binning,
            &BinningParams {
                ratio: self.bin_ratio,
                width: self.bin_width,
            },
        )
    }
}
