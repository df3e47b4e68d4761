//! End-to-end runs that read inputs, call the analysis modules and write
//! result files plus a JSON summary.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::condcorr::{
    chi_distribution, conditional_sweep, relative_difference_chi, ChiDistribution, ChiSample,
    CurvePoint, ReturnPanel, SweepConfig, SweepResult,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::invstats::{default_fit_range, fit_tail_exponent, gain_loss_report, TailFit, WaitingTimeHistogram};
use crate::io::{
    fmt_num, hash_inputs, ingest_csv, read_tsv, read_values, write_json, write_price_csv,
    DatasetManifest, InputHash, StockFile, TsvWriter, DEFAULT_PRICE_COLUMN,
};
use crate::sim::{simulate_market, SimConfig, SimPanel, INDEX_TICKER};
use crate::stats::{
    balance_samples, distribution_histogram, wilcoxon_rank_sum, HistogramBins, RankSumResult,
};
use crate::timeseries::{synthetic_calendar, AlignedPanel, PriceSeries};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const WILCOXON_HEADER: [&str; 4] = ["rho", "z", "log10_p", "n"];

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating output directory {}", dir.display()), e))
}

/// Rank-sum comparison of `+|rho|` (sample A) against `-|rho|` (sample B).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTest {
    pub rho: f64,
    pub result: RankSumResult,
}

impl LevelTest {
    fn tsv_row(&self) -> [String; 4] {
        [
            fmt_num(self.rho),
            fmt_num(self.result.z),
            fmt_num(self.result.log10_p),
            (self.result.n_a + self.result.n_b).to_string(),
        ]
    }
}

fn write_tests(path: &Path, tests: &[LevelTest]) -> Result<()> {
    let mut w = TsvWriter::create(path, &WILCOXON_HEADER)?;
    for t in tests {
        w.row(&t.tsv_row())?;
    }
    w.finish()
}

/// Everything computed by the conditional-correlation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondCorrAnalysis {
    pub tickers: Vec<String>,
    pub observations: usize,
    pub sweep: SweepResult,
    /// `|rho|` values present at both signs.
    pub abs_levels: Vec<f64>,
    pub pair_tests: Vec<LevelTest>,
    pub time_tests: Vec<LevelTest>,
    pub chi: Vec<ChiDistribution>,
    /// Levels whose comparison could not run, with the reason.
    pub skipped_tests: Vec<(f64, String)>,
}

impl CondCorrAnalysis {
    pub fn pair_test(&self, rho: f64) -> Option<&RankSumResult> {
        self.pair_tests.iter().find(|t| t.rho == rho).map(|t| &t.result)
    }

    pub fn time_test(&self, rho: f64) -> Option<&RankSumResult> {
        self.time_tests.iter().find(|t| t.rho == rho).map(|t| &t.result)
    }

    pub fn curve_point(&self, rho: f64) -> Option<&CurvePoint> {
        self.sweep.curve.point(rho)
    }
}

fn paired_abs_levels(levels: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = levels
        .iter()
        .filter(|&&l| l > 0.0 && levels.contains(&-l))
        .copied()
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Runs the sweep and the significance tests on an in-memory panel.
pub fn condcorr_analysis(panel: &ReturnPanel, config: &RunConfig) -> Result<CondCorrAnalysis> {
    config.validate()?;
    let levels = config.signed_levels();
    let sweep = conditional_sweep(
        panel,
        &SweepConfig {
            levels: levels.clone(),
            window_range: (config.dt1, config.dt2),
            se_blocks: config.se_blocks,
            min_samples: config.min_samples,
        },
    )?;
    let abs_levels = paired_abs_levels(&levels);
    let mut pair_tests = Vec::new();
    let mut time_tests = Vec::new();
    let mut skipped_tests = Vec::new();
    let mut chi = Vec::new();
    for (i, &rho) in abs_levels.iter().enumerate() {
        let (plus, minus) = (sweep.pair_values(rho), sweep.pair_values(-rho));
        match wilcoxon_rank_sum(&plus, &minus) {
            Ok(result) => pair_tests.push(LevelTest { rho, result }),
            Err(e) => skipped_tests.push((rho, format!("pair test: {e}"))),
        }
        let (plus, minus) = (sweep.time_values(rho), sweep.time_values(-rho));
        let time = if plus.is_empty() || minus.is_empty() {
            Err(Error::EmptyData("no qualifying times at one sign".into()))
        } else {
            balance_samples(&plus, &minus, config.seed.wrapping_add(i as u64))
                .and_then(|(a, b)| wilcoxon_rank_sum(&a, &b))
        };
        match time {
            Ok(result) => time_tests.push(LevelTest { rho, result }),
            Err(e) => skipped_tests.push((rho, format!("time test: {e}"))),
        }
        chi.push(chi_distribution(&sweep, panel.tickers(), rho, config.chi_epsilon));
    }
    Ok(CondCorrAnalysis {
        tickers: panel.tickers().to_vec(),
        observations: panel.len(),
        sweep,
        abs_levels,
        pair_tests,
        time_tests,
        chi,
        skipped_tests,
    })
}

/// Edges spanning both samples so paired distributions share bins.
fn shared_edges(a: &[f64], b: &[f64], bins: usize) -> Option<HistogramBins> {
    let all = a.iter().chain(b);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return None;
    }
    let (lo, hi) = if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);
    Some(HistogramBins::Edges(edges))
}

fn write_distribution(
    w: &mut TsvWriter,
    rho: f64,
    values: &[f64],
    bins: &HistogramBins,
) -> Result<()> {
    if values.is_empty() {
        return Ok(());
    }
    let h = distribution_histogram(values, bins)?;
    for (c, d) in h.centers().iter().zip(&h.densities) {
        w.row(&[fmt_num(rho), fmt_num(*c), fmt_num(*d)])?;
    }
    Ok(())
}

fn write_chi(out_dir: &Path, chi: &[ChiDistribution], bins: usize) -> Result<()> {
    let mut w = TsvWriter::create(&out_dir.join("chi.tsv"), &["x", "y", "rho", "C_minus", "C_plus", "chi"])?;
    for s in chi.iter().flat_map(|d| &d.samples) {
        w.row(&[
            s.pair.0.clone(),
            s.pair.1.clone(),
            fmt_num(s.level),
            fmt_num(s.c_minus),
            fmt_num(s.c_plus),
            fmt_num(s.chi),
        ])?;
    }
    w.finish()?;
    let mut w = TsvWriter::create(&out_dir.join("chi_distribution.tsv"), &["rho", "chi", "density"])?;
    for d in chi {
        let values: Vec<f64> = d.samples.iter().map(|s| s.chi).collect();
        if let Some(bins) = shared_edges(&values, &[], bins) {
            write_distribution(&mut w, d.level, &values, &bins)?;
        }
    }
    w.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiCounts {
    pub rho: f64,
    pub samples: usize,
    pub excluded_small_denominator: usize,
    pub excluded_missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondCorrSummary {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub manifest: Option<String>,
    pub inputs: Vec<InputHash>,
    pub tickers: Vec<String>,
    pub calendar: Option<(NaiveDate, NaiveDate)>,
    pub observations: usize,
    pub pairs: usize,
    pub curve: Vec<CurvePoint>,
    pub pair_tests: Vec<LevelTest>,
    pub time_tests: Vec<LevelTest>,
    pub chi: Vec<ChiCounts>,
    pub skipped_tests: Vec<(f64, String)>,
}

/// Writes every conditional-correlation output file into `out_dir`.
pub fn write_condcorr(
    analysis: &CondCorrAnalysis,
    config: &RunConfig,
    out_dir: &Path,
    manifest: Option<&Path>,
    inputs: Vec<InputHash>,
    calendar: Option<(NaiveDate, NaiveDate)>,
) -> Result<CondCorrSummary> {
    create_dir(out_dir)?;
    let sweep = &analysis.sweep;

    let mut w = TsvWriter::create(&out_dir.join("curve.tsv"), &["rho", "C", "n_samples", "n_excluded"])?;
    for p in &sweep.curve.points {
        w.row(&[
            fmt_num(p.rho),
            fmt_num(p.value),
            p.n_samples.to_string(),
            p.n_excluded.to_string(),
        ])?;
    }
    w.finish()?;

    let mut w = TsvWriter::create(&out_dir.join("curve_by_window.tsv"), &["rho", "dt", "C0", "n_samples"])?;
    let mut order: Vec<usize> = (0..sweep.levels.len()).collect();
    order.sort_by(|&a, &b| sweep.levels[a].total_cmp(&sweep.levels[b]));
    for &l in &order {
        for (k, v) in sweep.by_window[l].iter().enumerate() {
            if let Some((c0, n)) = v {
                w.row(&[
                    fmt_num(sweep.levels[l]),
                    (config.dt1 + k).to_string(),
                    fmt_num(*c0),
                    n.to_string(),
                ])?;
            }
        }
    }
    w.finish()?;

    let mut w = TsvWriter::create(
        &out_dir.join("pair_correlations.tsv"),
        &["x", "y", "rho", "C", "n_samples", "n_excluded"],
    )?;
    for (p, &(x, y)) in sweep.pairs.iter().enumerate() {
        for &l in &order {
            if let Some(a) = sweep.pair_levels[p][l] {
                w.row(&[
                    analysis.tickers[x].clone(),
                    analysis.tickers[y].clone(),
                    fmt_num(sweep.levels[l]),
                    fmt_num(a.value),
                    a.sample_count.to_string(),
                    a.windows_excluded.to_string(),
                ])?;
            }
        }
    }
    w.finish()?;

    write_chi(out_dir, &analysis.chi, config.distribution_bins)?;

    let mut w = TsvWriter::create(&out_dir.join("ct_distribution.tsv"), &["rho", "C_t", "density"])?;
    for &rho in &analysis.abs_levels {
        let (plus, minus) = (sweep.time_values(rho), sweep.time_values(-rho));
        if let Some(bins) = shared_edges(&plus, &minus, config.distribution_bins) {
            write_distribution(&mut w, -rho, &minus, &bins)?;
            write_distribution(&mut w, rho, &plus, &bins)?;
        }
    }
    w.finish()?;

    write_tests(&out_dir.join("wilcoxon_pairs.tsv"), &analysis.pair_tests)?;
    write_tests(&out_dir.join("wilcoxon_time.tsv"), &analysis.time_tests)?;

    let summary = CondCorrSummary {
        command: "condcorr".into(),
        version: VERSION.into(),
        config: config.clone(),
        manifest: manifest.map(|m| m.display().to_string()),
        inputs,
        tickers: analysis.tickers.clone(),
        calendar,
        observations: analysis.observations,
        pairs: sweep.pairs.len(),
        curve: sweep.curve.points.clone(),
        pair_tests: analysis.pair_tests.clone(),
        time_tests: analysis.time_tests.clone(),
        chi: analysis
            .chi
            .iter()
            .map(|d| ChiCounts {
                rho: d.level,
                samples: d.samples.len(),
                excluded_small_denominator: d.excluded_small_denominator,
                excluded_missing: d.excluded_missing,
            })
            .collect(),
        skipped_tests: analysis.skipped_tests.clone(),
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn calendar_span(panel: &AlignedPanel) -> Option<(NaiveDate, NaiveDate)> {
    Some((*panel.calendar().first()?, *panel.calendar().last()?))
}

/// Conditional-correlation run over the panel described by a manifest.
pub fn run_condcorr(manifest_path: &Path, config: &RunConfig, out_dir: &Path) -> Result<CondCorrAnalysis> {
    config.validate()?;
    let manifest = DatasetManifest::load(manifest_path)?;
    let panel = manifest.load_panel(config.min_calendar)?;
    let returns = ReturnPanel::from_aligned(&panel, config.delta_t)?;
    let analysis = condcorr_analysis(&returns, config)?;
    let inputs = hash_inputs(manifest.input_files())?;
    write_condcorr(
        &analysis,
        config,
        out_dir,
        Some(manifest_path),
        inputs,
        calendar_span(&panel),
    )?;
    Ok(analysis)
}

/// Waiting-time results for one `|rho|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub rho: f64,
    pub gain_mode: f64,
    pub loss_mode: f64,
    pub asymmetry: f64,
    pub gain_samples: usize,
    pub loss_samples: usize,
    pub gain_censored: usize,
    pub loss_censored: usize,
    pub gain_tail: std::result::Result<TailFit, String>,
    pub loss_tail: std::result::Result<TailFit, String>,
    pub gain_file: String,
    pub loss_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvStatsSummary {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub inputs: Vec<InputHash>,
    pub ticker: String,
    pub observations: usize,
    pub detrended_points: usize,
    pub levels: Vec<LevelSummary>,
}

fn tail_of(hist: &WaitingTimeHistogram, min_count: usize) -> std::result::Result<TailFit, String> {
    default_fit_range(hist, min_count)
        .and_then(|r| fit_tail_exponent(hist, r))
        .map_err(|e| e.to_string())
}

fn write_waiting_times(path: &Path, hist: &WaitingTimeHistogram) -> Result<()> {
    let mut w = TsvWriter::create(path, &["tau_center", "density"])?;
    for (c, d) in hist.centers.iter().zip(&hist.densities) {
        w.row(&[fmt_num(*c), fmt_num(*d)])?;
    }
    w.finish()
}

/// Gain/loss waiting-time analysis of one price series.
pub fn invstats_analysis(series: &PriceSeries, config: &RunConfig) -> Result<(Vec<crate::invstats::LevelAsymmetry>, usize)> {
    config.validate()?;
    let levels = config.abs_levels()?;
    let detrended = config.build_detrender()?.detrend(&series.log_prices())?;
    let binning = config.build_binning()?;
    let report = gain_loss_report(&detrended.values, &levels, binning.as_ref())?;
    Ok((report, detrended.values.len()))
}

pub fn run_invstats(input: &Path, config: &RunConfig, out_dir: &Path) -> Result<InvStatsSummary> {
    config.validate()?;
    config.abs_levels()?;
    let series = ingest_csv(input, DEFAULT_PRICE_COLUMN)
        .or_else(|e| match e {
            Error::Schema { .. } => ingest_csv(input, "Close"),
            other => Err(other),
        })?;
    run_invstats_series(&series, config, out_dir, hash_inputs([input])?)
}

/// Like [`run_invstats`] with the index of a manifest as input.
pub fn run_invstats_manifest(manifest_path: &Path, config: &RunConfig, out_dir: &Path) -> Result<InvStatsSummary> {
    config.validate()?;
    config.abs_levels()?;
    let manifest = DatasetManifest::load(manifest_path)?;
    let series = manifest.load_index()?;
    run_invstats_series(&series, config, out_dir, hash_inputs([manifest.index_file.as_path()])?)
}

pub fn run_invstats_series(
    series: &PriceSeries,
    config: &RunConfig,
    out_dir: &Path,
    inputs: Vec<InputHash>,
) -> Result<InvStatsSummary> {
    let (report, detrended_points) = invstats_analysis(series, config)?;
    create_dir(out_dir)?;
    let mut levels = Vec::new();
    for r in &report {
        let gain_file = format!("waiting_times_+{}.tsv", fmt_num(r.level));
        let loss_file = format!("waiting_times_-{}.tsv", fmt_num(r.level));
        write_waiting_times(&out_dir.join(&gain_file), &r.gain)?;
        write_waiting_times(&out_dir.join(&loss_file), &r.loss)?;
        levels.push(LevelSummary {
            rho: r.level,
            gain_mode: r.gain_mode,
            loss_mode: r.loss_mode,
            asymmetry: r.asymmetry,
            gain_samples: r.gain.total_samples,
            loss_samples: r.loss.total_samples,
            gain_censored: r.gain.censored_count,
            loss_censored: r.loss.censored_count,
            gain_tail: tail_of(&r.gain, config.tail_min_count),
            loss_tail: tail_of(&r.loss, config.tail_min_count),
            gain_file,
            loss_file,
        });
    }
    let summary = InvStatsSummary {
        command: "invstats".into(),
        version: VERSION.into(),
        config: config.clone(),
        inputs,
        ticker: series.ticker().to_string(),
        observations: series.len(),
        detrended_points,
        levels,
    };
    write_json(&out_dir.join("invstats_summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub command: String,
    pub version: String,
    pub config: SimConfig,
    pub manifest: String,
    pub files: Vec<String>,
    pub fear_steps: usize,
}

/// Simulates a market and writes it as CSV files with a manifest.
pub fn run_simulate(config: &SimConfig, out_dir: &Path) -> Result<(SimPanel, SimulateSummary)> {
    config.validate()?;
    let sim = simulate_market(config)?;
    create_dir(out_dir)?;
    let calendar = synthetic_calendar(sim.n_steps() + 1);
    let to_series = |ticker: String, log_prices: &[f64]| {
        PriceSeries::new(ticker, calendar.clone(), log_prices.iter().map(|v| v.exp()).collect())
    };
    let mut files = Vec::new();
    let mut stock_files = Vec::new();
    for (i, lp) in sim.log_prices.iter().enumerate() {
        let ticker = SimPanel::ticker(i);
        let name = format!("{ticker}.csv");
        write_price_csv(&out_dir.join(&name), &to_series(ticker.clone(), lp)?)?;
        stock_files.push(StockFile {
            ticker,
            path: PathBuf::from(&name),
        });
        files.push(name);
    }
    let index_name = format!("{INDEX_TICKER}.csv");
    write_price_csv(
        &out_dir.join(&index_name),
        &to_series(INDEX_TICKER.into(), &sim.index_log_price)?,
    )?;
    files.push(index_name.clone());
    let manifest = DatasetManifest {
        index_file: index_name.into(),
        stock_files,
        date_range: None,
        price_column: DEFAULT_PRICE_COLUMN.into(),
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    let summary = SimulateSummary {
        command: "simulate".into(),
        version: VERSION.into(),
        config: config.clone(),
        manifest: "manifest.json".into(),
        files,
        fear_steps: sim.fear_step_flags.iter().filter(|f| **f).count(),
    };
    write_json(&out_dir.join("simulation.json"), &summary)?;
    Ok((sim, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileCheck {
    pub ticker: String,
    pub path: String,
    pub rows: usize,
    pub first: NaiveDate,
    pub last: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub files: Vec<FileCheck>,
    pub common_calendar: usize,
    pub calendar: Option<(NaiveDate, NaiveDate)>,
}

/// Parses every file of a manifest and reports the aligned calendar.
pub fn ingest_check(manifest_path: &Path, min_calendar: usize) -> Result<IngestReport> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let panel = manifest.load_panel(min_calendar)?;
    let raw = std::iter::once((INDEX_TICKER.to_string(), manifest.index_file.clone(), manifest.load_index()?))
        .chain(
            manifest
                .stock_files
                .iter()
                .zip(manifest.load_stocks()?)
                .map(|(f, s)| (f.ticker.clone(), f.path.clone(), s)),
        );
    let files = raw
        .map(|(ticker, path, s)| {
            Ok(FileCheck {
                ticker,
                path: path.display().to_string(),
                rows: s.len(),
                first: *s.dates().first().ok_or_else(|| Error::EmptyData(format!("{} has no rows in range", path.display())))?,
                last: *s.dates().last().unwrap(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IngestReport {
        files,
        common_calendar: panel.len(),
        calendar: calendar_span(&panel),
    })
}

/// Standalone rank-sum test of two single-column value files.
pub fn run_wilcoxon(a: &Path, b: &Path) -> Result<RankSumResult> {
    wilcoxon_rank_sum(&read_values(a)?, &read_values(b)?)
}

/// Relative differences recomputed from a `pair_correlations.tsv` file.
pub fn run_chi(pair_file: &Path, config: &RunConfig, out_dir: &Path) -> Result<Vec<ChiDistribution>> {
    config.validate()?;
    let (header, rows) = read_tsv(pair_file)?;
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            path: pair_file.to_path_buf(),
            column: name.into(),
        })
    };
    let (cx, cy, cr, cc) = (col("x")?, col("y")?, col("rho")?, col("C")?);
    let mut values: std::collections::BTreeMap<(String, String), Vec<(f64, f64)>> = Default::default();
    for (line, f) in rows {
        let num = |i: usize| {
            f[i].parse::<f64>().map_err(|_| Error::Row {
                path: pair_file.to_path_buf(),
                line,
                message: format!("unparseable number `{}`", f[i]),
            })
        };
        let (rho, c) = (num(cr)?, num(cc)?);
        values.entry((f[cx].clone(), f[cy].clone())).or_default().push((rho, c));
    }
    let mut levels: Vec<f64> = values
        .values()
        .flatten()
        .filter(|(r, _)| *r > 0.0)
        .map(|(r, _)| *r)
        .collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let lookup = |v: &[(f64, f64)], rho: f64| v.iter().find(|(r, _)| *r == rho).map(|(_, c)| *c);
    let mut out = Vec::new();
    for rho in levels {
        let mut d = ChiDistribution {
            level: rho,
            samples: Vec::new(),
            excluded_small_denominator: 0,
            excluded_missing: 0,
        };
        for (pair, v) in &values {
            match (lookup(v, -rho), lookup(v, rho)) {
                (Some(m), Some(p)) => match relative_difference_chi(m, p, config.chi_epsilon) {
                    Some(chi) => d.samples.push(ChiSample {
                        pair: pair.clone(),
                        level: rho,
                        c_minus: m,
                        c_plus: p,
                        chi,
                    }),
                    None => d.excluded_small_denominator += 1,
                },
                _ => d.excluded_missing += 1,
            }
        }
        out.push(d);
    }
    create_dir(out_dir)?;
    write_chi(out_dir, &out, config.distribution_bins)?;
    Ok(out)
}
