use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use condcorr::config::RunConfig;
use condcorr::pipeline::{
    ingest_check, run_chi, run_condcorr, run_invstats, run_invstats_manifest, run_simulate,
    run_wilcoxon,
};
use condcorr::sim::SimConfig;
use condcorr::{Error, Result};

#[derive(Parser)]
#[command(name = "condcorr", version, about = "Conditional correlation and waiting-time analysis of stock panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse every file of a manifest and report the common calendar.
    IngestCheck {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 1)]
        min_calendar: usize,
    },
    /// Write a synthetic market as CSV files plus a manifest.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Gain/loss waiting-time histograms and tail fits.
    Invstats {
        /// Single price CSV to analyse.
        #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
        input: Option<PathBuf>,
        /// Analyse the index of this manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Conditional correlation curve, pair and time-resolved tests.
    Condcorr {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Rank-sum test of two files holding one value per line.
    Wilcoxon { a: PathBuf, b: PathBuf },
    /// Relative pair differences from a pair_correlations.tsv file.
    Chi {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Overrides for the fields of a run config file.
#[derive(Args)]
struct RunArgs {
    /// JSON run config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    delta_t: Option<usize>,
    #[arg(long)]
    dt1: Option<usize>,
    #[arg(long)]
    dt2: Option<usize>,
    /// Comma-separated signed levels, e.g. -0.05,0.05.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rho_grid: Option<Vec<f64>>,
    #[arg(long)]
    detrend: Option<String>,
    #[arg(long)]
    detrend_window: Option<usize>,
    #[arg(long)]
    binning: Option<String>,
    #[arg(long)]
    bin_ratio: Option<f64>,
    #[arg(long)]
    bin_width: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_samples: Option<usize>,
    #[arg(long)]
    chi_epsilon: Option<f64>,
    #[arg(long)]
    se_blocks: Option<usize>,
    #[arg(long)]
    min_calendar: Option<usize>,
    #[arg(long)]
    distribution_bins: Option<usize>,
    #[arg(long)]
    tail_min_count: Option<usize>,
}

macro_rules! apply {
    ($target:ident, $src:ident, $($field:ident),+) => {
        $(if let Some(v) = $src.$field.clone() { $target.$field = v; })+
    };
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        apply!(
            c, self, delta_t, dt1, dt2, rho_grid, detrend, detrend_window, binning, bin_ratio,
            bin_width, seed, min_samples, chi_epsilon, se_blocks, min_calendar,
            distribution_bins, tail_min_count
        );
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct SimArgs {
    /// JSON simulation config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_stocks: Option<usize>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    fear_probability: Option<f64>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    initial_log_price: Option<f64>,
    #[arg(long)]
    model: Option<String>,
}

impl SimArgs {
    fn resolve(&self) -> Result<SimConfig> {
        let mut c = match &self.config {
            Some(p) => read_json(p)?,
            None => SimConfig::default(),
        };
        apply!(c, self, n_stocks, n_steps, fear_probability, step_size, seed, initial_log_price, model);
        c.validate()?;
        Ok(c)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        context: format!("reading {}", path.display()),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        context: format!("parsing {}", path.display()),
        source,
    })
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        context: "serialising output".into(),
        source,
    })?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
            context: "writing to stdout".into(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::IngestCheck { manifest, min_calendar } => {
            print_json(&ingest_check(&manifest, min_calendar)?)
        }
        Command::Simulate { out, sim } => {
            let (_, summary) = run_simulate(&sim.resolve()?, &out)?;
            print_json(&summary)
        }
        Command::Invstats { input, manifest, out, run } => {
            let config = run.resolve()?;
            let summary = match (input, manifest) {
                (Some(i), _) => run_invstats(&i, &config, &out)?,
                (None, Some(m)) => run_invstats_manifest(&m, &config, &out)?,
                (None, None) => unreachable!("clap requires one input"),
            };
            print_json(&summary.levels)
        }
        Command::Condcorr { manifest, out, run } => {
            let config = run.resolve()?;
            let analysis = run_condcorr(&manifest, &config, &out)?;
            print_json(&analysis.sweep.curve)
        }
        Command::Wilcoxon { a, b } => print_json(&run_wilcoxon(&a, &b)?),
        Command::Chi { pairs, out, run } => {
            let config = run.resolve()?;
            let chi = run_chi(&pairs, &config, &out)?;
            let counts: Vec<_> = chi
                .iter()
                .map(|d| {
                    serde_json::json!({
                        "rho": d.level,
                        "samples": d.samples.len(),
                        "excluded_small_denominator": d.excluded_small_denominator,
                        "excluded_missing": d.excluded_missing,
                    })
                })
                .collect();
            print_json(&counts)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}
