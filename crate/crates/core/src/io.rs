//! CSV ingestion, dataset manifests and plain-text result files.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::timeseries::{align_panel, AlignedPanel, PriceSeries};

pub const CSV_HEADER: [&str; 7] = ["Date", "Open", "High", "Low", "Close", "Adj Close", "Volume"];
pub const DEFAULT_PRICE_COLUMN: &str = "Adj Close";
const SIGNIFICANT_DIGITS: usize = 12;

/// Formats `x` with 12 significant digits, without trailing zeros.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..=15).contains(&exp) {
        return format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    }
    let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn ticker_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Reads a daily OHLC file and extracts `price_column`. Rows may appear in
/// any order; they are sorted by date.
pub fn ingest_csv(path: &Path, price_column: &str) -> Result<PriceSeries> {
    ingest_csv_as(path, price_column, &ticker_from_path(path))
}

pub fn ingest_csv_as(path: &Path, price_column: &str, ticker: &str) -> Result<PriceSeries> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_err = |source| Error::Csv {
        context: format!("reading {}", path.display()),
        source,
    };
    let headers = reader.headers().map_err(csv_err)?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let date_col = column("Date")?;
    let price_col = column(price_column)?;

    let row_err = |line: usize, message: String| Error::Row {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows: Vec<(NaiveDate, f64, usize)> = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                return Err(row_err(line, e.to_string()));
            }
        };
        let line = record.position().map_or(0, |p| p.line() as usize);
        let date_text = &record[date_col];
        let date = NaiveDate::parse_from_str(date_text, "%Y-%m-%d")
            .map_err(|_| row_err(line, format!("unparseable date `{date_text}`")))?;
        let price_text = &record[price_col];
        if price_text.is_empty() || price_text.eq_ignore_ascii_case("null") {
            return Err(Error::Integrity {
                path: path.to_path_buf(),
                line,
                message: format!("missing {price_column}"),
            });
        }
        let price: f64 = price_text
            .parse()
            .map_err(|_| row_err(line, format!("unparseable {price_column} `{price_text}`")))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::Integrity {
                path: path.to_path_buf(),
                line,
                message: format!("{price_column} must be positive, got `{price_text}`"),
            });
        }
        rows.push((date, price, line));
    }
    if rows.is_empty() {
        return Err(Error::Input(format!("{}: no data rows", path.display())));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        let (first, second) = (w[0].2.min(w[1].2), w[0].2.max(w[1].2));
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            line: second,
            message: format!("duplicate date {} (first seen on line {first})", w[0].0),
        });
    }
    let (dates, closes) = rows.into_iter().map(|(d, p, _)| (d, p)).unzip();
    PriceSeries::new(ticker, dates, closes).map_err(|e| e.context(path.display().to_string()))
}

/// Writes a series in the ingestion schema; every price column holds the
/// series value and volume is zero.
pub fn write_price_csv(path: &Path, series: &PriceSeries) -> Result<()> {
    let io_err = |e| Error::io(format!("writing {}", path.display()), e);
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(out, "{}", CSV_HEADER.join(",")).map_err(io_err)?;
    for (d, p) in series.dates().iter().zip(series.closes()) {
        let p = fmt_num(*p);
        writeln!(out, "{},{p},{p},{p},{p},{p},0", d.format("%Y-%m-%d")).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockFile {
    pub ticker: String,
    pub path: PathBuf,
}

fn default_price_column() -> String {
    DEFAULT_PRICE_COLUMN.into()
}

/// Lists the files making up a panel. Relative paths are taken relative to
/// the manifest's own directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub index_file: PathBuf,
    pub stock_files: Vec<StockFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date_range: Option<[NaiveDate; 2]>,
    #[serde(default = "default_price_column")]
    pub price_column: String,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|source| Error::Json {
            context: format!("parsing manifest {}", path.display()),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.index_file = base.join(&m.index_file);
        for s in &mut m.stock_files {
            s.path = base.join(&s.path);
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stock_files.len() < 2 {
            return Err(Error::Parameter(format!(
                "manifest lists {} stock files, need at least 2",
                self.stock_files.len()
            )));
        }
        let mut seen = HashSet::new();
        for s in &self.stock_files {
            if !seen.insert(&s.ticker) {
                return Err(Error::Parameter(format!("duplicate ticker `{}`", s.ticker)));
            }
        }
        if let Some([a, b]) = self.date_range {
            if a > b {
                return Err(Error::Parameter(format!("date range {a}..{b} is reversed")));
            }
        }
        Ok(())
    }

    fn in_range(&self, series: PriceSeries) -> Result<PriceSeries> {
        match self.date_range {
            None => Ok(series),
            Some([a, b]) => {
                let keep = series
                    .dates()
                    .iter()
                    .copied()
                    .filter(|d| *d >= a && *d <= b)
                    .collect();
                Ok(series.restrict_to(&keep))
            }
        }
    }

    pub fn load_index(&self) -> Result<PriceSeries> {
        self.in_range(ingest_csv(&self.index_file, &self.price_column)?)
    }

    pub fn load_stocks(&self) -> Result<Vec<PriceSeries>> {
        self.stock_files
            .iter()
            .map(|s| self.in_range(ingest_csv_as(&s.path, &self.price_column, &s.ticker)?))
            .collect()
    }

    pub fn load_panel(&self, min_calendar: usize) -> Result<AlignedPanel> {
        align_panel(self.load_stocks()?, self.load_index()?, min_calendar)
    }

    pub fn input_files(&self) -> Vec<&Path> {
        std::iter::once(self.index_file.as_path())
            .chain(self.stock_files.iter().map(|s| s.path.as_path()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("hashing {}", path.display()), e))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

pub fn hash_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<Vec<InputHash>> {
    paths
        .into_iter()
        .map(|p| {
            Ok(InputHash {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        context: format!("serialising {}", path.display()),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Tab-separated output with a fixed header.
pub struct TsvWriter {
    path: PathBuf,
    out: BufWriter<File>,
    columns: usize,
}

impl TsvWriter {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            columns: header.len(),
        };
        w.write_line(&header.join("\t"))?;
        Ok(w)
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}")
            .map_err(|e| Error::io(format!("writing {}", self.path.display()), e))
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<()> {
        debug_assert_eq!(fields.len(), self.columns);
        let line = fields.iter().map(AsRef::as_ref).collect::<Vec<_>>().join("\t");
        self.write_line(&line)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out
            .flush()
            .map_err(|e| Error::io(format!("writing {}", self.path.display()), e))
    }
}

/// Reads whitespace- or tab-separated rows with a header line and returns
/// them as string fields keyed by the header.
pub fn read_tsv(path: &Path) -> Result<(Vec<String>, Vec<(usize, Vec<String>)>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::Input(format!("{}: empty file", path.display())))?
        .1
        .split('\t')
        .map(str::to_owned)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (line, l) in lines {
        let fields: Vec<String> = l.split('\t').map(str::to_owned).collect();
        if fields.len() != header.len() {
            return Err(Error::Row {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, got {}", header.len(), fields.len()),
            });
        }
        rows.push((line, fields));
    }
    Ok((header, rows))
}

/// Reads one number per line. Blank lines, `#` comments and a leading
/// non-numeric header line are skipped.
pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut values = Vec::new();
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        match l.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Err(_) if first => {}
            _ => {
                return Err(Error::Row {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected a finite number, got `{l}`"),
                })
            }
        }
        first = false;
    }
    Ok(values)
}
