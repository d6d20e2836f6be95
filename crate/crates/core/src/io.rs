//! CSV ingestion, run configuration and result serialization.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, TvVarError};
use crate::irf::Scheme;
use crate::panel::ObservedPanel;
use crate::select::BandwidthPolicy;
use crate::stability::RestrictionSpec;

const DATE_HEADERS: [&str; 5] = ["date", "time", "period", "quarter", "month"];

/// A loaded series with its optional date labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub panel: ObservedPanel,
    pub dates: Option<Vec<String>>,
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<ObservedPanel> {
    Ok(load_csv_with_dates(path)?.panel)
}

pub fn load_csv_with_dates(path: impl AsRef<Path>) -> Result<CsvData> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| TvVarError::Io(format!("{}: {e}", path.display())))?;
    load_csv_str(&text)
}

/// Parses a header row followed by numeric rows. A first column whose
/// header looks like a date, or whose first cell is not numeric, is kept
/// as labels. Lines and columns in errors are 1-based file positions.
pub fn load_csv_str(text: &str) -> Result<CsvData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(parse_err(1, 1, "missing header".into()));
    }
    let records: Vec<(usize, Vec<String>)> = rdr
        .records()
        .map(|r| {
            let r = r.map_err(|e| parse_err(0, 0, e.to_string()))?;
            let line = r.position().map_or(0, |p| p.line() as usize);
            Ok((line, r.iter().map(str::to_string).collect()))
        })
        .collect::<Result<_>>()?;
    let has_dates = DATE_HEADERS.contains(&header[0].to_ascii_lowercase().as_str())
        || records.first().is_some_and(|(_, r)| r.first().is_some_and(|c| c.parse::<f64>().is_err()));
    let first = usize::from(has_dates);
    let labels: Vec<String> = header[first..].to_vec();
    if labels.is_empty() {
        return Err(parse_err(1, first + 1, "no series columns".into()));
    }
    let mut rows = Vec::with_capacity(records.len());
    let mut dates = Vec::new();
    for (line, rec) in &records {
        if rec.len() != header.len() {
            return Err(parse_err(
                *line,
                rec.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        if has_dates {
            dates.push(rec[0].clone());
        }
        let mut row = Vec::with_capacity(labels.len());
        for (c, cell) in rec.iter().enumerate().skip(first) {
            if cell.is_empty() {
                return Err(parse_err(*line, c + 1, "empty cell".into()));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(*line, c + 1, format!("'{cell}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(*line, c + 1, format!("'{cell}' is not finite")));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(TvVarError::TooShort { t: rows.len(), minimum: 2 });
    }
    Ok(CsvData {
        panel: ObservedPanel::new(rows, 0, labels)?,
        dates: has_dates.then_some(dates),
    })
}

/// Writes a panel (presample rows included) in the format [`load_csv_str`] reads.
pub fn panel_csv(panel: &ObservedPanel, dates: Option<&[String]>) -> String {
    let mut out = String::new();
    if dates.is_some() {
        out.push_str("date,");
    }
    out.push_str(&panel.labels().join(","));
    out.push('\n');
    for r in 0..panel.total_rows() {
        if let Some(ds) = dates {
            out.push_str(&ds[r]);
            out.push(',');
        }
        let cells: Vec<String> = panel.row(r).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn parse_err(line: usize, column: usize, reason: String) -> TvVarError {
    TvVarError::Parse { line, column, reason }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LagPolicy {
    Fixed { p: usize },
    Select { p_max: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<String>,
    pub output: String,
    pub lag: LagPolicy,
    pub bandwidth: BandwidthPolicy,
    pub scheme: Scheme,
    pub horizons: usize,
    /// Reporting grid size `G`.
    pub grid: usize,
    pub cumulative: bool,
    /// Named restriction blocks: `all`, `intercept`, `lags`, `A1`..`Ap`.
    pub tests: Vec<String>,
    pub bootstrap: usize,
    pub trim_interior: bool,
    pub seed: u64,
    pub level: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            output: "tvvar-out".into(),
            lag: LagPolicy::Select { p_max: 4 },
            bandwidth: BandwidthPolicy::CvDefault,
            scheme: Scheme::ShortRun,
            horizons: 20,
            grid: 101,
            cumulative: false,
            tests: vec!["all".into()],
            bootstrap: 199,
            trim_interior: false,
            seed: 1,
            level: 0.95,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| TvVarError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TvVarError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    /// Field-level checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TvVarError::Config(m.into()));
        match self.lag {
            LagPolicy::Fixed { p: 0 } | LagPolicy::Select { p_max: 0 } => return bad("lag order must be positive"),
            _ => {}
        }
        match &self.bandwidth {
            BandwidthPolicy::Fixed(h) if !(*h > 0.0 && h.is_finite()) => return bad("bandwidth must be positive"),
            BandwidthPolicy::Cv(g) if g.is_empty() || g.iter().any(|h| !(*h > 0.0 && h.is_finite())) => {
                return bad("bandwidth grid must be non-empty and positive")
            }
            _ => {}
        }
        if self.grid == 0 {
            return bad("grid size must be positive");
        }
        if self.bootstrap == 0 {
            return bad("bootstrap replications must be positive");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("confidence level must lie in (0, 1)");
        }
        Ok(())
    }

    /// Resolves the named test blocks for a model of dimension `d` and lag `p`.
    pub fn restrictions(&self, d: usize, p: usize) -> Result<Vec<RestrictionSpec>> {
        self.tests.iter().map(|t| RestrictionSpec::named(t, d, p)).collect()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        json_hash(self)
    }
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Hex SHA-256 of a value's JSON form.
pub fn json_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("value serializes");
    sha256(&json).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        Provenance {
            command: command.into(),
            config_hash,
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn csv_comment(&self) -> String {
        format!(
            "# tvvar {} command={} config_hash={} seed={}\n",
            self.version, self.command, self.config_hash, self.seed
        )
    }
}

/// JSON envelope for every command's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle<T> {
    pub provenance: Provenance,
    pub result: T,
}

impl<T: Serialize> ResultBundle<T> {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, self.to_json().as_bytes())
    }
}

impl<T: for<'de> Deserialize<'de>> ResultBundle<T> {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| TvVarError::Parse {
            line: e.line(),
            column: e.column(),
            reason: e.to_string(),
        })
    }
}

pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

/// Serializes `rows` as CSV preceded by the provenance comment line.
pub fn csv_string<R: Serialize>(provenance: &Provenance, rows: &[R]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| TvVarError::Io(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| TvVarError::Io(e.to_string()))?;
    let mut out = provenance.csv_comment();
    out.push_str(std::str::from_utf8(&body).expect("csv writer emits UTF-8"));
    Ok(out)
}

pub fn write_csv<R: Serialize>(path: impl AsRef<Path>, provenance: &Provenance, rows: &[R]) -> Result<()> {
    write_file(path, csv_string(provenance, rows)?.as_bytes())
}

/// Reads rows written by [`write_csv`], skipping the comment line.
pub fn read_csv<R: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<R>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| TvVarError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            column: 0,
            reason: e.to_string(),
        })
}
