//! Flat report records and their CSV/JSON encodings.
//!
//! Every experiment reduces to rows of
//! `experiment, space, d, n, k, strategy, seed, metric, quantity, value`,
//! sorted by `(experiment, d, n, quantity)`. Floats are written with 17
//! significant digits. Files are written through a temporary file in the
//! target directory and renamed into place, so a failed write leaves nothing
//! behind.

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::numfmt::sig17;

pub const REPORT_FORMAT_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "experiment,space,d,n,k,strategy,seed,metric,quantity,value";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub experiment: String,
    pub space: String,
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub strategy: String,
    pub seed: u64,
    pub metric: String,
    pub quantity: String,
    #[serde(serialize_with = "ser_value", deserialize_with = "de_value")]
    pub value: f64,
}

fn ser_value<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        RawValue::from_string(sig17(*v))
            .map_err(serde::ser::Error::custom)?
            .serialize(s)
    } else {
        s.serialize_none()
    }
}

fn de_value<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Serialize, Deserialize)]
struct JsonReport {
    format_version: u32,
    records: Vec<ReportRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::invalid(format!("unknown report format {other:?}"))),
        }
    }
}

/// Sorts by `(experiment, d, n, quantity)`; the sort is stable.
pub fn sort_records(records: &mut [ReportRecord]) {
    records.sort_by(|a, b| {
        (&a.experiment, a.d, a.n, &a.quantity).cmp(&(&b.experiment, b.d, b.n, &b.quantity))
    });
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_value(v: f64) -> String {
    if v.is_finite() {
        sig17(v)
    } else {
        format!("{v}")
    }
}

pub fn write_csv<W: Write + ?Sized>(records: &[ReportRecord], w: &mut W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.experiment),
            csv_field(&r.space),
            r.d,
            r.n,
            r.k,
            csv_field(&r.strategy),
            r.seed,
            csv_field(&r.metric),
            csv_field(&r.quantity),
            csv_value(r.value)
        )?;
    }
    Ok(())
}

pub fn write_json<W: Write + ?Sized>(records: &[ReportRecord], w: &mut W) -> io::Result<()> {
    let report = JsonReport {
        format_version: REPORT_FORMAT_VERSION,
        records: records.to_vec(),
    };
    serde_json::to_writer_pretty(&mut *w, &report)?;
    writeln!(w)
}

/// Writes `path` via a temporary file in the same directory.
pub fn write_atomically<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(tmp);
    write(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))?;
    let tmp = out
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Sorts `records` and writes them to `path` in `format`.
pub fn emit_report(records: &[ReportRecord], format: ReportFormat, path: &Path) -> Result<()> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    write_atomically(path, |w| match format {
        ReportFormat::Csv => write_csv(&sorted, w),
        ReportFormat::Json => write_json(&sorted, w),
    })
}

pub fn load_report_json(path: &Path) -> Result<Vec<ReportRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: JsonReport = serde_json::from_str(&text)?;
    if report.format_version != REPORT_FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported report format_version {}",
            report.format_version
        )));
    }
    Ok(report.records)
}
