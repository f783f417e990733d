//! Text serialization of datasets.
//!
//! Line 1 is a JSON header `{format_version, kind, d, n, seed, metric_variant}`.
//! Each of the following `n` lines holds one point: lowercase hex of the packed
//! bits for Hamming cubes (bit 0 is the most significant bit of the first
//! byte, zero padded to whole bytes), or `d` space-separated floats with 17
//! significant digits for real spaces.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::sig17;
use crate::spaces::{BitString, Dataset, Point, SpaceKind, SphereMetric};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub kind: String,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub metric_variant: Option<SphereMetric>,
}

impl DatasetHeader {
    pub fn for_dataset(ds: &Dataset) -> Self {
        let space = ds.space();
        DatasetHeader {
            format_version: FORMAT_VERSION,
            kind: space.kind_name().to_string(),
            d: space.dim(),
            n: ds.len(),
            seed: ds.seed(),
            metric_variant: space.sphere_metric(),
        }
    }

    pub fn space(&self) -> Result<SpaceKind> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported dataset format_version {}",
                self.format_version
            )));
        }
        space_from_parts(&self.kind, self.d, self.metric_variant)
    }
}

/// Builds a space from its textual kind, dimension and optional sphere metric.
pub fn space_from_parts(kind: &str, d: usize, metric: Option<SphereMetric>) -> Result<SpaceKind> {
    match kind {
        "hamming" => SpaceKind::hamming(d),
        "sphere" => SpaceKind::sphere(d, metric.unwrap_or_default()),
        "ball" => SpaceKind::ball(d),
        other => Err(Error::invalid(format!("unknown space kind {other:?}"))),
    }
}

/// Textual form of one point, as used on dataset lines.
pub fn format_point(p: &Point) -> String {
    match p {
        Point::Bits(b) => b.to_hex(),
        Point::Real(v) => v.iter().map(|c| sig17(*c)).collect::<Vec<_>>().join(" "),
    }
}

/// Parses one dataset line for `space`, validating the result.
pub fn parse_point(space: &SpaceKind, line: &str) -> Result<Point> {
    let line = line.trim();
    let p = match space {
        SpaceKind::HammingCube { d } => Point::Bits(BitString::from_hex(line, *d)?),
        _ => Point::Real(
            line.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad float {t:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    space.validate_point(&p)?;
    Ok(p)
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut w: W) -> std::io::Result<()> {
    let header = serde_json::to_string(&DatasetHeader::for_dataset(ds))?;
    writeln!(w, "{header}")?;
    for p in ds.points() {
        writeln!(w, "{}", format_point(p))?;
    }
    w.flush()
}

pub fn read_dataset<R: Read>(r: R) -> Result<Dataset> {
    let mut lines = BufReader::new(r).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Parse("empty dataset file".into()))?
        .map_err(|e| Error::Parse(e.to_string()))?;
    let header: DatasetHeader = serde_json::from_str(&header_line)?;
    let space = header.space()?;
    let mut points = Vec::with_capacity(header.n);
    for (j, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let p =
            parse_point(&space, &line).map_err(|e| Error::Parse(format!("line {}: {e}", j + 2)))?;
        points.push(p);
    }
    if points.len() != header.n {
        return Err(Error::Parse(format!(
            "header declares {} points, found {}",
            header.n,
            points.len()
        )));
    }
    Dataset::new(space, points, header.seed)
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    crate::harness::report::write_atomically(path, |w| write_dataset(ds, w))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(f)
}
