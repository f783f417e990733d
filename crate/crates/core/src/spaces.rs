//! The metric-space zoo: Hamming cubes, unit spheres and unit balls, each with
//! its natural probability measure and a seeded i.i.d. sampler.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Tolerance on the unit norm of sphere points.
pub const SPHERE_NORM_TOL: f64 = 1e-9;
/// Tolerance above 1 on the norm of ball points.
pub const BALL_NORM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SphereMetric {
    /// Chord length `‖x − y‖`.
    #[default]
    Euclidean,
    /// Great-circle angle, `2·arcsin(chord / 2)`.
    Geodesic,
}

impl std::str::FromStr for SphereMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(SphereMetric::Euclidean),
            "geodesic" => Ok(SphereMetric::Geodesic),
            other => Err(Error::invalid(format!("unknown sphere metric {other:?}"))),
        }
    }
}

/// A metric space with measure, identified by its family and dimension `d`.
///
/// Real spaces use `d` for the length of the coordinate vector: `Sphere { d }`
/// is the unit sphere inside `ℝ^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    /// `{0,1}^d` with normalized Hamming distance and the uniform measure.
    HammingCube { d: usize },
    /// Unit sphere in `ℝ^d` with the rotation-invariant measure.
    Sphere { d: usize, metric: SphereMetric },
    /// Unit ball in `ℝ^d` with the uniform (Lebesgue) measure.
    Ball { d: usize },
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    Ok(())
}

impl SpaceKind {
    pub fn hamming(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(SpaceKind::HammingCube { d })
    }

    pub fn sphere(d: usize, metric: SphereMetric) -> Result<Self> {
        check_dim(d)?;
        Ok(SpaceKind::Sphere { d, metric })
    }

    pub fn ball(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(SpaceKind::Ball { d })
    }

    pub fn dim(&self) -> usize {
        match *self {
            SpaceKind::HammingCube { d } | SpaceKind::Sphere { d, .. } | SpaceKind::Ball { d } => d,
        }
    }

    /// Same family and metric, different dimension.
    pub fn with_dim(&self, d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(match *self {
            SpaceKind::HammingCube { .. } => SpaceKind::HammingCube { d },
            SpaceKind::Sphere { metric, .. } => SpaceKind::Sphere { d, metric },
            SpaceKind::Ball { .. } => SpaceKind::Ball { d },
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            SpaceKind::HammingCube { .. } => "hamming",
            SpaceKind::Sphere { .. } => "sphere",
            SpaceKind::Ball { .. } => "ball",
        }
    }

    pub fn metric_name(&self) -> &'static str {
        match self {
            SpaceKind::HammingCube { .. } => "hamming",
            SpaceKind::Sphere {
                metric: SphereMetric::Geodesic,
                ..
            } => "geodesic",
            SpaceKind::Sphere { .. } | SpaceKind::Ball { .. } => "euclidean",
        }
    }

    pub fn sphere_metric(&self) -> Option<SphereMetric> {
        match *self {
            SpaceKind::Sphere { metric, .. } => Some(metric),
            _ => None,
        }
    }

    pub fn is_real(&self) -> bool {
        !matches!(self, SpaceKind::HammingCube { .. })
    }

    /// Supremum of the metric over the space.
    pub fn diameter(&self) -> f64 {
        match *self {
            SpaceKind::HammingCube { .. } => 1.0,
            SpaceKind::Sphere {
                metric: SphereMetric::Geodesic,
                ..
            } => std::f64::consts::PI,
            SpaceKind::Sphere { .. } | SpaceKind::Ball { .. } => 2.0,
        }
    }

    /// Checks that `p` has this space's representation, length and norm.
    pub fn validate_point(&self, p: &Point) -> Result<()> {
        self.check_shape(p)?;
        if let Point::Real(v) = p {
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid("point has non-finite coordinates"));
            }
            let norm = norm(v);
            match self {
                SpaceKind::Sphere { .. } if (norm - 1.0).abs() > SPHERE_NORM_TOL => {
                    return Err(Error::invalid(format!(
                        "sphere point has norm {norm}, expected 1"
                    )));
                }
                SpaceKind::Ball { .. } if norm > 1.0 + BALL_NORM_TOL => {
                    return Err(Error::invalid(format!("ball point has norm {norm} > 1")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn check_shape(&self, p: &Point) -> Result<()> {
        let d = self.dim();
        match (self, p) {
            (SpaceKind::HammingCube { .. }, Point::Bits(b)) if b.len() == d => Ok(()),
            (SpaceKind::HammingCube { .. }, Point::Bits(b)) => Err(Error::invalid(format!(
                "bit string of length {} in a Hamming cube of dimension {d}",
                b.len()
            ))),
            (SpaceKind::HammingCube { .. }, Point::Real(_)) => {
                Err(Error::invalid("real vector given for a Hamming cube"))
            }
            (_, Point::Real(v)) if v.len() == d => Ok(()),
            (_, Point::Real(v)) => Err(Error::invalid(format!(
                "vector of length {} in a space of dimension {d}",
                v.len()
            ))),
            (_, Point::Bits(_)) => Err(Error::invalid("bit string given for a real space")),
        }
    }

    /// `ρ(x, y)`. Increments `counter` by one when supplied.
    pub fn distance(
        &self,
        x: &Point,
        y: &Point,
        counter: Option<&mut DistanceCounter>,
    ) -> Result<f64> {
        self.check_shape(x)?;
        self.check_shape(y)?;
        if let Some(c) = counter {
            c.tick();
        }
        Ok(self.distance_unchecked(x, y))
    }

    /// Distance between points already known to belong to this space.
    pub(crate) fn distance_unchecked(&self, x: &Point, y: &Point) -> f64 {
        match (self, x, y) {
            (SpaceKind::HammingCube { d }, Point::Bits(a), Point::Bits(b)) => {
                a.hamming(b) as f64 / *d as f64
            }
            (SpaceKind::Sphere { metric, .. }, Point::Real(a), Point::Real(b)) => match metric {
                SphereMetric::Euclidean => euclidean(a, b),
                SphereMetric::Geodesic => geodesic(a, b),
            },
            (SpaceKind::Ball { .. }, Point::Real(a), Point::Real(b)) => euclidean(a, b),
            _ => unreachable!("point representation does not match space"),
        }
    }

    /// One draw from the space's natural measure.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match *self {
            SpaceKind::HammingCube { d } => Point::Bits(BitString::random(d, rng)),
            SpaceKind::Sphere { d, .. } => Point::Real(gaussian_direction(d, rng)),
            SpaceKind::Ball { d } => {
                let mut v = gaussian_direction(d, rng);
                let u: f64 = rng.random();
                let radius = u.powf(1.0 / d as f64);
                v.iter_mut().for_each(|c| *c *= radius);
                Point::Real(v)
            }
        }
    }
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceKind::Sphere { d, metric } => write!(f, "sphere(d={d}, {metric:?})"),
            other => write!(f, "{}(d={})", other.kind_name(), other.dim()),
        }
    }
}

/// Normalized standard Gaussian vector. Coordinates come from the ziggurat
/// sampler in `rand_distr::StandardNormal`; the zero vector is redrawn.
fn gaussian_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-150 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

// 2·atan2(‖x−y‖, ‖x+y‖) equals 2·arcsin(chord/2) on the unit sphere and stays
// well conditioned near antipodal pairs.
fn geodesic(a: &[f64], b: &[f64]) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// Fixed-length bit string packed into 64-bit words, bit `i` stored at
/// position `i % 64` of word `i / 64`. Unused high bits of the last word are
/// always zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitString {
    len: usize,
    words: Vec<u64>,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        BitString {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            s.set(i, b);
        }
        s
    }

    /// Parses a string of `'0'`/`'1'` characters, first character is bit 0.
    pub fn parse_binary(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!(
                    "unexpected character {other:?} in bit string"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_bools(&bits))
    }

    fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut words: Vec<u64> = (0..len.div_ceil(64)).map(|_| rng.random()).collect();
        if !len.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (len % 64)) - 1;
            }
        }
        BitString { len, words }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Number of differing positions. Lengths must match.
    pub fn hamming(&self, other: &BitString) -> u32 {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    /// Lowercase hex, bit 0 first as the most significant bit of byte 0, zero
    /// padded to whole bytes.
    pub fn to_hex(&self) -> String {
        let mut out = String::with_capacity(self.len.div_ceil(8) * 2);
        for byte_idx in 0..self.len.div_ceil(8) {
            let mut byte = 0u8;
            for bit in 0..8 {
                let i = byte_idx * 8 + bit;
                if i < self.len && self.get(i) {
                    byte |= 0x80 >> bit;
                }
            }
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// Inverse of [`BitString::to_hex`]; padding bits must be zero.
    pub fn from_hex(hex: &str, len: usize) -> Result<Self> {
        let expected = len.div_ceil(8) * 2;
        if hex.len() != expected {
            return Err(Error::Parse(format!(
                "hex string has {} digits, expected {expected} for {len} bits",
                hex.len()
            )));
        }
        let mut s = Self::zeros(len);
        for byte_idx in 0..len.div_ceil(8) {
            let byte = u8::from_str_radix(&hex[2 * byte_idx..2 * byte_idx + 2], 16)
                .map_err(|e| Error::Parse(format!("bad hex digit: {e}")))?;
            for bit in 0..8 {
                if byte & (0x80 >> bit) == 0 {
                    continue;
                }
                let i = byte_idx * 8 + bit;
                if i >= len {
                    return Err(Error::Parse("non-zero padding bits in hex string".into()));
                }
                s.set(i, true);
            }
        }
        Ok(s)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// An element of a space: a bit string for Hamming cubes, a coordinate vector
/// for spheres and balls.
#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Bits(BitString),
    Real(Vec<f64>),
}

impl Point {
    /// Hamming point from a `'0'`/`'1'` string such as `"1010"`.
    pub fn bits(s: &str) -> Result<Self> {
        Ok(Point::Bits(BitString::parse_binary(s)?))
    }

    pub fn real(coords: impl Into<Vec<f64>>) -> Self {
        Point::Real(coords.into())
    }

    pub fn len(&self) -> usize {
        match self {
            Point::Bits(b) => b.len(),
            Point::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match self {
            Point::Real(v) => Some(v),
            Point::Bits(_) => None,
        }
    }

    pub fn as_bits(&self) -> Option<&BitString> {
        match self {
            Point::Bits(b) => Some(b),
            Point::Real(_) => None,
        }
    }
}

/// Counts true-distance evaluations for one query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DistanceCounter {
    count: u64,
}

impl DistanceCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn tick(&mut self) {
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

/// A finite sample `X` from a space. Its empirical measure gives each point
/// mass `1/n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    space: SpaceKind,
    points: Vec<Point>,
    seed: u64,
}

impl Dataset {
    /// Wraps explicit points after validating each against `space`.
    pub fn new(space: SpaceKind, points: Vec<Point>, seed: u64) -> Result<Self> {
        for (j, p) in points.iter().enumerate() {
            space
                .validate_point(p)
                .map_err(|e| Error::invalid(format!("point {j}: {e}")))?;
        }
        Ok(Dataset {
            space,
            points,
            seed,
        })
    }

    pub fn space(&self) -> &SpaceKind {
        &self.space
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, j: usize) -> &Point {
        &self.points[j]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Empirical measure `μ_#(A) = |A ∩ X| / n` of the points selected by `member`.
    pub fn empirical_measure(&self, member: impl Fn(usize, &Point) -> bool) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        let hits = self
            .points
            .iter()
            .enumerate()
            .filter(|(j, p)| member(*j, p))
            .count();
        hits as f64 / self.points.len() as f64
    }
}

/// `ρ(x, y)` in `space`; see [`SpaceKind::distance`].
pub fn distance(
    space: &SpaceKind,
    x: &Point,
    y: &Point,
    counter: Option<&mut DistanceCounter>,
) -> Result<f64> {
    space.distance(x, y, counter)
}

/// `n` i.i.d. draws from the natural measure of `space`. Identical
/// `(space, n, seed)` always reproduce identical points.
pub fn sample(space: &SpaceKind, n: usize, seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, &[]);
    let points = (0..n).map(|_| space.sample_point(&mut rng)).collect();
    Dataset {
        space: *space,
        points,
        seed,
    }
}

/// Coordinates `(axis_a, axis_b)` of every point, in dataset order.
pub fn project2d(dataset: &Dataset, axis_a: usize, axis_b: usize) -> Result<Vec<(f64, f64)>> {
    let space = dataset.space();
    if !space.is_real() {
        return Err(Error::invalid("projection needs a real-vector space"));
    }
    let d = space.dim();
    if axis_a >= d || axis_b >= d {
        return Err(Error::invalid(format!(
            "axes ({axis_a}, {axis_b}) out of range for dimension {d}"
        )));
    }
    if axis_a == axis_b {
        return Err(Error::invalid("projection axes must be distinct"));
    }
    Ok(dataset
        .points()
        .iter()
        .map(|p| {
            let v = p.as_real().expect("validated real space");
            (v[axis_a], v[axis_b])
        })
        .collect())
}
