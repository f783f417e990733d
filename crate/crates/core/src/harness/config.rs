//! JSON experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pivot_index::PivotStrategy;
use crate::spaces::{SpaceKind, SphereMetric};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceFamilyKind {
    #[default]
    Hamming,
    Sphere,
    Ball,
}

impl std::str::FromStr for SpaceFamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(SpaceFamilyKind::Hamming),
            "sphere" => Ok(SpaceFamilyKind::Sphere),
            "ball" => Ok(SpaceFamilyKind::Ball),
            other => Err(Error::Config(format!("unknown space kind {other:?}"))),
        }
    }
}

/// Space family of an experiment; the dimension comes from each cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub kind: SpaceFamilyKind,
    #[serde(default)]
    pub metric_variant: Option<SphereMetric>,
}

impl SpaceConfig {
    pub fn hamming() -> Self {
        SpaceConfig::default()
    }

    pub fn sphere(metric: SphereMetric) -> Self {
        SpaceConfig {
            kind: SpaceFamilyKind::Sphere,
            metric_variant: Some(metric),
        }
    }

    pub fn at_dim(&self, d: usize) -> Result<SpaceKind> {
        match self.kind {
            SpaceFamilyKind::Hamming => SpaceKind::hamming(d),
            SpaceFamilyKind::Sphere => {
                SpaceKind::sphere(d, self.metric_variant.unwrap_or_default())
            }
            SpaceFamilyKind::Ball => SpaceKind::ball(d),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub d: usize,
    pub n: usize,
    pub k: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadiusPolicy {
    /// Radius equals the distance from the query to its nearest neighbour.
    #[default]
    Nn,
    Fixed {
        r: f64,
    },
}

/// Hamming cells `(d, n) = (j², 2^j)` for `j ∈ {4, 8, 12, 16}`, with
/// `k = ⌈log₂ n⌉ = j` pivots.
pub fn default_schedule() -> Vec<Cell> {
    [4usize, 8, 12, 16]
        .into_iter()
        .map(|j| Cell {
            d: j * j,
            n: 1 << j,
            k: j,
        })
        .collect()
}

/// `⌈log₂ n⌉`.
pub fn ceil_log2(n: usize) -> usize {
    n.next_power_of_two().trailing_zeros() as usize
}

fn default_version() -> u32 {
    CONFIG_FORMAT_VERSION
}
fn default_strategy() -> PivotStrategy {
    PivotStrategy::Random
}
fn default_queries() -> usize {
    200
}
fn default_epsilons() -> Vec<f64> {
    vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25]
}
fn default_samples() -> usize {
    10_000
}
fn default_tenth() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub format_version: u32,
    #[serde(default)]
    pub space: SpaceConfig,
    #[serde(default = "default_schedule")]
    pub schedule: Vec<Cell>,
    #[serde(default = "default_strategy")]
    pub strategy: PivotStrategy,
    #[serde(default = "default_queries")]
    pub queries_per_cell: usize,
    #[serde(default)]
    pub radius: RadiusPolicy,
    /// ε grid for the per-cell concentration estimate; empty to skip it.
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_samples")]
    pub concentration_samples: usize,
    /// Pairs used for the median pair distance and intrinsic dimension.
    #[serde(default = "default_samples")]
    pub pair_samples: usize,
    #[serde(default = "default_tenth")]
    pub vc_epsilon: f64,
    #[serde(default = "default_tenth")]
    pub vc_eta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            format_version: CONFIG_FORMAT_VERSION,
            space: SpaceConfig::default(),
            schedule: default_schedule(),
            strategy: default_strategy(),
            queries_per_cell: default_queries(),
            radius: RadiusPolicy::default(),
            epsilons: default_epsilons(),
            concentration_samples: default_samples(),
            pair_samples: default_samples(),
            vc_epsilon: default_tenth(),
            vc_eta: default_tenth(),
            seed: 0,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.format_version != CONFIG_FORMAT_VERSION {
            return fail(format!(
                "unsupported format_version {}",
                self.format_version
            ));
        }
        if self.schedule.is_empty() {
            return fail("schedule is empty".into());
        }
        for (i, cell) in self.schedule.iter().enumerate() {
            if cell.d == 0 || cell.n == 0 {
                return fail(format!("cell {i}: d and n must be at least 1"));
            }
            if cell.k > cell.n {
                return fail(format!(
                    "cell {i}: k = {} pivots exceeds n = {}",
                    cell.k, cell.n
                ));
            }
        }
        if self.space.metric_variant.is_some() && self.space.kind != SpaceFamilyKind::Sphere {
            return fail("metric_variant applies only to spheres".into());
        }
        if self.queries_per_cell == 0 {
            return fail("queries_per_cell must be at least 1".into());
        }
        if let RadiusPolicy::Fixed { r } = self.radius {
            if !(r >= 0.0 && r.is_finite()) {
                return fail(format!("fixed radius must be finite and >= 0, got {r}"));
            }
        }
        if self.epsilons.iter().any(|e| !(e.is_finite() && *e >= 0.0))
            || self.epsilons.windows(2).any(|w| w[0] > w[1])
        {
            return fail("epsilons must be ascending, finite and non-negative".into());
        }
        if !self.epsilons.is_empty() && self.concentration_samples < 100 {
            return fail("concentration_samples must be at least 100".into());
        }
        if self.pair_samples < 2 {
            return fail("pair_samples must be at least 2".into());
        }
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.vc_epsilon) || !unit(self.vc_eta) {
            return fail("vc_epsilon and vc_eta must lie in (0, 1)".into());
        }
        Ok(())
    }
}
