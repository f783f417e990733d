//! Pivot-table similarity search over Hamming cubes, spheres and balls,
//! concentration-of-measure estimates and bounds, VC sample-size calculators,
//! and a deterministic experiment harness tying them together.

pub mod concentration;
pub mod dataset_io;
pub mod error;
pub mod harness;
pub mod numfmt;
pub mod pivot_index;
pub mod rng;
pub mod spaces;
pub mod stats;
pub mod vc_bounds;

pub use error::{Error, Result};
pub use pivot_index::{
    build_index, linear_scan, select_pivots, PivotIndex, PivotSet, PivotStrategy, QueryResult,
};
pub use spaces::{
    distance, project2d, sample, BitString, Dataset, DistanceCounter, Point, SpaceKind,
    SphereMetric,
};
