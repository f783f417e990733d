//! Experiment engine: curse-of-dimensionality sweeps over a schedule of
//! `(d, n, k)` cells, concentration curves for spheres, and sphere
//! projections.
//!
//! Every random draw comes from a stream keyed by the master seed plus the
//! cell and query indices, so reports are identical regardless of how cells
//! and queries are spread over threads.

pub mod config;
pub mod report;

use rayon::prelude::*;

use crate::concentration::{
    alpha_upper_bound, estimate_concentration, intrinsic_dimension_of, pair_distances,
    pruning_bound, LevyParams,
};
use crate::error::{Error, Result};
use crate::pivot_index::{build_index, nearest_distance, select_pivots, PivotStrategy};
use crate::rng::{derive_seed, stream_rng, tags};
use crate::spaces::{project2d, sample, SpaceKind};
use crate::stats::{lower_median, mean};
use crate::vc_bounds::{pivot_family_vc_bound, sample_size_bound, SpaceFamily, VcBoundInput};

pub use config::{Cell, ExperimentConfig, RadiusPolicy, SpaceConfig, SpaceFamilyKind};
pub use report::{emit_report, ReportFormat, ReportRecord};

/// One range query of a cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryRecord {
    pub radius: f64,
    /// Uncounted oracle distance to the nearest neighbour.
    pub nn_distance: f64,
    /// `|C_q|`
    pub discarded: usize,
    pub cost: u64,
}

/// Aggregates of a cell's query records. Medians are lower medians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellAggregates {
    pub median_cost: f64,
    pub mean_cost: f64,
    pub median_cost_fraction: f64,
    /// Median of `μ_#(C_q) = |C_q| / n`.
    pub median_pruned_fraction: f64,
    pub mean_pruned_fraction: f64,
    /// Median of `μ_#(C_q^c) = 1 − |C_q| / n`, the mass left to verify.
    pub median_unpruned_mass: f64,
    pub median_radius: f64,
    /// `m_d`: median nearest-neighbour distance over the cell's queries.
    pub median_nn_distance: f64,
}

impl CellAggregates {
    pub fn from_records(records: &[QueryRecord], n: usize) -> Option<Self> {
        let nf = n as f64;
        let col = |f: &dyn Fn(&QueryRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
        let cost = col(&|r| r.cost as f64);
        let cost_fraction = col(&|r| r.cost as f64 / nf);
        let pruned = col(&|r| r.discarded as f64 / nf);
        let unpruned = col(&|r| 1.0 - r.discarded as f64 / nf);
        Some(CellAggregates {
            median_cost: lower_median(&cost)?,
            mean_cost: mean(&cost)?,
            median_cost_fraction: lower_median(&cost_fraction)?,
            median_pruned_fraction: lower_median(&pruned)?,
            mean_pruned_fraction: mean(&pruned)?,
            median_unpruned_mass: lower_median(&unpruned)?,
            median_radius: lower_median(&col(&|r| r.radius))?,
            median_nn_distance: lower_median(&col(&|r| r.nn_distance))?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellReport {
    pub space: SpaceKind,
    pub n: usize,
    pub k: usize,
    pub strategy: PivotStrategy,
    pub dataset_seed: u64,
    pub build_cost: u64,
    pub queries: Vec<QueryRecord>,
    pub aggregates: CellAggregates,
    /// Analytic `α(r/2)` at the median radius.
    pub alpha_half_r: f64,
    /// `2k·α(r/2)` at the median radius, raw.
    pub pruning_bound: f64,
    /// Lévy constants behind `alpha_half_r` on Hamming cells.
    pub levy: Option<LevyParams>,
    pub vc_dimension_bound: f64,
    pub sample_size_bound: u64,
    /// `M_d`: median distance between random pairs.
    pub median_pair_distance: f64,
    pub intrinsic_dimension: f64,
    /// `(ε, α̂(ε))` for the configured ε grid.
    pub alpha_hat: Vec<(f64, f64)>,
}

impl CellReport {
    pub fn d(&self) -> usize {
        self.space.dim()
    }

    /// Every query satisfies `cost = k + (n − |C_q|)`.
    pub fn accounting_holds(&self) -> bool {
        self.queries
            .iter()
            .all(|q| q.cost == (self.k + self.n - q.discarded) as u64)
    }

    /// One record per aggregate and analytic quantity.
    pub fn records(&self, master_seed: u64) -> Vec<ReportRecord> {
        let a = &self.aggregates;
        let mut rows: Vec<(String, f64)> = vec![
            ("queries".into(), self.queries.len() as f64),
            ("build_cost".into(), self.build_cost as f64),
            ("median_cost".into(), a.median_cost),
            ("mean_cost".into(), a.mean_cost),
            ("median_cost_fraction".into(), a.median_cost_fraction),
            ("median_pruned_fraction".into(), a.median_pruned_fraction),
            ("mean_pruned_fraction".into(), a.mean_pruned_fraction),
            ("median_unpruned_mass".into(), a.median_unpruned_mass),
            ("median_radius".into(), a.median_radius),
            ("nn_median_distance".into(), a.median_nn_distance),
            ("alpha_half_r".into(), self.alpha_half_r),
            ("pruning_bound".into(), self.pruning_bound),
            (
                "pruning_bound_vacuous".into(),
                if self.pruning_bound >= 1.0 { 1.0 } else { 0.0 },
            ),
            ("vc_dimension_bound".into(), self.vc_dimension_bound),
            ("sample_size_bound".into(), self.sample_size_bound as f64),
            ("median_pair_distance".into(), self.median_pair_distance),
            ("intrinsic_dimension".into(), self.intrinsic_dimension),
        ];
        if let Some(levy) = self.levy {
            rows.push(("levy_scale".into(), levy.scale));
            rows.push(("levy_rate".into(), levy.rate));
        }
        for (eps, alpha) in &self.alpha_hat {
            rows.push((format!("alpha_hat@eps={eps:.4}"), *alpha));
        }
        rows.into_iter()
            .map(|(quantity, value)| ReportRecord {
                experiment: "curse".into(),
                space: self.space.kind_name().into(),
                d: self.d(),
                n: self.n,
                k: self.k,
                strategy: self.strategy.as_str().into(),
                seed: master_seed,
                metric: self.space.metric_name().into(),
                quantity,
                value,
            })
            .collect()
    }
}

fn vc_family(space: &SpaceKind) -> SpaceFamily {
    match space {
        SpaceKind::HammingCube { .. } => SpaceFamily::Hamming,
        _ => SpaceFamily::L2,
    }
}

fn run_cell(config: &ExperimentConfig, cell_index: usize, cell: Cell) -> Result<CellReport> {
    let master = config.seed;
    let c = cell_index as u64;
    let space = config.space.at_dim(cell.d)?;

    let dataset_seed = derive_seed(master, &[tags::DATASET, c]);
    let dataset = sample(&space, cell.n, dataset_seed);
    let pivots = select_pivots(
        &dataset,
        cell.k,
        config.strategy,
        derive_seed(master, &[tags::PIVOTS, c]),
    )?;
    let index = build_index(&dataset, pivots)?;

    let queries = (0..config.queries_per_cell)
        .into_par_iter()
        .map(|qi| {
            let mut rng = stream_rng(master, &[tags::QUERIES, c, qi as u64]);
            let q = space.sample_point(&mut rng);
            let nn_distance = nearest_distance(&dataset, &q).expect("n >= 1");
            let radius = match config.radius {
                RadiusPolicy::Nn => nn_distance,
                RadiusPolicy::Fixed { r } => r,
            };
            let res = index.range_query(&q, radius)?;
            Ok(QueryRecord {
                radius,
                nn_distance,
                discarded: res.discarded,
                cost: res.cost,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregates = CellAggregates::from_records(&queries, cell.n).expect("at least one query");

    let alpha_half_r = alpha_upper_bound(&space, aggregates.median_radius / 2.0);
    let vc_dimension_bound = if cell.k == 0 {
        0.0
    } else {
        pivot_family_vc_bound(VcBoundInput::new(
            vc_family(&space),
            cell.d as u64,
            cell.k as u64,
        )?)
    };
    let sample_size = if cell.k == 0 {
        0
    } else {
        sample_size_bound(vc_dimension_bound, config.vc_epsilon, config.vc_eta)
    };

    let pairs = pair_distances(
        &space,
        config.pair_samples,
        derive_seed(master, &[tags::PAIRS, c]),
    );
    let median_pair_distance = lower_median(&pairs).expect("pair_samples >= 2");
    let intrinsic_dimension = intrinsic_dimension_of(&pairs)?;

    let alpha_hat = if config.epsilons.is_empty() {
        Vec::new()
    } else {
        let est = estimate_concentration(
            &space,
            &config.epsilons,
            config.concentration_samples,
            derive_seed(master, &[tags::CONCENTRATION, c]),
        )?;
        est.epsilons.into_iter().zip(est.alpha_hat).collect()
    };

    Ok(CellReport {
        space,
        n: cell.n,
        k: cell.k,
        strategy: config.strategy,
        dataset_seed,
        build_cost: index.build_cost(),
        queries,
        aggregates,
        alpha_half_r,
        pruning_bound: pruning_bound(cell.k, alpha_half_r),
        levy: matches!(space, SpaceKind::HammingCube { .. }).then_some(LevyParams::HAMMING),
        vc_dimension_bound,
        sample_size_bound: sample_size,
        median_pair_distance,
        intrinsic_dimension,
        alpha_hat,
    })
}

/// Runs every cell of the schedule. The whole config is validated first, so
/// an infeasible cell fails before any sampling.
pub fn run_curse_experiment(config: &ExperimentConfig) -> Result<Vec<CellReport>> {
    config.validate()?;
    config
        .schedule
        .iter()
        .enumerate()
        .map(|(i, cell)| run_cell(config, i, *cell))
        .collect()
}

/// Flattened records of a curse run.
pub fn curse_records(cells: &[CellReport], master_seed: u64) -> Vec<ReportRecord> {
    cells.iter().flat_map(|c| c.records(master_seed)).collect()
}

/// Per-query rows `d,n,k,query,radius,nn_distance,discarded,cost`.
pub fn write_query_csv<W: std::io::Write + ?Sized>(
    cells: &[CellReport],
    w: &mut W,
) -> std::io::Result<()> {
    use crate::numfmt::sig17;
    writeln!(w, "d,n,k,query,radius,nn_distance,discarded,cost")?;
    for cell in cells {
        for (qi, q) in cell.queries.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{qi},{},{},{},{}",
                cell.d(),
                cell.n,
                cell.k,
                sig17(q.radius),
                sig17(q.nn_distance),
                q.discarded,
                q.cost
            )?;
        }
    }
    Ok(())
}

/// Empirical and analytic concentration at one `(d, ε)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConcentrationRow {
    pub d: usize,
    pub eps: f64,
    pub alpha_hat: f64,
    pub bound: f64,
    pub n_samples: usize,
}

impl ConcentrationRow {
    /// Within the analytic curve plus a 3σ sampling margin.
    pub fn dominated(&self) -> bool {
        self.alpha_hat <= self.bound + crate::concentration::monte_carlo_margin(self.n_samples)
    }
}

/// `α̂(ε)` and its analytic bound for each dimension in `dims`.
pub fn run_concentration_experiment(
    family: SpaceConfig,
    dims: &[usize],
    epsilons: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<ConcentrationRow>> {
    if dims.is_empty() {
        return Err(Error::invalid("no dimensions given"));
    }
    let per_dim = dims
        .par_iter()
        .map(|&d| {
            let space = family.at_dim(d)?;
            let est = estimate_concentration(
                &space,
                epsilons,
                n_samples,
                derive_seed(seed, &[tags::CONCENTRATION, d as u64]),
            )?;
            Ok(est
                .epsilons
                .iter()
                .zip(&est.alpha_hat)
                .map(|(&eps, &alpha_hat)| ConcentrationRow {
                    d,
                    eps,
                    alpha_hat,
                    bound: alpha_upper_bound(&space, eps),
                    n_samples,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_dim.into_iter().flatten().collect())
}

pub fn concentration_records(
    family: SpaceConfig,
    rows: &[ConcentrationRow],
    seed: u64,
) -> Result<Vec<ReportRecord>> {
    let mut out = Vec::with_capacity(rows.len() * 2);
    for row in rows {
        let space = family.at_dim(row.d)?;
        for (name, value) in [("alpha_hat", row.alpha_hat), ("alpha_bound", row.bound)] {
            out.push(ReportRecord {
                experiment: "concentration".into(),
                space: space.kind_name().into(),
                d: row.d,
                n: row.n_samples,
                k: 0,
                strategy: "-".into(),
                seed,
                metric: space.metric_name().into(),
                quantity: format!("{name}@eps={:.4}", row.eps),
                value,
            });
        }
    }
    Ok(out)
}

/// Sphere points of one dimension projected to their first two coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionSet {
    pub d: usize,
    pub points: Vec<(f64, f64)>,
    pub median_norm: f64,
}

impl ProjectionSet {
    /// `√(2/d)`, the scale of a projected norm.
    pub fn reference_norm(&self) -> f64 {
        (2.0 / self.d as f64).sqrt()
    }
}

/// Samples `n` points on the sphere in `ℝ^d` for each `d` and projects them
/// onto axes `(0, 1)`.
pub fn run_projection_figure(dims: &[usize], n: usize, seed: u64) -> Result<Vec<ProjectionSet>> {
    if n == 0 {
        return Err(Error::invalid("need at least one point"));
    }
    dims.iter()
        .map(|&d| {
            if d < 2 {
                return Err(Error::invalid(format!("projection needs d >= 2, got {d}")));
            }
            let space = SpaceKind::sphere(d, Default::default())?;
            let ds = sample(&space, n, derive_seed(seed, &[tags::DATASET, d as u64]));
            let points = project2d(&ds, 0, 1)?;
            let norms: Vec<f64> = points.iter().map(|(a, b)| a.hypot(*b)).collect();
            Ok(ProjectionSet {
                d,
                median_norm: lower_median(&norms).expect("n >= 1"),
                points,
            })
        })
        .collect()
}

pub fn projection_records(sets: &[ProjectionSet], seed: u64) -> Vec<ReportRecord> {
    let mut out = Vec::new();
    for set in sets {
        let rec = |quantity: String, value: f64| ReportRecord {
            experiment: "projection".into(),
            space: "sphere".into(),
            d: set.d,
            n: set.points.len(),
            k: 0,
            strategy: "-".into(),
            seed,
            metric: "euclidean".into(),
            quantity,
            value,
        };
        out.push(rec("median_norm".into(), set.median_norm));
        out.push(rec("reference_norm".into(), set.reference_norm()));
        for (i, (x, y)) in set.points.iter().enumerate() {
            out.push(rec(format!("p{i:07}.x"), *x));
            out.push(rec(format!("p{i:07}.y"), *y));
        }
    }
    out
}
