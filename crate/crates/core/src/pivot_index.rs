//! Flat pivot table for exact similarity search.
//!
//! The index stores `ρ(x, p_i)` for every dataset point `x` and pivot `p_i`.
//! By the triangle inequality the pseudo-distance
//! `ρ_k(q, x) = max_i |ρ(q, p_i) − ρ(x, p_i)|` never exceeds `ρ(q, x)`, so a
//! range query may discard every `x` with `ρ_k(q, x) > r` without computing
//! `ρ(q, x)`. Query cost is counted in distance evaluations: `k` for the
//! pivots plus one per surviving candidate.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset_io::{format_point, parse_point};
use crate::error::{Error, Result};
use crate::numfmt::sig17;
use crate::rng::stream_rng;
use crate::spaces::{Dataset, DistanceCounter, Point, SpaceKind};

/// Tolerance on the discard test for real-valued spaces. A point is discarded
/// only when `ρ_k(q, x) > r + REAL_SLACK`, which absorbs floating-point error
/// in the triangle inequality. Hamming cubes are decided exactly on integer
/// bit counts and use no slack.
pub const REAL_SLACK: f64 = 1e-12;

/// Candidate pool size for [`PivotStrategy::IncrementalMeanRho`].
pub const MEAN_RHO_POOL: usize = 64;
/// Evaluation pair budget for [`PivotStrategy::IncrementalMeanRho`].
pub const MEAN_RHO_PAIRS: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PivotStrategy {
    /// `k` distinct uniform draws from the dataset.
    Random,
    /// Greedy max-min selection starting from the point farthest from index 0.
    FarthestFirst,
    /// Greedy selection maximizing the mean of `ρ_k` over sampled pairs.
    IncrementalMeanRho,
}

impl PivotStrategy {
    pub const ALL: [PivotStrategy; 3] = [
        PivotStrategy::Random,
        PivotStrategy::FarthestFirst,
        PivotStrategy::IncrementalMeanRho,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PivotStrategy::Random => "random",
            PivotStrategy::FarthestFirst => "farthest_first",
            PivotStrategy::IncrementalMeanRho => "incremental_mean_rho",
        }
    }
}

impl fmt::Display for PivotStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PivotStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PivotStrategy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown pivot strategy {s:?}")))
    }
}

/// Ordered pivots `p_1 … p_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PivotSet {
    pub pivots: Vec<Point>,
    /// Dataset positions of the pivots when they were drawn from `X`.
    pub indices: Option<Vec<usize>>,
    /// `None` for explicitly supplied pivots.
    pub strategy: Option<PivotStrategy>,
    pub seed: u64,
}

impl PivotSet {
    /// Pivots supplied directly; they may be any points of the space.
    pub fn explicit(pivots: Vec<Point>) -> Self {
        PivotSet {
            pivots,
            indices: None,
            strategy: None,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivots.is_empty()
    }

    /// Copy with `extra` appended as pivot `k + 1`.
    pub fn with_appended(&self, extra: Point) -> Self {
        let mut pivots = self.pivots.clone();
        pivots.push(extra);
        PivotSet {
            pivots,
            indices: None,
            strategy: None,
            seed: self.seed,
        }
    }

    fn strategy_name(&self) -> &'static str {
        self.strategy.map_or("explicit", |s| s.as_str())
    }
}

/// Chooses `k` pivots from `dataset`. Deterministic given `seed`.
pub fn select_pivots(
    dataset: &Dataset,
    k: usize,
    strategy: PivotStrategy,
    seed: u64,
) -> Result<PivotSet> {
    let n = dataset.len();
    if k > n {
        return Err(Error::invalid(format!(
            "cannot draw {k} pivots from a dataset of {n} points"
        )));
    }
    let chosen = if k == 0 {
        Vec::new()
    } else {
        match strategy {
            PivotStrategy::Random => {
                let mut rng = stream_rng(seed, &[]);
                index::sample(&mut rng, n, k).into_vec()
            }
            PivotStrategy::FarthestFirst => farthest_first(dataset, k),
            PivotStrategy::IncrementalMeanRho => incremental_mean_rho(dataset, k, seed),
        }
    };
    Ok(PivotSet {
        pivots: chosen.iter().map(|&j| dataset.point(j).clone()).collect(),
        indices: Some(chosen),
        strategy: Some(strategy),
        seed,
    })
}

/// Position of the maximum, lowest index on ties, skipping `excluded`.
fn argmax(values: &[f64], excluded: &[bool]) -> usize {
    let mut best: Option<usize> = None;
    for (j, v) in values.iter().enumerate() {
        if excluded[j] {
            continue;
        }
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(j);
        }
    }
    best.expect("at least one selectable point")
}

fn farthest_first(dataset: &Dataset, k: usize) -> Vec<usize> {
    let space = dataset.space();
    let points = dataset.points();
    let n = points.len();
    let mut taken = vec![false; n];
    let from_start: Vec<f64> = points
        .iter()
        .map(|x| space.distance_unchecked(&points[0], x))
        .collect();
    let first = argmax(&from_start, &taken);
    taken[first] = true;
    let mut chosen = vec![first];
    let mut min_dist: Vec<f64> = points
        .iter()
        .map(|x| space.distance_unchecked(&points[first], x))
        .collect();
    while chosen.len() < k {
        let next = argmax(&min_dist, &taken);
        taken[next] = true;
        chosen.push(next);
        for (j, x) in points.iter().enumerate() {
            let dist = space.distance_unchecked(&points[next], x);
            if dist < min_dist[j] {
                min_dist[j] = dist;
            }
        }
    }
    chosen
}

fn incremental_mean_rho(dataset: &Dataset, k: usize, seed: u64) -> Vec<usize> {
    let space = dataset.space();
    let points = dataset.points();
    let n = points.len();
    let mut rng = stream_rng(seed, &[]);

    let pool_size = n.min(MEAN_RHO_POOL).max(k);
    let mut pool = index::sample(&mut rng, n, pool_size).into_vec();
    pool.sort_unstable();

    let pairs: Vec<(usize, usize)> = if n.saturating_mul(n) <= MEAN_RHO_PAIRS {
        (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect()
    } else {
        (0..MEAN_RHO_PAIRS)
            .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
            .collect()
    };

    // |ρ(a, c) − ρ(b, c)| for every candidate c and evaluation pair (a, b)
    let gaps: Vec<Vec<f64>> = pool
        .par_iter()
        .map(|&c| {
            pairs
                .iter()
                .map(|&(a, b)| {
                    let da = space.distance_unchecked(&points[a], &points[c]);
                    let db = space.distance_unchecked(&points[b], &points[c]);
                    (da - db).abs()
                })
                .collect()
        })
        .collect();

    let mut current = vec![0.0f64; pairs.len()];
    let mut used = vec![false; pool.len()];
    let mut chosen = Vec::with_capacity(k);
    while chosen.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for (slot, gap) in gaps.iter().enumerate() {
            if used[slot] {
                continue;
            }
            let score: f64 = current.iter().zip(gap).map(|(c, g)| c.max(*g)).sum();
            // pool is sorted, so strict > keeps the lowest dataset index on ties
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((slot, score));
            }
        }
        let (slot, _) = best.expect("pool holds at least k candidates");
        used[slot] = true;
        chosen.push(pool[slot]);
        for (c, g) in current.iter_mut().zip(&gaps[slot]) {
            *c = c.max(*g);
        }
    }
    chosen
}

/// Outcome of one range or kNN query.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryResult {
    /// Matching dataset indices. Ascending for range queries, nearest first
    /// for kNN queries.
    pub matches: Vec<usize>,
    /// True distances of `matches`, same order.
    pub match_distances: Vec<f64>,
    /// `|C_q|`: points eliminated without a true-distance evaluation.
    pub discarded: usize,
    /// Distance evaluations consumed by the query.
    pub cost: u64,
    /// Search radius; for kNN queries the distance of the last neighbour.
    pub radius: f64,
    pub query: Point,
}

impl QueryResult {
    /// Fraction `μ_#(C_q)` of the dataset that was discarded.
    pub fn discarded_fraction(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.discarded as f64 / n as f64
        }
    }
}

/// Pivot distances of a query in the form used for lower bounds.
enum PreparedQuery {
    /// Hamming bit counts, compared exactly.
    Counts {
        counts: Vec<u32>,
        d: f64,
    },
    Reals(Vec<f64>),
}

/// Dataset, pivots and the `n × k` table of `ρ(x_j, p_i)`.
#[derive(Clone, Debug)]
pub struct PivotIndex<'a> {
    dataset: &'a Dataset,
    pivots: PivotSet,
    /// Row-major, `table[j * k + i] = ρ(x_j, p_i)`.
    table: Vec<f64>,
    /// Hamming only: the same table as differing-bit counts.
    counts: Option<Vec<u32>>,
    build_cost: u64,
}

/// Fills the pivot table with `n·k` counted distance evaluations.
pub fn build_index<'a>(dataset: &'a Dataset, pivots: PivotSet) -> Result<PivotIndex<'a>> {
    let space = dataset.space();
    for (i, p) in pivots.pivots.iter().enumerate() {
        space
            .validate_point(p)
            .map_err(|e| Error::invalid(format!("pivot {i}: {e}")))?;
    }
    let k = pivots.len();
    let rows: Vec<(Vec<f64>, u64)> = dataset
        .points()
        .par_iter()
        .map(|x| {
            let mut counter = DistanceCounter::new();
            let row = pivots
                .pivots
                .iter()
                .map(|p| {
                    counter.tick();
                    space.distance_unchecked(x, p)
                })
                .collect();
            (row, counter.count())
        })
        .collect();
    let build_cost = rows.iter().map(|(_, c)| c).sum();
    let mut table = Vec::with_capacity(dataset.len() * k);
    for (row, _) in rows {
        table.extend(row);
    }
    Ok(PivotIndex::assemble(dataset, pivots, table, build_cost))
}

impl<'a> PivotIndex<'a> {
    fn assemble(dataset: &'a Dataset, pivots: PivotSet, table: Vec<f64>, build_cost: u64) -> Self {
        let counts = match dataset.space() {
            SpaceKind::HammingCube { d } => Some(
                table
                    .iter()
                    .map(|t| (t * *d as f64).round() as u32)
                    .collect(),
            ),
            _ => None,
        };
        PivotIndex {
            dataset,
            pivots,
            table,
            counts,
            build_cost,
        }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn pivots(&self) -> &PivotSet {
        &self.pivots
    }

    pub fn k(&self) -> usize {
        self.pivots.len()
    }

    pub fn n(&self) -> usize {
        self.dataset.len()
    }

    /// Distance evaluations spent filling the table.
    pub fn build_cost(&self) -> u64 {
        self.build_cost
    }

    /// Number of stored distances, `n·k`.
    pub fn storage(&self) -> usize {
        self.table.len()
    }

    /// `ρ(x_j, p_i)`.
    pub fn table_entry(&self, j: usize, i: usize) -> f64 {
        self.table[j * self.k() + i]
    }

    /// Row `j` of the table: distances from `x_j` to every pivot.
    pub fn row(&self, j: usize) -> &[f64] {
        let k = self.k();
        &self.table[j * k..(j + 1) * k]
    }

    /// `ρ(q, p_i)` for every pivot, one counted evaluation each.
    pub fn pivot_distances(&self, q: &Point, counter: &mut DistanceCounter) -> Result<Vec<f64>> {
        let space = self.dataset.space();
        self.pivots
            .pivots
            .iter()
            .map(|p| space.distance(q, p, Some(&mut *counter)))
            .collect()
    }

    fn prepare(&self, pivot_dists_q: &[f64]) -> PreparedQuery {
        match self.dataset.space() {
            SpaceKind::HammingCube { d } => {
                let d = *d as f64;
                PreparedQuery::Counts {
                    counts: pivot_dists_q
                        .iter()
                        .map(|t| (t * d).round() as u32)
                        .collect(),
                    d,
                }
            }
            _ => PreparedQuery::Reals(pivot_dists_q.to_vec()),
        }
    }

    fn rho_prepared(&self, q: &PreparedQuery, j: usize) -> f64 {
        let k = self.k();
        match q {
            PreparedQuery::Counts { counts, d } => {
                let row = &self.counts.as_ref().expect("hamming counts")[j * k..(j + 1) * k];
                let m = counts
                    .iter()
                    .zip(row)
                    .map(|(a, b)| a.abs_diff(*b))
                    .max()
                    .unwrap_or(0);
                m as f64 / d
            }
            PreparedQuery::Reals(qd) => qd
                .iter()
                .zip(self.row(j))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        }
    }

    fn slack(&self) -> f64 {
        if self.counts.is_some() {
            0.0
        } else {
            REAL_SLACK
        }
    }

    /// `ρ_k(q, x_j) = max_i |ρ(q, p_i) − ρ(x_j, p_i)|`, or 0 with no pivots.
    ///
    /// On Hamming cubes the maximum is taken over integer bit counts, so the
    /// result never exceeds the computed `ρ(q, x_j)`.
    pub fn rho_k(&self, pivot_dists_q: &[f64], j: usize) -> f64 {
        assert_eq!(pivot_dists_q.len(), self.k(), "one distance per pivot");
        self.rho_prepared(&self.prepare(pivot_dists_q), j)
    }

    fn check_query(&self, q: &Point) -> Result<()> {
        self.dataset.space().validate_point(q)
    }

    /// All `x` with `ρ(q, x) ≤ r`, identical to [`linear_scan`].
    ///
    /// Points with `ρ_k(q, x) > r` form the discard set `C_q`; every other point
    /// is verified with a counted distance evaluation, so
    /// `cost = k + (n − |C_q|)`.
    pub fn range_query(&self, q: &Point, r: f64) -> Result<QueryResult> {
        self.check_query(q)?;
        if r.is_nan() || r < 0.0 || r.is_infinite() {
            return Err(Error::invalid(format!(
                "radius must be finite and >= 0, got {r}"
            )));
        }
        let space = self.dataset.space();
        let mut counter = DistanceCounter::new();
        let pd = self.pivot_distances(q, &mut counter)?;
        let prepared = self.prepare(&pd);
        let threshold = r + self.slack();

        let mut matches = Vec::new();
        let mut match_distances = Vec::new();
        let mut discarded = 0;
        for (j, x) in self.dataset.points().iter().enumerate() {
            if self.rho_prepared(&prepared, j) > threshold {
                discarded += 1;
                continue;
            }
            counter.tick();
            let dist = space.distance_unchecked(q, x);
            if dist <= r {
                matches.push(j);
                match_distances.push(dist);
            }
        }
        Ok(QueryResult {
            matches,
            match_distances,
            discarded,
            cost: counter.count(),
            radius: r,
            query: q.clone(),
        })
    }

    /// The `k_nn` points nearest to `q`, ties broken by lower index.
    ///
    /// Candidates are verified in ascending `(ρ_k, index)` order; the scan stops
    /// once no remaining candidate can beat the current `k_nn`-th neighbour.
    /// Unverified candidates count as discarded.
    pub fn knn_query(&self, q: &Point, k_nn: usize) -> Result<QueryResult> {
        self.check_query(q)?;
        let n = self.n();
        if k_nn == 0 || k_nn > n {
            return Err(Error::invalid(format!(
                "k_nn must be in 1..={n}, got {k_nn}"
            )));
        }
        let space = self.dataset.space();
        let mut counter = DistanceCounter::new();
        let pd = self.pivot_distances(q, &mut counter)?;
        let prepared = self.prepare(&pd);
        let slack = self.slack();

        let mut order: Vec<(f64, usize)> = (0..n)
            .map(|j| (self.rho_prepared(&prepared, j), j))
            .collect();
        order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut best: BinaryHeap<Neighbour> = BinaryHeap::with_capacity(k_nn + 1);
        let mut verified = 0usize;
        for &(lb, j) in &order {
            if best.len() == k_nn {
                let worst = best.peek().expect("non-empty heap");
                let can_improve = if slack == 0.0 {
                    (lb, j) < (worst.dist, worst.index)
                } else {
                    lb <= worst.dist + slack
                };
                if !can_improve {
                    break;
                }
            }
            counter.tick();
            verified += 1;
            let candidate = Neighbour {
                dist: space.distance_unchecked(q, self.dataset.point(j)),
                index: j,
            };
            if best.len() < k_nn {
                best.push(candidate);
            } else if candidate < *best.peek().expect("non-empty heap") {
                best.pop();
                best.push(candidate);
            }
        }

        let neighbours = best.into_sorted_vec();
        Ok(QueryResult {
            matches: neighbours.iter().map(|nb| nb.index).collect(),
            match_distances: neighbours.iter().map(|nb| nb.dist).collect(),
            discarded: n - verified,
            cost: counter.count(),
            radius: neighbours.last().map_or(0.0, |nb| nb.dist),
            query: q.clone(),
        })
    }
}

/// Heap entry ordered by `(dist, index)`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Neighbour {
    dist: f64,
    index: usize,
}

impl Eq for Neighbour {}

impl PartialOrd for Neighbour {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbour {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

/// Exact range search over every point; `cost = n`.
pub fn linear_scan(dataset: &Dataset, q: &Point, r: f64) -> Result<QueryResult> {
    let space = dataset.space();
    space.validate_point(q)?;
    let mut counter = DistanceCounter::new();
    let mut matches = Vec::new();
    let mut match_distances = Vec::new();
    for (j, x) in dataset.points().iter().enumerate() {
        let dist = space.distance(q, x, Some(&mut counter))?;
        if dist <= r {
            matches.push(j);
            match_distances.push(dist);
        }
    }
    Ok(QueryResult {
        matches,
        match_distances,
        discarded: 0,
        cost: counter.count(),
        radius: r,
        query: q.clone(),
    })
}

/// Distance from `q` to its nearest neighbour in `dataset`, without any cost
/// accounting. Used to set query radii. `None` for an empty dataset.
pub fn nearest_distance(dataset: &Dataset, q: &Point) -> Option<f64> {
    let space = dataset.space();
    dataset
        .points()
        .iter()
        .map(|x| space.distance_unchecked(q, x))
        .min_by(f64::total_cmp)
}

pub const INDEX_FORMAT_VERSION: u32 = 1;

/// First line of a persisted index. Pivots are stored in the dataset line
/// format so that indexes with pivots outside the dataset can be reloaded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexHeader {
    pub format_version: u32,
    pub n: usize,
    pub k: usize,
    pub strategy: String,
    pub seed: u64,
    pub pivot_indices: Option<Vec<usize>>,
    pub pivots: Vec<String>,
}

/// Writes the header line, then `n` rows of `k` space-separated distances.
pub fn write_index<W: Write>(index: &PivotIndex<'_>, mut w: W) -> std::io::Result<()> {
    let header = IndexHeader {
        format_version: INDEX_FORMAT_VERSION,
        n: index.n(),
        k: index.k(),
        strategy: index.pivots.strategy_name().to_string(),
        seed: index.pivots.seed,
        pivot_indices: index.pivots.indices.clone(),
        pivots: index.pivots.pivots.iter().map(format_point).collect(),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for j in 0..index.n() {
        let row: Vec<String> = index.row(j).iter().map(|v| sig17(*v)).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    w.flush()
}

/// Reads an index written by [`write_index`] and checks every stored distance
/// against `dataset`.
pub fn read_index<'a, R: Read>(dataset: &'a Dataset, r: R) -> Result<PivotIndex<'a>> {
    let mut lines = BufReader::new(r).lines();
    let mut next_line = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Parse("index file truncated".into()))?
            .map_err(|e| Error::Parse(e.to_string()))
    };
    let header: IndexHeader = serde_json::from_str(&next_line()?)?;
    if header.format_version != INDEX_FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported index format_version {}",
            header.format_version
        )));
    }
    if header.n != dataset.len() || header.pivots.len() != header.k {
        return Err(Error::Parse(format!(
            "index shape n={} k={} does not match dataset of {} points with {} pivots",
            header.n,
            header.k,
            dataset.len(),
            header.pivots.len()
        )));
    }
    let space = dataset.space();
    let pivots = header
        .pivots
        .iter()
        .map(|s| parse_point(space, s))
        .collect::<Result<Vec<_>>>()?;
    let strategy = match header.strategy.as_str() {
        "explicit" => None,
        s => Some(s.parse()?),
    };
    let pivot_set = PivotSet {
        pivots,
        indices: header.pivot_indices,
        strategy,
        seed: header.seed,
    };

    let mut table = Vec::with_capacity(header.n * header.k);
    for j in 0..header.n {
        let line = next_line()?;
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {j}: bad float {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != header.k {
            return Err(Error::Parse(format!(
                "row {j} has {} entries, expected {}",
                row.len(),
                header.k
            )));
        }
        for (i, v) in row.iter().enumerate() {
            let expected = space.distance_unchecked(dataset.point(j), &pivot_set.pivots[i]);
            if *v != expected {
                return Err(Error::Parse(format!(
                    "table entry ({j}, {i}) is {v}, dataset gives {expected}"
                )));
            }
        }
        table.extend(row);
    }
    Ok(PivotIndex::assemble(dataset, pivot_set, table, 0))
}

pub fn save_index(index: &PivotIndex<'_>, path: &Path) -> Result<()> {
    crate::harness::report::write_atomically(path, |w| write_index(index, w))
}

pub fn load_index<'a>(dataset: &'a Dataset, path: &Path) -> Result<PivotIndex<'a>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_index(dataset, f)
}
