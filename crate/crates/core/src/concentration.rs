//! Concentration of measure: analytic bounds on the concentration function
//! `α(ε)` and Monte-Carlo estimates of the quantities they control.
//!
//! The empirical `α̂` is a lower estimate. For each 1-Lipschitz test function
//! `f` in a fixed family, the set `A = {f ≤ M_f}` has measure at least one
//! half, and its ε-neighbourhood lies inside `{f ≤ M_f + ε}`. The sample mass
//! of `{f > M_f + ε}` therefore never exceeds `1 − μ(A_ε) ≤ α(ε)`, up to
//! sampling noise.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pivot_index::nearest_distance;
use crate::rng::{derive_seed, stream_rng, tags};
use crate::spaces::{sample, Point, SpaceKind};
use crate::stats::{lower_median, mean, quantile, sort_floats, unbiased_variance};

/// Points drawn per random stream in Monte-Carlo loops. Fixed so results do
/// not depend on thread count.
const CHUNK: usize = 4096;

/// Half-space test functions per sign on real spaces.
const COORDINATE_FUNCTIONS: usize = 4;
/// Random centres `p` for `ρ(·, p)` test functions on Hamming cubes.
const HAMMING_CENTRES: usize = 4;

/// Constants of a normal Lévy family bound `α(ε) < C·e^{−c·ε²·d}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevyParams {
    pub scale: f64,
    pub rate: f64,
}

impl LevyParams {
    /// Calibration for normalized Hamming cubes: `(C, c) = (1, 2)`, the
    /// Hoeffding tail of a normalized coordinate sum.
    pub const HAMMING: LevyParams = LevyParams {
        scale: 1.0,
        rate: 2.0,
    };

    pub fn new(scale: f64, rate: f64) -> Result<Self> {
        if !(scale > 0.0 && rate > 0.0 && scale.is_finite() && rate.is_finite()) {
            return Err(Error::invalid(format!(
                "Lévy constants must be positive, got C={scale}, c={rate}"
            )));
        }
        Ok(LevyParams { scale, rate })
    }
}

/// `e^{−(d−1)ε²/2}` for the unit sphere in `ℝ^d`.
pub fn sphere_alpha_bound(d: usize, eps: f64) -> f64 {
    debug_assert!(d >= 2 && eps >= 0.0);
    (-((d as f64) - 1.0) * eps * eps / 2.0).exp()
}

/// `C·e^{−c·ε²·d}`, unclamped.
pub fn levy_bound(params: LevyParams, d: usize, eps: f64) -> f64 {
    params.scale * (-params.rate * eps * eps * d as f64).exp()
}

/// `2·k·α(r/2)`: bound on the mass that `k` pivots fail to discard. Returned
/// raw; values of 1 or more are vacuous.
pub fn pruning_bound(k: usize, alpha_half_r: f64) -> f64 {
    2.0 * k as f64 * alpha_half_r
}

/// Analytic upper envelope for `α(ε)` in `space`.
///
/// Spheres use the closed form. The uniform ball in `ℝ^d` is a 1-Lipschitz
/// image of the uniform sphere in `ℝ^{d+2}` (first `d` coordinates), so it
/// inherits that sphere's bound. Hamming cubes use [`LevyParams::HAMMING`].
pub fn alpha_upper_bound(space: &SpaceKind, eps: f64) -> f64 {
    match *space {
        SpaceKind::Sphere { d, .. } => sphere_alpha_bound(d.max(2), eps),
        SpaceKind::Ball { d } => sphere_alpha_bound(d + 2, eps),
        SpaceKind::HammingCube { d } => levy_bound(LevyParams::HAMMING, d, eps).min(1.0),
    }
}

/// Three binomial standard deviations at `p = 1/2` for `n` samples.
pub fn monte_carlo_margin(n: usize) -> f64 {
    3.0 * (0.25 / n as f64).sqrt()
}

/// A shipped 1-Lipschitz function on one of the spaces.
#[derive(Clone, Debug, PartialEq)]
pub enum TestFunction {
    /// `ω ↦ ω_i` on spheres and balls.
    Coordinate(usize),
    /// `ω ↦ (Σ ω_i) / d` on Hamming cubes.
    NormalizedWeight,
    /// `ω ↦ ρ(ω, p)` on any space.
    DistanceTo(Point),
}

impl TestFunction {
    fn check(&self, space: &SpaceKind) -> Result<()> {
        match self {
            TestFunction::Coordinate(i) if space.is_real() && *i < space.dim() => Ok(()),
            TestFunction::Coordinate(i) => Err(Error::invalid(format!(
                "coordinate {i} is not defined on {space}"
            ))),
            TestFunction::NormalizedWeight if !space.is_real() => Ok(()),
            TestFunction::NormalizedWeight => {
                Err(Error::invalid("normalized weight needs a Hamming cube"))
            }
            TestFunction::DistanceTo(p) => space.validate_point(p),
        }
    }

    fn eval(&self, space: &SpaceKind, w: &Point) -> f64 {
        match self {
            TestFunction::Coordinate(i) => w.as_real().expect("real point")[*i],
            TestFunction::NormalizedWeight => {
                w.as_bits().expect("bit point").count_ones() as f64 / space.dim() as f64
            }
            TestFunction::DistanceTo(p) => space.distance_unchecked(w, p),
        }
    }
}

/// Which test-function family produced an estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestFamily {
    /// `±ω_i` for the first few coordinates: level sets are half-spaces.
    CoordinateHalfSpaces,
    /// `±` normalized weight and `±ρ(·, p)` for random centres `p`.
    HammingLevelSets,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcentrationEstimate {
    pub epsilons: Vec<f64>,
    pub alpha_hat: Vec<f64>,
    pub n_samples: usize,
    pub family: TestFamily,
}

impl ConcentrationEstimate {
    pub fn margin(&self) -> f64 {
        monte_carlo_margin(self.n_samples)
    }
}

/// Summary of an empirical distribution around its lower median.
#[derive(Clone, Debug, PartialEq)]
pub struct MedianStats {
    pub median: f64,
    /// `(level, q)` with `q` the lower `level`-quantile of `|x − median|`.
    pub deviation_quantiles: Vec<(f64, f64)>,
    pub sample_size: usize,
}

impl MedianStats {
    pub const LEVELS: [f64; 3] = [0.5, 0.9, 0.99];

    pub fn from_sample(values: &[f64]) -> Option<Self> {
        let median = lower_median(values)?;
        let mut dev: Vec<f64> = values.iter().map(|v| (v - median).abs()).collect();
        sort_floats(&mut dev);
        Some(MedianStats {
            median,
            deviation_quantiles: Self::LEVELS
                .iter()
                .map(|&l| (l, quantile(&dev, l).expect("non-empty")))
                .collect(),
            sample_size: values.len(),
        })
    }
}

/// Evaluates `fns` on `n` i.i.d. points, chunked over fixed random streams.
/// Returns one column of `n` values per function.
fn sample_columns(space: &SpaceKind, fns: &[TestFunction], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let m = fns.len();
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(n - c * CHUNK);
            let mut rng = stream_rng(seed, &[tags::SAMPLES, c as u64]);
            let mut flat = Vec::with_capacity(len * m);
            for _ in 0..len {
                let w = space.sample_point(&mut rng);
                flat.extend(fns.iter().map(|f| f.eval(space, &w)));
            }
            flat
        })
        .collect();
    let mut columns = vec![Vec::with_capacity(n); m];
    for flat in chunks {
        for row in flat.chunks_exact(m) {
            for (col, v) in columns.iter_mut().zip(row) {
                col.push(*v);
            }
        }
    }
    columns
}

/// Distances between `n_pairs` independent pairs of points.
pub fn pair_distances(space: &SpaceKind, n_pairs: usize, seed: u64) -> Vec<f64> {
    (0..n_pairs.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(n_pairs - c * CHUNK);
            let mut rng = stream_rng(seed, &[tags::PAIRS, c as u64]);
            (0..len)
                .map(|_| {
                    let x = space.sample_point(&mut rng);
                    let y = space.sample_point(&mut rng);
                    space.distance_unchecked(&x, &y)
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect()
}

fn test_family(space: &SpaceKind, seed: u64) -> (TestFamily, Vec<TestFunction>) {
    match space {
        SpaceKind::HammingCube { .. } => {
            let mut rng = stream_rng(seed, &[tags::TEST_FUNCTIONS]);
            let mut fns = vec![TestFunction::NormalizedWeight];
            fns.extend(
                (0..HAMMING_CENTRES)
                    .map(|_| TestFunction::DistanceTo(space.sample_point(&mut rng))),
            );
            (TestFamily::HammingLevelSets, fns)
        }
        _ => (
            TestFamily::CoordinateHalfSpaces,
            (0..space.dim().min(COORDINATE_FUNCTIONS))
                .map(TestFunction::Coordinate)
                .collect(),
        ),
    }
}

/// Fraction of `sorted` strictly above `threshold`.
fn tail_fraction(sorted: &[f64], threshold: f64) -> f64 {
    let at_or_below = sorted.partition_point(|v| *v <= threshold);
    (sorted.len() - at_or_below) as f64 / sorted.len() as f64
}

/// Lower Monte-Carlo estimate of `α(ε)` on each of `epsilons`.
///
/// `α̂(0)` is 1/2 by definition and `α̂(ε)` is 0 once `ε` reaches the
/// diameter. Otherwise it is the largest sample mass of `{f > M_f + ε}` over
/// the test family and its negations.
pub fn estimate_concentration(
    space: &SpaceKind,
    epsilons: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<ConcentrationEstimate> {
    if n_samples < 100 {
        return Err(Error::invalid(format!(
            "need at least 100 samples, got {n_samples}"
        )));
    }
    if epsilons.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::invalid("epsilons must be finite and non-negative"));
    }
    if epsilons.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("epsilons must be ascending"));
    }

    let (family, fns) = test_family(space, seed);
    let columns = sample_columns(space, &fns, n_samples, seed);
    // each function and its negation, sorted, with its lower median
    let levels: Vec<(Vec<f64>, f64)> = columns
        .into_iter()
        .flat_map(|col| {
            let neg: Vec<f64> = col.iter().map(|v| -v).collect();
            [col, neg]
        })
        .map(|mut col| {
            sort_floats(&mut col);
            let m = col[(col.len() - 1) / 2];
            (col, m)
        })
        .collect();

    let diameter = space.diameter();
    let alpha_hat = epsilons
        .iter()
        .map(|&eps| {
            if eps == 0.0 {
                0.5
            } else if eps >= diameter {
                0.0
            } else {
                levels
                    .iter()
                    .map(|(sorted, m)| tail_fraction(sorted, m + eps))
                    .fold(0.0, f64::max)
            }
        })
        .collect();

    Ok(ConcentrationEstimate {
        epsilons: epsilons.to_vec(),
        alpha_hat,
        n_samples,
        family,
    })
}

/// Sample mass of `{|f − M| > ε}` with `M` the sample median of `f`.
pub fn lipschitz_deviation(
    space: &SpaceKind,
    f: &TestFunction,
    eps: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    f.check(space)?;
    if n_samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let col = sample_columns(space, std::slice::from_ref(f), n_samples, seed)
        .pop()
        .expect("one column");
    let m = lower_median(&col).expect("non-empty");
    let off = col.iter().filter(|v| (*v - m).abs() > eps).count();
    Ok(off as f64 / n_samples as f64)
}

/// Median of `ρ(ω₁, ω₂)` over independent pairs.
pub fn median_distance(space: &SpaceKind, n_pairs: usize, seed: u64) -> Result<MedianStats> {
    if n_pairs == 0 {
        return Err(Error::invalid("need at least one pair"));
    }
    let dists = pair_distances(space, n_pairs, seed);
    Ok(MedianStats::from_sample(&dists).expect("non-empty"))
}

/// Median over fresh query centres of the distance to the nearest neighbour in
/// a sampled dataset of size `n`.
pub fn nn_distance_median(
    space: &SpaceKind,
    n: usize,
    n_queries: usize,
    seed: u64,
) -> Result<MedianStats> {
    if n == 0 || n_queries == 0 {
        return Err(Error::invalid("need n >= 1 and at least one query"));
    }
    let ds = sample(space, n, derive_seed(seed, &[tags::DATASET]));
    let nn: Vec<f64> = (0..n_queries)
        .into_par_iter()
        .map(|qi| {
            let mut rng = stream_rng(seed, &[tags::QUERIES, qi as u64]);
            let q = space.sample_point(&mut rng);
            nearest_distance(&ds, &q).expect("non-empty dataset")
        })
        .collect();
    Ok(MedianStats::from_sample(&nn).expect("non-empty"))
}

/// `E(ρ)² / (2·Var(ρ))` from a sample of distances, with unbiased variance.
pub fn intrinsic_dimension_of(distances: &[f64]) -> Result<f64> {
    let m = mean(distances).ok_or_else(|| Error::invalid("no distances"))?;
    let var = unbiased_variance(distances)
        .ok_or_else(|| Error::invalid("need at least two distances"))?;
    if var == 0.0 {
        return Err(Error::Degenerate("distance variance is zero".into()));
    }
    Ok(m * m / (2.0 * var))
}

/// Plug-in intrinsic dimension from `n_pairs` random pair distances.
pub fn intrinsic_dimension(space: &SpaceKind, n_pairs: usize, seed: u64) -> Result<f64> {
    if n_pairs < 100 {
        return Err(Error::invalid(format!(
            "need at least 100 pairs, got {n_pairs}"
        )));
    }
    intrinsic_dimension_of(&pair_distances(space, n_pairs, seed))
}

/// Uniform random point of `space`, for callers that need ad hoc centres.
pub fn random_point(space: &SpaceKind, seed: u64) -> Point {
    space.sample_point(&mut stream_rng(seed, &[tags::TEST_FUNCTIONS, u64::MAX]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::SphereMetric;

    fn sphere(d: usize) -> SpaceKind {
        SpaceKind::sphere(d, SphereMetric::Euclidean).unwrap()
    }

    #[test]
    fn sphere_bound_values() {
        assert_eq!(sphere_alpha_bound(2, 0.0), 1.0);
        assert!((sphere_alpha_bound(101, 0.2) - (-2.0f64).exp()).abs() < 1e-15);
        assert!((sphere_alpha_bound(101, 0.2) - 0.13534).abs() < 1e-5);
        assert!((sphere_alpha_bound(10, 0.5) - 0.32465).abs() < 1e-5);
    }

    #[test]
    fn levy_bound_values() {
        let p = LevyParams::new(1.0, 0.5).unwrap();
        assert_eq!(levy_bound(p, 37, 0.0), 1.0);
        let q = LevyParams::new(2.0, 1.0).unwrap();
        assert!((levy_bound(q, 100, 0.3) - 2.4682e-4).abs() < 1e-8);
        assert!(levy_bound(q, 100, 0.4) < levy_bound(q, 100, 0.3));
        assert!(LevyParams::new(0.0, 1.0).is_err());
        assert!(LevyParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn pruning_bound_values() {
        assert_eq!(pruning_bound(0, 0.3), 0.0);
        assert!((pruning_bound(10, 0.01) - 0.2).abs() < 1e-15);
        assert!((pruning_bound(8, 0.004) - 0.064).abs() < 1e-15);
    }

    #[test]
    fn alpha_at_zero_and_beyond_diameter() {
        for space in [
            sphere(5),
            SpaceKind::hamming(16).unwrap(),
            SpaceKind::ball(3).unwrap(),
        ] {
            let est = estimate_concentration(&space, &[0.0, 0.3, 2.0, 5.0], 1000, 4).unwrap();
            assert_eq!(est.alpha_hat[0], 0.5);
            assert_eq!(est.alpha_hat[2], 0.0);
            assert_eq!(est.alpha_hat[3], 0.0);
        }
    }

    #[test]
    fn estimate_rejects_bad_inputs() {
        let s = sphere(3);
        assert!(estimate_concentration(&s, &[0.1], 99, 0).is_err());
        assert!(estimate_concentration(&s, &[0.2, 0.1], 1000, 0).is_err());
        assert!(estimate_concentration(&s, &[-0.1], 1000, 0).is_err());
    }

    #[test]
    fn sphere_estimate_under_bound() {
        let eps = [0.0, 0.25, 0.5, 0.75];
        let est = estimate_concentration(&sphere(10), &eps, 100_000, 1).unwrap();
        for (e, a) in eps.iter().zip(&est.alpha_hat) {
            assert!(
                *a <= sphere_alpha_bound(10, *e) + est.margin(),
                "ε={e}: {a}"
            );
        }
        // monotone in ε
        assert!(est.alpha_hat.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn estimate_is_chunking_independent() {
        let a = estimate_concentration(&sphere(6), &[0.1, 0.2], 10_000, 3).unwrap();
        let b = estimate_concentration(&sphere(6), &[0.1, 0.2], 10_000, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lipschitz_deviation_on_sphere() {
        let v = lipschitz_deviation(&sphere(50), &TestFunction::Coordinate(0), 0.4, 100_000, 2)
            .unwrap();
        let bound = 2.0 * sphere_alpha_bound(50, 0.4);
        assert!((bound - 2.0 * (-3.92f64).exp()).abs() < 1e-12);
        assert!(v < bound + monte_carlo_margin(100_000), "{v}");
    }

    #[test]
    fn lipschitz_deviation_on_hamming() {
        let space = SpaceKind::hamming(64).unwrap();
        let p = random_point(&space, 5);
        let v = lipschitz_deviation(&space, &TestFunction::DistanceTo(p), 0.25, 20_000, 6).unwrap();
        let bound = 2.0 * levy_bound(LevyParams::HAMMING, 64, 0.25);
        assert!(v < bound + monte_carlo_margin(20_000), "{v} vs {bound}");
    }

    #[test]
    fn lipschitz_deviation_at_zero() {
        let space = SpaceKind::hamming(9).unwrap();
        let v = lipschitz_deviation(&space, &TestFunction::NormalizedWeight, 0.0, 5000, 1).unwrap();
        assert!(v <= 1.0);
        // weight takes lattice values, so some mass sits exactly on the median
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn lipschitz_deviation_rejects_mismatched_functions() {
        let cube = SpaceKind::hamming(4).unwrap();
        assert!(lipschitz_deviation(&cube, &TestFunction::Coordinate(0), 0.1, 100, 0).is_err());
        let s = sphere(3);
        assert!(lipschitz_deviation(&s, &TestFunction::NormalizedWeight, 0.1, 100, 0).is_err());
        assert!(lipschitz_deviation(&s, &TestFunction::Coordinate(3), 0.1, 100, 0).is_err());
        assert!(lipschitz_deviation(
            &s,
            &TestFunction::DistanceTo(Point::real([1.0, 0.0])),
            0.1,
            100,
            0
        )
        .is_err());
    }

    #[test]
    fn median_distance_hamming_and_sphere() {
        for d in [8, 32, 100] {
            let m = median_distance(&SpaceKind::hamming(d).unwrap(), 20_000, d as u64).unwrap();
            assert!(
                (m.median - 0.5).abs() <= 1.0 / d as f64,
                "d={d}: {}",
                m.median
            );
        }
        let m = median_distance(&sphere(50), 100_000, 1).unwrap();
        let r2 = std::f64::consts::SQRT_2;
        assert!((m.median - r2).abs() <= 0.02 * r2);
    }

    #[test]
    fn median_of_single_pair() {
        let space = sphere(3);
        let m = median_distance(&space, 1, 9).unwrap();
        assert_eq!(m.sample_size, 1);
        assert_eq!(m.median, pair_distances(&space, 1, 9)[0]);
        assert!(median_distance(&space, 0, 9).is_err());
    }

    #[test]
    fn median_stats_split_sample() {
        let dists = pair_distances(&SpaceKind::hamming(12).unwrap(), 999, 3);
        let m = MedianStats::from_sample(&dists).unwrap();
        let below = dists.iter().filter(|v| **v <= m.median).count();
        let above = dists.iter().filter(|v| **v >= m.median).count();
        assert!(2 * below >= dists.len() && 2 * above >= dists.len());
        let q: Vec<f64> = m.deviation_quantiles.iter().map(|(_, q)| *q).collect();
        assert!(q.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn nn_median_single_point_matches_pair_median() {
        let space = SpaceKind::hamming(64).unwrap();
        let nn = nn_distance_median(&space, 1, 4000, 2).unwrap();
        let pairs = median_distance(&space, 4000, 3).unwrap();
        assert!((nn.median - pairs.median).abs() <= 2.0 / 64.0);
    }

    #[test]
    fn nn_median_is_deterministic() {
        let space = SpaceKind::ball(4).unwrap();
        assert_eq!(
            nn_distance_median(&space, 100, 50, 7).unwrap(),
            nn_distance_median(&space, 100, 50, 7).unwrap()
        );
        assert!(nn_distance_median(&space, 0, 50, 7).is_err());
    }

    #[test]
    fn intrinsic_dimension_examples() {
        let d1 = intrinsic_dimension(&SpaceKind::hamming(1).unwrap(), 100_000, 1).unwrap();
        assert!((d1 - 0.5).abs() < 0.01, "{d1}");
        let d64 = intrinsic_dimension(&SpaceKind::hamming(64).unwrap(), 100_000, 2).unwrap();
        assert!((d64 - 32.0).abs() <= 3.2, "{d64}");
        assert!(matches!(
            intrinsic_dimension_of(&[0.5, 0.5, 0.5]),
            Err(Error::Degenerate(_))
        ));
        assert!(intrinsic_dimension(&sphere(3), 50, 0).is_err());
    }

    #[test]
    fn ball_bound_uses_larger_sphere() {
        let b = SpaceKind::ball(8).unwrap();
        assert_eq!(alpha_upper_bound(&b, 0.3), sphere_alpha_bound(10, 0.3));
        let est = estimate_concentration(&b, &[0.1, 0.3, 0.6], 50_000, 8).unwrap();
        for (e, a) in est.epsilons.iter().zip(&est.alpha_hat) {
            assert!(*a <= alpha_upper_bound(&b, *e) + est.margin());
        }
    }
}
