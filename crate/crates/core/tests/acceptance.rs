//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.
//!
//! Run with `cargo test --test acceptance`.

use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pivotlab::concentration::{
    intrinsic_dimension, median_distance, monte_carlo_margin, sphere_alpha_bound,
};
use pivotlab::harness::{
    run_concentration_experiment, run_curse_experiment, run_projection_figure, CellReport,
    ExperimentConfig, SpaceConfig,
};
use pivotlab::pivot_index::{build_index, linear_scan, select_pivots, PivotSet, PivotStrategy};
use pivotlab::spaces::{sample, DistanceCounter, Point, SpaceKind, SphereMetric};
use pivotlab::vc_bounds::{
    growth_bound, intersection_vc_bound, pivot_family_vc_bound, sample_size_bound, union_vc_bound,
    vc_convergence_bound, vc_convergence_exponent, SpaceFamily, VcBoundInput,
};

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Failure count and first few failure messages.
#[derive(Default)]
struct Tally {
    checks: usize,
    failures: usize,
    first: Vec<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.first.len() < 3 {
                self.first.push(msg());
            }
        }
    }

    fn ok(&self) -> bool {
        self.failures == 0
    }

    fn summary(&self) -> String {
        if self.ok() {
            format!("{} checks", self.checks)
        } else {
            format!(
                "{}/{} checks failed: {}",
                self.failures,
                self.checks,
                self.first.join("; ")
            )
        }
    }
}

fn random_space(rng: &mut ChaCha8Rng) -> SpaceKind {
    match rng.random_range(0..4) {
        0 | 1 => SpaceKind::hamming(rng.random_range(1..=64)).unwrap(),
        2 => SpaceKind::sphere(rng.random_range(1..=32), SphereMetric::Euclidean).unwrap(),
        _ => SpaceKind::sphere(rng.random_range(1..=32), SphereMetric::Geodesic).unwrap(),
    }
}

fn brute_knn(space: &SpaceKind, points: &[Point], q: &Point, m: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(j, x)| (space.distance(q, x, None).unwrap(), j))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(m).map(|(_, j)| j).collect()
}

/// Criteria 1 and 3 share one randomized workload.
fn exactness_and_accounting() -> (Outcome, Outcome) {
    const TRIALS: usize = 1200;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut range = Tally::default();
    let mut knn = Tally::default();
    let mut cost = Tally::default();

    for trial in 0..TRIALS {
        let space = random_space(&mut rng);
        let n = rng.random_range(1..=512);
        let k = rng.random_range(0..=16.min(n));
        let strategy = PivotStrategy::ALL[trial % 3];
        let ds = sample(&space, n, rng.random());
        let pivots = select_pivots(&ds, k, strategy, rng.random()).unwrap();
        let index = build_index(&ds, pivots).unwrap();

        // query: fresh point, or a dataset point to force zero distances
        let q = if rng.random_bool(0.25) {
            ds.point(rng.random_range(0..n)).clone()
        } else {
            space.sample_point(&mut rng)
        };
        let r = match rng.random_range(0..4) {
            0 => 0.0,
            1 => space.diameter(),
            // exactly the distance to some dataset point, so ties sit on the boundary
            2 => space
                .distance(&q, ds.point(rng.random_range(0..n)), None)
                .unwrap(),
            _ => rng.random_range(0.0..=space.diameter()),
        };

        let got = index.range_query(&q, r).unwrap();
        let want = linear_scan(&ds, &q, r).unwrap();
        range.check(got.matches == want.matches, || {
            format!("trial {trial}: {space} n={n} k={k} {strategy} r={r}")
        });

        // discard set recomputed from the table, plus the accounting identity
        let mut pd_counter = DistanceCounter::new();
        let pd = index.pivot_distances(&q, &mut pd_counter).unwrap();
        let discarded = (0..n)
            .filter(|&j| index.rho_k(&pd, j) > r + slack(&space))
            .count();
        cost.check(
            got.discarded == discarded && got.cost == (k + n - got.discarded) as u64,
            || {
                format!(
                    "trial {trial}: cost {} discarded {} k={k} n={n}",
                    got.cost, got.discarded
                )
            },
        );

        let m = if rng.random_bool(0.1) {
            n
        } else {
            rng.random_range(1..=n.min(20))
        };
        let got = index.knn_query(&q, m).unwrap();
        let want = brute_knn(&space, ds.points(), &q, m);
        knn.check(got.matches == want, || {
            format!(
                "trial {trial}: {space} n={n} k={k} m={m}: {:?} vs {:?}",
                got.matches, want
            )
        });
    }

    let exact = outcome(
        range.ok() && knn.ok(),
        format!(
            "{TRIALS} trials; range {}; knn {}",
            range.summary(),
            knn.summary()
        ),
    );
    let acct = outcome(
        cost.ok(),
        format!("cost = k + (n - |C_q|): {}", cost.summary()),
    );
    (exact, acct)
}

fn slack(space: &SpaceKind) -> f64 {
    if space.is_real() {
        pivotlab::pivot_index::REAL_SLACK
    } else {
        0.0
    }
}

fn lower_bound_property() -> Outcome {
    let spaces = [
        SpaceKind::hamming(48).unwrap(),
        SpaceKind::sphere(16, SphereMetric::Euclidean).unwrap(),
        SpaceKind::sphere(16, SphereMetric::Geodesic).unwrap(),
        SpaceKind::ball(16).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
    let mut lower = Tally::default();
    let mut monotone = Tally::default();

    for space in &spaces {
        let tol = if space.is_real() { 1e-12 } else { 0.0 };
        // 1000 queries against 100 points: 10^5 triples per space
        for _ in 0..10 {
            let ds = sample(space, 100, rng.random());
            let pivots = select_pivots(&ds, 8, PivotStrategy::Random, rng.random()).unwrap();
            let index = build_index(&ds, pivots).unwrap();
            for _ in 0..100 {
                let q = space.sample_point(&mut rng);
                let pd = index
                    .pivot_distances(&q, &mut DistanceCounter::new())
                    .unwrap();
                for j in 0..ds.len() {
                    let lb = index.rho_k(&pd, j);
                    let d = space.distance(&q, ds.point(j), None).unwrap();
                    lower.check(lb <= d + tol, || format!("{space}: rho_k {lb} > rho {d}"));
                }
            }
        }

        // 10^4 trials per space: (pivot set, extra pivot, query, point)
        for _ in 0..100 {
            let ds = sample(space, 20, rng.random());
            let k = rng.random_range(0..8);
            let base: Vec<Point> = (0..k).map(|_| space.sample_point(&mut rng)).collect();
            let before = PivotSet::explicit(base);
            let after = before.with_appended(space.sample_point(&mut rng));
            let small = build_index(&ds, before).unwrap();
            let big = build_index(&ds, after).unwrap();
            for _ in 0..5 {
                let q = space.sample_point(&mut rng);
                let pd_small = small
                    .pivot_distances(&q, &mut DistanceCounter::new())
                    .unwrap();
                let pd_big = big
                    .pivot_distances(&q, &mut DistanceCounter::new())
                    .unwrap();
                for j in 0..ds.len() {
                    let (a, b) = (small.rho_k(&pd_small, j), big.rho_k(&pd_big, j));
                    monotone.check(b >= a, || format!("{space}: {b} < {a} after append"));
                }
            }
        }
    }
    outcome(
        lower.ok() && monotone.ok(),
        format!(
            "lower bound {}; append {}",
            lower.summary(),
            monotone.summary()
        ),
    )
}

fn sphere_concentration() -> Outcome {
    let dims = [10, 20, 50, 100];
    let eps: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let n = 100_000;
    let rows = run_concentration_experiment(
        SpaceConfig::sphere(SphereMetric::Euclidean),
        &dims,
        &eps,
        n,
        SEED,
    )
    .unwrap();
    let margin = monte_carlo_margin(n);
    let mut bound = Tally::default();
    let mut order = Tally::default();
    for row in &rows {
        let b = sphere_alpha_bound(row.d, row.eps);
        bound.check(row.alpha_hat <= b + margin, || {
            format!(
                "d={} eps={}: {} > {}",
                row.d,
                row.eps,
                row.alpha_hat,
                b + margin
            )
        });
    }
    for pair in dims.windows(2) {
        for &e in &eps {
            let at = |d: usize| {
                rows.iter()
                    .find(|r| r.d == d && r.eps == e)
                    .unwrap()
                    .alpha_hat
            };
            let (lo, hi) = (at(pair[0]), at(pair[1]));
            order.check(hi <= lo, || {
                format!("eps={e}: d={} {hi} > d={} {lo}", pair[1], pair[0])
            });
        }
    }
    let a = |d: usize| {
        rows.iter()
            .find(|r| r.d == d && r.eps == 0.1)
            .unwrap()
            .alpha_hat
    };
    outcome(
        bound.ok() && order.ok(),
        format!(
            "bound {}; ordering in d {}; alpha_hat(0.1) = {:.4} {:.4} {:.4} {:.4}",
            bound.summary(),
            order.summary(),
            a(10),
            a(20),
            a(50),
            a(100)
        ),
    )
}

fn projection_figure() -> Outcome {
    let sets = run_projection_figure(&[10, 20, 50, 100], 1000, SEED).unwrap();
    let mut t = Tally::default();
    let mut ratios = Vec::new();
    for s in &sets {
        let ratio = s.median_norm / s.reference_norm();
        ratios.push(format!("d={} {ratio:.3}", s.d));
        t.check((ratio - 1.0).abs() <= 0.2, || {
            format!("d={} ratio {ratio}", s.d)
        });
    }
    outcome(t.ok(), format!("median / sqrt(2/d): {}", ratios.join(", ")))
}

fn curse_run() -> Vec<CellReport> {
    let cfg = ExperimentConfig {
        seed: SEED,
        ..Default::default()
    };
    run_curse_experiment(&cfg).unwrap()
}

fn curse_trend(cells: &[CellReport]) -> Outcome {
    let pruned: Vec<f64> = cells
        .iter()
        .map(|c| c.aggregates.median_pruned_fraction)
        .collect();
    let cost: Vec<f64> = cells
        .iter()
        .map(|c| c.aggregates.median_cost_fraction)
        .collect();
    let a = pruned.windows(2).all(|w| w[1] <= w[0]);
    let b = cost.windows(2).all(|w| w[1] >= w[0]);
    let last = cells.last().unwrap();
    let c = last.d() == 256 && last.aggregates.median_cost_fraction >= 0.5;
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    outcome(
        a && b && c,
        format!(
            "(a) pruned {} [{}]; (b) cost/n {} [{}]; (c) d=256 cost/n >= 0.5 {}",
            fmt(&pruned),
            pass_word(a),
            fmt(&cost),
            pass_word(b),
            pass_word(c)
        ),
    )
}

fn pruning_bound_consistency(cells: &[CellReport]) -> Outcome {
    let mut t = Tally::default();
    let mut parts = Vec::new();
    for c in cells {
        let unpruned = c.aggregates.median_unpruned_mass;
        let floor = 1.0 - c.pruning_bound - 0.1;
        parts.push(format!("d={} {unpruned:.4} >= {floor:.4}", c.d()));
        t.check(unpruned >= floor, || {
            format!("d={}: {unpruned} < {floor}", c.d())
        });
    }
    outcome(t.ok(), parts.join(", "))
}

fn intrinsic_dim() -> Outcome {
    let mut t = Tally::default();
    let mut parts = Vec::new();
    for (i, d) in [32usize, 128, 512].into_iter().enumerate() {
        let space = SpaceKind::hamming(d).unwrap();
        let est = intrinsic_dimension(&space, 100_000, SEED + i as u64).unwrap();
        let target = d as f64 / 2.0;
        parts.push(format!("d~({d}) = {est:.1}"));
        t.check((est - target).abs() <= 0.1 * target, || {
            format!("d={d}: {est} vs {target}")
        });
        let med = median_distance(&space, 100_000, SEED + 10 + i as u64)
            .unwrap()
            .median;
        t.check((med - 0.5).abs() <= 1.0 / d as f64, || {
            format!("d={d}: median {med}")
        });
    }
    let sphere = SpaceKind::sphere(50, SphereMetric::Euclidean).unwrap();
    let med = median_distance(&sphere, 100_000, SEED + 20).unwrap().median;
    let root2 = std::f64::consts::SQRT_2;
    parts.push(format!("sphere median {med:.4}"));
    t.check((med - root2).abs() <= 0.02 * root2, || {
        format!("sphere median {med}")
    });
    outcome(t.ok(), format!("{}; {}", parts.join(", "), t.summary()))
}

fn nn_median(cells: &[CellReport]) -> Outcome {
    let m: Vec<f64> = cells
        .iter()
        .map(|c| c.aggregates.median_nn_distance)
        .collect();
    outcome(
        m.iter().all(|&x| x > 0.1),
        format!(
            "m_d = {}",
            m.iter()
                .map(|x| format!("{x:.4}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    )
}

fn vc_formulas() -> Outcome {
    let mut t = Tally::default();
    let close = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol;
    t.check(
        close(growth_bound(5, 5.0), 5.0 * std::f64::consts::LN_2, 1e-12),
        || "growth".into(),
    );
    t.check(union_vc_bound(4.0, 4.0) == 9.0, || "union".into());
    let l2 = pivot_family_vc_bound(VcBoundInput::new(SpaceFamily::L2, 1, 1).unwrap());
    t.check(
        close(l2, 20.0 * 6f64.ln(), 1e-9) && close(l2, 35.835, 1e-3),
        || format!("L2 {l2}"),
    );
    let ham = pivot_family_vc_bound(VcBoundInput::new(SpaceFamily::Hamming, 16, 4).unwrap());
    t.check(close(ham, 2084.8, 0.1), || format!("hamming {ham}"));
    for d in 1..=8u64 {
        for k in 1..=8u64 {
            let lhs = intersection_vc_bound((2 * d + 3) as f64, 2 * k);
            let rhs = pivot_family_vc_bound(VcBoundInput::new(SpaceFamily::L2, d, k).unwrap());
            t.check(close(lhs, rhs, 1e-9 * rhs), || {
                format!("identity d={d} k={k}")
            });
        }
    }
    let m = sample_size_bound(10.0, 0.5, 0.1);
    t.check(m.abs_diff(19582) <= 1, || format!("sample size {m}"));
    let e = vc_convergence_exponent(1_000_000, 1.0, 0.01);
    t.check(close(e, -84.47, 0.05), || format!("exponent {e}"));
    for delta in [1.0, 10.0, 100.0] {
        for eps in [0.05, 0.1, 0.5] {
            for eta in [0.01, 0.05, 0.1] {
                let n = sample_size_bound(delta, eps, eta);
                let p = vc_convergence_bound(n, delta, eps);
                t.check(p <= 1.01 * eta, || {
                    format!("Δ={delta} ε={eps} η={eta}: {p}")
                });
            }
        }
    }
    outcome(t.ok(), t.summary())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_pivotlab");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(bin)
            .args(["curse", "--seed", "17", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(
                false,
                format!(
                    "run {run} failed: {}",
                    String::from_utf8_lossy(&status.stderr)
                ),
            );
        }
        outputs.push((
            fs::read(out.join("curse.csv")).unwrap(),
            fs::read(out.join("curse.json")).unwrap(),
            fs::read(out.join("curse_queries.csv")).unwrap(),
        ));
    }
    let same = outputs[0] == outputs[1];
    outcome(
        same && !outputs[0].0.is_empty(),
        format!(
            "curse.csv {} bytes, identical across runs: {same}",
            outputs[0].0.len()
        ),
    )
}

fn pass_word(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn report(id: u32, name: &str, elapsed: Duration, o: &Outcome) {
    println!(
        "criterion {id:>2} {:<4} {name} ({:.1}s): {}",
        pass_word(o.pass),
        elapsed.as_secs_f64(),
        o.detail
    );
}

fn main() {
    let mut all_pass = true;
    let mut record = |id: u32, name: &str, start: Instant, o: Outcome| {
        report(id, name, start.elapsed(), &o);
        all_pass &= o.pass;
    };

    let start = Instant::now();
    let (exact, acct) = exactness_and_accounting();
    let shared = start.elapsed();
    report(1, "exactness", shared, &exact);
    let start = Instant::now();
    record(2, "lower bound", start, lower_bound_property());
    report(3, "cost accounting", shared, &acct);
    let mut all = exact.pass && acct.pass;

    let start = Instant::now();
    record(4, "sphere concentration", start, sphere_concentration());
    let start = Instant::now();
    record(5, "sphere projection", start, projection_figure());

    let start = Instant::now();
    let cells = curse_run();
    let curse_time = start.elapsed();
    let trend = curse_trend(&cells);
    report(6, "curse trend", curse_time, &trend);
    let start = Instant::now();
    record(7, "pruning bound", start, pruning_bound_consistency(&cells));
    let start = Instant::now();
    record(8, "intrinsic dimension", start, intrinsic_dim());
    let start = Instant::now();
    record(9, "nn median", start, nn_median(&cells));
    let start = Instant::now();
    record(10, "vc formulas", start, vc_formulas());
    let start = Instant::now();
    record(11, "determinism", start, determinism());

    all &= trend.pass && all_pass;
    if !all {
        eprintln!("acceptance: at least one criterion failed");
        std::process::exit(1);
    }
}
