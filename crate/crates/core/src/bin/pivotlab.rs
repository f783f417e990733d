//! `pivotlab` command line.
//!
//! Every subcommand takes `--config <json>` and/or explicit flags; flags win
//! over config values. Exit codes: 0 success, 2 configuration error, 1 runtime
//! error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use pivotlab::dataset_io::{load_dataset, parse_point, save_dataset, space_from_parts};
use pivotlab::harness::config::{ExperimentConfig, SpaceConfig, SpaceFamilyKind};
use pivotlab::harness::report::{
    emit_report, write_atomically, write_csv, ReportFormat, ReportRecord,
};
use pivotlab::harness::{
    concentration_records, curse_records, projection_records, run_concentration_experiment,
    run_curse_experiment, run_projection_figure, write_query_csv,
};
use pivotlab::pivot_index::{build_index, load_index, save_index, select_pivots, PivotStrategy};
use pivotlab::spaces::{sample, BitString, Point, SpaceKind, SphereMetric};
use pivotlab::vc_bounds::{
    growth_bound, pivot_family_vc_bound, sample_size_bound, vc_convergence_bound, SpaceFamily,
    VcBoundInput,
};
use pivotlab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "pivotlab",
    version,
    about = "Pivot-table search and curse-of-dimensionality experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset from a space and write it to a file.
    Sample(SampleArgs),
    /// Select pivots for a dataset and write the pivot table.
    Build(BuildArgs),
    /// Run one range or kNN query against a saved index.
    Query(QueryArgs),
    /// Run the curse-of-dimensionality sweep.
    Curse(CurseArgs),
    /// Empirical and analytic concentration functions.
    Concentration(ConcentrationArgs),
    /// Sphere samples projected onto two coordinates.
    Projection(ProjectionArgs),
    /// VC dimension, sample size and convergence bounds.
    Vc(VcArgs),
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct SampleArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// hamming, sphere or ball
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// euclidean or geodesic (spheres only)
    #[arg(long)]
    metric: Option<SphereMetric>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct BuildArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// random, farthest_first or incremental_mean_rho
    #[arg(long)]
    strategy: Option<PivotStrategy>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct QueryArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Binary or hex bit string for Hamming cubes, whitespace- or
    /// comma-separated coordinates otherwise.
    #[arg(long)]
    point: Option<String>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    knn: Option<usize>,
}

#[derive(Args)]
struct CurseArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config's seed.
    #[arg(long)]
    seed: u64,
    /// Output directory; defaults to the config's `output_dir`, then `.`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    strategy: Option<PivotStrategy>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ConcentrationArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    seed: u64,
    /// hamming, sphere or ball; sphere by default
    #[arg(long)]
    kind: Option<SpaceFamilyKind>,
    #[arg(long)]
    metric: Option<SphereMetric>,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Comma-separated ascending ε grid.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long)]
    samples: Option<usize>,
    /// Report path (`.json` for JSON); stdout CSV if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ProjectionArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    seed: u64,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct VcArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// l2, linf or hamming
    #[arg(long)]
    family: Option<SpaceFamily>,
    #[arg(long)]
    d: Option<u64>,
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Sample size at which to evaluate the convergence bound; defaults to
    /// the sample size bound.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn read_json(path: &Path) -> Result<Value> {
    let text =
        fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

/// Overlays the flags that were given on top of the config file.
fn merged<T: Serialize + DeserializeOwned>(config: Option<&Path>, flags: &T) -> Result<T> {
    let mut base = match config {
        Some(p) => match read_json(p)? {
            Value::Object(m) => m,
            _ => {
                return Err(config_err(format!(
                    "{}: expected a JSON object",
                    p.display()
                )))
            }
        },
        None => Map::new(),
    };
    if let Value::Object(m) = serde_json::to_value(flags)? {
        base.extend(m.into_iter().filter(|(_, v)| !v.is_null()));
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| config_err(e.to_string()))
}

fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| config_err(format!("missing --{name}")))
}

fn report_format(path: &Path) -> ReportFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => ReportFormat::Json,
        _ => ReportFormat::Csv,
    }
}

fn write_report(records: &[ReportRecord], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => emit_report(records, report_format(path), path),
        None => {
            let mut sorted = records.to_vec();
            pivotlab::harness::report::sort_records(&mut sorted);
            let stdout = std::io::stdout();
            match write_csv(&sorted, &mut stdout.lock()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                }),
                _ => Ok(()),
            }
        }
    }
}

fn parse_query_point(space: &SpaceKind, text: &str) -> Result<Point> {
    let text = text.trim();
    if let SpaceKind::HammingCube { d } = space {
        if text.len() == *d && text.chars().all(|c| c == '0' || c == '1') {
            let p = Point::Bits(BitString::parse_binary(text)?);
            space.validate_point(&p)?;
            return Ok(p);
        }
    }
    parse_point(space, &text.replace(',', " "))
}

fn cmd_sample(flags: SampleArgs) -> Result<()> {
    let a = merged(flags.config.as_deref(), &flags)?;
    let kind = required(a.kind, "kind")?;
    let seed = required(a.seed, "seed")?;
    let space = space_from_parts(&kind, required(a.d, "d")?, a.metric)?;
    let ds = sample(&space, required(a.n, "n")?, seed);
    save_dataset(&ds, &required(a.out, "out")?)
}

fn cmd_build(flags: BuildArgs) -> Result<()> {
    let a = merged(flags.config.as_deref(), &flags)?;
    let ds = load_dataset(&required(a.dataset, "dataset")?)?;
    let k = required(a.k, "k")?;
    let pivots = select_pivots(
        &ds,
        k,
        a.strategy.unwrap_or(PivotStrategy::Random),
        a.seed.unwrap_or(0),
    )?;
    let index = build_index(&ds, pivots)?;
    save_index(&index, &required(a.out, "out")?)?;
    eprintln!(
        "built {k} pivots over {} points with {} distance evaluations",
        ds.len(),
        index.build_cost()
    );
    Ok(())
}

fn cmd_query(flags: QueryArgs) -> Result<()> {
    let a = merged(flags.config.as_deref(), &flags)?;
    let ds = load_dataset(&required(a.dataset, "dataset")?)?;
    let index = load_index(&ds, &required(a.index, "index")?)?;
    let q = parse_query_point(ds.space(), &required(a.point, "point")?)?;
    let res = match (a.radius, a.knn) {
        (Some(r), None) => index.range_query(&q, r)?,
        (None, Some(m)) => index.knn_query(&q, m)?,
        _ => return Err(config_err("give exactly one of --radius and --knn")),
    };
    let out = json!({
        "matches": res.matches,
        "distances": res.match_distances,
        "discarded": res.discarded,
        "cost": res.cost,
        "n": ds.len(),
        "k": index.k(),
    });
    println!("{out}");
    Ok(())
}

fn cmd_curse(flags: CurseArgs) -> Result<()> {
    let mut cfg = match &flags.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.seed = flags.seed;
    if let Some(q) = flags.queries {
        cfg.queries_per_cell = q;
    }
    if let Some(s) = flags.strategy {
        cfg.strategy = s;
    }
    let out_dir = flags
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    cfg.validate()?;
    fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
        path: out_dir.clone(),
        source: e,
    })?;

    let cells = run_curse_experiment(&cfg)?;
    let records = curse_records(&cells, cfg.seed);
    emit_report(&records, ReportFormat::Csv, &out_dir.join("curse.csv"))?;
    emit_report(&records, ReportFormat::Json, &out_dir.join("curse.json"))?;
    write_atomically(&out_dir.join("curse_queries.csv"), |w| {
        write_query_csv(&cells, w)
    })?;

    for c in &cells {
        let a = &c.aggregates;
        eprintln!(
            "d={:>4} n={:>6} k={:>3}  median pruned {:.4}  median cost/n {:.4}  2kα(r/2) {:.3e}",
            c.d(),
            c.n,
            c.k,
            a.median_pruned_fraction,
            a.median_cost_fraction,
            c.pruning_bound
        );
    }
    Ok(())
}

fn cmd_concentration(flags: ConcentrationArgs) -> Result<()> {
    let a = merged(flags.config.as_deref(), &flags)?;
    let family = SpaceConfig {
        kind: a.kind.unwrap_or(SpaceFamilyKind::Sphere),
        metric_variant: a.metric,
    };
    let dims = a.dims.unwrap_or_else(|| vec![10, 20, 50, 100]);
    let epsilons = a
        .epsilons
        .unwrap_or_else(|| (0..=10).map(|i| i as f64 / 10.0).collect());
    let rows = run_concentration_experiment(
        family,
        &dims,
        &epsilons,
        a.samples.unwrap_or(100_000),
        flags.seed,
    )?;
    write_report(
        &concentration_records(family, &rows, flags.seed)?,
        a.out.as_deref(),
    )
}

fn cmd_projection(flags: ProjectionArgs) -> Result<()> {
    let a = merged(flags.config.as_deref(), &flags)?;
    let dims = a.dims.unwrap_or_else(|| vec![10, 20, 50, 100]);
    let sets = run_projection_figure(&dims, a.n.unwrap_or(1000), flags.seed)?;
    write_report(&projection_records(&sets, flags.seed), a.out.as_deref())
}

fn cmd_vc(flags: VcArgs) -> Result<()> {
    let a = merged(flags.config.as_deref(), &flags)?;
    let family = required(a.family, "family")?;
    let (d, k) = (required(a.d, "d")?, required(a.k, "k")?);
    let eps = a.eps.unwrap_or(0.1);
    let eta = a.eta.unwrap_or(0.1);
    if !(eps > 0.0 && eps < 1.0 && eta > 0.0 && eta < 1.0) {
        return Err(config_err("eps and eta must lie in (0, 1)"));
    }
    let delta = pivot_family_vc_bound(VcBoundInput::new(family, d, k)?);
    let m = sample_size_bound(delta, eps, eta);
    let n = a.n.unwrap_or(m);
    let rec = |quantity: &str, value: f64| ReportRecord {
        experiment: "vc".into(),
        space: family.as_str().into(),
        d: d as usize,
        n: n as usize,
        k: k as usize,
        strategy: "-".into(),
        seed: 0,
        metric: family.as_str().into(),
        quantity: quantity.into(),
        value,
    };
    let records = vec![
        rec("vc_dimension_bound", delta),
        rec("sample_size_bound", m as f64),
        rec("growth_bound", growth_bound(n, delta)),
        rec("convergence_bound", vc_convergence_bound(n, delta, eps)),
    ];
    write_report(&records, a.out.as_deref())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Build(a) => cmd_build(a),
        Command::Query(a) => cmd_query(a),
        Command::Curse(a) => cmd_curse(a),
        Command::Concentration(a) => cmd_concentration(a),
        Command::Projection(a) => cmd_projection(a),
        Command::Vc(a) => cmd_vc(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pivotlab: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
