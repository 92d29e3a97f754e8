//! `expo` command-line front end.
//!
//! Every subcommand computes all of its outputs in memory first and only then
//! writes them, each through a temporary file renamed into place.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use expo_core::country_graph::{build_graph, centrality_scatter};
use expo_core::experiments::{
    excluded_csv, excluded_experiment, generalization_report, involved_csv, involved_report,
    ExperimentError, SizeRange,
};
use expo_core::ingest::{parse_remap, ParseStats};
use expo_core::pipeline::{ingest_bgp, ingest_traces, IngestSummary};
use expo_core::synth::{generate_corpus, SynthConfig};
use expo_core::{
    AsRegistry, CountryCode, DatasetKind, ErrorPolicy, GeoTable, MonitorTable, PathStore,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "expo",
    version,
    about = "Country-level route exposure analysis"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    /// What to do with malformed input lines.
    #[arg(long, global = true, value_enum, default_value_t = OnError::Skip)]
    on_error: OnError,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OnError {
    Skip,
    Abort,
}

impl From<OnError> for ErrorPolicy {
    fn from(v: OnError) -> Self {
        match v {
            OnError::Skip => ErrorPolicy::Skip,
            OnError::Abort => ErrorPolicy::Abort,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Dataset {
    Geo,
    Reg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Build a path store from trace or BGP files.
    Ingest(IngestArgs),
    /// Per-country monitor generalization ratios.
    Generalize(ReportArgs),
    /// Involved countries per destination and distance curves.
    Involved(InvolvedArgs),
    /// Monte Carlo excluded-country experiment.
    Exclude(ExcludeArgs),
    /// Country graph centralities joined with mean involved countries.
    Centrality(ReportArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    countries: usize,
    /// Routers per country (multiplied by country degree unless --flat-routers).
    #[arg(long, default_value_t = 2)]
    routers: usize,
    #[arg(long)]
    flat_routers: bool,
    #[arg(long, default_value_t = 1.5)]
    exponent: f64,
    #[arg(long, default_value_t = 2)]
    attach: usize,
    /// Monitor count (default: one per country).
    #[arg(long)]
    monitors: Option<usize>,
    /// Destination countries per monitor (default: all).
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, default_value_t = 2)]
    multipath: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long, value_enum)]
    dataset: Dataset,
    #[arg(long)]
    geo: Option<PathBuf>,
    #[arg(long)]
    asreg: Option<PathBuf>,
    #[arg(long)]
    monitors: Option<PathBuf>,
    /// `FROM TAB TO` country remapping applied to every mapping table.
    #[arg(long)]
    eu_remap: Option<PathBuf>,
    /// Store file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    store: PathBuf,
    /// Report directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InvolvedArgs {
    #[command(flatten)]
    report: ReportArgs,
    /// Source country, repeatable, or `all` (default).
    #[arg(long, value_parser = parse_source)]
    source: Vec<Source>,
}

#[derive(Debug, Args)]
struct ExcludeArgs {
    #[command(flatten)]
    report: ReportArgs,
    #[arg(long, required = true, value_parser = parse_source)]
    source: Vec<Source>,
    #[arg(long, default_value = "0:190:10", value_parser = parse_sizes)]
    sizes: SizeRange,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u32).range(1..))]
    trials: u32,
    #[arg(long)]
    seed: u64,
}

#[derive(Debug, Clone, Copy)]
enum Source {
    All,
    Country(CountryCode),
}

fn parse_source(s: &str) -> Result<Source, String> {
    if s == "all" {
        Ok(Source::All)
    } else {
        s.parse().map(Source::Country).map_err(|e| format!("{e}"))
    }
}

fn parse_sizes(s: &str) -> Result<SizeRange, String> {
    s.parse().map_err(|e: ExperimentError| e.to_string())
}

/// Explicit `--source` countries, or `None` when every source is wanted.
fn explicit_sources(sources: &[Source]) -> Option<Vec<CountryCode>> {
    if sources.is_empty() || sources.iter().any(|s| matches!(s, Source::All)) {
        return None;
    }
    let mut out: Vec<CountryCode> = sources
        .iter()
        .filter_map(|s| match s {
            Source::Country(c) => Some(*c),
            Source::All => None,
        })
        .collect();
    out.sort();
    out.dedup();
    Some(out)
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

/// Files produced by a command, written only once all are computed.
#[derive(Default)]
struct Outputs(Vec<(PathBuf, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, path: PathBuf, bytes: impl Into<Vec<u8>>) {
        self.0.push((path, bytes.into()));
    }

    fn add_json(&mut self, path: PathBuf, value: &Value) {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.add(path, text);
    }

    fn commit(self) -> anyhow::Result<()> {
        for (path, bytes) in self.0 {
            write_atomic(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_store(path: &Path) -> anyhow::Result<PathStore> {
    let text = read(path)?;
    PathStore::parse(&text).with_context(|| format!("loading store {}", path.display()))
}

fn stats_json(stats: &ParseStats) -> Value {
    json!({
        "lines": stats.lines,
        "parsed": stats.parsed,
        "malformed": stats.malformed,
        "malformed_samples": stats.samples,
    })
}

fn summary_json(
    dataset: DatasetKind,
    inputs: &[PathBuf],
    s: &IngestSummary,
    store: &PathStore,
) -> Value {
    let discarded: BTreeMap<&str, usize> =
        s.discarded.iter().map(|(r, n)| (r.as_str(), *n)).collect();
    json!({
        "command": "ingest",
        "dataset": dataset.as_str(),
        "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "records": stats_json(&s.parse),
        "discarded": discarded,
        "discarded_total": s.discarded_total(),
        "duplicates": s.duplicates,
        "inserted": s.inserted,
        "inferred_monitors": s.inferred_monitors,
        "monitors": store.monitors().len(),
        "stored_paths": store.len(),
    })
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Failure> {
    let cfg = SynthConfig {
        n_countries: args.countries,
        n_routers_per_country: args.routers,
        scale_routers_by_degree: !args.flat_routers,
        attachment_exponent: args.exponent,
        attach_links: args.attach,
        n_monitors: args.monitors.unwrap_or(args.countries),
        paths_per_monitor: args.paths.unwrap_or(usize::MAX),
        multipath_factor: args.multipath,
        seed: args.seed,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let corpus = generate_corpus(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut out = Outputs::default();
    for (name, text) in corpus.files() {
        out.add(args.out.join(name), text);
    }
    out.add_json(
        args.out.join("synth.summary.json"),
        &json!({
            "command": "synth",
            "seed": cfg.seed,
            "countries": cfg.n_countries,
            "monitors": cfg.n_monitors,
            "country_links": corpus.country_links.len(),
            "trace_lines": corpus.traces.lines().count(),
            "bgp_lines": corpus.bgp.lines().count(),
            "ground_truth_paths": corpus.ground_truth.lines().count(),
        }),
    );
    out.commit()?;
    Ok(())
}

fn cmd_ingest(args: &IngestArgs, policy: ErrorPolicy) -> Result<(), Failure> {
    match args.dataset {
        Dataset::Geo if args.geo.is_none() => {
            return Err(Failure::Usage("--dataset geo requires --geo".into()))
        }
        Dataset::Geo if args.monitors.is_none() => {
            return Err(Failure::Usage("--dataset geo requires --monitors".into()))
        }
        Dataset::Reg if args.asreg.is_none() => {
            return Err(Failure::Usage("--dataset reg requires --asreg".into()))
        }
        _ => {}
    }
    let remap = match &args.eu_remap {
        Some(p) => Some(parse_remap(&read(p)?, ErrorPolicy::Abort).context("remap file")?),
        None => None,
    };
    let mut monitors = match &args.monitors {
        Some(p) => {
            MonitorTable::parse(&read(p)?, policy)
                .with_context(|| format!("monitor table {}", p.display()))?
                .0
        }
        None => MonitorTable::new(),
    };
    if let Some(r) = &remap {
        monitors.apply_remap(r);
    }
    let texts: Vec<String> = args
        .inputs
        .iter()
        .map(|p| read(p))
        .collect::<Result<_, _>>()?;
    let texts = texts.iter().map(String::as_str);

    let (store, summary, dataset) = match args.dataset {
        Dataset::Geo => {
            let path = args.geo.as_ref().expect("checked above");
            let mut geo = GeoTable::parse(&read(path)?, policy)
                .with_context(|| format!("geolocation table {}", path.display()))?
                .0;
            if let Some(r) = &remap {
                geo.apply_remap(r);
            }
            let (store, summary) =
                ingest_traces(texts, &geo, monitors, policy).context("trace input")?;
            (store, summary, DatasetKind::Geolocation)
        }
        Dataset::Reg => {
            let path = args.asreg.as_ref().expect("checked above");
            let mut reg = AsRegistry::parse(&read(path)?, policy)
                .with_context(|| format!("AS registry {}", path.display()))?
                .0;
            if let Some(r) = &remap {
                reg.apply_remap(r);
            }
            let (store, summary) =
                ingest_bgp(texts, &reg, monitors, policy).context("BGP input")?;
            (store, summary, DatasetKind::Registration)
        }
    };
    let mut out = Outputs::default();
    out.add(args.out.clone(), store.to_bytes());
    out.add_json(
        sidecar(&args.out, ".summary.json"),
        &summary_json(dataset, &args.inputs, &summary, &store),
    );
    out.commit()?;
    Ok(())
}

fn cmd_generalize(args: &ReportArgs) -> Result<(), Failure> {
    let store = load_store(&args.store)?;
    let report = generalization_report(&store);
    let mut out = Outputs::default();
    out.add(args.out.join("generalization.csv"), report.to_csv());
    out.add_json(
        args.out.join("generalize.summary.json"),
        &json!({
            "command": "generalize",
            "store_paths": store.len(),
            "countries_reported": report.rows.len(),
            "single_monitor_countries": report.lonely_countries,
            "incomplete_countries": report.incomplete_countries,
        }),
    );
    out.commit()?;
    Ok(())
}

fn cmd_involved(args: &InvolvedArgs) -> Result<(), Failure> {
    let store = load_store(&args.report.store)?;
    let sources =
        explicit_sources(&args.source).unwrap_or_else(|| store.sources().into_iter().collect());
    let reports: Vec<_> = sources
        .iter()
        .map(|&x| involved_report(&store, x))
        .collect();
    let (points, curves) = involved_csv(&reports);
    let mut out = Outputs::default();
    out.add(args.report.out.join("involved_points.csv"), points);
    out.add(args.report.out.join("involved_curves.csv"), curves);
    out.add_json(
        args.report.out.join("involved.summary.json"),
        &json!({
            "command": "involved",
            "store_paths": store.len(),
            "sources": sources.iter().map(CountryCode::to_string).collect::<Vec<_>>(),
            "points": reports.iter().map(|r| r.points.len()).sum::<usize>(),
        }),
    );
    out.commit()?;
    Ok(())
}

fn cmd_exclude(args: &ExcludeArgs) -> Result<(), Failure> {
    let store = load_store(&args.report.store)?;
    let explicit = explicit_sources(&args.source);
    let candidates = explicit
        .clone()
        .unwrap_or_else(|| store.sources().into_iter().collect());
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for x in candidates {
        match excluded_experiment(&store, x, args.sizes, args.trials as usize, args.seed) {
            Ok(r) => reports.push(r),
            Err(ExperimentError::NoTargets(_)) if explicit.is_none() => skipped.push(x.to_string()),
            Err(e) => return Err(anyhow!(e).into()),
        }
    }
    let mut out = Outputs::default();
    out.add(args.report.out.join("excluded.csv"), excluded_csv(&reports));
    out.add_json(
        args.report.out.join("exclude.summary.json"),
        &json!({
            "command": "exclude",
            "store_paths": store.len(),
            "sources": reports.iter().map(|r| r.source.to_string()).collect::<Vec<_>>(),
            "sources_without_targets": skipped,
            "sizes": args.sizes.sizes().collect::<Vec<_>>(),
            "trials_per_size": args.trials,
            "seed": args.seed,
        }),
    );
    out.commit()?;
    Ok(())
}

fn cmd_centrality(args: &ReportArgs) -> Result<(), Failure> {
    let store = load_store(&args.store)?;
    let graph = build_graph(&store);
    let scatter = centrality_scatter(&store, &graph).map_err(|e| anyhow!(e))?;
    let mut out = Outputs::default();
    out.add(args.out.join("centrality.csv"), scatter.to_csv());
    out.add_json(
        args.out.join("centrality.summary.json"),
        &json!({
            "command": "centrality",
            "store_paths": store.len(),
            "nodes": graph.node_count(),
            "edges": graph.edge_count(),
        }),
    );
    out.commit()?;
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let policy = ErrorPolicy::from(cli.on_error);
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Ingest(a) => cmd_ingest(a, policy),
        Command::Generalize(a) => cmd_generalize(a),
        Command::Involved(a) => cmd_involved(a),
        Command::Exclude(a) => cmd_exclude(a),
        Command::Centrality(a) => cmd_centrality(a),
    }
}

/// Runs `expo` with the given arguments (including the program name) and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n as usize);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("expo: cannot start thread pool: {e}");
            return EXIT_DATA;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("expo: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("expo: {e:#}");
            EXIT_DATA
        }
    }
}
