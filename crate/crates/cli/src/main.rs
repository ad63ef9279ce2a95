use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sitebias_core::analysis::{BinningKind, BinningSpec, IndicatorKind, DEFAULT_BIN_COUNT, DEFAULT_REPLICATES};
use sitebias_core::collections::{parse_sites_csv, BoundingBox, ExtentSpec, MaskSpec};
use sitebias_core::grid::GridConfig;
use sitebias_core::ingest::{ingest_raster, read_ascii_grid, Catalog, IngestOptions, VariableKind, ZonalStat};
use sitebias_core::pipeline::{read_report, run_analysis, write_outputs, AnalysisRequest, RESULT_FILE};
use sitebias_core::{report, Error};

/// Seed used when `--seed` is not given, so runs repeat by default.
const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "sitebias", version, about = "Representativeness analysis of site collections")]
struct Cli {
    /// Catalog root; created on first use.
    #[arg(long, global = true, env = "SITEBIAS_CATALOG", default_value = "catalog")]
    catalog: PathBuf,

    /// Sphere radius for a new catalog, km.
    #[arg(long, global = true)]
    radius_km: Option<f64>,

    /// Target cell area for a new catalog, km².
    #[arg(long, global = true)]
    cell_area_km2: Option<f64>,

    /// Print a machine-readable summary on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aggregate a raster onto the grid and register it.
    Ingest(IngestArgs),
    /// Run an analysis and write its outputs.
    Analyze(AnalyzeArgs),
    /// Render charts or tables from a finished analysis.
    Report(ReportArgs),
    /// List registered variables.
    Variables,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    raster: PathBuf,
    #[arg(long)]
    variable: String,
    #[arg(long, value_parser = parse_from_str::<VariableKind>)]
    kind: VariableKind,
    #[arg(long, value_parser = parse_from_str::<ZonalStat>)]
    stat: ZonalStat,
    #[arg(long, default_value = "")]
    units: String,
    /// Nearest-neighbour resample to this pixel size (degrees) first.
    #[arg(long)]
    resample: Option<f64>,
    /// Fill nodata pixels from valid neighbours within this many pixels.
    #[arg(long)]
    focal_fill: Option<usize>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Sites CSV; its file stem becomes the collection id.
    #[arg(long)]
    collection: PathBuf,
    #[arg(long)]
    variable: String,
    /// Restrict the extent to cells whose categorical value is listed, as VAR:v1,v2.
    #[arg(long, value_parser = parse_from_str::<MaskSpec>, conflicts_with = "bbox")]
    mask: Option<MaskSpec>,
    /// Restrict the extent to cells centred in S,W,N,E.
    #[arg(long, value_parser = parse_from_str::<BoundingBox>, allow_hyphen_values = true)]
    bbox: Option<BoundingBox>,
    #[arg(long, default_value_t = DEFAULT_BIN_COUNT)]
    bins: usize,
    #[arg(long, default_value = "auto", value_parser = parse_from_str::<BinningKind>)]
    binning: BinningKind,
    /// Null-distribution replicates.
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = "intersection", value_parser = parse_from_str::<IndicatorKind>)]
    indicator: IndicatorKind,
    /// Null sample size; defaults to the number of usable sites.
    #[arg(long)]
    effective_sample_size: Option<usize>,
    #[arg(long)]
    with_replacement: bool,
    /// Count each occupied cell once.
    #[arg(long)]
    dedupe_sites: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Svg,
    Csv,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory written by `analyze`.
    #[arg(long)]
    analysis: PathBuf,
    #[arg(long, value_enum)]
    format: Format,
    /// Output directory; defaults to the analysis directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_from_str<T>(s: &str) -> Result<T, String>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let conflict = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Conflict { .. })));
            ExitCode::from(if conflict { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Ingest(args) => ingest(cli, args),
        Command::Analyze(args) => analyze(cli, args),
        Command::Report(args) => report_cmd(cli, args),
        Command::Variables => variables(cli),
    }
}

fn open_catalog(cli: &Cli) -> anyhow::Result<Catalog> {
    let root = &cli.catalog;
    let catalog = if cli.radius_km.is_none() && cli.cell_area_km2.is_none() && root.join("grid.json").exists() {
        Catalog::open(root)
    } else {
        let mut config = GridConfig::default();
        if let Some(r) = cli.radius_km {
            config.sphere_radius_km = r;
        }
        if let Some(a) = cli.cell_area_km2 {
            config.target_cell_area_km2 = a;
        }
        Catalog::open_or_create(root, config)
    };
    catalog.with_context(|| format!("opening catalog {}", root.display()))
}

fn ingest(cli: &Cli, args: &IngestArgs) -> anyhow::Result<()> {
    let catalog = open_catalog(cli)?;
    let mut raster = read_ascii_grid(&args.raster)?;
    if let Some(cs) = args.resample {
        raster = raster.resample_nearest(cs)?;
    }
    if let Some(r) = args.focal_fill {
        raster = raster.focal_fill(r)?;
    }
    let mut opts = IngestOptions::new(&args.variable, args.kind);
    opts.stat = args.stat;
    opts.units = args.units.clone();
    opts.provenance = args.raster.display().to_string();
    let entry = ingest_raster(&catalog, &raster, &opts)?;
    if cli.json {
        println!("{}", serde_json::to_string(&entry)?);
    } else {
        println!("registered {}: {} cells", entry.variable_id, entry.cell_count);
    }
    Ok(())
}

fn collection_id(path: &Path) -> anyhow::Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| anyhow!("cannot derive a collection id from {}", path.display()))
}

fn analyze(cli: &Cli, args: &AnalyzeArgs) -> anyhow::Result<()> {
    let catalog = open_catalog(cli)?;
    let grid = catalog.build_grid()?;
    let id = collection_id(&args.collection)?;
    let file = fs::File::open(&args.collection).with_context(|| format!("opening {}", args.collection.display()))?;
    let collection =
        parse_sites_csv(std::io::BufReader::new(file), &id).with_context(|| format!("reading {}", args.collection.display()))?;

    let mut request = AnalysisRequest::new(id, &args.variable);
    request.extent = match (&args.mask, &args.bbox) {
        (Some(m), _) => ExtentSpec::Mask(m.clone()),
        (None, Some(b)) => ExtentSpec::Bbox(*b),
        (None, None) => ExtentSpec::Global,
    };
    request.binning = BinningSpec {
        kind: args.binning,
        bins: args.bins,
    };
    request.indicator = args.indicator;
    request.samples = args.samples;
    request.seed = Some(args.seed);
    request.effective_sample_size = args.effective_sample_size;
    request.with_replacement = args.with_replacement;
    request.dedupe_sites = args.dedupe_sites;

    let output = run_analysis(&request, &grid, &catalog, &collection)?;
    write_outputs(&args.out, &output, &grid)?;
    let r = &output.report;
    if cli.json {
        let summary = json!({
            "schema_version": r.schema_version,
            "out": args.out,
            "indicator_kind": r.indicator_kind,
            "indicator": r.indicator,
            "percentile_rank": r.percentile_rank,
            "biased": r.biased,
            "null_mean": r.null.mean,
            "usable_site_count": r.collection.usable_site_count,
            "off_extent_site_count": r.collection.off_extent_site_count,
        });
        println!("{summary}");
    } else {
        println!("indicator ({}): {:.4}", r.indicator_kind, r.indicator);
        println!("null mean: {:.4} over {} samples of {}", r.null.mean, r.null.replicates, r.null.sample_size);
        println!("percentile: {:.1}", r.percentile_rank);
        println!("biased: {}", if r.biased { "yes" } else { "no" });
        if r.collection.off_extent_site_count > 0 {
            println!("sites outside the populated extent: {}", r.collection.off_extent_site_count);
        }
        println!("wrote {}", args.out.display());
    }
    Ok(())
}

const CHART_FILES: [&str; 3] = ["collection_histogram.svg", "population_histogram.svg", "null_distribution.svg"];

fn report_cmd(cli: &Cli, args: &ReportArgs) -> anyhow::Result<()> {
    if !args.analysis.join(RESULT_FILE).is_file() {
        return Err(anyhow!("{} holds no {RESULT_FILE}", args.analysis.display()));
    }
    let r = read_report(&args.analysis)?;
    let out = args.out.clone().unwrap_or_else(|| args.analysis.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let files: Vec<(&str, String)> = match args.format {
        Format::Svg => vec![
            (CHART_FILES[0], report::collection_histogram_svg(&r)),
            (CHART_FILES[1], report::population_histogram_svg(&r)),
            (CHART_FILES[2], report::null_distribution_svg(&r)),
        ],
        Format::Csv => vec![("bins.csv", report::bins_csv(&r)?), ("null.csv", report::null_csv(&r)?)],
    };
    let mut written = Vec::new();
    for (name, text) in files {
        let path = out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    if cli.json {
        println!("{}", json!({ "schema_version": r.schema_version, "files": written }));
    } else {
        for p in written {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn variables(cli: &Cli) -> anyhow::Result<()> {
    let catalog = open_catalog(cli)?;
    let entries = catalog.list_variables()?;
    if cli.json {
        println!("{}", json!({ "variables": entries }));
    } else {
        for e in entries {
            println!("{}\t{}\t{}\t{} cells", e.variable_id, e.kind, e.units, e.cell_count);
        }
    }
    Ok(())
}
