//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data errors (including
//! a generation run in which any task failed).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::batch::{generate_all, BatchError, GenerationConfig};
use crate::colormap::{ColorScheme, NormalizationMode};
use crate::geometry::{aggregate_demographics, bbox_center, blocks_within_radius, haversine_km, GeoPoint, RadiusQuery};
use crate::index::{build_index, CountryIndex};
use crate::ingest::{generate_synthetic, parse_bundle, serialize_bundle, SyntheticSpec};
use crate::kml::DEFAULT_FILL_ALPHA;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

pub const WORKERS_ENV: &str = "PRESTAGE_WORKERS";

#[derive(Parser, Debug)]
#[command(
    name = "prestage",
    version,
    about = "Generate pre-staged census map and spreadsheet files",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a boundary bundle and write its canonical form
    Ingest {
        bundle: PathBuf,
        /// Where to write the canonical bundle
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic boundary bundle
    Synth(SynthArgs),
    /// Generate the KML and workbook corpus for a bundle
    Generate(GenerateArgs),
    /// List the blocks of one county within a radius of a point
    Query(QueryArgs),
    /// Print entity counts and national density bounds
    Stats { bundle: PathBuf },
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    states: u32,
    /// Counties per state
    #[arg(long, default_value_t = 2)]
    counties: u32,
    /// Block groups per county
    #[arg(long, default_value_t = 10)]
    blocks: u32,
    #[arg(long, default_value_t = 10.0)]
    density_min: f64,
    #[arg(long, default_value_t = 20_000.0)]
    density_max: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    bundle: PathBuf,
    /// Output root directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker count (default: $PRESTAGE_WORKERS, else available cores)
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<ColorScheme>>,
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<NormalizationMode>>,
    /// KML fill alpha, 0-255
    #[arg(long)]
    alpha: Option<u8>,
    /// Fraction of population used for the estimated-cases column
    #[arg(long)]
    case_rate: Option<f64>,
    /// Skip KML output
    #[arg(long)]
    no_kml: bool,
    /// Skip workbook output
    #[arg(long)]
    no_xlsx: bool,
    /// JSON file with defaults for the options above
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct QueryArgs {
    bundle: PathBuf,
    /// Five-digit county GEOID
    #[arg(long)]
    county: String,
    #[arg(long, allow_negative_numbers = true)]
    lon: f64,
    #[arg(long, allow_negative_numbers = true)]
    lat: f64,
    /// Radius in kilometres
    #[arg(long, allow_negative_numbers = true)]
    radius: f64,
}

/// Generation settings read from `--config`. Command-line flags win.
#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub schemes: Option<Vec<ColorScheme>>,
    pub modes: Option<Vec<NormalizationMode>>,
    pub alpha: Option<u8>,
    pub case_rate: Option<f64>,
    pub emit_kml: Option<bool>,
    pub emit_xlsx: Option<bool>,
}

enum Failure {
    Usage(String),
    Data(String),
}

fn data<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Data(format!("{context}: {e}"))
}

fn load_index(path: &Path) -> Result<CountryIndex, Failure> {
    let bytes = std::fs::read(path).map_err(data(path.display()))?;
    let records = parse_bundle(&bytes).map_err(data(path.display()))?;
    build_index(records).map_err(data(path.display()))
}

/// Runs the CLI with the process environment.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_env(argv, &|k| std::env::var(k).ok(), out, err)
}

/// Like [`run`], with environment lookups routed through `env`.
pub fn run_with_env<I, T>(
    argv: I,
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, env, out) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}\n\nRun `prestage --help` for usage.");
            EXIT_USAGE
        }
        Err(Failure::Data(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_DATA
        }
    }
}

fn dispatch(cmd: Command, env: &dyn Fn(&str) -> Option<String>, out: &mut dyn Write) -> Result<i32, Failure> {
    let io = |e: std::io::Error| Failure::Data(format!("writing output: {e}"));
    match cmd {
        Command::Ingest { bundle, out: dest } => {
            let index = load_index(&bundle)?;
            std::fs::write(&dest, serialize_bundle(&index)).map_err(data(dest.display()))?;
            writeln!(out, "{}", index.entity_counts()).map_err(io)?;
            writeln!(out, "wrote {}", dest.display()).map_err(io)?;
        }
        Command::Synth(a) => {
            let spec = SyntheticSpec {
                seed: a.seed,
                num_states: a.states,
                counties_per_state: a.counties,
                blocks_per_county: a.blocks,
                density_range: (a.density_min, a.density_max),
            };
            let records = generate_synthetic(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
            let index = build_index(records).map_err(data("synthetic index"))?;
            std::fs::write(&a.out, serialize_bundle(&index)).map_err(data(a.out.display()))?;
            writeln!(out, "{}", index.entity_counts()).map_err(io)?;
            writeln!(out, "wrote {}", a.out.display()).map_err(io)?;
        }
        Command::Generate(a) => {
            let cfg = generation_config(&a, env)?;
            let index = load_index(&a.bundle)?;
            let report = generate_all(&index, &cfg).map_err(|e| match e {
                BatchError::InvalidConfig(m) => Failure::Usage(m),
                other => Failure::Data(other.to_string()),
            })?;
            writeln!(out, "{report}").map_err(io)?;
            for f in &report.per_county_failures {
                writeln!(out, "failed county={} error={}", f.fips, f.error).map_err(io)?;
            }
            if report.tasks_failed > 0 {
                return Ok(EXIT_DATA);
            }
        }
        Command::Query(a) => {
            let center = GeoPoint::new(a.lon, a.lat).map_err(|e| Failure::Usage(e.to_string()))?;
            let q = RadiusQuery::new(center, a.radius).map_err(|e| Failure::Usage(e.to_string()))?;
            let index = load_index(&a.bundle)?;
            let (_, county) = index
                .find_county(&a.county)
                .ok_or_else(|| Failure::Data(format!("county {} not found", a.county)))?;
            let hits = blocks_within_radius(county, &q);
            writeln!(
                out,
                "{:<12} {:>12} {:>11} {:>8} {:>9} {:>8} {:>8} {:>7} {:>10}",
                "GEOID", "LON", "LAT", "POP", "DENSITY", "UNDER15", "OVER65", "MEDAGE", "DIST_KM"
            )
            .map_err(io)?;
            for b in &hits {
                let c = bbox_center(&b.bbox);
                let d = &b.demo;
                writeln!(
                    out,
                    "{:<12} {:>12.6} {:>11.6} {:>8} {:>9.0} {:>8} {:>8} {:>7.1} {:>10.3}",
                    b.full_fips,
                    c.lon,
                    c.lat,
                    d.population,
                    d.density,
                    d.under_15,
                    d.over_65,
                    d.median_age,
                    haversine_km(q.center, c)
                )
                .map_err(io)?;
            }
            let agg = aggregate_demographics(hits.iter().copied());
            writeln!(
                out,
                "TOTAL blocks={} population={} under_15={} over_65={} mean_density={:.1} mean_of_median_ages={:.1}",
                agg.blocks, agg.population, agg.under_15, agg.over_65, agg.mean_density, agg.mean_of_median_ages
            )
            .map_err(io)?;
        }
        Command::Stats { bundle } => {
            let index = load_index(&bundle)?;
            let b = index.density_bounds_absolute;
            writeln!(out, "{}", index.entity_counts()).map_err(io)?;
            writeln!(out, "density_min={} density_max={}", b.min, b.max).map_err(io)?;
        }
    }
    Ok(EXIT_OK)
}

fn generation_config(a: &GenerateArgs, env: &dyn Fn(&str) -> Option<String>) -> Result<GenerationConfig, Failure> {
    let file = match &a.config {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(data(p.display()))?;
            serde_json::from_slice::<ConfigFile>(&bytes).map_err(data(p.display()))?
        }
        None => ConfigFile::default(),
    };
    let workers = match a.workers.or(file.workers) {
        Some(w) => w,
        None => match env(WORKERS_ENV) {
            Some(v) => v
                .trim()
                .parse::<usize>()
                .map_err(|_| Failure::Usage(format!("{WORKERS_ENV}={v:?} is not a worker count")))?,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    let output_root = a
        .out
        .clone()
        .or(file.out)
        .ok_or_else(|| Failure::Usage("--out is required (flag or config file)".into()))?;
    let cfg = GenerationConfig {
        output_root,
        workers,
        schemes: a
            .schemes
            .clone()
            .or(file.schemes)
            .unwrap_or_else(|| ColorScheme::ALL.to_vec()),
        modes: a
            .modes
            .clone()
            .or(file.modes)
            .unwrap_or_else(|| NormalizationMode::ALL.to_vec()),
        fill_alpha: a.alpha.or(file.alpha).unwrap_or(DEFAULT_FILL_ALPHA),
        case_rate: a.case_rate.or(file.case_rate).unwrap_or(0.0),
        emit_kml: !a.no_kml && file.emit_kml.unwrap_or(true),
        emit_xlsx: !a.no_xlsx && file.emit_xlsx.unwrap_or(true),
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}
