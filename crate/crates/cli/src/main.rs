//! `superres`: information bounds and Monte Carlo experiments for
//! superresolved incoherent imaging.
//!
//! Exit codes: 0 on success, 1 on input errors (bad flags, spec files,
//! parameters), 2 when a numerical stability check fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use superres::experiments::{
    self, plot_svg, replay_manifest, ExperimentKind, ExperimentSpec, GridSpec, PlotOptions,
    PsfChoice, PsfSpec, Table,
};
use superres::Error;

const OUTPUT_ENV: &str = "SUPERRES_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "superres",
    version,
    about = "Quantum-limited resolution of incoherent sources"
)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print progress to standard error (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fisher and Helstrom information for two points at one separation.
    Info(InfoArgs),
    /// Information against separation for several measurements.
    FisherSweep(RunArgs),
    /// Monte Carlo MSE of maximum-likelihood separation estimates.
    Mse(RunArgs),
    /// Moment estimation errors and SNR scaling with object size.
    Moments(RunArgs),
    /// Thermal-state Helstrom information against the one-photon limit.
    Thermal(RunArgs),
    /// Generalized Fourier reconstruction of an object from its moments.
    Reconstruct(RunArgs),
    /// Re-run the spec stored in a manifest and compare output digests.
    Replay(ReplayArgs),
    /// Line chart of CSV columns as SVG.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PsfArg {
    Gaussian,
    Signum,
}

#[derive(Clone, Copy, ValueEnum)]
enum SceneArg {
    TwoPoint,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    psf: PsfArg,
    /// PSF width.
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, value_enum, default_value = "two-point")]
    scene: SceneArg,
    /// Separation of the two points.
    #[arg(long)]
    sep: f64,
    /// Hermite-Gauss modes for SPADE.
    #[arg(long, default_value_t = 12)]
    modes: usize,
    /// Helstrom truncation.
    #[arg(long, default_value_t = 16)]
    truncation: usize,
    /// Grid half-width.
    #[arg(long, default_value_t = 10.0)]
    half_width: f64,
    /// Grid samples.
    #[arg(long, default_value_t = 4096)]
    samples: usize,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment spec.
    #[arg(long)]
    spec: PathBuf,
    /// `key=value` replacing a spec field; dotted keys reach nested fields.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (else the spec's, else $SUPERRES_OUTPUT_DIR, else `.`).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    /// Column on the horizontal axis.
    #[arg(long)]
    x: String,
    /// Columns to draw, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    y: Vec<String>,
    /// Keep only rows with `column=value`.
    #[arg(long, value_name = "COLUMN=VALUE")]
    filter: Vec<String>,
    #[arg(long)]
    log_x: bool,
    #[arg(long)]
    log_y: bool,
    #[arg(long)]
    title: Option<String>,
    /// SVG file to write (default: the CSV path with an .svg extension).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: invalid input `threads`: must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start the thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn dispatch(cli: &Cli) -> superres::Result<()> {
    match &cli.command {
        Command::Info(args) => info(args),
        Command::FisherSweep(args) => run(ExperimentKind::FisherSweep, args, cli.verbose),
        Command::Mse(args) => run(ExperimentKind::Mse, args, cli.verbose),
        Command::Moments(args) => run(ExperimentKind::Moments, args, cli.verbose),
        Command::Thermal(args) => run(ExperimentKind::Thermal, args, cli.verbose),
        Command::Reconstruct(args) => run(ExperimentKind::Reconstruct, args, cli.verbose),
        Command::Replay(args) => replay(args, cli.verbose),
        Command::Plot(args) => plot(args, cli.verbose),
    }
}

fn info(args: &InfoArgs) -> superres::Result<()> {
    let SceneArg::TwoPoint = args.scene;
    let psf = PsfSpec {
        kind: match args.psf {
            PsfArg::Gaussian => PsfChoice::Gaussian,
            PsfArg::Signum => PsfChoice::SignumMaskedGaussian,
        },
        sigma: args.sigma,
        grid: GridSpec {
            lower: -args.half_width,
            upper: args.half_width,
            samples: args.samples,
        },
    };
    let summary = experiments::info(&psf, args.sep, args.modes, args.truncation)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn output_dir(flag: Option<&Path>, spec: &ExperimentSpec) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| spec.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn run(kind: ExperimentKind, args: &RunArgs, verbose: u8) -> superres::Result<()> {
    let spec = ExperimentSpec::from_file(&args.spec)?.with_overrides(&args.overrides)?;
    if spec.experiment != kind {
        return Err(Error::InvalidInput {
            key: "experiment".into(),
            reason: format!("spec describes `{}`, not `{kind}`", spec.experiment),
        });
    }
    let dir = output_dir(args.output.as_deref(), &spec);
    if verbose > 0 {
        eprintln!("running {kind} into {}", dir.display());
    }
    let files = experiments::run_to_dir(&spec, &dir)?;
    let report = json!({
        "experiment": kind.to_string(),
        "csv": files.csv,
        "summary": files.summary,
        "manifest": files.manifest,
        "rows": files.output.table.rows.len(),
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn replay(args: &ReplayArgs, verbose: u8) -> superres::Result<()> {
    let dir = args
        .output
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    if verbose > 0 {
        eprintln!(
            "replaying {} into {}",
            args.manifest.display(),
            dir.display()
        );
    }
    let replay = replay_manifest(&args.manifest, &dir)?;
    let report = json!({
        "identical": replay.identical(),
        "mismatched": replay.mismatched,
        "csv": replay.files.csv,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if replay.identical() {
        Ok(())
    } else {
        Err(Error::InvalidInput {
            key: "manifest".into(),
            reason: format!("outputs differ: {}", replay.mismatched.join(", ")),
        })
    }
}

fn plot(args: &PlotArgs, verbose: u8) -> superres::Result<()> {
    let mut table = Table::read_csv(&args.csv)?;
    for f in &args.filter {
        let (col, value) = f.split_once('=').ok_or_else(|| Error::InvalidInput {
            key: "filter".into(),
            reason: format!("`{f}` is not COLUMN=VALUE"),
        })?;
        table = table.filter(col, value)?;
    }
    let ys: Vec<&str> = args.y.iter().map(String::as_str).collect();
    let options = PlotOptions {
        log_x: args.log_x,
        log_y: args.log_y,
        title: args.title.clone(),
    };
    let svg = plot_svg(&table, &args.x, &ys, &options)?;
    let out = args
        .output
        .clone()
        .unwrap_or_else(|| args.csv.with_extension("svg"));
    fs::write(&out, svg)?;
    if verbose > 0 {
        eprintln!("wrote {}", out.display());
    }
    println!("{}", out.display());
    Ok(())
}
