use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qbm_cli::commands::{run_bounds, run_oracle_check, run_propagator, run_tdis, Report};
use qbm_cli::config::RunConfig;
use qbm_cli::svg::{line_plot, Axes, Scale};
use qbm_cli::table::parse_csv;
use qbm_cli::CliError;

/// Gaussian propagators and entanglement bounds for quantum Brownian motion.
#[derive(Parser)]
#[command(name = "qbm", version)]
struct Cli {
    /// Run configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for random initial states
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate R(t) and S(t)
    Propagator,
    /// Entanglement bounds and area lower bounds
    Bounds,
    /// Disentanglement time over a (theta, delta) sweep
    Tdis,
    /// Compare against the discrete-bath closed system
    OracleCheck,
    /// Render a CSV written by this tool as SVG
    Plot {
        csv: PathBuf,
        /// Axis scaling
        #[arg(long, value_enum, default_value = "linear")]
        kind: PlotKind,
        /// Comma-separated columns to draw (default: all numeric)
        #[arg(long)]
        columns: Option<String>,
        /// Abscissa column (default: the first)
        #[arg(long)]
        x: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Linear,
    SemilogY,
    LogLog,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qbm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", cli.out.display())))?;
    let (name, runner): (&str, fn(&_, u64) -> Result<Report, CliError>) = match &cli.command {
        Command::Plot {
            csv,
            kind,
            columns,
            x,
        } => return plot(csv, *kind, columns.as_deref(), x.as_deref(), &cli.out),
        Command::Propagator => ("propagator", run_propagator),
        Command::Bounds => ("bounds", run_bounds),
        Command::Tdis => ("tdis", run_tdis),
        Command::OracleCheck => ("oracle-check", run_oracle_check),
    };
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let raw = RunConfig::load(path)?;
    let cfg = raw.resolve()?;
    let report = runner(&cfg, cli.seed)?;
    let stem = raw.output.stem.clone().unwrap_or_else(|| name.to_string());
    let csv_path = cli.out.join(format!("{stem}.csv"));
    report.table.write(&csv_path)?;
    if let Some(s) = &report.summary {
        println!("{s}");
    }
    if raw.output.svg {
        plot(&csv_path, PlotKind::Linear, None, None, &cli.out)?;
    }
    Ok(())
}

fn plot(
    csv: &Path,
    kind: PlotKind,
    columns: Option<&str>,
    x: Option<&str>,
    out: &Path,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(csv)
        .map_err(|e| CliError::Io(format!("{}: {e}", csv.display())))?;
    let parsed = parse_csv(&text)?;
    let x = x
        .map(str::to_string)
        .unwrap_or_else(|| parsed.header[0].clone());
    let ys: Vec<String> = match columns {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => parsed
            .header
            .iter()
            .zip(&parsed.columns)
            .filter(|(h, col)| **h != x && col.iter().any(Option::is_some))
            .map(|(h, _)| h.clone())
            .collect(),
    };
    let axes = match kind {
        PlotKind::Linear => Axes::default(),
        PlotKind::SemilogY => Axes {
            x: Scale::Linear,
            y: Scale::Log,
        },
        PlotKind::LogLog => Axes {
            x: Scale::Log,
            y: Scale::Log,
        },
    };
    let svg = line_plot(&parsed, &x, &ys, axes)?;
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let target = out.join(format!("{stem}.svg"));
    std::fs::write(&target, svg).map_err(|e| CliError::Io(format!("{}: {e}", target.display())))
}
