use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};

use conformal_warp_cli::commands::{run, Command};
use conformal_warp_cli::config::parse_scenario;
use conformal_warp_cli::record::{exit_code, write_csv, write_json, write_trace};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Warped-product effective potential solver.
#[derive(Debug, Parser)]
#[command(name = "cwarp", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout if omitted. Traces go next to it as `*.trace.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Overrides every seed in the scenario.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match real_main(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("cwarp: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn real_main(args: &Args) -> anyhow::Result<u8> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg = parse_scenario(&text)?;
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = run(&cfg, args.command, args.workers)?;

    let sink: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    match args.format {
        Format::Csv => write_csv(&out.records, sink)?,
        Format::Json => write_json(&out.records, sink)?,
    }
    if let (Some(p), false) = (&args.out, out.trace.is_empty()) {
        let tp = p.with_extension("trace.csv");
        let f = File::create(&tp).with_context(|| format!("creating {}", tp.display()))?;
        write_trace(&out.trace, BufWriter::new(f))?;
    }
    Ok(exit_code(&out.records))
}
