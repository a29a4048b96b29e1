mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use owm_core::{load_config, ScenarioKind, SessionConfig, UpdateScheme};

use commands::{SpectrumOptions, StreamOptions};

/// Salience gating for semantic probability streams on a damped wave lattice.
#[derive(Parser, Debug)]
#[command(name = "owm", version, about)]
struct Cli {
    /// TOML configuration; missing keys keep their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct StreamArgs {
    /// Frame stream (one JSON object per line); `-` is stdin. Repeat for
    /// several streams, which are processed in parallel.
    #[arg(long, short, value_name = "PATH|-", default_value = "-")]
    input: Vec<String>,

    /// Output file or `-`; a directory when several inputs are given.
    #[arg(long, short, value_name = "PATH|-")]
    output: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Frames to drift events (JSON lines), optionally with the energy trace CSV.
    Detect {
        #[command(flatten)]
        stream: StreamArgs,
        /// Energy trace CSV (a directory when several inputs are given).
        #[arg(long, value_name = "PATH|-")]
        trace: Option<String>,
    },
    /// Frames to gate decisions (JSON lines) plus a summary record.
    Gate {
        #[command(flatten)]
        stream: StreamArgs,
        /// Summary record destination; stderr by default.
        #[arg(long, value_name = "PATH|-")]
        report: Option<String>,
    },
    /// Synthetic frame stream with a ground-truth sidecar.
    Simulate {
        #[arg(long, default_value = "step_drift", value_parser = parse_scenario)]
        scenario: ScenarioKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stream length in frames.
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long, short, value_name = "PATH|-")]
        output: Option<String>,
        /// Sidecar path; defaults to `<output>.truth.json`, or stderr when writing to stdout.
        #[arg(long, value_name = "PATH|-")]
        truth: Option<String>,
    },
    /// Per-cell dominant frequencies of the p-field over a window of frames (CSV).
    Spectrum {
        #[command(flatten)]
        stream: StreamArgs,
        /// First frame of the analysis window; earlier frames only warm the lattice.
        #[arg(long, default_value_t = 0)]
        start_frame: usize,
        /// Window length in frames.
        #[arg(long, default_value_t = 10)]
        frames: usize,
        /// Keep every n-th lattice step.
        #[arg(long, default_value_t = 1)]
        every_n_steps: usize,
        /// Variance percentile a cell must exceed to be analysed.
        #[arg(long, default_value_t = 75.0)]
        percentile: f64,
    },
    /// Runs the oracle suite and prints the frequency map summary.
    Verify,
    /// Lattice steps per second at the given grid sizes.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [32, 64, 128])]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 5000)]
        steps: u64,
        #[arg(long, value_enum, default_value_t = Scheme::Staggered)]
        scheme: Scheme,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Scheme {
    Staggered,
    Simultaneous,
}

impl From<Scheme> for UpdateScheme {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Staggered => UpdateScheme::Staggered,
            Scheme::Simultaneous => UpdateScheme::Simultaneous,
        }
    }
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    s.parse().map_err(|e: owm_core::OwmError| e.to_string())
}

fn load(path: Option<&PathBuf>) -> Result<SessionConfig> {
    match path {
        Some(p) => load_config(p).with_context(|| format!("loading configuration {}", p.display())),
        None => Ok(SessionConfig::default()),
    }
}

fn stream_options<'a>(s: &'a StreamArgs, cfg: &'a SessionConfig) -> StreamOptions<'a> {
    StreamOptions {
        inputs: &s.input,
        output: s.output.as_deref(),
        config: cfg,
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = load(cli.config.as_ref())?;
    let stream = |s| stream_options(s, &cfg);
    match &cli.command {
        Command::Detect { stream: s, trace } => commands::detect(&stream(s), trace.as_deref())?,
        Command::Gate { stream: s, report } => commands::gate(&stream(s), report.as_deref())?,
        Command::Simulate {
            scenario,
            seed,
            frames,
            output,
            truth,
        } => commands::simulate(&cfg, *scenario, *seed, *frames, output.as_deref(), truth.as_deref())?,
        Command::Spectrum {
            stream: s,
            start_frame,
            frames,
            every_n_steps,
            percentile,
        } => commands::spectrum(
            &stream(s),
            &SpectrumOptions {
                start_frame: *start_frame,
                window_frames: *frames,
                every_n_steps: *every_n_steps,
                percentile: *percentile,
            },
        )?,
        Command::Verify => {
            if !commands::verify(&cfg, &mut std::io::stdout().lock())? {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Bench { grid, steps, scheme } => {
            commands::bench(grid, *steps, (*scheme).into(), &mut std::io::stdout().lock())?
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
