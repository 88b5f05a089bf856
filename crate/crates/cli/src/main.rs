use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use stsl_core::trace::{GlobalKey, NoiseEntry};
use stsl_core::{
    count, enumerate, log_density, parse, BlockKind, BlockPath, EnumBudget, ModelExpr, RngSpec, Sampler,
    SlotPolicy, TimeWindow, Trace,
};
use thiserror::Error;

/// Parse, sample, score and enumerate structural time series models.
#[derive(Parser, Debug)]
#[command(name = "stsl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a model file and print its canonical form.
    Check { file: PathBuf },
    /// Draw traces from the prior predictive distribution.
    Sample(SampleArgs),
    /// Score traces written by `sample --format json --latents`.
    Score(ScoreArgs),
    /// List every model within a size budget.
    Enumerate(EnumerateArgs),
}

#[derive(clap::Args, Debug)]
struct SampleArgs {
    file: PathBuf,
    /// First time index (inclusive)
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    t0: i64,
    /// End of the window (exclusive)
    #[arg(long, allow_hyphen_values = true)]
    t1: i64,
    #[arg(long, default_value_t = 1)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Include every block trajectory (and, in JSON, the noise record)
    #[arg(long)]
    latents: bool,
    /// Append the joint log density of each draw
    #[arg(long)]
    emit_logpdf: bool,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct ScoreArgs {
    file: PathBuf,
    /// JSON trace, or array of traces
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    t0: i64,
    /// End of the window (default: t0 + length of the observed series)
    #[arg(long, allow_hyphen_values = true)]
    t1: Option<i64>,
}

#[derive(clap::Args, Debug)]
struct EnumerateArgs {
    /// Comma-separated block kinds (default: all)
    #[arg(long, value_delimiter = ',')]
    blocks: Vec<String>,
    #[arg(long, default_value_t = 2)]
    max_terms: usize,
    #[arg(long, default_value_t = 1)]
    max_depth: usize,
    #[arg(long)]
    changepoints: bool,
    /// Also try `?` in slots that have a default prior
    #[arg(long)]
    prior_draws: bool,
    /// Print only the number of models
    #[arg(long)]
    count_only: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Error)]
enum CliError {
    /// Bad model, window, trace or arguments.
    #[error("{0}")]
    Domain(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn stdout(source: io::Error) -> Self {
        CliError::Io {
            path: "<stdout>".into(),
            source,
        }
    }

    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Domain(_) => ExitCode::from(1),
            CliError::Io { .. } => ExitCode::from(2),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check { file } => check(&file),
        Command::Sample(args) => sample(&args),
        Command::Score(args) => score(&args),
        Command::Enumerate(args) => run_enumerate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_model(path: &Path) -> Result<ModelExpr, CliError> {
    let src = read(path)?;
    parse(&src).map_err(|e| CliError::Domain(format!("{}:{e}", path.display())))
}

fn window(t0: i64, t1: i64) -> Result<TimeWindow, CliError> {
    TimeWindow::new(t0, t1).map_err(|e| CliError::Domain(e.to_string()))
}

fn check(file: &Path) -> Result<(), CliError> {
    let model = load_model(file)?;
    let mut out = io::stdout().lock();
    writeln!(out, "OK\n{model}").map_err(CliError::stdout)
}

fn sample(args: &SampleArgs) -> Result<(), CliError> {
    let model = load_model(&args.file)?;
    let window = window(args.t0, args.t1)?;
    let sampler = Sampler::default();
    let base = RngSpec::new(args.seed, 0);

    let mut draws = Vec::with_capacity(args.draws);
    for draw in 0..args.draws {
        let trace = sampler
            .sample_trace(&model, window, base.offset(draw as u64))
            .map_err(|e| CliError::Domain(format!("draw {draw}: {e}")))?;
        let logpdf = if args.emit_logpdf {
            let report = log_density(&model, window, &trace)
                .map_err(|e| CliError::Domain(format!("draw {draw}: {e}")))?;
            Some(report.total)
        } else {
            None
        };
        draws.push((trace, logpdf));
    }

    let (sink, sink_name): (Box<dyn Write>, PathBuf) = match &args.out {
        Some(path) => (
            Box::new(File::create(path).map_err(|e| CliError::io(path, e))?),
            path.clone(),
        ),
        None => (Box::new(io::stdout().lock()), PathBuf::from("<stdout>")),
    };
    let written = match args.format {
        Format::Csv => write_csv(sink, window, &draws, args.latents),
        Format::Json => write_json(sink, &draws, args.latents),
    };
    written.map_err(|e| CliError::io(&sink_name, e))
}

fn write_csv(sink: impl Write, window: TimeWindow, draws: &[(Trace, Option<f64>)], latents: bool) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["draw", "series", "t", "value"])?;
    for (draw, (trace, logpdf)) in draws.iter().enumerate() {
        write_csv_draw(&mut w, draw, window, trace, latents, *logpdf)?;
    }
    w.flush()
}

fn write_json(sink: impl Write, draws: &[(Trace, Option<f64>)], latents: bool) -> io::Result<()> {
    let records: Vec<DrawRecord<'_>> = draws
        .iter()
        .enumerate()
        .map(|(draw, (trace, logpdf))| DrawRecord {
            draw,
            observed: &trace.observed,
            latents: latents.then_some(&trace.latents),
            globals: &trace.globals,
            changepoints: &trace.changepoints,
            noises: latents.then_some(&trace.noises),
            logpdf: *logpdf,
        })
        .collect();
    let mut sink = BufWriter::new(sink);
    serde_json::to_writer(&mut sink, &records)?;
    sink.write_all(b"\n")?;
    sink.flush()
}

#[derive(Serialize)]
struct DrawRecord<'a> {
    draw: usize,
    observed: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    latents: Option<&'a BTreeMap<BlockPath, Vec<f64>>>,
    globals: &'a BTreeMap<GlobalKey, f64>,
    changepoints: &'a BTreeMap<BlockPath, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noises: Option<&'a Vec<NoiseEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    logpdf: Option<f64>,
}

/// One row per (time, series): the observed series `y` first, then block
/// trajectories by path. The log density, if requested, is a final
/// `logpdf` row stamped with the window start.
fn write_csv_draw<W: Write>(
    w: &mut csv::Writer<W>,
    draw: usize,
    window: TimeWindow,
    trace: &Trace,
    latents: bool,
    logpdf: Option<f64>,
) -> csv::Result<()> {
    for (i, t) in window.times().enumerate() {
        w.serialize((draw, "y", t, trace.observed[i]))?;
        if latents {
            for (path, series) in &trace.latents {
                w.serialize((draw, path.as_str(), t, series[i]))?;
            }
        }
    }
    if let Some(lp) = logpdf {
        w.serialize((draw, "logpdf", window.t0(), lp))?;
    }
    Ok(())
}

fn score(args: &ScoreArgs) -> Result<(), CliError> {
    let model = load_model(&args.file)?;
    let text = read(&args.trace)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Domain(format!("{}: {e}", args.trace.display())))?;
    let (traces, many) = match value {
        serde_json::Value::Array(items) => (items, true),
        single => (vec![single], false),
    };
    let mut reports = Vec::new();
    for (i, item) in traces.into_iter().enumerate() {
        let trace: Trace = serde_json::from_value(item)
            .map_err(|e| CliError::Domain(format!("{} (trace {i}): {e}", args.trace.display())))?;
        let t1 = args.t1.unwrap_or(args.t0 + trace.observed.len() as i64);
        let report = log_density(&model, window(args.t0, t1)?, &trace)
            .map_err(|e| CliError::Domain(format!("trace {i}: {e}")))?;
        reports.push(report);
    }
    let mut out = io::stdout().lock();
    let written = if many {
        serde_json::to_writer_pretty(&mut out, &reports)
    } else {
        serde_json::to_writer_pretty(&mut out, &reports[0])
    };
    written.map_err(|e| CliError::stdout(e.into()))?;
    writeln!(out).map_err(CliError::stdout)
}

fn run_enumerate(args: &EnumerateArgs) -> Result<(), CliError> {
    let kinds = if args.blocks.is_empty() {
        BlockKind::ALL.to_vec()
    } else {
        args.blocks
            .iter()
            .map(|name| name.trim().parse::<BlockKind>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Domain(e.to_string()))?
    };
    let policy = if args.prior_draws {
        SlotPolicy::DefaultsPlusPriorDraws
    } else {
        SlotPolicy::DefaultsOnly
    };
    let budget = EnumBudget::new(kinds, args.max_terms, args.max_depth)
        .map_err(|e| CliError::Domain(e.to_string()))?
        .with_changepoints(args.changepoints)
        .with_slot_policy(policy);

    let mut out = BufWriter::new(io::stdout().lock());
    if args.count_only {
        writeln!(out, "{}", count(&budget)).map_err(CliError::stdout)?;
    } else {
        for model in enumerate(&budget) {
            writeln!(out, "{model}").map_err(CliError::stdout)?;
        }
    }
    out.flush().map_err(CliError::stdout)
}
