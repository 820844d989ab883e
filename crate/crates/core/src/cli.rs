//! `stsperf` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O, non-terminating runs),
//! 2 invalid input (bad flags, parse or validation errors, unsuitable models).

use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::analytics::{self, DEFAULT_MAX_PATHS};
use crate::codegen::{self, RenderTemplate};
use crate::model::StsModel;
use crate::model_io::{parse_model, serialize_model};
use crate::report::{self, fmt_sig6, summary_block, DEFAULT_WINDOW};
use crate::sim::{self, Measure, SimError, SimulationConfig, DEFAULT_MAX_STEPS};
use crate::stats::summarize;
use crate::validate::validate;

/// Caps worker threads for `simulate`; 0 or unset picks automatically.
pub const THREADS_ENV: &str = "STSPERF_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "stsperf",
    version,
    about = "Estimate service performance from a probabilistic state-machine model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MeasureArg {
    Service,
    Response,
}

impl From<MeasureArg> for Measure {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::Service => Measure::Service,
            MeasureArg::Response => Measure::Response,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a model and list every problem found
    Validate { model: PathBuf },
    /// Run seeded Monte-Carlo replications
    Simulate {
        model: PathBuf,
        #[arg(long)]
        runs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "service")]
        measure: MeasureArg,
        /// Per-run CSV output
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: u64,
    },
    /// Exact mean and standard deviation of the service time
    Analyze {
        model: PathBuf,
        /// Also list every execution path (acyclic models only)
        #[arg(long)]
        paths: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_PATHS)]
        max_paths: usize,
    },
    /// Scale all transition delays so the mean matches a measurement
    Calibrate {
        model: PathBuf,
        #[arg(long)]
        measured_mean: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a simulation script from a template
    Generate {
        model: PathBuf,
        /// Builtin template name (fig4, pseudocode) or template file path
        #[arg(long)]
        template: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a per-run CSV into a trend CSV with a moving average
    Report {
        runs: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "service")]
        measure: MeasureArg,
    },
}

#[derive(Debug)]
enum Failure {
    /// Exit 2.
    Input(String),
    /// Exit 1.
    Runtime(String),
    /// Findings were already printed.
    Reported(i32),
}

fn input(code: &str, msg: impl Display) -> Failure {
    Failure::Input(format!("error[{code}]: {msg}"))
}

fn runtime(code: &str, msg: impl Display) -> Failure {
    Failure::Runtime(format!("error[{code}]: {msg}"))
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| runtime("Io", format_args!("{}: {e}", path.display())))
}

fn write(path: &Path, data: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, data).map_err(|e| runtime("Io", format_args!("{}: {e}", path.display())))
}

fn io_err(e: std::io::Error) -> Failure {
    runtime("Io", e)
}

struct Ctx<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    threads: usize,
}

impl Ctx<'_> {
    /// Parses and validates; findings go to stderr.
    fn load(&mut self, path: &Path) -> Result<StsModel, Failure> {
        let bytes = read(path)?;
        let model = parse_model(&bytes)
            .map_err(|e| input(e.code.as_str(), format_args!("{}:{e}", path.display())))?;
        let report = validate(&model);
        for f in &report.findings {
            writeln!(self.err, "{f}").map_err(io_err)?;
        }
        if !report.ok {
            return Err(Failure::Reported(2));
        }
        Ok(model)
    }

    fn run(&mut self, command: Command) -> Result<(), Failure> {
        match command {
            Command::Validate { model } => {
                let m = self.load(&model)?;
                writeln!(
                    self.out,
                    "ok: {} ({} states, {} transitions)",
                    m.name,
                    m.states.len(),
                    m.transitions.len()
                )
                .map_err(io_err)
            }
            Command::Simulate {
                model,
                runs,
                seed,
                measure,
                out,
                max_steps,
            } => {
                let m = self.load(&model)?;
                let cfg = SimulationConfig {
                    runs,
                    seed,
                    max_steps,
                    measure: measure.into(),
                    threads: self.threads,
                };
                let result = sim::simulate(&m, &cfg).map_err(|e| match e {
                    SimError::InvalidConfig(_) => input(e.code(), &e),
                    _ => runtime(e.code(), &e),
                })?;
                if let Some(path) = out {
                    write(&path, report::runs_csv(&result.records).as_bytes())?;
                }
                self.out
                    .write_all(summary_block(&result.summary).as_bytes())
                    .map_err(io_err)
            }
            Command::Analyze {
                model,
                paths,
                max_paths,
            } => {
                let m = self.load(&model)?;
                let moments = analytics::expected_moments(&m).map_err(|e| input(e.code(), &e))?;
                let mut text = format!(
                    "mean_ms={}\nstd_ms={}\nvariance_ms2={}\nsecond_moment_ms2={}\n",
                    fmt_sig6(moments.mean),
                    fmt_sig6(moments.std),
                    fmt_sig6(moments.variance),
                    fmt_sig6(moments.second_moment)
                );
                if m.overheads.is_some() {
                    let r = analytics::response_moments(&m, &moments)
                        .map_err(|e| input(e.code(), &e))?;
                    text.push_str(&format!(
                        "response_mean_ms={}\nresponse_std_ms={}\n",
                        fmt_sig6(r.mean),
                        fmt_sig6(r.std)
                    ));
                }
                if paths {
                    let e = analytics::enumerate_paths(&m, max_paths)
                        .map_err(|e| input(e.code(), &e))?;
                    for (i, p) in e.paths.iter().enumerate() {
                        let states: Vec<&str> = p.states.iter().map(|s| s.as_str()).collect();
                        text.push_str(&format!(
                            "path={} probability={} mean_ms={} min_ms={} max_ms={} states={}\n",
                            i + 1,
                            fmt_sig6(p.probability),
                            fmt_sig6(p.mean),
                            fmt_sig6(p.min),
                            fmt_sig6(p.max),
                            states.join(",")
                        ));
                    }
                    text.push_str(&format!(
                        "paths={} aggregate_mean_ms={} support_min_ms={} support_max_ms={}\n",
                        e.paths.len(),
                        fmt_sig6(e.aggregate_mean),
                        fmt_sig6(e.support_min),
                        fmt_sig6(e.support_max)
                    ));
                }
                self.out.write_all(text.as_bytes()).map_err(io_err)
            }
            Command::Calibrate {
                model,
                measured_mean,
                out,
            } => {
                let m = self.load(&model)?;
                let k = analytics::calibration_factor(&m, measured_mean)
                    .map_err(|e| input(e.code(), &e))?;
                let scaled =
                    analytics::calibrate(&m, measured_mean).map_err(|e| input(e.code(), &e))?;
                let mean = analytics::expected_moments(&scaled)
                    .map_err(|e| input(e.code(), &e))?
                    .mean;
                write(&out, serialize_model(&scaled).as_bytes())?;
                writeln!(
                    self.out,
                    "scale={}\nmean_ms={}",
                    fmt_sig6(k),
                    fmt_sig6(mean)
                )
                .map_err(io_err)
            }
            Command::Generate {
                model,
                template,
                out,
            } => {
                let m = self.load(&model)?;
                let ir = codegen::build_ir(&m).map_err(|e| input(e.code(), &e))?;
                let tpl = RenderTemplate::load(&template).map_err(|e| match e {
                    codegen::TemplateError::Io { .. } => runtime(e.code(), &e),
                    _ => input(e.code(), &e),
                })?;
                let text = codegen::render(&ir, &tpl).map_err(|e| input(e.code(), &e))?;
                match out {
                    Some(path) => write(&path, text.as_bytes()),
                    None => self.out.write_all(text.as_bytes()).map_err(io_err),
                }
            }
            Command::Report {
                runs,
                window,
                out,
                measure,
            } => {
                let text = String::from_utf8(read(&runs)?).map_err(|_| {
                    input(
                        "MalformedCsv",
                        format_args!("{}: not UTF-8", runs.display()),
                    )
                })?;
                let records = report::parse_runs_csv(&text)
                    .map_err(|e| input(e.code(), format_args!("{}: {e}", runs.display())))?;
                let trend =
                    report::emit_trend_csv(&records, window).map_err(|e| input(e.code(), &e))?;
                match out {
                    Some(path) => {
                        write(&path, trend.as_bytes())?;
                        let measure: Measure = measure.into();
                        let values: Vec<f64> = records.iter().map(|r| r.value(measure)).collect();
                        let summary = summarize(&values).map_err(|e| input(e.code(), &e))?;
                        self.out
                            .write_all(summary_block(&summary).as_bytes())
                            .map_err(io_err)
                    }
                    None => self.out.write_all(trend.as_bytes()).map_err(io_err),
                }
            }
        }
    }
}

fn threads_from_env() -> Result<usize, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v.trim().parse().map_err(|_| {
            input(
                "InvalidEnv",
                format_args!("{THREADS_ENV} must be a non-negative integer, got '{v}'"),
            )
        }),
    }
}

/// Runs the CLI with the process's stdout and stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                2
            } else {
                let _ = out.write_all(text.as_bytes());
                0
            };
        }
    };
    let result = threads_from_env().and_then(|threads| Ctx { out, err, threads }.run(cli.command));
    match result {
        Ok(()) => 0,
        Err(Failure::Reported(code)) => code,
        Err(Failure::Input(msg)) => {
            let _ = writeln!(err, "{msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "{msg}");
            1
        }
    }
}
