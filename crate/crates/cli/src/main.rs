//! `r1c`: analyze, complete, generate and benchmark rank-one tensor
//! completion from the command line.
//!
//! Exit codes: 0 on success (including degraded completions), 1 when the
//! algorithm fails, 2 on bad input. Logs go to stderr; stdout carries only
//! machine-readable output.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use rankone::analysis::is_determinable;
use rankone::completion::{complete, CompletionOptions, CompletionResult, Status};
use rankone::experiment::{run_trial, summarize, trial_seed, TrialReport, TrialSpec};
use rankone::generator::{generate, GeneratorConfig};
use rankone::linsys::{RankTolerance, SolverOptions};
use rankone::tensor::PartialTensor;
use rankone::Error;

#[derive(Parser)]
#[command(
    name = "r1c",
    version,
    about = "Rank-one completion of partially observed tensors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report extractability per mode, connectivity, fullness and determinability.
    Analyze {
        /// Tensor file (JSON).
        input: PathBuf,
        /// Rank tolerance relative to max(1, sigma_max); machine-precision default.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Complete a tensor and print its factors, residual and recursion chain.
    Complete {
        input: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        /// Write the result here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Take each mode vector from the raw system instead of the equilibrated one.
        #[arg(long)]
        no_balance: bool,
    },
    /// Generate a random instance: PREFIX.exact.json, PREFIX.noisy.json and PREFIX.factors.json.
    Generate {
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        /// Output path prefix.
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Run seeded noisy trials and report per-trial and mean rows.
    Bench {
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 1e-2)]
        eps: f64,
        #[arg(long, default_value_t = 50)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also fit the nonlinear least-squares baseline on every trial.
        #[arg(long)]
        compare_nls: bool,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Input(String),
    Algorithm(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Algorithm(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Analyze { input, tol } => analyze(&input, tol),
        Command::Complete {
            input,
            tol,
            output,
            no_balance,
        } => run_complete(&input, tol, output.as_deref(), !no_balance),
        Command::Generate {
            dims,
            seed,
            eps,
            output,
        } => run_generate(dims, seed, eps, &output),
        Command::Bench {
            dims,
            eps,
            trials,
            seed,
            compare_nls,
            format,
            output,
        } => bench(
            dims,
            eps,
            trials,
            seed,
            compare_nls,
            format,
            output.as_deref(),
        ),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Algorithm(msg)) => {
            log::error!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            log::error!("{msg}");
            ExitCode::from(2)
        }
    }
}

fn solver_options(tol: Option<f64>) -> CliResult<SolverOptions> {
    match tol {
        None => Ok(SolverOptions::default()),
        Some(t) if t.is_finite() && t >= 0.0 => {
            Ok(SolverOptions::default().with_tolerance(RankTolerance::Relative(t)))
        }
        Some(t) => Err(Failure::Input(format!(
            "--tol must be finite and nonnegative, got {t}"
        ))),
    }
}

fn read_tensor(path: &Path) -> CliResult<PartialTensor> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let a: PartialTensor = serde_json::from_str(&text)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    if a.is_empty() {
        return Err(Failure::Input(format!(
            "{}: no observed entries",
            path.display()
        )));
    }
    Ok(a)
}

fn emit(output: Option<&Path>, mut text: String) -> CliResult<()> {
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match output {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

fn analyze(input: &Path, tol: Option<f64>) -> CliResult<()> {
    let a = read_tensor(input)?;
    let report = is_determinable(&a, &solver_options(tol)?)?;
    info!(
        "order {}, {} entries: {}",
        a.order(),
        a.len(),
        if report.determinable {
            "determinable"
        } else {
            "not determinable"
        }
    );
    emit(None, to_json(&report))
}

#[derive(Serialize)]
struct LevelOut {
    level: usize,
    mode: usize,
    sigma_min: f64,
    sigma_next: f64,
    gap: f64,
    nullity: usize,
    underdetermined: bool,
}

#[derive(Serialize)]
struct CompleteOut<'a> {
    status: Status,
    chain: Vec<usize>,
    fit_residual: f64,
    factors: &'a [Vec<f64>],
    levels: Vec<LevelOut>,
    diagnostics: &'a [String],
}

fn complete_out(r: &CompletionResult) -> CompleteOut<'_> {
    CompleteOut {
        status: r.status,
        chain: r.chain(),
        fit_residual: r.fit_residual,
        factors: &r.factors,
        levels: r
            .levels
            .iter()
            .map(|l| {
                let c = l
                    .candidates
                    .iter()
                    .find(|c| c.mode == l.chosen_mode)
                    .expect("chosen mode is a candidate");
                LevelOut {
                    level: l.level,
                    mode: l.chosen_mode,
                    sigma_min: c.sigma_min,
                    sigma_next: c.sigma_next,
                    gap: c.gap,
                    nullity: l.nullity,
                    underdetermined: l.underdetermined,
                }
            })
            .collect(),
        diagnostics: &r.diagnostics,
    }
}

fn run_complete(
    input: &Path,
    tol: Option<f64>,
    output: Option<&Path>,
    balance: bool,
) -> CliResult<()> {
    let a = read_tensor(input)?;
    let opts = CompletionOptions {
        solver: solver_options(tol)?,
        balance,
        ..CompletionOptions::default()
    };
    let r = complete(&a, &opts)?;
    for d in &r.diagnostics {
        warn!("{d}");
    }
    info!(
        "status {}, chain {:?}, fit residual {:.3e}",
        r.status,
        r.chain(),
        r.fit_residual
    );
    emit(output, to_json(&complete_out(&r)))?;
    if r.status == Status::Failed {
        return Err(Failure::Algorithm("completion failed".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct FactorFile<'a> {
    dims: &'a [usize],
    seed: u64,
    eps: f64,
    factors: &'a [Vec<f64>],
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run_generate(dims: Vec<usize>, seed: u64, eps: f64, output: &Path) -> CliResult<()> {
    let inst = generate(&GeneratorConfig { dims, seed, eps })?;
    let files = [
        (with_suffix(output, ".exact.json"), to_json(&inst.exact)),
        (with_suffix(output, ".noisy.json"), to_json(&inst.noisy)),
        (
            with_suffix(output, ".factors.json"),
            to_json(&FactorFile {
                dims: &inst.config.dims,
                seed,
                eps,
                factors: &inst.truth.factors,
            }),
        ),
    ];
    for (path, text) in files {
        emit(Some(&path), text)?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn worker_count() -> CliResult<Option<usize>> {
    match std::env::var("R1C_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Failure::Input(format!(
                "R1C_THREADS must be a positive integer, got {v:?}"
            ))),
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn bench(
    dims: Vec<usize>,
    eps: f64,
    trials: u64,
    seed: u64,
    compare_nls: bool,
    format: Format,
    output: Option<&Path>,
) -> CliResult<()> {
    if trials == 0 {
        return Err(Failure::Input("--trials must be at least 1".into()));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Failure::Input(e.to_string()))?;
    info!(
        "{trials} trials of {dims:?} at eps {eps} on {} workers",
        pool.current_num_threads()
    );

    let reports: Vec<TrialReport> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                let mut spec = TrialSpec::new(dims.clone(), eps, trial_seed(seed, i));
                spec.compare_nls = compare_nls;
                let t0 = Instant::now();
                let r = run_trial(&spec, &move || t0.elapsed().as_secs_f64());
                if let Ok(r) = &r {
                    log::debug!(
                        "trial {i}: status {}, err_rt {:?}",
                        r.status,
                        r.metrics.err_rt
                    );
                }
                r
            })
            .collect::<Result<_, _>>()
    })?;
    let summary = summarize(&reports);
    info!(
        "mean err_ab {:.3e}, err_rt {:?}, sin_theta {:.3e}, failed {}",
        summary.err_ab, summary.err_rt, summary.sin_theta, summary.failed
    );
    let text = match format {
        Format::Json => to_json(&report::JsonReport {
            trials: &reports,
            summary: &summary,
        }),
        Format::Csv => report::csv(&reports, &summary, compare_nls),
    };
    emit(output, text)
}
