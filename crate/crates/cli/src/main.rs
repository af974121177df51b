//! `ddpmw2` — command-line front end for the sampler, grid builder, metric
//! estimators, guarantee evaluators, and the declarative sweep runner.
//!
//! Subcommands:
//!
//! * `run` — sample a target with the reverse iteration; JSON envelope on
//!   stdout, final states optionally to a binary matrix file.
//! * `schedule` — print a two-phase grid as flat CSV.
//! * `bound` — evaluate a W₂ guarantee right-hand side as JSON.
//! * `w2` — estimate W₂ between two sample-matrix files.
//! * `gaussian-oracle` — closed-form backward moments for a Gaussian target.
//! * `certify` — estimate oracle bias/deviation levels along a grid.
//! * `sweep` — run a config-file experiment; CSV + JSON record to a directory.
//!
//! Exit codes: 0 on success, 2 on validation or usage errors, 3 on numerical
//! aborts (non-finite state mid-run). `--threads N` — or the
//! `DDPMW2_THREADS` environment variable — caps the worker pool that
//! parallelizes chains; the default uses every core. Results are independent
//! of the thread count: every chain draws from its own counter-derived
//! stream and reductions run in a fixed order.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ddpmw2_core::harness::{run_experiment, write_csv, ExperimentConfig, ScheduleInput};
use ddpmw2_core::metrics::{w2_bures_fit, w2_exact_empirical, w2_sliced, W2Method};
use ddpmw2_core::oracle::{certify_assumption2, parse_oracle_spec, trajectory_probes};
use ddpmw2_core::rng::{chain_rng, Lane};
use ddpmw2_core::sampler::{run_ddpm, RunDiagnostics, SampleMatrix, SamplerConfig};
use ddpmw2_core::schedule::{build_schedule, Schedule};
use ddpmw2_core::target::TargetSpec;
use ddpmw2_core::theory::{gaussian_backward_moments, thm_bound, BoundParams, TheoremKind};
use ddpmw2_core::{Error, Result};

#[derive(Parser)]
#[command(name = "ddpmw2", version, about = "Reverse-diffusion sampling with W₂ guarantees")]
struct Cli {
    /// Worker threads for chain-parallel sections (default: all cores, or
    /// the DDPMW2_THREADS environment variable).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a target with the reverse iteration and print a JSON envelope.
    Run {
        /// Target distribution as inline JSON.
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        target: Option<String>,
        /// Grid as inline JSON ({"mode":"theorem","t1":3,"a":1,"k0":64}) or
        /// compact "t1,a,k0[,delta]".
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        schedule: Option<String>,
        /// Score oracle: exact | gauss:σ | uniform:σ | laplace:σ |
        /// student3:σ | compress.
        #[arg(long, default_value = "exact")]
        oracle: String,
        #[arg(long, default_value_t = 1024)]
        chains: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Store every m-th grid state in the envelope's trajectory field.
        #[arg(long, value_name = "M")]
        trajectory: Option<usize>,
        /// Single-cell experiment config file; replaces the inline flags and
        /// honors its record_trajectory field.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the final states to this path in the binary matrix format.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a two-phase grid — times, steps, query times — as flat CSV.
    Schedule {
        /// Grid as inline JSON or compact "t1,a,k0[,delta]".
        #[arg(long)]
        schedule: String,
    },
    /// Evaluate a W₂ guarantee right-hand side and print it itemized as JSON.
    Bound {
        /// Which guarantee: "one" (strongly log-concave core) or "two"
        /// (log-concave with bounded perturbation).
        #[arg(long)]
        theorem: TheoremArg,
        /// Strong log-concavity constant (required by theorem one).
        #[arg(long)]
        m: Option<f64>,
        /// Perturbation range constant.
        #[arg(long, default_value_t = 0.0)]
        b: f64,
        /// Perturbation smoothness constant.
        #[arg(long = "big-m", default_value_t = 0.0)]
        big_m: f64,
        #[arg(long)]
        t1: f64,
        #[arg(long)]
        h_max: f64,
        /// Score-oracle bias level ε^b.
        #[arg(long, default_value_t = 0.0)]
        eps_b: f64,
        /// Score-oracle noise level ε^v.
        #[arg(long, default_value_t = 0.0)]
        eps_v: f64,
        /// Ambient dimension D.
        #[arg(long)]
        dim: usize,
    },
    /// Estimate W₂ between two binary sample-matrix files.
    W2 {
        xs: PathBuf,
        ys: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::ExactAssignment)]
        method: MethodArg,
        /// Random projections for the sliced method.
        #[arg(long, default_value_t = 128)]
        slices: usize,
        /// Seed for the sliced method's projection directions.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Closed-form backward-process moments for a product Gaussian target.
    GaussianOracle {
        /// Per-coordinate parameter σ² (target variance 1 + σ²).
        #[arg(long)]
        sigma2: f64,
        /// Horizon T.
        #[arg(long)]
        t: f64,
    },
    /// Estimate oracle bias/deviation levels at probe points along a grid.
    Certify {
        /// Target distribution as inline JSON.
        #[arg(long)]
        target: String,
        /// Score oracle spec to certify.
        #[arg(long)]
        oracle: String,
        /// Grid supplying the probe times, as inline JSON or compact form.
        #[arg(long)]
        schedule: String,
        /// Replays per probe point.
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a declarative experiment config; write CSV and a JSON record.
    Sweep {
        /// Experiment config file (JSON with a schema_version field).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for record.json and cells.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TheoremArg {
    One,
    Two,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    ExactAssignment,
    BuresGaussianFit,
    Sliced,
}

impl From<MethodArg> for W2Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::ExactAssignment => W2Method::ExactAssignment,
            MethodArg::BuresGaussianFit => W2Method::BuresGaussianFit,
            MethodArg::Sliced => W2Method::Sliced,
        }
    }
}

/// Rust spawns with SIGPIPE ignored; a CLI piped into `head` should die
/// quietly like any other filter instead of panicking on EPIPE.
#[cfg(unix)]
fn restore_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn restore_sigpipe() {}

fn main() -> ExitCode {
    restore_sigpipe();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Numerical(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let threads = match cli.threads {
        Some(n) => Some(n),
        None => match std::env::var("DDPMW2_THREADS") {
            Ok(v) => Some(v.parse().map_err(|_| {
                Error::validation(format!("DDPMW2_THREADS must be a positive integer, got {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::validation("thread count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Run { target, schedule, oracle, chains, seed, trajectory, config, out } => {
            cmd_run(target, schedule, oracle, chains, seed, trajectory, config, out)
        }
        Command::Schedule { schedule } => cmd_schedule(&schedule),
        Command::Bound { theorem, m, b, big_m, t1, h_max, eps_b, eps_v, dim } => {
            let kind = match theorem {
                TheoremArg::One => TheoremKind::Thm1,
                TheoremArg::Two => TheoremKind::Thm2,
            };
            let bound = thm_bound(
                kind,
                &BoundParams { m, b, big_m, t1, h_max, eps_b, eps_v, d: dim },
            )?;
            println!("{}", serde_json::to_string_pretty(&bound)?);
            Ok(())
        }
        Command::W2 { xs, ys, method, slices, seed } => cmd_w2(&xs, &ys, method, slices, seed),
        Command::GaussianOracle { sigma2, t } => {
            let moments = gaussian_backward_moments(sigma2, t)?;
            println!("{}", serde_json::to_string_pretty(&moments)?);
            Ok(())
        }
        Command::Certify { target, oracle, schedule, reps, seed } => {
            cmd_certify(&target, &oracle, &schedule, reps, seed)
        }
        Command::Sweep { config, out, seed } => cmd_sweep(&config, &out, seed),
    }
}

/// Parses a grid description: inline JSON in the config-file format, or the
/// compact `t1,a,k0[,delta]` shorthand.
fn parse_schedule_arg(s: &str) -> Result<ScheduleInput> {
    let trimmed = s.trim();
    if trimmed.starts_with('{') {
        return Ok(serde_json::from_str(trimmed)?);
    }
    let parts: Vec<&str> = trimmed.split(',').collect();
    if parts.len() != 3 && parts.len() != 4 {
        return Err(Error::validation(format!(
            "schedule shorthand must be t1,a,k0[,delta], got {s:?}"
        )));
    }
    let num = |i: usize, name: &str| -> Result<f64> {
        parts[i]
            .trim()
            .parse()
            .map_err(|_| Error::validation(format!("schedule {name} must be a number, got {:?}", parts[i])))
    };
    let t1 = num(0, "t1")?;
    let a = num(1, "a")?;
    let k0 = parts[2]
        .trim()
        .parse()
        .map_err(|_| Error::validation(format!("schedule k0 must be an integer, got {:?}", parts[2])))?;
    Ok(if parts.len() == 4 {
        ScheduleInput::Explicit { t1, a, k0, delta: num(3, "delta")? }
    } else {
        ScheduleInput::Theorem { t1, a, k0 }
    })
}

/// Everything a `run` produces except the bulk sample matrix: provenance,
/// grid summary, endpoint statistics, per-step diagnostics, and (when
/// requested) the recorded trajectory.
#[derive(Serialize)]
struct RunEnvelope {
    n_chains: usize,
    d: usize,
    seed: u64,
    oracle: String,
    schedule: ScheduleSummary,
    /// Per-coordinate mean of the final states.
    mean: Vec<f64>,
    /// Per-coordinate unbiased variance of the final states.
    variance: Vec<f64>,
    diagnostics: RunDiagnostics,
    trajectory: Option<ddpmw2_core::sampler::Trajectory>,
    /// Path of the binary matrix holding the final states, when written.
    matrix: Option<String>,
}

#[derive(Serialize)]
struct ScheduleSummary {
    t1: f64,
    a: f64,
    k0: usize,
    delta: f64,
    h_max: f64,
    t_final: f64,
    compliant: bool,
    digest: u64,
}

impl ScheduleSummary {
    fn of(s: &Schedule) -> Self {
        Self {
            t1: s.params.t1,
            a: s.params.a,
            k0: s.params.k0,
            delta: s.params.delta,
            h_max: s.h_max,
            t_final: s.t_final,
            compliant: s.compliant,
            digest: s.digest(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    target: Option<String>,
    schedule: Option<String>,
    oracle: String,
    chains: usize,
    seed: u64,
    trajectory: Option<usize>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let (target, input, oracle, chains, seed, trajectory) = match config {
        Some(path) => {
            let cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
            cfg.validate()?;
            if cfg.cells()?.len() != 1 {
                return Err(Error::validation(
                    "run executes a single cell; configs with sweep axes go to `sweep`",
                ));
            }
            (cfg.target, cfg.schedule, cfg.oracle, cfg.n_chains, cfg.seed, cfg.record_trajectory)
        }
        None => {
            let target: TargetSpec = serde_json::from_str(
                target.as_deref().expect("clap enforces --target without --config"),
            )?;
            let input = parse_schedule_arg(
                schedule.as_deref().expect("clap enforces --schedule without --config"),
            )?;
            (target, input, oracle, chains, seed, trajectory)
        }
    };
    let schedule = build_schedule(&input.params())?;
    let oracle = parse_oracle_spec(&oracle, target)?;
    let result = run_ddpm(&SamplerConfig {
        schedule: schedule.clone(),
        oracle,
        n_chains: chains,
        seed,
        record_trajectory: trajectory,
    })?;
    if let Some(path) = &out {
        result.outputs.write_to(path)?;
    }
    let envelope = RunEnvelope {
        n_chains: result.outputs.n,
        d: result.outputs.d,
        seed,
        oracle: result.provenance.oracle.clone(),
        schedule: ScheduleSummary::of(&schedule),
        mean: result.outputs.mean_vector(),
        variance: result.outputs.variance_vector(),
        diagnostics: result.diagnostics,
        trajectory: result.trajectory,
        matrix: out.map(|p| p.display().to_string()),
    };
    println!("{}", serde_json::to_string_pretty(&envelope)?);
    Ok(())
}

fn cmd_schedule(arg: &str) -> Result<()> {
    let schedule = build_schedule(&parse_schedule_arg(arg)?.params())?;
    println!("k,t,h,query_time,h_max,compliant");
    for (k, &t) in schedule.times.iter().enumerate() {
        let h = schedule
            .steps
            .get(k)
            .map(|h| h.to_string())
            .unwrap_or_default();
        println!(
            "{k},{t},{h},{},{},{}",
            schedule.t_final - t,
            schedule.h_max,
            schedule.compliant
        );
    }
    Ok(())
}

fn cmd_w2(xs: &Path, ys: &Path, method: MethodArg, slices: usize, seed: u64) -> Result<()> {
    let xs = SampleMatrix::read_from(xs)?;
    let ys = SampleMatrix::read_from(ys)?;
    let result = match method {
        MethodArg::ExactAssignment => w2_exact_empirical(&xs, &ys)?,
        MethodArg::BuresGaussianFit => w2_bures_fit(&xs, &ys)?,
        MethodArg::Sliced => {
            let mut rng = chain_rng(seed, 0, Lane::Slices);
            w2_sliced(&xs, &ys, slices, &mut rng)?
        }
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "method": W2Method::from(method),
            "value": result.value,
            "n": [result.n.0, result.n.1],
            "seed": seed,
        }))?
    );
    Ok(())
}

fn cmd_certify(target: &str, oracle: &str, schedule: &str, reps: usize, seed: u64) -> Result<()> {
    let target: TargetSpec = serde_json::from_str(target)?;
    let schedule = build_schedule(&parse_schedule_arg(schedule)?.params())?;
    let probes = trajectory_probes(&target, &schedule, seed)?;
    let oracle = parse_oracle_spec(oracle, target)?;
    let mut rng = chain_rng(seed, 1, Lane::Oracle);
    let report = certify_assumption2(&oracle, &probes, reps, &mut rng)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_sweep(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut config: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(config)?)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    // Surface the planned cross-product size before any cell runs.
    let planned = config.cells()?.len();
    eprintln!("sweep: {planned} cell(s) planned");
    let record = run_experiment(&config)?;
    std::fs::create_dir_all(out)?;
    let json_path = out.join("record.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&record)?)?;
    let csv_path = out.join("cells.csv");
    let mut csv = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    write_csv(&record, &mut csv)?;
    use std::io::Write as _;
    csv.flush()?;
    println!(
        "wrote {} and {} ({} of {planned} cell(s) finished)",
        json_path.display(),
        csv_path.display(),
        record.cells.len()
    );
    // Partial results are on disk; a failed cell still fails the command.
    if let Some(failure) = record.failure {
        let message = format!("cell {}: {}", failure.cell, failure.message);
        return Err(if failure.numerical {
            Error::numerical(message)
        } else {
            Error::validation(message)
        });
    }
    Ok(())
}
