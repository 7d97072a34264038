//! `perfscen`: command-line runner for performative scenario experiments.
//!
//! Exit codes: 0 success, 1 validation (bad flags, config, or trace input),
//! 2 runtime failure, 3 I/O failure.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use perfscen::bounds::{evaluate_binomial_tail, minimal_sample_size, BoundQuery};
use perfscen::config::{ExperimentConfig, GameConfig};
use perfscen::export::export_csv;
use perfscen::fixed_point::Trace;
use perfscen::game::{nash_search, phi_fixed_points};
use perfscen::Error;

#[derive(Debug, Parser)]
#[command(
    name = "perfscen",
    version,
    about = "Performative chance-constrained optimization via the scenario approach"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Smallest scenario count meeting the binomial-tail bound.
    SampleSize {
        /// Violation level in (0, 1).
        #[arg(long)]
        eps: f64,
        /// Confidence parameter in (0, 1).
        #[arg(long)]
        beta: f64,
        /// Number of decision variables.
        #[arg(long)]
        dim: usize,
    },
    /// Run a stochastic best-response experiment and write its artifacts.
    Run {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Directory for the trace and CSV files.
        #[arg(long, env = "PERFSCEN_OUT_DIR", default_value = "perfscen-out")]
        out_dir: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Runs this many consecutive seeds in parallel, one subdirectory each.
        #[arg(long)]
        sweep: Option<u64>,
    },
    /// Enumerate equilibria of a toy game and compare with the fixed points of Phi.
    Nash {
        /// Game config (TOML).
        #[arg(long)]
        config: PathBuf,
    },
    /// Convert a trace file into CSV files.
    ExportCsv {
        /// Trace file (JSON lines).
        #[arg(long)]
        trace: PathBuf,
        /// Output directory.
        #[arg(long, env = "PERFSCEN_OUT_DIR", default_value = "perfscen-out")]
        out_dir: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidParameter { .. }
        | Error::DimensionMismatch { .. }
        | Error::ModeMismatch(_)
        | Error::AbsoluteContinuity { .. }
        | Error::Config(_)
        | Error::Trace { .. } => 1,
        Error::Io(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::SampleSize { eps, beta, dim } => cmd_sample_size(eps, beta, dim),
        Command::Run {
            config,
            out_dir,
            seed,
            sweep,
        } => cmd_run(&config, &out_dir, seed, sweep),
        Command::Nash { config } => cmd_nash(&config),
        Command::ExportCsv { trace, out_dir } => cmd_export_csv(&trace, &out_dir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn cmd_sample_size(eps: f64, beta: f64, dim: usize) -> perfscen::Result<u8> {
    let n = minimal_sample_size(eps, beta, dim)?;
    let tail = evaluate_binomial_tail(&BoundQuery::new(n, eps, beta, dim)?)?;
    println!("{n} {tail:e}");
    Ok(0)
}

/// Runs one experiment into `out_dir`; returns the trace.
fn run_one(cfg: &ExperimentConfig, out_dir: &Path, verbose: bool) -> perfscen::Result<Trace> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let trace = cfg.run()?;
    let trace_path = out_dir.join("trace.jsonl");
    let file = File::create(&trace_path).map_err(|e| io_err(&trace_path, e))?;
    let mut writer = BufWriter::new(file);
    trace.write_jsonl(&mut writer)?;
    writer.flush().map_err(|e| io_err(&trace_path, e))?;
    export_csv(&trace, out_dir)?;

    if verbose {
        for s in &trace.states {
            if let (Some(n), Some(r)) = (s.samples_used, s.residual) {
                println!(
                    "t={} N_t={} residual={:.6e} violation={:.6}",
                    s.t, n, r, s.violation_estimate
                );
            }
        }
    }
    let last = trace
        .states
        .last()
        .expect("a trace holds at least one state");
    let contraction = trace
        .summary
        .contraction_estimate
        .map_or_else(|| "n/a".to_string(), |k| format!("{k:.4}"));
    println!(
        "seed={} converged={} steps={} final_w={:?} violation={:.6} objective={:.6} contraction={} wallclock={:.3}s trace={}",
        trace.seed,
        trace.summary.converged,
        trace.summary.steps,
        trace.summary.final_iterate,
        last.violation_estimate,
        last.objective,
        contraction,
        trace.summary.wallclock_secs,
        trace_path.display()
    );
    Ok(trace)
}

fn cmd_run(
    config: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    sweep: Option<u64>,
) -> perfscen::Result<u8> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let Some(count) = sweep else {
        run_one(&cfg, out_dir, true)?;
        return Ok(0);
    };
    if count == 0 {
        return Err(Error::invalid("sweep", "must be at least 1"));
    }
    let results: Vec<perfscen::Result<Trace>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..count)
            .map(|i| {
                let mut c = cfg.clone();
                c.seed = cfg.seed + i;
                let dir = out_dir.join(format!("seed-{}", c.seed));
                scope.spawn(move || run_one(&c, &dir, false))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let mut converged = 0;
    for r in results {
        if r?.summary.converged {
            converged += 1;
        }
    }
    println!("sweep: {converged}/{count} runs converged");
    Ok(0)
}

fn cmd_nash(config: &Path) -> perfscen::Result<u8> {
    let game = GameConfig::load(config)?.to_game()?;
    let equilibria = nash_search(&game)?;
    let fixed = phi_fixed_points(&game)?;
    println!(
        "{:<8} {:<28} {:<10} {:<10}",
        "index", "decision", "nash", "phi_fixed"
    );
    let mut indices: Vec<usize> = equilibria
        .iter()
        .map(|e| e.index)
        .chain(fixed.iter().copied())
        .collect();
    indices.sort_unstable();
    indices.dedup();
    for x in &indices {
        let nash = equilibria.iter().any(|e| e.index == *x);
        let phi = fixed.contains(x);
        println!(
            "{:<8} {:<28} {:<10} {:<10}",
            x,
            format!("{:?}", game.decision_grid[*x]),
            if nash { "yes" } else { "no" },
            if phi { "yes" } else { "no" }
        );
    }
    let nash_set: Vec<usize> = equilibria.iter().map(|e| e.index).collect();
    if nash_set == fixed {
        println!("MATCH ({} equilibria)", nash_set.len());
        Ok(0)
    } else {
        println!("MISMATCH nash={nash_set:?} phi_fixed={fixed:?}");
        Ok(2)
    }
}

fn cmd_export_csv(trace: &Path, out_dir: &Path) -> perfscen::Result<u8> {
    let file = File::open(trace).map_err(|e| io_err(trace, e))?;
    let parsed = Trace::read_jsonl(BufReader::new(file)).map_err(|e| match e {
        Error::Trace { line, message } => Error::Trace {
            line,
            message: format!("{}: {message}", trace.display()),
        },
        other => other,
    })?;
    let files = export_csv(&parsed, out_dir)?;
    println!("wrote {}", files.residuals.display());
    println!("wrote {}", files.schedule.display());
    println!("wrote {}", files.iterates.display());
    if !files.snapshots.is_empty() {
        println!("wrote {} snapshot files", files.snapshots.len());
    }
    Ok(0)
}
