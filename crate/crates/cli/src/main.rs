use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use aamrp::metrics::RunMetrics;
use aamrp::oracle::{check_ant, check_ksp};
use aamrp::scenario::Scenario;
use aamrp::sim::trace::{read_trace, replay};
use aamrp::sweep::{run_sweep, SweepError, SweepOptions};
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

/// Scenario runner for the ant-based adaptive multicast routing simulator.
#[derive(Debug, Parser)]
#[command(name = "aamrp", version)]
struct Cli {
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every combination of the scenario's sweep and write the metrics.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Concurrent runs.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: u16,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write a packet trace for every run.
        #[arg(long)]
        trace: bool,
    },
    /// Print the resolved configuration and any violations.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Replay a trace file through the metrics.
    Trace { file: PathBuf },
    /// Run the brute-force oracle checks.
    Oracle {
        #[arg(value_enum, default_value_t = OracleCheck::All)]
        check: OracleCheck,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Trials per check; defaults to 200 for ksp and 100 for ant.
        #[arg(long)]
        trials: Option<usize>,
        /// Colony iterations per ant trial.
        #[arg(long, default_value_t = 500)]
        iterations: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleCheck {
    Ksp,
    Ant,
    All,
}

fn seed_offset() -> Result<u64, String> {
    match std::env::var("AAMRP_SEED_OFFSET") {
        Ok(v) => v.trim().parse().map_err(|_| format!("AAMRP_SEED_OFFSET: not an unsigned integer: {v:?}")),
        Err(_) => Ok(0),
    }
}

fn print_metrics(m: &RunMetrics) {
    let opt = |v: Option<f64>| v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.6}"));
    println!("overhead = {}", m.overhead);
    println!("load = {}", opt(m.routing_load));
    println!("delay_s = {}", opt(m.avg_delay));
    println!("pdf_pct = {}", opt(m.pdf));
}

fn cmd_run(scenario: PathBuf, jobs: u16, out: PathBuf, trace: bool, quiet: bool) -> ExitCode {
    let scn = match Scenario::load_valid(&scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", scenario.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let seed_offset = match seed_offset() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let opts = SweepOptions { jobs: jobs.into(), out_dir: Some(out.clone()), seed_offset, trace };
    match run_sweep(&scn, &opts) {
        Ok(report) => {
            if !quiet {
                print!("{}", report.csv);
                eprintln!(
                    "{} runs ({} resumed), results in {}",
                    report.runs.len(),
                    report.resumed,
                    out.join(&scn.output.csv).display()
                );
            }
            ExitCode::SUCCESS
        }
        Err(e @ SweepError::Config { .. }) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn cmd_validate(scenario: PathBuf, quiet: bool) -> ExitCode {
    let scn = match Scenario::load(&scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", scenario.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if !quiet {
        print!("{}", scn.resolved());
    }
    match scn.validate() {
        Ok(()) => ExitCode::SUCCESS,
        Err(errs) => {
            for e in errs {
                eprintln!("invalid: {e}");
            }
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn cmd_trace(file: PathBuf) -> ExitCode {
    let records = File::open(&file)
        .map_err(aamrp::TraceError::from)
        .and_then(|f| read_trace(BufReader::new(f)));
    match records {
        Ok(r) => {
            print_metrics(&RunMetrics::from_counters(&replay(&r)));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}: {e}", file.display());
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn cmd_oracle(check: OracleCheck, seed: u64, trials: Option<usize>, iterations: usize) -> ExitCode {
    let mut ok = true;
    if matches!(check, OracleCheck::Ksp | OracleCheck::All) {
        let r = check_ksp(trials.unwrap_or(200), seed);
        println!("ksp: {} graphs, {} comparisons, {} mismatches", r.trials, r.comparisons, r.mismatches.len());
        for m in &r.mismatches {
            println!("  {m}");
        }
        ok &= r.mismatches.is_empty();
    }
    if matches!(check, OracleCheck::Ant | OracleCheck::All) {
        let r = check_ant(trials.unwrap_or(100), seed, iterations);
        println!(
            "ant: {}/{} within 5% of optimum, worst ratio {:.4}, {} cost mismatches",
            r.within_5pct, r.trials, r.worst_ratio, r.cost_mismatches
        );
        println!("ant: {} decisions, {} malformed, max |sum - 1| = {:e}", r.decisions, r.bad_decisions, r.max_sum_error);
        ok &= r.cost_mismatches == 0 && r.bad_decisions == 0;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_RUNTIME)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.command {
        Command::Run { scenario, jobs, out, trace } => cmd_run(scenario, jobs, out, trace, cli.quiet),
        Command::Validate { scenario } => cmd_validate(scenario, cli.quiet),
        Command::Trace { file } => cmd_trace(file),
        Command::Oracle { check, seed, trials, iterations } => cmd_oracle(check, seed, trials, iterations),
    }
}
