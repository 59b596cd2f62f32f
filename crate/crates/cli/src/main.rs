//! `btpp` — experiment driver for the tree push-pull optimization lab.
//!
//! Four subcommands: `verify` checks the tree algebra over a grid of
//! shapes, `run` executes one configured experiment, `sweep` expands
//! list-valued config axes into their Cartesian product, and `report`
//! aggregates metrics CSVs for plotting.
//!
//! Exit codes are part of the interface: 0 success, 1 bad input of any
//! kind, 2 a verification property failed, 3 every run in the batch
//! diverged. Worker count comes from BTPP_WORKERS (default: all cores).

use clap::{Parser, Subcommand};

mod config;
mod csv_out;
mod report;
mod runner;
mod verify;

#[derive(Parser)]
#[command(name = "btpp", version, about = "Tree push-pull optimization lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check tree mixing-matrix algebra and tracker conservation on a grid
    Verify {
        /// Shapes to check, as lo..hi:b1,b2,... (n range, branch sizes)
        #[arg(long, default_value = "1..64:2,3,4,8")]
        grid: String,
        /// Deliberately corrupt one matrix entry (suite self-test)
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Execute one configured experiment, emitting metrics CSV
    Run {
        /// TOML experiment description
        #[arg(long)]
        config: String,
        /// Write CSV here instead of stdout
        #[arg(long)]
        out: Option<String>,
        /// Comma-separated seeds overriding the config's list
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Execute the Cartesian product of list-valued config axes
    Sweep {
        /// TOML experiment description (lists allowed for tag, n, B)
        #[arg(long)]
        config: String,
        /// Write CSV here instead of stdout
        #[arg(long)]
        out: Option<String>,
        /// Comma-separated seeds overriding the config's list
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Aggregate metrics CSVs into per-group count/mean/std
    Report {
        /// Input CSV files; headers must match this tool's output exactly
        #[arg(required = true)]
        inputs: Vec<String>,
        /// Comma-separated coordinate columns to group on
        #[arg(long, default_value = report::DEFAULT_GROUP_BY)]
        group_by: String,
        /// Write the aggregate here instead of stdout
        #[arg(long)]
        out: Option<String>,
    },
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version are successes; everything else is bad input,
            // and bad input exits 1 here (clap's own default would be 2,
            // which this tool reserves for verification failures)
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Err(msg) = init_workers() {
        eprintln!("error: {msg}");
        return 1;
    }
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

/// Builds the global worker pool from BTPP_WORKERS; unset means rayon's
/// default (available parallelism).
fn init_workers() -> Result<(), String> {
    let raw = match std::env::var("BTPP_WORKERS") {
        Err(std::env::VarError::NotPresent) => return Ok(()),
        Err(e) => return Err(format!("BTPP_WORKERS: {e}")),
        Ok(v) => v,
    };
    let workers: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&w| w > 0)
        .ok_or_else(|| format!("BTPP_WORKERS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| format!("worker pool: {e}"))
}

fn dispatch(cmd: Cmd) -> Result<i32, String> {
    match cmd {
        Cmd::Verify { grid, inject_fault } => {
            let grid = verify::parse_grid(&grid)?;
            let outcome = verify::run_suite(&grid, inject_fault);
            print!("{}", outcome.report);
            Ok(if outcome.passed { 0 } else { 2 })
        }
        Cmd::Run { config, out, seeds } => execute(&config, out.as_deref(), seeds, false),
        Cmd::Sweep { config, out, seeds } => execute(&config, out.as_deref(), seeds, true),
        Cmd::Report {
            inputs,
            group_by,
            out,
        } => {
            let text = report::aggregate(&inputs, &group_by)?;
            csv_out::write_text(&text, out.as_deref()).map_err(|e| e.to_string())?;
            Ok(0)
        }
    }
}

fn execute(
    config_path: &str,
    out: Option<&str>,
    seeds: Option<String>,
    allow_lists: bool,
) -> Result<i32, String> {
    let cfg = config::load(config_path)?;
    let seeds_override = seeds.map(|s| config::parse_seed_list(&s)).transpose()?;
    let runs = config::plan(&cfg, allow_lists, seeds_override)?;
    let outcome = runner::run_batch(&runs);
    for failure in &outcome.failures {
        eprintln!("{failure}");
    }
    // diverged runs still hand over what they measured; the batch is only
    // a loss when nothing survived
    csv_out::write_records(&outcome.records, out).map_err(|e| e.to_string())?;
    Ok(if outcome.all_failed() { 3 } else { 0 })
}
