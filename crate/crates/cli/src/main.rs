//! Command-line front end for the merging-coordination simulator.
//!
//! Three subcommands:
//!
//! * `run` — simulate one scenario file and write `metrics.json` plus a
//!   per-tick `trace.csv`;
//! * `compare` — run a grid of (alpha, scheme, seed) cells that share the
//!   same traffic per seed, and write comparison tables;
//! * `oracle` — audit one closed-form implementation against its
//!   brute-force reference and report the worst deviation.
//!
//! Exit codes: 0 success, 1 internal failure (I/O, solver breakdown),
//! 2 configuration problem, 3 completed run with safety violations.

mod oracle;
mod report;

use cav_merge::sim::{run_traced, RunMetrics, ScenarioConfig, TraceRow};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

pub(crate) const EXIT_INTERNAL: u8 = 1;
pub(crate) const EXIT_CONFIG: u8 = 2;
/// Reserved for safety violations so CI can tell controller bugs from
/// config mistakes.
pub(crate) const EXIT_SAFETY: u8 = 3;

/// Environment variable that, when set, wins over the `--out` flag.
pub(crate) const OUT_DIR_ENV: &str = "CAV_MERGE_OUT";

#[derive(Parser)]
#[command(
    name = "cav-merge",
    version,
    about = "Simulate and compare communication schemes for coordinated highway merging"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; write metrics.json and trace.csv into the output
    /// directory.
    Run {
        /// Scenario description file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing. The CAV_MERGE_OUT
        /// environment variable, when set, overrides this flag.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the arrival-stream seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an (alpha, scheme, seed) grid sharing per-seed traffic; write
    /// report.json, report.csv, and plot-ready long.csv.
    Compare {
        /// Scenario description file (TOML); its alpha/scheme/seed are
        /// replaced by the grid values below.
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated time/energy trade-off factors in [0, 1).
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        /// Comma-separated schemes: time_triggered, time_triggered_modified,
        /// self_triggered.
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_scheme)]
        schemes: Vec<cav_merge::Scheme>,
        /// Comma-separated arrival-stream seeds.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Output directory, created if missing. The CAV_MERGE_OUT
        /// environment variable, when set, overrides this flag.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audit a closed-form implementation against its brute-force
    /// reference; print the worst deviation and pass/fail per tolerance.
    Oracle {
        #[arg(long, value_enum)]
        which: oracle::OracleKind,
        /// Number of random cases (0 passes vacuously).
        #[arg(long, default_value_t = 10_000)]
        cases: u64,
        /// Seed of the case generator.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, out, seed } => cmd_run(&config, out, seed),
        Command::Compare {
            config,
            alphas,
            schemes,
            seeds,
            out,
        } => report::cmd_compare(&config, &alphas, &schemes, &seeds, out),
        Command::Oracle { which, cases, seed } => oracle::cmd_oracle(which, cases, seed),
    };
    ExitCode::from(code)
}

fn cmd_run(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> u8 {
    let mut cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(s) = seed {
        cfg.traffic.rng_seed = s;
    }
    let Some(out) = resolve_out(out) else {
        eprintln!("no output directory: pass --out or set {OUT_DIR_ENV}");
        return EXIT_CONFIG;
    };
    let (metrics, trace) = match run_traced(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("simulation failed: {e}");
            return EXIT_INTERNAL;
        }
    };
    if let Err(e) = write_run_outputs(&out, &metrics, &trace) {
        eprintln!("cannot write outputs to {}: {e}", out.display());
        return EXIT_INTERNAL;
    }
    println!(
        "{} alpha={} seed={}: {} CAVs completed, total comm {}, avg travel {:.3} s, \
         avg effort {:.4}, avg fuel {:.4}",
        metrics.scheme,
        metrics.alpha,
        metrics.seed,
        metrics.completed,
        metrics.total_comm,
        metrics.avg_travel_time,
        metrics.avg_control_effort,
        metrics.avg_fuel
    );
    report_safety(&metrics)
}

/// Exit code for a finished run: 0 when clean, [`EXIT_SAFETY`] with the
/// violations detailed on stderr otherwise.
pub(crate) fn report_safety(metrics: &RunMetrics) -> u8 {
    if metrics.safety_violations.is_empty() {
        return 0;
    }
    for v in metrics.safety_violations.iter().take(10) {
        eprintln!(
            "safety violation: {} by {:.6} at t = {:.3} s (CAV {})",
            v.kind,
            v.amount.abs(),
            v.t,
            v.id
        );
    }
    let n = metrics.safety_violations.len();
    if n > 10 {
        eprintln!("... and {} more (full list in metrics.json)", n - 10);
    }
    EXIT_SAFETY
}

pub(crate) fn load_config(path: &Path) -> Result<ScenarioConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    ScenarioConfig::from_toml_str(&text).map_err(|e| e.to_string())
}

pub(crate) fn resolve_out(flag: Option<PathBuf>) -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).or(flag)
}

fn write_run_outputs(out: &Path, metrics: &RunMetrics, trace: &[TraceRow]) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    let json = serde_json::to_vec_pretty(metrics).expect("metrics serialize");
    write_atomic(&out.join("metrics.json"), &json)?;
    let mut csv = String::with_capacity(80 * (trace.len() + 1));
    csv.push_str(TraceRow::CSV_HEADER);
    csv.push('\n');
    for row in trace {
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }
    write_atomic(&out.join("trace.csv"), csv.as_bytes())
}

/// Write via a sibling temp file and rename, so readers never observe a
/// half-written file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn parse_scheme(s: &str) -> Result<cav_merge::Scheme, String> {
    s.parse().map_err(|e: cav_merge::sim::ConfigError| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use cav_merge::sim::{SafetyViolation, Scheme};

    fn empty_metrics() -> RunMetrics {
        RunMetrics {
            scheme: Scheme::SelfTriggered,
            alpha: 0.25,
            seed: 1,
            t_d: 0.05,
            t_max: 0.5,
            admitted: 0,
            completed: 0,
            total_comm: 0,
            avg_travel_time: 0.0,
            avg_control_effort: 0.0,
            avg_fuel: 0.0,
            min_trigger_gap_ticks: None,
            infeasible_qp_count: 0,
            exit_order_ok: true,
            safety_violations: vec![],
            per_cav: vec![],
        }
    }

    #[test]
    fn clean_runs_exit_zero_and_violations_exit_three() {
        let clean = empty_metrics();
        assert_eq!(report_safety(&clean), 0);
        let mut bad = empty_metrics();
        bad.safety_violations.push(SafetyViolation {
            t: 1.0,
            id: 0,
            kind: "rear_end_gap".into(),
            amount: -0.5,
        });
        assert_eq!(report_safety(&bad), EXIT_SAFETY);
    }

    #[test]
    fn scheme_parser_reports_the_valid_names() {
        assert!(parse_scheme("self_triggered").is_ok());
        let err = parse_scheme("bogus").unwrap_err();
        assert!(err.contains("time_triggered"), "unhelpful error: {err}");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
