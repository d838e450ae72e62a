//! Scheme-comparison grids and their report files.
//!
//! A comparison runs every (alpha, scheme, seed) combination of the
//! requested grid. Traffic depends only on the seed, so cells with the same
//! seed see identical arrival streams and the schemes are compared on equal
//! footing. Cells are independent and are dispatched to a bounded worker
//! pool; aggregation afterwards is deterministic regardless of scheduling.

use cav_merge::sim::{run, RunMetrics, ScenarioConfig, Scheme, SimError};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

/// One (alpha, scheme) cell aggregated over the shared seed set.
#[derive(Debug, Serialize)]
pub(crate) struct CellReport {
    pub alpha: f64,
    pub scheme: Scheme,
    /// CAVs that completed the zone, summed over seeds.
    pub completed: usize,
    /// Control solves / broadcasts, summed over seeds.
    pub total_comm: u64,
    /// `100 * total_comm / total_comm(time_triggered at the same alpha)`;
    /// absent when the grid does not include the baseline scheme.
    pub comm_pct_of_time_triggered: Option<f64>,
    /// Averages over all completed CAVs of all seeds.
    pub avg_travel_time: f64,
    pub avg_control_effort: f64,
    pub avg_fuel: f64,
    /// Smallest inter-update gap of any CAV, in grid ticks.
    pub min_trigger_gap_ticks: Option<u64>,
    pub infeasible_qp_count: u64,
    pub safety_violation_count: usize,
    /// Per-seed run failures ("seed 3: ..."); failed seeds are excluded
    /// from the aggregates above.
    pub errors: Vec<String>,
}

#[derive(Debug, Serialize)]
pub(crate) struct ComparisonReport {
    pub seeds: Vec<u64>,
    pub cells: Vec<CellReport>,
}

pub(crate) fn cmd_compare(
    config: &Path,
    alphas: &[f64],
    schemes: &[Scheme],
    seeds: &[u64],
    out: Option<PathBuf>,
) -> u8 {
    let base = match crate::load_config(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return crate::EXIT_CONFIG;
        }
    };
    // Reject bad grid values up front, before any cell runs.
    for &alpha in alphas {
        let mut probe = base.clone();
        probe.alpha = alpha;
        if let Err(e) = probe.validate() {
            eprintln!("{e}");
            return crate::EXIT_CONFIG;
        }
    }
    let Some(out) = crate::resolve_out(out) else {
        eprintln!("no output directory: pass --out or set {}", crate::OUT_DIR_ENV);
        return crate::EXIT_CONFIG;
    };

    // Job order mirrors the aggregation loops below: alpha, then scheme,
    // then seed.
    let mut jobs: Vec<ScenarioConfig> = Vec::with_capacity(alphas.len() * schemes.len() * seeds.len());
    for &alpha in alphas {
        for &scheme in schemes {
            for &seed in seeds {
                let mut cfg = base.clone();
                cfg.alpha = alpha;
                cfg.scheme = scheme;
                cfg.traffic.rng_seed = seed;
                jobs.push(cfg);
            }
        }
    }
    let results = run_pool(&jobs);

    let mut cells: Vec<CellReport> = Vec::with_capacity(alphas.len() * schemes.len());
    let mut idx = 0;
    for &alpha in alphas {
        for &scheme in schemes {
            let mut cell = CellReport {
                alpha,
                scheme,
                completed: 0,
                total_comm: 0,
                comm_pct_of_time_triggered: None,
                avg_travel_time: 0.0,
                avg_control_effort: 0.0,
                avg_fuel: 0.0,
                min_trigger_gap_ticks: None,
                infeasible_qp_count: 0,
                safety_violation_count: 0,
                errors: Vec::new(),
            };
            for &seed in seeds {
                match &results[idx] {
                    Ok(m) => fold_run(&mut cell, m),
                    Err(e) => cell.errors.push(format!("seed {seed}: {e}")),
                }
                idx += 1;
            }
            // The folds accumulated completion-weighted sums; divide out.
            if cell.completed > 0 {
                let n = cell.completed as f64;
                cell.avg_travel_time /= n;
                cell.avg_control_effort /= n;
                cell.avg_fuel /= n;
            }
            cells.push(cell);
        }
    }
    fill_percentages(&mut cells, alphas.len(), schemes);

    let report = ComparisonReport {
        seeds: seeds.to_vec(),
        cells,
    };
    if let Err(e) = write_reports(&out, &report) {
        eprintln!("cannot write reports to {}: {e}", out.display());
        return crate::EXIT_INTERNAL;
    }
    print_table(&report);

    let violations: usize = report.cells.iter().map(|c| c.safety_violation_count).sum();
    let errors: usize = report.cells.iter().map(|c| c.errors.len()).sum();
    for cell in report.cells.iter().filter(|c| c.safety_violation_count > 0) {
        eprintln!(
            "cell alpha={} scheme={}: {} safety violations",
            cell.alpha, cell.scheme, cell.safety_violation_count
        );
    }
    for cell in &report.cells {
        for e in &cell.errors {
            eprintln!("cell alpha={} scheme={}: {e}", cell.alpha, cell.scheme);
        }
    }
    if violations > 0 {
        crate::EXIT_SAFETY
    } else if errors > 0 {
        crate::EXIT_INTERNAL
    } else {
        0
    }
}

fn fold_run(cell: &mut CellReport, m: &RunMetrics) {
    let n = m.completed as f64;
    cell.completed += m.completed;
    cell.total_comm += m.total_comm;
    cell.avg_travel_time += m.avg_travel_time * n;
    cell.avg_control_effort += m.avg_control_effort * n;
    cell.avg_fuel += m.avg_fuel * n;
    cell.min_trigger_gap_ticks = match (cell.min_trigger_gap_ticks, m.min_trigger_gap_ticks) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    cell.infeasible_qp_count += m.infeasible_qp_count;
    cell.safety_violation_count += m.safety_violations.len();
}

fn fill_percentages(cells: &mut [CellReport], n_alphas: usize, schemes: &[Scheme]) {
    let Some(tt_col) = schemes.iter().position(|s| matches!(s, Scheme::TimeTriggered)) else {
        return;
    };
    for row in 0..n_alphas {
        let tt_comm = cells[row * schemes.len() + tt_col].total_comm;
        if tt_comm == 0 {
            continue;
        }
        for col in 0..schemes.len() {
            let cell = &mut cells[row * schemes.len() + col];
            cell.comm_pct_of_time_triggered =
                Some(100.0 * cell.total_comm as f64 / tt_comm as f64);
        }
    }
}

/// Run every job on a bounded pool of OS threads. Results come back in job
/// order no matter which worker ran what.
fn run_pool(jobs: &[ScenarioConfig]) -> Vec<Result<RunMetrics, SimError>> {
    let slots: Vec<OnceLock<Result<RunMetrics, SimError>>> =
        jobs.iter().map(|_| OnceLock::new()).collect();
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len().max(1));
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let result = run(&jobs[i]);
                slots[i].set(result).expect("each job index claimed once");
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("worker filled every slot"))
        .collect()
}

fn write_reports(out: &Path, report: &ComparisonReport) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    let json = serde_json::to_vec_pretty(report).expect("report serialize");
    crate::write_atomic(&out.join("report.json"), &json)?;

    let mut csv = String::from(
        "alpha,scheme,completed,total_comm,comm_pct_of_time_triggered,avg_travel_time,\
         avg_control_effort,avg_fuel,min_trigger_gap_ticks,infeasible_qp_count,\
         safety_violation_count,error_count\n",
    );
    for c in &report.cells {
        let pct = c
            .comm_pct_of_time_triggered
            .map(|p| p.to_string())
            .unwrap_or_default();
        let gap = c
            .min_trigger_gap_ticks
            .map(|g| g.to_string())
            .unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            c.alpha,
            c.scheme,
            c.completed,
            c.total_comm,
            pct,
            c.avg_travel_time,
            c.avg_control_effort,
            c.avg_fuel,
            gap,
            c.infeasible_qp_count,
            c.safety_violation_count,
            c.errors.len()
        ));
    }
    crate::write_atomic(&out.join("report.csv"), csv.as_bytes())?;

    let mut long = String::from("alpha,scheme,metric,value\n");
    for c in &report.cells {
        let mut push = |metric: &str, value: f64| {
            long.push_str(&format!("{},{},{},{}\n", c.alpha, c.scheme, metric, value));
        };
        push("avg_travel_time", c.avg_travel_time);
        push("avg_control_effort", c.avg_control_effort);
        push("avg_fuel", c.avg_fuel);
        push("total_comm", c.total_comm as f64);
        if let Some(pct) = c.comm_pct_of_time_triggered {
            push("comm_pct_of_time_triggered", pct);
        }
    }
    crate::write_atomic(&out.join("long.csv"), long.as_bytes())
}

fn print_table(report: &ComparisonReport) {
    println!(
        "{:<7} {:<24} {:>9} {:>11} {:>8} {:>10} {:>10} {:>10}",
        "alpha", "scheme", "completed", "total_comm", "comm%", "travel[s]", "effort", "fuel"
    );
    for c in &report.cells {
        let pct = c
            .comm_pct_of_time_triggered
            .map(|p| format!("{p:.1}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<7} {:<24} {:>9} {:>11} {:>8} {:>10.3} {:>10.4} {:>10.4}",
            c.alpha,
            c.scheme.as_str(),
            c.completed,
            c.total_comm,
            pct,
            c.avg_travel_time,
            c.avg_control_effort,
            c.avg_fuel
        );
    }
}
