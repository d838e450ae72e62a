//! Whole-system acceptance suite.
//!
//! Each test checks one numbered acceptance criterion end to end and prints
//! a single `criterion N (...): PASS|FAIL — details` line (run with
//! `cargo test --test acceptance -- --nocapture` to also see the lines of
//! passing criteria). Simulation-backed criteria share one cached grid of
//! runs, so every criterion judges the same data and nothing expensive runs
//! twice. The randomized property criteria (7–10) draw fresh cases from
//! seeded generators, so the whole suite is deterministic.

use cav_merge::cbf::{build_qp, constraint_values, BarrierParams, Reference};
use cav_merge::oracles::{
    constraint_values_after, first_violation_scan, qp_grid_search, random_merge_instance,
    random_qp, shooting_exit_time,
};
use cav_merge::profile::{beta_from_alpha, solve_unconstrained};
use cav_merge::qp::solve as solve_qp;
use cav_merge::sim::{run, FuelCoefficients, RunMetrics, ScenarioConfig, Scheme, TrafficConfig};
use cav_merge::trigger::{
    next_violation_merge, next_violation_rear_end, next_violation_speed_max,
    next_violation_speed_min,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

// ---------------------------------------------------------------------------
// Shared scenario grid
// ---------------------------------------------------------------------------

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const ALPHAS: [f64; 2] = [0.1, 0.25];
const T_MAXES: [f64; 4] = [0.5, 1.0, 1.5, 2.0];
const T_D: f64 = 0.05;
/// Arrival window [s]; long enough that every seed completes well over the
/// 20 CAVs the communication criterion demands.
const HORIZON: f64 = 200.0;

fn barrier_params() -> BarrierParams {
    BarrierParams {
        zone_length: 400.0,
        psi: 1.8,
        standstill_gap: 0.0,
        v_min: 0.0,
        v_max: 30.0,
        u_min: -0.6 * 9.81,
        u_max: 0.5 * 9.81,
        clf_gain: 10.0,
    }
}

fn scenario(scheme: Scheme, alpha: f64, seed: u64, t_max: f64) -> ScenarioConfig {
    ScenarioConfig {
        scheme,
        t_d: T_D,
        t_s: T_D,
        t_max,
        alpha,
        slack_weight: 1.0,
        replan_at_triggers: false,
        barrier: barrier_params(),
        traffic: TrafficConfig {
            rng_seed: seed,
            main_rate: 0.1,
            ramp_rate: 0.1,
            v0_min: 15.0,
            v0_max: 20.0,
            horizon: HORIZON,
            max_cavs: None,
        },
        fuel: FuelCoefficients {
            cruise: [0.1569, 2.450e-2, -7.415e-4, 5.975e-5],
            accel: [0.07224, 9.681e-2, 1.075e-3],
        },
    }
}

type RunKey = (&'static str, u32, u64, u32);

fn run_key(scheme: Scheme, alpha: f64, seed: u64, t_max: f64) -> RunKey {
    (
        scheme.as_str(),
        (alpha * 1000.0).round() as u32,
        seed,
        (t_max * 100.0).round() as u32,
    )
}

/// Longest wall-clock time any single cached cell took to simulate [s].
fn max_cell_seconds() -> &'static Mutex<f64> {
    static MAX: OnceLock<Mutex<f64>> = OnceLock::new();
    MAX.get_or_init(|| Mutex::new(0.0))
}

/// Run (or fetch) one cell of the acceptance grid. Criteria overlap heavily
/// in the cells they need, and the safety criterion audits every cell, so
/// all runs go through this shared cache.
fn cached_run(scheme: Scheme, alpha: f64, seed: u64, t_max: f64) -> RunMetrics {
    static CACHE: OnceLock<Mutex<BTreeMap<RunKey, RunMetrics>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(BTreeMap::new()));
    let key = run_key(scheme, alpha, seed, t_max);
    let mut guard = cache.lock().unwrap();
    if let Some(m) = guard.get(&key) {
        return m.clone();
    }
    let started = Instant::now();
    let metrics = run(&scenario(scheme, alpha, seed, t_max))
        .expect("acceptance scenario must simulate without engine errors");
    let elapsed = started.elapsed().as_secs_f64();
    {
        let mut worst = max_cell_seconds().lock().unwrap();
        *worst = worst.max(elapsed);
    }
    guard.insert(key, metrics.clone());
    metrics
}

/// Every simulation run any criterion evaluates, in a fixed order:
/// the T_max = 0.5 communication grid for both the periodic baseline and the
/// self-triggered scheme, the self-triggered T_max sweep, and the tightened
/// periodic baseline at alpha = 0.25.
fn all_acceptance_runs() -> Vec<RunMetrics> {
    let mut out = Vec::new();
    for &alpha in &ALPHAS {
        for &seed in &SEEDS {
            out.push(cached_run(Scheme::TimeTriggered, alpha, seed, 0.5));
            for &t_max in &T_MAXES {
                out.push(cached_run(Scheme::SelfTriggered, alpha, seed, t_max));
            }
        }
    }
    for &seed in &SEEDS {
        out.push(cached_run(Scheme::TimeTriggeredModified, 0.25, seed, 0.5));
    }
    out
}

/// Completion-weighted average travel time and control effort over the five
/// seeds of one (scheme, alpha, t_max) cell group.
fn pooled_averages(scheme: Scheme, alpha: f64, t_max: f64) -> (f64, f64) {
    let (mut time, mut effort, mut n) = (0.0, 0.0, 0usize);
    for &seed in &SEEDS {
        let m = cached_run(scheme, alpha, seed, t_max);
        time += m.avg_travel_time * m.completed as f64;
        effort += m.avg_control_effort * m.completed as f64;
        n += m.completed;
    }
    let n = n.max(1) as f64;
    (time / n, effort / n)
}

/// Print the one-line verdict for a criterion and fail the test if it did
/// not hold. The line carries the measured numbers so a red criterion is
/// diagnosable from the test output alone.
fn verdict(criterion: &str, pass: bool, details: &str) {
    let line = format!(
        "criterion {criterion}: {} — {details}",
        if pass { "PASS" } else { "FAIL" }
    );
    println!("{line}");
    assert!(pass, "{line}");
}

// ---------------------------------------------------------------------------
// 1. Communication reduction
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_communication_reduction() {
    let mut pass = true;
    let mut details = String::new();
    for &alpha in &ALPHAS {
        let (mut periodic, mut self_trig) = (0u64, 0u64);
        for &seed in &SEEDS {
            let tt = cached_run(Scheme::TimeTriggered, alpha, seed, 0.5);
            let st = cached_run(Scheme::SelfTriggered, alpha, seed, 0.5);
            for m in [&tt, &st] {
                if m.completed < 20 {
                    pass = false;
                    let _ = write!(
                        details,
                        "[{} alpha={alpha} seed={seed}: only {} CAVs completed] ",
                        m.scheme, m.completed
                    );
                }
            }
            periodic += tt.total_comm;
            self_trig += st.total_comm;
        }
        let pct = 100.0 * self_trig as f64 / periodic.max(1) as f64;
        if !(pct <= 35.0) {
            pass = false;
        }
        let _ = write!(
            details,
            "alpha={alpha}: {self_trig} self-triggered vs {periodic} periodic = {pct:.1}% (limit 35%); "
        );
    }
    let slowest = *max_cell_seconds().lock().unwrap();
    if slowest > 120.0 {
        pass = false;
    }
    let _ = write!(details, "slowest cell {slowest:.3} s (limit 120 s)");
    verdict("1 (communication reduction)", pass, &details);
}

// ---------------------------------------------------------------------------
// 2. Monotonicity in T_max
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_monotonicity_in_t_max() {
    let mut pass = true;
    let mut breaches = String::new();
    let mut comm_totals: BTreeMap<&'static str, u64> = BTreeMap::new();
    for &alpha in &ALPHAS {
        for &seed in &SEEDS {
            let runs: Vec<RunMetrics> = T_MAXES
                .iter()
                .map(|&t_max| cached_run(Scheme::SelfTriggered, alpha, seed, t_max))
                .collect();
            for pair in runs.windows(2) {
                let (a, b) = (&pair[0], &pair[1]);
                if b.total_comm > a.total_comm {
                    pass = false;
                    let _ = write!(
                        breaches,
                        "[comm {} -> {} raising t_max {} -> {} at alpha={alpha} seed={seed}] ",
                        a.total_comm, b.total_comm, a.t_max, b.t_max
                    );
                }
                // Larger update intervals trade tracking quality for fewer
                // events, so the average control effort may only drop within
                // a 5% noise allowance.
                if b.avg_control_effort < 0.95 * a.avg_control_effort {
                    pass = false;
                    let _ = write!(
                        breaches,
                        "[effort {:.4} -> {:.4} raising t_max {} -> {} at alpha={alpha} seed={seed}] ",
                        a.avg_control_effort, b.avg_control_effort, a.t_max, b.t_max
                    );
                }
            }
            for m in &runs {
                let label = match m.t_max {
                    x if x == 0.5 => "0.5",
                    x if x == 1.0 => "1.0",
                    x if x == 1.5 => "1.5",
                    _ => "2.0",
                };
                *comm_totals.entry(label).or_insert(0) += m.total_comm;
            }
        }
    }
    let totals: Vec<String> = comm_totals
        .iter()
        .map(|(t_max, comm)| format!("t_max={t_max}: {comm}"))
        .collect();
    let details = format!(
        "communication totals over all cells [{}]; per-cell breaches: {}",
        totals.join(", "),
        if breaches.is_empty() { "none" } else { &breaches }
    );
    verdict("2 (fewer events as t_max grows)", pass, &details);
}

// ---------------------------------------------------------------------------
// 3. Tightened periodic baseline stays close to the plain one
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_tightened_periodic_near_equivalence() {
    let (time_plain, effort_plain) = pooled_averages(Scheme::TimeTriggered, 0.25, 0.5);
    let (time_tight, effort_tight) = pooled_averages(Scheme::TimeTriggeredModified, 0.25, 0.5);
    let time_dev = (time_tight - time_plain).abs() / time_plain;
    let effort_dev = (effort_tight - effort_plain).abs() / effort_plain;
    verdict(
        "3 (margin-tightening barely changes the periodic baseline)",
        time_dev <= 0.02 && effort_dev <= 0.10,
        &format!(
            "avg travel time {time_plain:.3} vs {time_tight:.3} s ({:.2}% apart, limit 2%), \
             avg control effort {effort_plain:.4} vs {effort_tight:.4} ({:.2}% apart, limit 10%)",
            100.0 * time_dev,
            100.0 * effort_dev
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. Travel-time parity of the self-triggered scheme
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_travel_time_parity() {
    let mut pass = true;
    let mut details = String::new();
    for &alpha in &ALPHAS {
        let (time_tt, _) = pooled_averages(Scheme::TimeTriggered, alpha, 0.5);
        let (time_st, _) = pooled_averages(Scheme::SelfTriggered, alpha, 0.5);
        let dev = (time_st - time_tt).abs() / time_tt;
        if dev > 0.05 {
            pass = false;
        }
        let _ = write!(
            details,
            "alpha={alpha}: {time_st:.3} s self-triggered vs {time_tt:.3} s periodic \
             ({:.2}% apart, limit 5%); ",
            100.0 * dev
        );
    }
    verdict("4 (travel-time parity)", pass, details.trim_end_matches("; "));
}

// ---------------------------------------------------------------------------
// 5. Minimum inter-event interval
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_minimum_inter_event_interval() {
    let mut pass = true;
    let mut global_min: Option<u64> = None;
    let mut details = String::new();
    for &alpha in &ALPHAS {
        for &seed in &SEEDS {
            for scheme in [Scheme::TimeTriggered, Scheme::SelfTriggered] {
                let m = cached_run(scheme, alpha, seed, 0.5);
                match m.min_trigger_gap_ticks {
                    Some(gap) => {
                        global_min = Some(global_min.map_or(gap, |g| g.min(gap)));
                        if gap < 1 {
                            pass = false;
                            let _ = write!(
                                details,
                                "[{scheme} alpha={alpha} seed={seed}: gap {gap} ticks] "
                            );
                        }
                    }
                    None => {
                        pass = false;
                        let _ = write!(
                            details,
                            "[{scheme} alpha={alpha} seed={seed}: no CAV updated twice] "
                        );
                    }
                }
            }
        }
    }
    let _ = write!(
        details,
        "smallest update gap over all 20 communication-grid runs: {} grid ticks \
         (the guaranteed minimum is exactly 1 tick = t_d)",
        global_min.map_or_else(|| "n/a".to_string(), |g| g.to_string())
    );
    verdict("5 (minimum inter-event interval)", pass, &details);
}

// ---------------------------------------------------------------------------
// 6. Safety invariants across every acceptance run
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_safety_invariants() {
    let runs = all_acceptance_runs();
    // Count recorded breaches of the two audited gap invariants: the
    // rear-end gap on every tick and the merging gap at each exit crossing
    // (both audited with a 1e-6 m tolerance inside the engine).
    let mut by_scheme_kind: BTreeMap<(String, String), (usize, f64)> = BTreeMap::new();
    let mut gated = 0usize;
    for m in &runs {
        for v in &m.safety_violations {
            let entry = by_scheme_kind
                .entry((m.scheme.to_string(), v.kind.clone()))
                .or_insert((0, 0.0));
            entry.0 += 1;
            if v.amount.abs() > entry.1.abs() {
                entry.1 = v.amount;
            }
            if v.kind == "rear_end_gap" || v.kind == "merge_crossing" {
                gated += 1;
            }
        }
    }
    let breakdown = if by_scheme_kind.is_empty() {
        "none".to_string()
    } else {
        by_scheme_kind
            .iter()
            .map(|((scheme, kind), (count, worst))| {
                format!("{scheme}/{kind}: {count} (worst {worst:.3e})")
            })
            .collect::<Vec<_>>()
            .join(", ")
    };
    verdict(
        "6 (zero gap violations across all acceptance runs)",
        gated == 0,
        &format!(
            "{gated} gap violations over {} runs; per-scheme breakdown: {breakdown}",
            runs.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Interval guarantee of the tightened QP
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_interval_guarantee() {
    let p = barrier_params();
    let mut rng = ChaCha8Rng::seed_from_u64(701);
    let mut worst = f64::INFINITY;
    let mut failures = 0u32;
    let mut checked = 0u32;
    while checked < 10_000 {
        // Random mid-zone state with both neighbors present; states whose
        // tightened problem is infeasible are redrawn (the guarantee is a
        // property of solutions, which such states do not have).
        let (ego, nb, _held) = random_merge_instance(&mut rng, &p);
        let reference = Reference {
            u_star: rng.gen_range(p.u_min..p.u_max),
            v_star: rng.gen_range(p.v_min..p.v_max),
        };
        let qp = build_qp(&ego, &nb, &reference, &p, 1.0, true, T_D);
        let Ok(sol) = solve_qp(&qp) else { continue };
        checked += 1;
        // Hold every control for one full minimum interval and evaluate the
        // plain (untightened) constraints on a 1e-3 s grid.
        let mut min_value = f64::INFINITY;
        for k in 0..=50 {
            let tau = k as f64 * 1e-3;
            min_value = min_value.min(constraint_values_after(&ego, &nb, sol.u, &p, tau).min());
        }
        worst = worst.min(min_value);
        if min_value < -1e-6 {
            failures += 1;
        }
    }
    verdict(
        "7 (tightened solutions hold the plain constraints for a full interval)",
        failures == 0,
        &format!(
            "{failures}/10000 tightened solves dipped below -1e-6 on the held interval; \
             worst constraint value seen {worst:.3e}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Analytic violation instants match scan-and-bisect
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_trigger_time_oracle_equivalence() {
    let p = barrier_params();
    let horizon = 20.0;
    let step = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(801);
    let mut worst = 0.0f64;
    let mut mismatches = 0u32;
    let mut cases = 0u32;
    while cases < 10_000 {
        let (ego, nb, u) = random_merge_instance(&mut rng, &p);
        let now = constraint_values(&ego, &nb, u, &p);
        // The predictors answer "when does a currently-satisfied constraint
        // first become violated", the question the scheduler asks right
        // after a solve; draws that start out violated are out of contract.
        if now.min() < 1e-9 {
            continue;
        }
        cases += 1;
        let ip = nb.ip.expect("instance has a lane predecessor");
        let j = nb.j.expect("instance has a merge predecessor");
        let analytic = [
            next_violation_speed_max(0.0, ego.v, u, &p),
            next_violation_speed_min(0.0, ego.v, u, &p),
            next_violation_rear_end(0.0, ego.v, u, ip.v, ip.u, now.c3.unwrap(), &p),
            next_violation_merge(0.0, ego.x, ego.v, u, j.v, j.u, now.c4.unwrap(), &p),
        ];
        let scan = |pick: fn(&cav_merge::cbf::ConstraintValues) -> f64| {
            first_violation_scan(
                |tau| pick(&constraint_values_after(&ego, &nb, u, &p, tau)),
                horizon,
                step,
            )
        };
        let scanned = [
            scan(|c| c.c1),
            scan(|c| c.c2),
            scan(|c| c.c3.unwrap()),
            scan(|c| c.c4.unwrap()),
        ];
        for (a, s) in analytic.into_iter().zip(scanned) {
            match s {
                Some(t) => worst = worst.max((a - t).abs()),
                // The scan stops at its horizon; a prediction beyond it (or
                // "never") is consistent with an empty scan.
                None if a > horizon => {}
                None => mismatches += 1,
            }
        }
    }
    verdict(
        "8 (analytic violation instants match scan-and-bisect)",
        worst <= 1e-6 && mismatches == 0,
        &format!(
            "10000 instances per constraint: max |deviation| {worst:.3e} s (limit 1e-6), \
             {mismatches} existence mismatches"
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. Entry profile agrees with the shooting search
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_optimal_profile_vs_shooting() {
    let p = barrier_params();
    let mut rng = ChaCha8Rng::seed_from_u64(901);
    let mut exit_dev = 0.0f64;
    let mut residual = 0.0f64;
    let mut failures = 0u32;
    for _ in 0..50 {
        let x0 = rng.gen_range(0.0..0.3 * p.zone_length);
        let v0 = rng.gen_range(8.0..25.0);
        let beta = beta_from_alpha(rng.gen_range(0.05..0.6), p.u_min, p.u_max);
        match solve_unconstrained(x0, v0, 0.0, p.zone_length, beta) {
            Ok(prof) => {
                let (tf_ref, _) = shooting_exit_time(x0, v0, p.zone_length, beta);
                exit_dev = exit_dev.max((prof.tf - tf_ref).abs());
                let span = prof.tf - prof.t0;
                residual = residual.max((prof.position_at(prof.tf) - p.zone_length).abs());
                residual = residual.max((prof.a * span + prof.b).abs());
            }
            Err(_) => failures += 1,
        }
    }
    verdict(
        "9 (entry profile agrees with the shooting search)",
        exit_dev <= 1e-4 && residual <= 1e-9 && failures == 0,
        &format!(
            "50 random entries: max |exit-time deviation| {exit_dev:.3e} s (limit 1e-4), \
             max boundary residual {residual:.3e} (limit 1e-9), {failures} solve failures"
        ),
    );
}

// ---------------------------------------------------------------------------
// 10. QP solver vs dense grid, and determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_qp_grid_agreement_and_determinism() {
    const CASES: usize = 10_000;
    let mut gap = 0.0f64;
    let mut mismatches = 0u32;
    let mut first_pass: Vec<Option<(f64, f64, f64)>> = Vec::with_capacity(CASES);
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    for _ in 0..CASES {
        let problem = random_qp(&mut rng);
        let sol = solve_qp(&problem);
        first_pass.push(sol.as_ref().ok().map(|s| (s.u, s.delta, s.objective)));
        match (sol, qp_grid_search(&problem, 1e-4)) {
            // The grid evaluates a feasible subset, so its best objective
            // upper-bounds the optimum; only a positive gap means the solver
            // returned a suboptimal point.
            (Ok(sol), Some((_, obj))) => gap = gap.max(sol.objective - obj),
            (Err(_), None) => {}
            _ => mismatches += 1,
        }
    }
    // Determinism: regenerate the identical problems and demand bitwise
    // identical solutions.
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut nondeterministic = 0u32;
    for expected in &first_pass {
        let problem = random_qp(&mut rng);
        let got = solve_qp(&problem).ok().map(|s| (s.u, s.delta, s.objective));
        if got != *expected {
            nondeterministic += 1;
        }
    }
    verdict(
        "10 (exact QP solves match the dense grid, deterministically)",
        gap.max(0.0) <= 1e-6 && mismatches == 0 && nondeterministic == 0,
        &format!(
            "10000 random problems: max objective gap {:.3e} (limit 1e-6), \
             {mismatches} feasibility mismatches, {nondeterministic} repeat-solve differences",
            gap.max(0.0)
        ),
    );
}
