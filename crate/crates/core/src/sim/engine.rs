//! Deterministic discrete-event simulation of one merging scenario.
//!
//! The engine advances a global clock on the `t_d` grid. Within one tick
//! the order is fixed: finalize exits detected during the previous
//! propagation, admit gated arrivals (main road first), run due control
//! updates in FIFO order, audit the safety invariants, record trace rows,
//! then propagate every CAV exactly one tick with its held control.
//! Everything is a pure function of the configuration, so identical
//! configurations produce identical outputs byte for byte.

use super::arrivals::{gen_arrivals, Arrival};
use super::config::{ConfigError, ScenarioConfig, Scheme};
use super::fuel::fuel_rate;
use super::metrics::{CavMetrics, RunMetrics, SafetyViolation, TraceRow};
use crate::cbf::{
    build_qp_with_margins, constraint_values, eval_barriers, margins_assuming, Margins,
    NeighborMotion, NeighborView,
};
use crate::coordinator::{Coordinator, CoordinatorError, NeighborSnapshot};
use crate::dynamics::{propagate, CavId, CavState, Lane};
use crate::grid::Tick;
use crate::profile::{solve_unconstrained, OptimalProfile, ProfileError};
use crate::qp::solve as solve_qp;
use crate::trigger::{
    next_update_time, next_violation_merge, next_violation_rear_end, next_violation_speed_max,
    next_violation_speed_min, TriggerReason,
};
use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("coordinator rejected an engine operation: {0}")]
    Coordinator(#[from] CoordinatorError),
    #[error("reference profile failed for an admitted CAV: {0}")]
    Profile(#[from] ProfileError),
    #[error("simulation stalled at t = {t} s with {active} CAVs still inside")]
    Stalled { t: f64, active: usize },
}

/// Cap on stored safety-violation entries (runs keep counting implicitly by
/// failing the zero-violation audit; storage just stops growing).
const MAX_VIOLATION_RECORDS: usize = 10_000;

/// In-zone bookkeeping for one CAV.
struct ActiveCav {
    lane: Lane,
    x: f64,
    v: f64,
    /// Control held since the last update.
    u: f64,
    profile: OptimalProfile,
    t0: Tick,
    v0: f64,
    comm: u64,
    effort: f64,
    fuel: f64,
    last_trigger: Option<Tick>,
    min_gap: Option<u64>,
    infeasible: u64,
}

/// Exit crossing detected while propagating, finalized on the next tick.
struct PendingExit {
    id: CavId,
    /// Exact crossing instant [s].
    t_f: f64,
    v_exit: f64,
    /// Effort and fuel accumulated over the final partial interval.
    effort_add: f64,
    fuel_add: f64,
}

/// A CAV that already crossed, kept for the merge-crossing audit of its
/// FIFO successor.
struct Ghost {
    lane: Lane,
    t_exit: f64,
    v_exit: f64,
}

/// Run a scenario and return its aggregated metrics.
pub fn run(cfg: &ScenarioConfig) -> Result<RunMetrics, SimError> {
    Ok(run_inner(cfg, false)?.0)
}

/// Run a scenario and also collect the per-tick trace.
pub fn run_traced(cfg: &ScenarioConfig) -> Result<(RunMetrics, Vec<TraceRow>), SimError> {
    let (metrics, trace) = run_inner(cfg, true)?;
    Ok((metrics, trace.expect("trace was requested")))
}

fn run_inner(
    cfg: &ScenarioConfig,
    want_trace: bool,
) -> Result<(RunMetrics, Option<Vec<TraceRow>>), SimError> {
    cfg.validate()?;
    let p = &cfg.barrier;
    let t_d = cfg.t_d;
    let beta = cfg.beta();
    let tighten = !matches!(cfg.scheme, Scheme::TimeTriggered);

    let raw = gen_arrivals(&cfg.traffic, t_d);
    let admitted_target = raw.len();
    let mut queues: BTreeMap<u8, VecDeque<Arrival>> = BTreeMap::new();
    for a in raw {
        queues
            .entry(matches!(a.lane, Lane::Ramp) as u8)
            .or_default()
            .push_back(a);
    }
    let last_raw_tick = queues
        .values()
        .filter_map(|q| q.back().map(|a| a.tick.0))
        .max()
        .unwrap_or(0);
    // Generous upper bound on the drain time: one hour of grid ticks past
    // the final raw arrival. Reaching it means the scenario deadlocked.
    let stall_cap = last_raw_tick + (3600.0 / t_d).ceil() as u64;

    let mut coord = Coordinator::new(t_d);
    let mut active: BTreeMap<CavId, ActiveCav> = BTreeMap::new();
    let mut pending_exits: Vec<PendingExit> = Vec::new();
    let mut ghosts: BTreeMap<CavId, Ghost> = BTreeMap::new();
    let mut done: Vec<CavMetrics> = Vec::new();
    let mut violations: Vec<SafetyViolation> = Vec::new();
    let mut exit_order_ok = true;
    let mut last_exit: Option<CavId> = None;
    let mut next_id: u64 = 0;
    let mut min_gap_all: Option<u64> = None;
    let mut infeasible_total: u64 = 0;
    let mut trace: Option<Vec<TraceRow>> = want_trace.then(Vec::new);

    let mut t = Tick(0);
    loop {
        let everyone_out = active.is_empty()
            && pending_exits.is_empty()
            && queues.values().all(VecDeque::is_empty);
        if everyone_out {
            break;
        }
        if t.0 > stall_cap {
            return Err(SimError::Stalled {
                t: t.seconds(t_d),
                active: active.len(),
            });
        }
        let t_sec = t.seconds(t_d);

        // --- 1. finalize exits detected during the previous propagation ---
        pending_exits.sort_by_key(|e| e.id);
        for e in pending_exits.drain(..) {
            let cav = active.remove(&e.id).expect("pending exit of inactive CAV");
            if last_exit.is_some_and(|prev| e.id < prev) {
                exit_order_ok = false;
            }
            last_exit = Some(last_exit.map_or(e.id, |prev| prev.max(e.id)));
            // Merge-point spacing against the FIFO predecessor from the
            // other lane: by crossing time it is downstream of the exit,
            // coasting at its exit speed.
            if let Some(j) = e.id.0.checked_sub(1).map(CavId) {
                if let Some(g) = ghosts.get(&j) {
                    if g.lane != cav.lane {
                        let clearance = g.v_exit * (e.t_f - g.t_exit);
                        let need = p.psi * e.v_exit + p.standstill_gap;
                        if clearance < need - 1e-6 {
                            push_violation(
                                &mut violations,
                                e.t_f,
                                e.id.0,
                                "merge_crossing",
                                clearance - need,
                            );
                        }
                    }
                }
            }
            // Freeze the exit motion for followers before retiring: from
            // the crossing instant onward the CAV coasts at its exit speed,
            // and that is exactly the model the audits use. Published by
            // the engine itself, so it does not count as a communication.
            coord.publish(
                e.id,
                t,
                p.zone_length + e.v_exit * (t_sec - e.t_f),
                e.v_exit,
                0.0,
                Tick::NEVER,
            )?;
            coord.retire(e.id, t, p.zone_length)?;
            ghosts.insert(
                e.id,
                Ghost {
                    lane: cav.lane,
                    t_exit: e.t_f,
                    v_exit: e.v_exit,
                },
            );
            let t0_sec = cav.t0.seconds(t_d);
            done.push(CavMetrics {
                id: e.id.0,
                lane: cav.lane,
                t0: t0_sec,
                t_exit: e.t_f,
                travel_time: e.t_f - t0_sec,
                control_effort: cav.effort + e.effort_add,
                fuel: cav.fuel + e.fuel_add,
                comm_count: cav.comm,
                v0: cav.v0,
                v_exit: e.v_exit,
            });
            min_gap_all = merge_min(min_gap_all, cav.min_gap);
            infeasible_total += cav.infeasible;
        }

        // --- 2. gated arrivals, main road first on ties ---
        for queue in queues.values_mut() {
            let Some(head) = queue.front() else { continue };
            if head.tick > t {
                continue;
            }
            let tail_x = active
                .iter()
                .rev()
                .find(|(_, c)| c.lane == head.lane)
                .map(|(_, c)| c.x);
            // Spacing constraint for the newcomer at x = 0: the lane tail
            // must already be a full headway downstream.
            let safe = tail_x.is_none_or(|x| x - p.psi * head.v0 - p.standstill_gap >= 0.0);
            if !safe {
                continue;
            }
            let arrival = queue.pop_front().expect("head exists");
            let id = CavId(next_id);
            next_id += 1;
            coord.register_arrival(id, arrival.lane, t, arrival.v0)?;
            let profile = solve_unconstrained(0.0, arrival.v0, t_sec, p.zone_length, beta)?;
            active.insert(
                id,
                ActiveCav {
                    lane: arrival.lane,
                    x: 0.0,
                    v: arrival.v0,
                    u: 0.0,
                    profile,
                    t0: t,
                    v0: arrival.v0,
                    comm: 0,
                    effort: 0.0,
                    fuel: 0.0,
                    last_trigger: None,
                    min_gap: None,
                    infeasible: 0,
                },
            );
        }

        // --- 3. due control updates, FIFO order ---
        let due: Vec<CavId> = active
            .keys()
            .filter(|id| coord.record(**id).map(|r| r.t_next) == Some(t))
            .copied()
            .collect();
        let mut fired: BTreeMap<CavId, &'static str> = BTreeMap::new();
        for id in due {
            let snap = coord.neighbors(id, t)?;
            let cav = active.get_mut(&id).expect("due CAV is active");
            let reason = step_cav(cfg, &mut coord, id, cav, &snap, t, tighten)?;
            fired.insert(id, reason);
        }

        // --- 4. safety audits on the grid ---
        for (id, cav) in &active {
            if cav.v > p.v_max + 1e-6 {
                push_violation(&mut violations, t_sec, id.0, "speed_max", cav.v - p.v_max);
            }
            if cav.v < p.v_min - 1e-6 {
                push_violation(&mut violations, t_sec, id.0, "speed_min", cav.v - p.v_min);
            }
        }
        for lane in [Lane::Main, Lane::Ramp] {
            // The lane's front CAV is still gapped against the newest
            // same-lane ghost, coasting downstream of the exit.
            let mut leader_x: Option<f64> = ghosts
                .iter()
                .rev()
                .find(|(_, g)| g.lane == lane)
                .map(|(_, g)| p.zone_length + g.v_exit * (t_sec - g.t_exit));
            for (id, cav) in active.iter().filter(|(_, c)| c.lane == lane) {
                // Walking up the ids: the previously visited same-lane CAV
                // arrived earlier and is therefore the leader ahead.
                if let Some(lx) = leader_x {
                    let slack = lx - cav.x - p.psi * cav.v - p.standstill_gap;
                    if slack < -1e-6 {
                        push_violation(&mut violations, t_sec, id.0, "rear_end_gap", slack);
                    }
                }
                leader_x = Some(cav.x);
            }
        }

        // --- 5. trace rows ---
        if let Some(rows) = &mut trace {
            for (id, cav) in &active {
                let snap = coord.neighbors(*id, t)?;
                let state = CavState {
                    id: *id,
                    lane: cav.lane,
                    x: cav.x,
                    v: cav.v,
                };
                let h = eval_barriers(&state, &neighbor_view(&snap), p);
                rows.push(TraceRow {
                    t: t_sec,
                    id: id.0,
                    lane: cav.lane,
                    x: cav.x,
                    v: cav.v,
                    u: cav.u,
                    h1: h.h1,
                    h2: h.h2,
                    h3: h.h3,
                    h4: h.h4,
                    trigger: fired.contains_key(id),
                    reason: fired.get(id).copied().unwrap_or(""),
                });
            }
        }

        // --- 6. propagate one tick, detecting exit crossings ---
        for (id, cav) in active.iter_mut() {
            let before = CavState {
                id: *id,
                lane: cav.lane,
                x: cav.x,
                v: cav.v,
            };
            let after = propagate(&before, cav.u, t_d);
            if after.x >= p.zone_length {
                let tau = crossing_time(cav.v, cav.u, p.zone_length - cav.x, t_d);
                let v_exit = cav.v + cav.u * tau;
                let f0 = fuel_rate(cav.v, cav.u, &cfg.fuel);
                let f1 = fuel_rate(v_exit, cav.u, &cfg.fuel);
                pending_exits.push(PendingExit {
                    id: *id,
                    t_f: t_sec + tau,
                    v_exit,
                    effort_add: 0.5 * cav.u * cav.u * tau,
                    fuel_add: 0.5 * (f0 + f1) * tau,
                });
            } else {
                let f0 = fuel_rate(cav.v, cav.u, &cfg.fuel);
                let f1 = fuel_rate(after.v, cav.u, &cfg.fuel);
                cav.effort += 0.5 * cav.u * cav.u * t_d;
                cav.fuel += 0.5 * (f0 + f1) * t_d;
            }
            cav.x = after.x;
            cav.v = after.v;
        }

        t = t + 1;
    }

    let completed = done.len();
    debug_assert_eq!(completed, admitted_target);
    let avg = |f: fn(&CavMetrics) -> f64| {
        if completed == 0 {
            0.0
        } else {
            done.iter().map(f).sum::<f64>() / completed as f64
        }
    };
    let metrics = RunMetrics {
        scheme: cfg.scheme,
        alpha: cfg.alpha,
        seed: cfg.traffic.rng_seed,
        t_d,
        t_max: cfg.t_max,
        admitted: next_id as usize,
        completed,
        total_comm: done.iter().map(|c| c.comm_count).sum(),
        avg_travel_time: avg(|c| c.travel_time),
        avg_control_effort: avg(|c| c.control_effort),
        avg_fuel: avg(|c| c.fuel),
        min_trigger_gap_ticks: min_gap_all,
        infeasible_qp_count: infeasible_total,
        exit_order_ok,
        safety_violations: violations,
        per_cav: done,
    };
    Ok((metrics, trace))
}

/// One control update: read neighbors, solve the (tightened) QP, schedule
/// the next update per the scheme, publish. Returns the trace reason.
fn step_cav(
    cfg: &ScenarioConfig,
    coord: &mut Coordinator,
    id: CavId,
    cav: &mut ActiveCav,
    snap: &NeighborSnapshot,
    t: Tick,
    tighten: bool,
) -> Result<&'static str, CoordinatorError> {
    let p = &cfg.barrier;
    let t_d = cfg.t_d;
    let t_sec = t.seconds(t_d);
    let nbv = neighbor_view(snap);
    // A neighbor whose record was published at this very tick chose a fresh
    // control this CAV cannot know yet; its drift bound must assume the
    // worst case, and the next update is forced one step ahead.
    let collided_ip = snap.ip.is_some_and(|n| n.t_last == t);
    let collided_j = snap.j.is_some_and(|n| n.t_last == t);

    if cfg.replan_at_triggers {
        // Refresh the reference from the current state; keep the existing
        // one if the current state admits no profile (e.g. standstill).
        if let Ok(profile) =
            solve_unconstrained(cav.x, cav.v, t_sec, p.zone_length, cfg.beta())
        {
            cav.profile = profile;
        }
    }
    let reference = cav.profile.ref_at(t_sec);
    let state = CavState {
        id,
        lane: cav.lane,
        x: cav.x,
        v: cav.v,
    };

    let margins = if tighten {
        margins_assuming(&state, &nbv, p, t_d, collided_ip, collided_j)
    } else {
        Margins::ZERO
    };
    let qp = build_qp_with_margins(&state, &nbv, &reference, p, cfg.slack_weight, &margins);
    let (u, infeasible) = match solve_qp(&qp) {
        Ok(sol) => (sol.u, false),
        // No admissible control satisfies the tightened rows: brake as hard
        // as allowed and retry one step later.
        Err(_) => (p.u_min, true),
    };
    if infeasible {
        cav.infeasible += 1;
    }

    let (t_next, reason) = match cfg.scheme {
        Scheme::TimeTriggered | Scheme::TimeTriggeredModified => (t + 1, "period"),
        Scheme::SelfTriggered => {
            if infeasible {
                (t + 1, "infeasible")
            } else if collided_ip || collided_j {
                (t + 1, TriggerReason::NeighborFollow.as_str())
            } else {
                let c = constraint_values(&state, &nbv, u, p);
                let candidates = [
                    next_violation_speed_max(t_sec, cav.v, u, p),
                    next_violation_speed_min(t_sec, cav.v, u, p),
                    nbv.ip.map_or(f64::INFINITY, |ip| {
                        next_violation_rear_end(
                            t_sec,
                            cav.v,
                            u,
                            ip.v,
                            ip.u,
                            c.c3.expect("row present with ip"),
                            p,
                        )
                    }),
                    nbv.j.map_or(f64::INFINITY, |j| {
                        next_violation_merge(
                            t_sec,
                            cav.x,
                            cav.v,
                            u,
                            j.v,
                            j.u,
                            c.c4.expect("row present with j"),
                            p,
                        )
                    }),
                ];
                let neighbor_nexts = [snap.ip.map(|n| n.t_next), snap.j.map(|n| n.t_next)];
                let outcome =
                    next_update_time(t, &candidates, cfg.t_max, &neighbor_nexts, t_d);
                (outcome.t_next, outcome.reason.as_str())
            }
        }
    };

    coord.publish(id, t, cav.x, cav.v, u, t_next)?;
    cav.u = u;
    cav.comm += 1;
    if let Some(prev) = cav.last_trigger {
        cav.min_gap = merge_min(cav.min_gap, Some(t - prev));
    }
    cav.last_trigger = Some(t);
    Ok(reason)
}

fn neighbor_view(snap: &NeighborSnapshot) -> NeighborView {
    let motion = |n: &crate::coordinator::NeighborState| NeighborMotion {
        x: n.x,
        v: n.v,
        u: n.u,
    };
    NeighborView {
        ip: snap.ip.as_ref().map(motion),
        j: snap.j.as_ref().map(motion),
    }
}

fn merge_min(a: Option<u64>, b: Option<u64>) -> Option<u64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn push_violation(
    violations: &mut Vec<SafetyViolation>,
    t: f64,
    id: u64,
    kind: &str,
    amount: f64,
) {
    if violations.len() < MAX_VIOLATION_RECORDS {
        violations.push(SafetyViolation {
            t,
            id,
            kind: kind.to_string(),
            amount,
        });
    }
}

/// Instant within `(0, t_d]` at which a CAV at distance `dist` from the exit
/// with speed `v` and held acceleration `u` crosses it. Uses the standard
/// numerically stable quadratic root; callers guarantee a crossing exists.
fn crossing_time(v: f64, u: f64, dist: f64, t_d: f64) -> f64 {
    let tau = if u.abs() < 1e-12 {
        dist / v
    } else {
        let disc = (v * v + 2.0 * u * dist).max(0.0);
        2.0 * dist / (v + disc.sqrt())
    };
    tau.clamp(f64::MIN_POSITIVE, t_d)
}
