//! Roadside coordinator: the single source of truth about every CAV inside
//! the control zone.
//!
//! The coordinator keeps one record per active CAV — the time of its last
//! control update, the state and control at that instant, and the time of
//! its next scheduled update. Because controls are held constant between
//! updates, a record is sufficient to reconstruct the CAV's exact motion on
//! `[t_last, t_next]`; see [`crate::dynamics::extrapolate`].
//!
//! Crossing order through the merge point is first-in-first-out: ids are
//! assigned in arrival order and never overtake. A CAV `i` therefore has at
//! most two relevant neighbors:
//!
//! * `ip` — the nearest CAV ahead of it on its own lane (rear-end safety);
//! * `j`  — the CAV that arrived immediately before it, when that CAV
//!   travels on the other lane (merging safety). If the immediate
//!   predecessor shares the lane it coincides with `ip` and only the
//!   rear-end constraint applies.
//!
//! A CAV that reaches the exit is retired from the active store but not
//! forgotten: its final record moves to a ghost store that keeps answering
//! neighbor queries, with the exited CAV coasting downstream at its exit
//! speed. Followers therefore keep their rear-end and merging constraints
//! all the way to their own exits instead of losing them the instant the
//! vehicle ahead crosses out.

use crate::dynamics::{extrapolate, CavId, Lane, StaleRecord};
use crate::grid::Tick;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

/// What the coordinator knows about one CAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoordinatorRecord {
    pub id: CavId,
    pub lane: Lane,
    /// Grid instant of the last control update.
    pub t_last: Tick,
    /// Grid instant of the next scheduled update.
    pub t_next: Tick,
    /// Position at `t_last` [m].
    pub x_last: f64,
    /// Speed at `t_last` [m/s].
    pub v_last: f64,
    /// Constant control applied on `[t_last, t_next]` [m/s^2].
    pub u_last: f64,
}

/// A neighbor's reconstructed motion at a query instant, plus the schedule
/// information a self-triggered CAV needs to pick its own next update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborState {
    pub id: CavId,
    /// Position extrapolated to the query instant [m].
    pub x: f64,
    /// Speed extrapolated to the query instant [m/s].
    pub v: f64,
    /// Control the neighbor is currently holding [m/s^2].
    pub u: f64,
    pub t_last: Tick,
    pub t_next: Tick,
}

/// Both neighbors of a CAV at a query instant (either may be absent).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NeighborSnapshot {
    /// Nearest CAV ahead on the same lane.
    pub ip: Option<NeighborState>,
    /// Immediate predecessor in crossing order, when on the other lane.
    pub j: Option<NeighborState>,
}

/// One entry of the optional audit log of record transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    /// Time of the transition [s].
    pub t: f64,
    pub id: CavId,
    pub kind: TransitionKind,
    pub lane: Lane,
    pub x: f64,
    pub v: f64,
    pub u: f64,
    /// Next scheduled update [s] (equals `t` for retirements).
    pub t_next: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    Arrive,
    Publish,
    Retire,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoordinatorError {
    #[error("CAV {0} is already registered")]
    DuplicateId(CavId),
    #[error("CAV {0} is not (or no longer) in the control zone")]
    UnknownId(CavId),
    #[error("CAV {id}: event at tick {t} precedes tick {bound} ({context})")]
    TimeRegression {
        id: CavId,
        t: Tick,
        bound: Tick,
        context: &'static str,
    },
    #[error("CAV {id} retired at x = {x} m, before the zone exit at {zone_length} m")]
    PrematureExit { id: CavId, x: f64, zone_length: f64 },
    #[error(transparent)]
    Stale(#[from] StaleRecord),
}

/// Record store for all CAVs currently inside the control zone.
#[derive(Debug, Clone)]
pub struct Coordinator {
    t_d: f64,
    records: BTreeMap<CavId, CoordinatorRecord>,
    /// Final records of retired CAVs, frozen as coasting motion (exit speed
    /// held, zero control) so they remain queryable as neighbors.
    ghosts: BTreeMap<CavId, CoordinatorRecord>,
    /// Lane of every CAV ever registered, kept after retirement so the
    /// predecessor lane test remains answerable.
    lanes: BTreeMap<CavId, Lane>,
    highest_id: Option<CavId>,
    last_arrival: Tick,
    trace: Option<Vec<Transition>>,
}

impl Coordinator {
    /// An empty coordinator over a grid of step `t_d` seconds.
    pub fn new(t_d: f64) -> Self {
        Coordinator {
            t_d,
            records: BTreeMap::new(),
            ghosts: BTreeMap::new(),
            lanes: BTreeMap::new(),
            highest_id: None,
            last_arrival: Tick(0),
            trace: None,
        }
    }

    /// Start recording every arrive/publish/retire transition.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    /// The transition log, if tracing was enabled.
    pub fn trace(&self) -> Option<&[Transition]> {
        self.trace.as_deref()
    }

    /// Admit a CAV at the zone entry (`x = 0`). Ids must be registered in
    /// arrival order — that order *is* the crossing order.
    pub fn register_arrival(
        &mut self,
        id: CavId,
        lane: Lane,
        t0: Tick,
        v0: f64,
    ) -> Result<(), CoordinatorError> {
        if self.lanes.contains_key(&id) {
            return Err(CoordinatorError::DuplicateId(id));
        }
        if let Some(high) = self.highest_id {
            if id <= high {
                return Err(CoordinatorError::DuplicateId(id));
            }
        }
        if t0 < self.last_arrival {
            return Err(CoordinatorError::TimeRegression {
                id,
                t: t0,
                bound: self.last_arrival,
                context: "arrival before an earlier CAV's arrival",
            });
        }
        let record = CoordinatorRecord {
            id,
            lane,
            t_last: t0,
            // The first control solve happens at the arrival instant itself.
            t_next: t0,
            x_last: 0.0,
            v_last: v0,
            u_last: 0.0,
        };
        self.records.insert(id, record);
        self.lanes.insert(id, lane);
        self.highest_id = Some(id);
        self.last_arrival = t0;
        self.log(TransitionKind::Arrive, &record, t0);
        Ok(())
    }

    /// Store the outcome of a control update: state and control at `t_k`,
    /// and the next instant the CAV will update again.
    pub fn publish(
        &mut self,
        id: CavId,
        t_k: Tick,
        x: f64,
        v: f64,
        u: f64,
        t_next: Tick,
    ) -> Result<(), CoordinatorError> {
        let record = self
            .records
            .get_mut(&id)
            .ok_or(CoordinatorError::UnknownId(id))?;
        if t_k < record.t_last {
            return Err(CoordinatorError::TimeRegression {
                id,
                t: t_k,
                bound: record.t_last,
                context: "publish before the record's last update",
            });
        }
        if t_next <= t_k {
            return Err(CoordinatorError::TimeRegression {
                id,
                t: t_next,
                bound: t_k + 1,
                context: "next update must be strictly after the publish instant",
            });
        }
        record.t_last = t_k;
        record.t_next = t_next;
        record.x_last = x;
        record.v_last = v;
        record.u_last = u;
        let record = *record;
        self.log(TransitionKind::Publish, &record, t_k);
        Ok(())
    }

    /// Neighbors of `id` with their motion reconstructed at tick `t`.
    /// Retired CAVs still count: their ghost records answer from downstream
    /// of the exit, so a constraint never vanishes mid-approach.
    pub fn neighbors(&self, id: CavId, t: Tick) -> Result<NeighborSnapshot, CoordinatorError> {
        if !self.records.contains_key(&id) {
            return Err(CoordinatorError::UnknownId(id));
        }
        let my_lane = self.lanes[&id];
        let lead_in = |store: &BTreeMap<CavId, CoordinatorRecord>| {
            store
                .range(..id)
                .rev()
                .find(|(_, r)| r.lane == my_lane)
                .map(|(_, r)| *r)
        };
        // The nearest leader is the one that arrived last, i.e. the highest
        // id among same-lane predecessors — active or already exited.
        let ip = match (lead_in(&self.records), lead_in(&self.ghosts)) {
            (Some(a), Some(g)) => Some(if a.id >= g.id { a } else { g }),
            (a, g) => a.or(g),
        };
        let j = id
            .0
            .checked_sub(1)
            .map(CavId)
            .and_then(|p| self.records.get(&p).or_else(|| self.ghosts.get(&p)))
            .filter(|r| r.lane != my_lane)
            .copied();
        let to_state = |r: CoordinatorRecord| -> Result<NeighborState, CoordinatorError> {
            let (x, v) = extrapolate(&r, t.seconds(self.t_d), self.t_d)?;
            Ok(NeighborState {
                id: r.id,
                x,
                v,
                u: r.u_last,
                t_last: r.t_last,
                t_next: r.t_next,
            })
        };
        Ok(NeighborSnapshot {
            ip: ip.map(to_state).transpose()?,
            j: j.map(to_state).transpose()?,
        })
    }

    /// Remove a CAV that reached the zone exit. Fails if its reconstructed
    /// position at `t_exit` is short of the exit (minus a 1 µm tolerance).
    /// The CAV lives on as a ghost: a frozen record coasting at its exit
    /// state, still served to followers by [`Coordinator::neighbors`].
    pub fn retire(
        &mut self,
        id: CavId,
        t_exit: Tick,
        zone_length: f64,
    ) -> Result<CoordinatorRecord, CoordinatorError> {
        let record = *self
            .records
            .get(&id)
            .ok_or(CoordinatorError::UnknownId(id))?;
        let (x, v) = extrapolate(&record, t_exit.seconds(self.t_d), self.t_d)?;
        if x < zone_length - 1e-6 {
            return Err(CoordinatorError::PrematureExit {
                id,
                x,
                zone_length,
            });
        }
        self.records.remove(&id);
        let mut exited = record;
        exited.x_last = x;
        exited.v_last = v;
        exited.t_last = t_exit;
        exited.t_next = t_exit;
        self.log(TransitionKind::Retire, &exited, t_exit);
        let mut ghost = exited;
        ghost.u_last = 0.0;
        ghost.t_next = Tick::NEVER;
        self.ghosts.insert(id, ghost);
        Ok(exited)
    }

    /// The stored record of an active CAV.
    pub fn record(&self, id: CavId) -> Option<&CoordinatorRecord> {
        self.records.get(&id)
    }

    /// Ids of all CAVs currently in the zone, in crossing (arrival) order.
    pub fn active_ids(&self) -> impl Iterator<Item = CavId> + '_ {
        self.records.keys().copied()
    }

    pub fn is_active(&self, id: CavId) -> bool {
        self.records.contains_key(&id)
    }

    fn log(&mut self, kind: TransitionKind, r: &CoordinatorRecord, t: Tick) {
        if let Some(trace) = &mut self.trace {
            trace.push(Transition {
                t: t.seconds(self.t_d),
                id: r.id,
                kind,
                lane: r.lane,
                x: r.x_last,
                v: r.v_last,
                u: r.u_last,
                t_next: r.t_next.seconds(self.t_d),
            });
        }
    }
}
