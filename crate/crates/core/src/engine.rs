//! Single-threaded discrete-event loop.
//!
//! Events run in `(time, seq)` order where `seq` is handed out when the event
//! is scheduled. Each leg of a vehicle plan is routed with the traffic in force
//! when the assignment is made and is not re-timed afterwards.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::{self, Write as _};
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{sort_fcfs, RequestId, TripRequest};
use crate::dispatch::{dispatch, oss_reschedule, Call, DispatchConfig, DispatchContext, Outcome, PendingCall, RejectReason};
use crate::fleet::{validate_transitions, Fleet, FleetError, Strategy, Transition, VehicleId, VehicleStatus};
use crate::road::{route_astar, NodeId, RoadNetwork, TrafficState};
use crate::zones::{AdjacencySchedule, ZoneId, ZoneSet};

pub const DEFAULT_SNAP_RADIUS_M: f64 = 500.0;
pub const LOG_MAGIC: &str = "# amod-event-log v1";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("no zones defined")]
    NoZones,
    #[error("network has no nodes")]
    EmptyNetwork,
    #[error("adjacency covers {schedule} zones but {zones} are defined")]
    ZoneCountMismatch { schedule: usize, zones: usize },
    #[error("duplicate request id {0}")]
    DuplicateRequest(RequestId),
    #[error("contract violation at event `{event}`: {source}")]
    Contract { event: String, source: FleetError },
    #[error("request {0} was never resolved")]
    Unresolved(RequestId),
    #[error("event logs are not comparable: {0}")]
    Incomparable(String),
    #[error("malformed call record at line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dispatch: DispatchConfig,
    /// Trips further than this from every road node are rejected.
    pub snap_radius_m: f64,
}

impl SimConfig {
    pub fn new(dispatch: DispatchConfig) -> Self {
        Self { dispatch, snap_radius_m: DEFAULT_SNAP_RADIUS_M }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CallOutcome {
    PickedUp { pickup_s: f64, dropoff_s: f64, vehicle: VehicleId },
    Rejected(RejectReason),
    Abandoned { at_s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallRecord {
    pub request: RequestId,
    pub request_time_s: f64,
    pub patience_s: f64,
    pub outcome: CallOutcome,
}

impl CallRecord {
    pub fn wait_s(&self) -> Option<f64> {
        match self.outcome {
            CallOutcome::PickedUp { pickup_s, .. } => Some(pickup_s - self.request_time_s),
            _ => None,
        }
    }

    /// Wait rounded to whole milliseconds.
    pub fn wait_ms(&self) -> Option<i64> {
        self.wait_s().map(|w| (w * 1000.0).round() as i64)
    }

    pub fn is_success(&self) -> bool {
        matches!(self.outcome, CallOutcome::PickedUp { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    RequestArrival(usize),
    ArrivedAtPickup { vehicle: VehicleId, request: RequestId, epoch: u64 },
    TripCompleted { vehicle: VehicleId, request: RequestId },
    PassengerAbandoned(RequestId),
    TrafficChange(f64),
    Reschedule,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time_s: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap pops the earliest event first
    fn cmp(&self, other: &Self) -> Ordering {
        other.time_s.total_cmp(&self.time_s).then(other.seq.cmp(&self.seq))
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.time_s, self.seq)?;
        match self.kind {
            EventKind::RequestArrival(i) => write!(f, "arrival #{i}"),
            EventKind::ArrivedAtPickup { vehicle, request, epoch } => write!(f, "pickup v{vehicle} r{request} e{epoch}"),
            EventKind::TripCompleted { vehicle, request } => write!(f, "dropoff v{vehicle} r{request}"),
            EventKind::PassengerAbandoned(r) => write!(f, "abandon r{r}"),
            EventKind::TrafficChange(m) => write!(f, "traffic {m}"),
            EventKind::Reschedule => write!(f, "reschedule"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RequestState {
    Open,
    Waiting { vehicle: VehicleId },
    Riding { vehicle: VehicleId, pickup_s: f64 },
    Closed,
}

/// Where a request sits on the network, once located.
#[derive(Debug, Clone, Copy)]
struct Located {
    pickup: NodeId,
    dropoff: NodeId,
    zone: ZoneId,
}

/// Everything one run consumes. The fleet and adjacency are moved in and
/// returned in their final state.
pub struct Scenario<'a> {
    pub network: &'a RoadNetwork,
    pub zones: &'a ZoneSet,
    pub adjacency: AdjacencySchedule,
    pub traffic: TrafficState,
    pub fleet: Fleet,
    pub demand: Vec<TripRequest>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunCounts {
    pub requests: u64,
    pub picked_up: u64,
    pub rejected: BTreeMap<String, u64>,
    pub abandoned: u64,
    pub reassignments: u64,
    pub adjacency_links_added: u64,
    pub events_processed: u64,
    pub stale_events: u64,
}

impl fmt::Display for RunCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "requests = {}", self.requests)?;
        writeln!(f, "picked_up = {}", self.picked_up)?;
        for (k, v) in &self.rejected {
            writeln!(f, "rejected.{k} = {v}")?;
        }
        writeln!(f, "abandoned = {}", self.abandoned)?;
        writeln!(f, "reassignments = {}", self.reassignments)?;
        writeln!(f, "adjacency_links_added = {}", self.adjacency_links_added)?;
        writeln!(f, "events_processed = {}", self.events_processed)?;
        write!(f, "stale_events = {}", self.stale_events)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// One record per request, in first-come first-served order.
    pub records: Vec<CallRecord>,
    pub adjacency: AdjacencySchedule,
    pub fleet: Fleet,
    pub counts: RunCounts,
    pub event_log: String,
    pub transitions: Vec<Transition>,
}

struct Sim<'a> {
    cfg: SimConfig,
    net: &'a RoadNetwork,
    zones: &'a ZoneSet,
    node_zone: Vec<ZoneId>,
    traffic: TrafficState,
    adjacency: AdjacencySchedule,
    fleet: Fleet,
    demand: Vec<TripRequest>,
    index_of: BTreeMap<RequestId, usize>,
    located: Vec<Option<Located>>,
    state: Vec<RequestState>,
    records: Vec<Option<CallRecord>>,
    queue: BinaryHeap<Event>,
    next_seq: u64,
    now_s: f64,
    current_seq: u64,
    counts: RunCounts,
    log: String,
    transitions: Vec<Transition>,
    max_capacity: u32,
}

/// Runs the scenario to completion.
pub fn run(cfg: &SimConfig, scenario: Scenario<'_>, fingerprint: &str) -> Result<RunOutput, EngineError> {
    let Scenario { network, zones, adjacency, traffic, fleet, mut demand } = scenario;
    if zones.is_empty() {
        return Err(EngineError::NoZones);
    }
    if network.node_count() == 0 {
        return Err(EngineError::EmptyNetwork);
    }
    if adjacency.zone_count() != zones.len() {
        return Err(EngineError::ZoneCountMismatch { schedule: adjacency.zone_count(), zones: zones.len() });
    }
    sort_fcfs(&mut demand);
    let mut index_of = BTreeMap::new();
    for (i, r) in demand.iter().enumerate() {
        if index_of.insert(r.id, i).is_some() {
            return Err(EngineError::DuplicateRequest(r.id));
        }
    }
    let node_zone = network
        .locations()
        .iter()
        .map(|&p| zones.locate_or_nearest(p).map(|(z, _)| z).ok_or(EngineError::NoZones))
        .collect::<Result<Vec<_>, _>>()?;
    let n = demand.len();
    let max_capacity = fleet.vehicles().iter().map(|v| v.capacity).max().unwrap_or(0);
    let mut sim = Sim {
        cfg: *cfg,
        net: network,
        zones,
        node_zone,
        traffic,
        adjacency,
        fleet,
        demand,
        index_of,
        located: vec![None; n],
        state: vec![RequestState::Open; n],
        records: vec![None; n],
        queue: BinaryHeap::new(),
        next_seq: 0,
        now_s: 0.0,
        current_seq: 0,
        counts: RunCounts { requests: n as u64, ..Default::default() },
        log: String::new(),
        transitions: Vec::new(),
        max_capacity,
    };
    let _ = writeln!(sim.log, "{LOG_MAGIC} strategy={} fingerprint={fingerprint}", cfg.dispatch.label());
    sim.seed_events();
    sim.run_loop()?;
    sim.finish()
}

impl Sim<'_> {
    fn schedule(&mut self, time_s: f64, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event { time_s, seq, kind });
    }

    fn seed_events(&mut self) {
        for i in 0..self.demand.len() {
            self.schedule(self.demand[i].request_time_s, EventKind::RequestArrival(i));
        }
        let Some(last_deadline) = self.demand.iter().map(|r| r.request_time_s + r.patience_s).reduce(f64::max) else {
            return;
        };
        let first = self.demand.first().map_or(0.0, |r| r.request_time_s);
        let changes = self.traffic.change_times(first, last_deadline);
        for t in changes {
            let m = self.traffic.multiplier_at(t);
            self.schedule(t, EventKind::TrafficChange(m));
        }
    }

    fn run_loop(&mut self) -> Result<(), EngineError> {
        while let Some(ev) = self.queue.pop() {
            debug_assert!(ev.time_s >= self.now_s, "event time went backwards");
            self.now_s = ev.time_s;
            self.current_seq = ev.seq;
            let handled = match ev.kind {
                EventKind::RequestArrival(i) => self.on_arrival(i),
                EventKind::ArrivedAtPickup { vehicle, request, epoch } => self.on_pickup(vehicle, request, epoch),
                EventKind::TripCompleted { vehicle, request } => self.on_dropoff(vehicle, request),
                EventKind::PassengerAbandoned(r) => self.on_deadline(r),
                EventKind::TrafficChange(m) => {
                    self.line(format_args!("traffic {m}"));
                    if self.cfg.dispatch.strategy == Strategy::Oss {
                        self.schedule(self.now_s, EventKind::Reschedule);
                    }
                    Ok(true)
                }
                EventKind::Reschedule => self.on_reschedule(),
            };
            match handled {
                Ok(true) => self.counts.events_processed += 1,
                Ok(false) => self.counts.stale_events += 1,
                Err(source) => return Err(EngineError::Contract { event: ev.to_string(), source }),
            }
            #[cfg(debug_assertions)]
            if let Err(source) = self.fleet.check_unique_plans() {
                return Err(EngineError::Contract { event: ev.to_string(), source });
            }
        }
        Ok(())
    }

    fn line(&mut self, body: fmt::Arguments<'_>) {
        let _ = writeln!(self.log, "{} {} {body}", self.now_s, self.current_seq);
    }

    fn close(&mut self, i: usize, outcome: CallOutcome) {
        let r = &self.demand[i];
        self.records[i] = Some(CallRecord { request: r.id, request_time_s: r.request_time_s, patience_s: r.patience_s, outcome });
        self.state[i] = RequestState::Closed;
        match outcome {
            CallOutcome::PickedUp { .. } => self.counts.picked_up += 1,
            CallOutcome::Rejected(reason) => *self.counts.rejected.entry(reason.label().to_string()).or_default() += 1,
            CallOutcome::Abandoned { .. } => self.counts.abandoned += 1,
        }
    }

    fn reject(&mut self, i: usize, reason: RejectReason) {
        let id = self.demand[i].id;
        self.line(format_args!("arrival r{id} rejected {reason}"));
        self.close(i, CallOutcome::Rejected(reason));
    }

    fn transition(&mut self, vehicle: VehicleId, from: VehicleStatus, to: VehicleStatus) {
        if from != to {
            self.transitions.push(Transition { time_s: self.now_s, vehicle, from, to });
        }
    }

    fn schedule_arrival(&mut self, vehicle: VehicleId) {
        let v = self.fleet.get(vehicle);
        if v.status() == VehicleStatus::EnRouteToPickup {
            let plan = v.plan().expect("en-route vehicle has a plan");
            let (t, request, epoch) = (plan.pickup_at_s(), plan.request, v.epoch());
            self.schedule(t, EventKind::ArrivedAtPickup { vehicle, request, epoch });
        }
    }

    fn on_arrival(&mut self, i: usize) -> Result<bool, FleetError> {
        let req = self.demand[i].clone();
        let snap = self.cfg.snap_radius_m;
        let (Some(pickup), Some(dropoff)) = (self.net.nearest_node(req.pickup, snap), self.net.nearest_node(req.dropoff, snap)) else {
            self.reject(i, RejectReason::OffNetwork);
            return Ok(true);
        };
        if pickup == dropoff {
            self.reject(i, RejectReason::ZeroLengthTrip);
            return Ok(true);
        }
        let zone = self.zones.locate_or_nearest(req.pickup).map(|(z, _)| z).unwrap_or(self.node_zone[pickup.index()]);
        self.located[i] = Some(Located { pickup, dropoff, zone });
        let Some(trip) = route_astar(self.net, &self.traffic, self.now_s, pickup, dropoff) else {
            self.reject(i, RejectReason::Unroutable);
            return Ok(true);
        };
        if req.party_size > self.max_capacity {
            self.reject(i, RejectReason::NoVehicle);
            return Ok(true);
        }
        let call = Call { request: req.id, pickup, zone };
        let ctx = DispatchContext {
            fleet: &self.fleet,
            node_zone: &self.node_zone,
            net: self.net,
            traffic: &self.traffic,
            now_s: self.now_s,
        };
        let decision = dispatch(&call, ctx, &mut self.adjacency, &self.cfg.dispatch);
        if decision.adjacency_updated {
            self.counts.adjacency_links_added += 1;
        }
        let est = match decision.outcome {
            Outcome::Assigned(e) => e,
            Outcome::Rejected(reason) => {
                self.reject(i, reason);
                return Ok(true);
            }
        };
        let before = self.fleet.get(est.vehicle).status();
        self.fleet.get_mut(est.vehicle).assign(&req, est.route_to_pickup.clone(), trip, self.now_s)?;
        self.transition(est.vehicle, before, self.fleet.get(est.vehicle).status());
        self.state[i] = RequestState::Waiting { vehicle: est.vehicle };
        self.line(
            format_args!(
                "arrival r{} assigned v{} eta {} rounds {}{}",
                req.id,
                est.vehicle,
                est.eta_s,
                decision.zones_searched.len(),
                if decision.adjacency_updated { " linked" } else { "" }
            ),
        );
        self.schedule_arrival(est.vehicle);
        self.schedule(req.request_time_s + req.patience_s, EventKind::PassengerAbandoned(req.id));
        Ok(true)
    }

    fn on_pickup(&mut self, vehicle: VehicleId, request: RequestId, epoch: u64) -> Result<bool, FleetError> {
        if self.fleet.get(vehicle).epoch() != epoch {
            return Ok(false);
        }
        let i = self.index_of[&request];
        let plan = self.fleet.get_mut(vehicle).arrive_at_pickup()?;
        let done = plan.busy_until_s();
        self.transition(vehicle, VehicleStatus::EnRouteToPickup, VehicleStatus::OnTrip);
        self.state[i] = RequestState::Riding { vehicle, pickup_s: self.now_s };
        self.line(format_args!("pickup v{vehicle} r{request}"));
        self.schedule(done, EventKind::TripCompleted { vehicle, request });
        Ok(true)
    }

    fn on_dropoff(&mut self, vehicle: VehicleId, request: RequestId) -> Result<bool, FleetError> {
        let i = self.index_of[&request];
        let RequestState::Riding { vehicle: rider, pickup_s } = self.state[i] else {
            return Ok(false);
        };
        if rider != vehicle {
            return Ok(false);
        }
        let next = self.fleet.get_mut(vehicle).complete_trip(self.now_s)?.map(|p| p.request);
        self.close(i, CallOutcome::PickedUp { pickup_s, dropoff_s: self.now_s, vehicle });
        self.line(format_args!("dropoff v{vehicle} r{request}"));
        match next {
            Some(_) => {
                self.transition(vehicle, VehicleStatus::OnTrip, VehicleStatus::EnRouteToPickup);
                self.schedule_arrival(vehicle);
            }
            None => self.transition(vehicle, VehicleStatus::OnTrip, VehicleStatus::Idle),
        }
        Ok(true)
    }

    fn on_deadline(&mut self, request: RequestId) -> Result<bool, FleetError> {
        let i = self.index_of[&request];
        let RequestState::Waiting { vehicle } = self.state[i] else {
            return Ok(false);
        };
        let v = self.fleet.get(vehicle);
        if v.pending_plan(request).is_some_and(|p| p.pickup_at_s() <= self.now_s) {
            // the vehicle arrives no later than the deadline
            return Ok(false);
        }
        let before = v.status();
        self.fleet.get_mut(vehicle).release(request, self.now_s);
        self.transition(vehicle, before, self.fleet.get(vehicle).status());
        self.close(i, CallOutcome::Abandoned { at_s: self.now_s });
        self.line(format_args!("abandon r{request} released v{vehicle}"));
        Ok(true)
    }

    fn on_reschedule(&mut self) -> Result<bool, FleetError> {
        let mut waiting: Vec<usize> = (0..self.demand.len())
            .filter(|&i| matches!(self.state[i], RequestState::Waiting { .. }))
            .collect();
        waiting.sort_by(|&a, &b| {
            self.demand[a].request_time_s.total_cmp(&self.demand[b].request_time_s).then(self.demand[a].id.cmp(&self.demand[b].id))
        });
        let pending: Vec<PendingCall<'_>> = waiting
            .iter()
            .map(|&i| {
                let loc = self.located[i].expect("waiting request is located");
                let RequestState::Waiting { vehicle } = self.state[i] else { unreachable!() };
                PendingCall {
                    call: Call { request: self.demand[i].id, pickup: loc.pickup, zone: loc.zone },
                    request: &self.demand[i],
                    dropoff: loc.dropoff,
                    vehicle,
                }
            })
            .collect();
        let before: Vec<(VehicleStatus, u64)> = self.fleet.vehicles().iter().map(|v| (v.status(), v.epoch())).collect();
        let moves = oss_reschedule(
            &pending,
            &mut self.fleet,
            &self.node_zone,
            self.net,
            &self.traffic,
            &self.adjacency,
            &self.cfg.dispatch,
            self.now_s,
        )?;
        drop(pending);
        let mut touched = BTreeSet::new();
        for m in &moves {
            let i = self.index_of[&m.request];
            self.state[i] = RequestState::Waiting { vehicle: m.to };
            touched.insert(m.from);
            touched.insert(m.to);
            self.counts.reassignments += 1;
            self.line(format_args!("reassign r{} v{} -> v{} eta {} -> {}", m.request, m.from, m.to, m.old_eta_s, m.new_eta_s));
        }
        for v in touched {
            let (status, epoch) = before[v.index()];
            let after = self.fleet.get(v);
            let (after_status, changed) = (after.status(), after.epoch() != epoch);
            if status == VehicleStatus::EnRouteToPickup && after_status == status && changed {
                // released one call and took another within the same round
                self.transition(v, status, VehicleStatus::Idle);
                self.transition(v, VehicleStatus::Idle, after_status);
            } else {
                self.transition(v, status, after_status);
            }
            if after_status == VehicleStatus::EnRouteToPickup && changed {
                self.schedule_arrival(v);
            }
        }
        self.line(format_args!("reschedule moved {}", moves.len()));
        Ok(true)
    }

    fn finish(self) -> Result<RunOutput, EngineError> {
        let mut records = Vec::with_capacity(self.records.len());
        for (i, r) in self.records.into_iter().enumerate() {
            records.push(r.ok_or(EngineError::Unresolved(self.demand[i].id))?);
        }
        Ok(RunOutput {
            records,
            adjacency: self.adjacency,
            fleet: self.fleet,
            counts: self.counts,
            event_log: self.log,
            transitions: self.transitions,
        })
    }
}

/// Result of comparing a log against a rerun.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub identical: bool,
    /// 1-based line number, expected line, actual line.
    pub first_diff: Option<(usize, String, String)>,
}

fn log_header(log: &str) -> Result<(&str, &str), EngineError> {
    let head = log.lines().next().unwrap_or("");
    let rest = head
        .strip_prefix(LOG_MAGIC)
        .ok_or_else(|| EngineError::Incomparable("missing event-log header".into()))?;
    let mut strategy = None;
    let mut fingerprint = None;
    for kv in rest.split_whitespace() {
        if let Some(v) = kv.strip_prefix("strategy=") {
            strategy = Some(v);
        } else if let Some(v) = kv.strip_prefix("fingerprint=") {
            fingerprint = Some(v);
        }
    }
    match (strategy, fingerprint) {
        (Some(s), Some(f)) => Ok((s, f)),
        _ => Err(EngineError::Incomparable("incomplete event-log header".into())),
    }
}

/// Compares an original event log with the log of a rerun under the same
/// configuration. Logs from different strategies or configurations cannot be
/// compared.
pub fn replay_check(original: &str, rerun: &str) -> Result<ReplayReport, EngineError> {
    let (sa, fa) = log_header(original)?;
    let (sb, fb) = log_header(rerun)?;
    if sa != sb {
        return Err(EngineError::Incomparable(format!("strategy {sa} vs {sb}")));
    }
    if fa != fb {
        return Err(EngineError::Incomparable(format!("configuration {fa} vs {fb}")));
    }
    let mut a = original.lines();
    let mut b = rerun.lines();
    let mut n = 0;
    loop {
        n += 1;
        match (a.next(), b.next()) {
            (None, None) => return Ok(ReplayReport { identical: true, first_diff: None }),
            (x, y) if x == y => continue,
            (x, y) => {
                return Ok(ReplayReport {
                    identical: false,
                    first_diff: Some((n, x.unwrap_or("<end>").to_string(), y.unwrap_or("<end>").to_string())),
                })
            }
        }
    }
}

pub const RECORD_HEADER: &str = "request_id,request_time_s,patience_s,outcome,pickup_s,dropoff_s,vehicle,reason,abandon_s";

pub fn write_records(records: &[CallRecord], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{RECORD_HEADER}")?;
    for r in records {
        let head = format!("{},{},{}", r.request, r.request_time_s, r.patience_s);
        match r.outcome {
            CallOutcome::PickedUp { pickup_s, dropoff_s, vehicle } => {
                writeln!(out, "{head},picked-up,{pickup_s},{dropoff_s},{vehicle},,")?
            }
            CallOutcome::Rejected(reason) => writeln!(out, "{head},rejected,,,,{reason},")?,
            CallOutcome::Abandoned { at_s } => writeln!(out, "{head},abandoned,,,,,{at_s}")?,
        }
    }
    Ok(())
}

pub fn read_records(mut input: impl Read) -> Result<Vec<CallRecord>, EngineError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RECORD_HEADER => {}
        _ => return Err(EngineError::BadRecord { line: 1, message: format!("expected header `{RECORD_HEADER}`") }),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let bad = |message: String| EngineError::BadRecord { line: line_no, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad(format!("expected 9 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
        let request = RequestId(f[0].parse().map_err(|e| bad(format!("`{}`: {e}", f[0])))?);
        let outcome = match f[3] {
            "picked-up" => CallOutcome::PickedUp {
                pickup_s: num(f[4])?,
                dropoff_s: num(f[5])?,
                vehicle: VehicleId(f[6].parse().map_err(|e| bad(format!("`{}`: {e}", f[6])))?),
            },
            "rejected" => CallOutcome::Rejected(
                RejectReason::from_label(f[7]).ok_or_else(|| bad(format!("unknown reason `{}`", f[7])))?,
            ),
            "abandoned" => CallOutcome::Abandoned { at_s: num(f[8])? },
            other => return Err(bad(format!("unknown outcome `{other}`"))),
        };
        out.push(CallRecord { request, request_time_s: num(f[1])?, patience_s: num(f[2])?, outcome });
    }
    Ok(out)
}

/// Checks the per-run invariants: one record per request, waits within
/// patience, drop-off after pickup, and no vehicle carrying two parties at
/// once. Also validates the vehicle status trace.
pub fn check_run(demand: &[TripRequest], out: &RunOutput) -> Result<(), String> {
    let ids: BTreeSet<RequestId> = demand.iter().map(|r| r.id).collect();
    let seen: BTreeSet<RequestId> = out.records.iter().map(|r| r.request).collect();
    if out.records.len() != demand.len() || ids != seen {
        return Err(format!("{} requests but {} records", demand.len(), out.records.len()));
    }
    let mut trips: BTreeMap<VehicleId, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &out.records {
        if let CallOutcome::PickedUp { pickup_s, dropoff_s, vehicle } = r.outcome {
            let wait = pickup_s - r.request_time_s;
            if wait < 0.0 || wait > r.patience_s {
                return Err(format!("request {} waited {wait} s with patience {}", r.request, r.patience_s));
            }
            if dropoff_s <= pickup_s {
                return Err(format!("request {} dropped off at {dropoff_s} before pickup {pickup_s}", r.request));
            }
            trips.entry(vehicle).or_default().push((pickup_s, dropoff_s));
        }
    }
    for (v, mut spans) in trips {
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = spans.windows(2).find(|w| w[1].0 < w[0].1) {
            return Err(format!("vehicle {v} overlaps trips {:?} and {:?}", w[0], w[1]));
        }
    }
    validate_transitions(&out.transitions).map_err(|e| e.to_string())
}
