//! Call-to-vehicle matching: Expand and Target, the one-ring baseline search,
//! and re-planning of pending pickups after traffic changes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::demand::{RequestId, TripRequest};
use crate::fleet::{estimate_eta, is_candidate, CandidateEstimate, Fleet, FleetError, Strategy, VehicleId};
use crate::road::{route_astar, NodeId, RoadNetwork, TrafficState};
use crate::zones::{AdjacencySchedule, ZoneId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchConfig {
    pub strategy: Strategy,
    pub eat_enabled: bool,
    pub global_fallback_after_component: bool,
    pub oss_reassign_threshold_s: f64,
}

impl DispatchConfig {
    pub fn new(strategy: Strategy, eat_enabled: bool) -> Self {
        Self { strategy, eat_enabled, global_fallback_after_component: true, oss_reassign_threshold_s: 60.0 }
    }

    /// Strategy name with an `-EAT` suffix when expansion is on.
    pub fn label(&self) -> String {
        if self.eat_enabled {
            format!("{}-EAT", self.strategy)
        } else {
            self.strategy.to_string()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    /// No candidate vehicle in any searched zone.
    NoVehicle,
    /// Candidates exist but the pickup or drop-off cannot be reached.
    Unroutable,
    /// Pickup and drop-off snap to the same road node.
    ZeroLengthTrip,
    /// No road node within the snapping radius.
    OffNetwork,
}

impl RejectReason {
    pub fn label(self) -> &'static str {
        match self {
            RejectReason::NoVehicle => "no-vehicle",
            RejectReason::Unroutable => "unroutable",
            RejectReason::ZeroLengthTrip => "zero-length-trip",
            RejectReason::OffNetwork => "off-network",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        [Self::NoVehicle, Self::Unroutable, Self::ZeroLengthTrip, Self::OffNetwork]
            .into_iter()
            .find(|r| r.label() == s)
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Assigned(CandidateEstimate),
    Rejected(RejectReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchDecision {
    pub outcome: Outcome,
    /// Cumulative zone sets searched, one per expansion round.
    pub zones_searched: Vec<BTreeSet<ZoneId>>,
    pub adjacency_updated: bool,
}

impl DispatchDecision {
    pub fn assigned(&self) -> Option<&CandidateEstimate> {
        match &self.outcome {
            Outcome::Assigned(c) => Some(c),
            Outcome::Rejected(_) => None,
        }
    }
}

/// A call already located on the network and in a zone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Call {
    pub request: RequestId,
    pub pickup: NodeId,
    pub zone: ZoneId,
}

/// Read-only view of the world at dispatch time.
#[derive(Debug, Clone, Copy)]
pub struct DispatchContext<'a> {
    pub fleet: &'a Fleet,
    /// Zone of every road node.
    pub node_zone: &'a [ZoneId],
    pub net: &'a RoadNetwork,
    pub traffic: &'a TrafficState,
    pub now_s: f64,
}

/// Candidate vehicles bucketed by the zone of their current routing node.
struct Searcher<'a> {
    ctx: DispatchContext<'a>,
    pickup: NodeId,
    by_zone: BTreeMap<ZoneId, Vec<VehicleId>>,
    saw_unreachable: bool,
}

impl<'a> Searcher<'a> {
    fn new(ctx: DispatchContext<'a>, pickup: NodeId, strategy: Strategy, exclude: Option<VehicleId>) -> Self {
        let mut by_zone: BTreeMap<ZoneId, Vec<VehicleId>> = BTreeMap::new();
        for v in ctx.fleet.vehicles() {
            if Some(v.id) == exclude || !is_candidate(v, strategy) {
                continue;
            }
            let zone = ctx.node_zone[v.position_at(ctx.now_s).index()];
            by_zone.entry(zone).or_default().push(v.id);
        }
        Self { ctx, pickup, by_zone, saw_unreachable: false }
    }

    /// Minimum-ETA candidate among vehicles in `zones`; equal ETAs go to the
    /// lowest vehicle id.
    fn best_in<'z>(&mut self, zones: impl IntoIterator<Item = &'z ZoneId>) -> Option<CandidateEstimate> {
        let mut ids: Vec<VehicleId> =
            zones.into_iter().filter_map(|z| self.by_zone.get(z)).flatten().copied().collect();
        ids.sort_unstable();
        let mut best: Option<CandidateEstimate> = None;
        for id in ids {
            let v = self.ctx.fleet.get(id);
            match estimate_eta(v, self.pickup, self.ctx.net, self.ctx.traffic, self.ctx.now_s) {
                Some(e) => {
                    if best.as_ref().is_none_or(|b| e.eta_s < b.eta_s) {
                        best = Some(e);
                    }
                }
                None => self.saw_unreachable = true,
            }
        }
        best
    }

    fn vehicle_zone(&self, id: VehicleId) -> ZoneId {
        self.ctx.node_zone[self.ctx.fleet.get(id).position_at(self.ctx.now_s).index()]
    }

    fn rejection(&self) -> RejectReason {
        if self.saw_unreachable {
            RejectReason::Unroutable
        } else {
            RejectReason::NoVehicle
        }
    }
}

/// Outcome of a search before any adjacency change is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub outcome: Outcome,
    pub zones_searched: Vec<BTreeSet<ZoneId>>,
    /// Link the search would add between the call's zone and the vehicle's.
    pub new_link: Option<(ZoneId, ZoneId)>,
}

fn all_zones(sched: &AdjacencySchedule) -> BTreeSet<ZoneId> {
    (0..sched.zone_count() as u32).map(ZoneId).collect()
}

/// Expand and Target without touching the schedule.
pub fn search_eat(
    call: &Call,
    ctx: DispatchContext<'_>,
    sched: &AdjacencySchedule,
    cfg: &DispatchConfig,
    exclude: Option<VehicleId>,
) -> SearchResult {
    let mut s = Searcher::new(ctx, call.pickup, cfg.strategy, exclude);
    let mut rounds = Vec::new();
    let neighbors = sched.neighbors(call.zone).cloned().unwrap_or_default();

    let mut visited = BTreeSet::from([call.zone]);
    let (searched_component, try_global) = if neighbors.is_empty() {
        rounds.push(visited.clone());
        if let Some(e) = s.best_in(&visited) {
            return found(e, rounds, None);
        }
        (visited, true)
    } else {
        visited.extend(neighbors);
        let mut fresh = visited.clone();
        loop {
            rounds.push(visited.clone());
            if let Some(e) = s.best_in(&fresh) {
                return found(e, rounds, None);
            }
            let grown = sched.expand_frontier(&visited);
            fresh = grown.difference(&visited).copied().collect();
            if fresh.is_empty() {
                break;
            }
            visited = grown;
        }
        (visited, cfg.global_fallback_after_component)
    };

    if try_global {
        let everything = all_zones(sched);
        if everything.len() > searched_component.len() {
            let rest: Vec<ZoneId> = everything.difference(&searched_component).copied().collect();
            rounds.push(everything);
            if let Some(e) = s.best_in(&rest) {
                let link = (call.zone, s.vehicle_zone(e.vehicle));
                return found(e, rounds, Some(link));
            }
        }
    }
    SearchResult { outcome: Outcome::Rejected(s.rejection()), zones_searched: rounds, new_link: None }
}

/// Own zone first, then one ring of neighbours; never changes adjacency.
pub fn search_baseline(
    call: &Call,
    ctx: DispatchContext<'_>,
    sched: &AdjacencySchedule,
    cfg: &DispatchConfig,
    exclude: Option<VehicleId>,
) -> SearchResult {
    let mut s = Searcher::new(ctx, call.pickup, cfg.strategy, exclude);
    let mut visited = BTreeSet::from([call.zone]);
    let mut rounds = vec![visited.clone()];
    if let Some(e) = s.best_in(&visited) {
        return found(e, rounds, None);
    }
    let ring = sched.neighbors(call.zone).cloned().unwrap_or_default();
    if !ring.is_empty() {
        visited.extend(ring.iter().copied());
        rounds.push(visited);
        if let Some(e) = s.best_in(&ring) {
            return found(e, rounds, None);
        }
    }
    SearchResult { outcome: Outcome::Rejected(s.rejection()), zones_searched: rounds, new_link: None }
}

fn found(e: CandidateEstimate, rounds: Vec<BTreeSet<ZoneId>>, new_link: Option<(ZoneId, ZoneId)>) -> SearchResult {
    SearchResult { outcome: Outcome::Assigned(e), zones_searched: rounds, new_link }
}

fn search(
    call: &Call,
    ctx: DispatchContext<'_>,
    sched: &AdjacencySchedule,
    cfg: &DispatchConfig,
    exclude: Option<VehicleId>,
) -> SearchResult {
    if cfg.eat_enabled {
        search_eat(call, ctx, sched, cfg, exclude)
    } else {
        search_baseline(call, ctx, sched, cfg, exclude)
    }
}

/// Expand and Target; a vehicle found outside the call's connected component
/// links its zone to the call's zone.
pub fn dispatch_eat(
    call: &Call,
    ctx: DispatchContext<'_>,
    sched: &mut AdjacencySchedule,
    cfg: &DispatchConfig,
) -> DispatchDecision {
    apply(search_eat(call, ctx, sched, cfg, None), sched)
}

pub fn dispatch_baseline(
    call: &Call,
    ctx: DispatchContext<'_>,
    sched: &AdjacencySchedule,
    cfg: &DispatchConfig,
) -> DispatchDecision {
    let r = search_baseline(call, ctx, sched, cfg, None);
    DispatchDecision { outcome: r.outcome, zones_searched: r.zones_searched, adjacency_updated: false }
}

/// Runs whichever search `cfg` selects.
pub fn dispatch(
    call: &Call,
    ctx: DispatchContext<'_>,
    sched: &mut AdjacencySchedule,
    cfg: &DispatchConfig,
) -> DispatchDecision {
    if cfg.eat_enabled {
        dispatch_eat(call, ctx, sched, cfg)
    } else {
        dispatch_baseline(call, ctx, sched, cfg)
    }
}

fn apply(r: SearchResult, sched: &mut AdjacencySchedule) -> DispatchDecision {
    let adjacency_updated = match r.new_link {
        Some((a, b)) if a != b => sched.add_neighbor(a, b).is_ok(),
        _ => false,
    };
    DispatchDecision { outcome: r.outcome, zones_searched: r.zones_searched, adjacency_updated }
}

/// A request that has a vehicle but has not been picked up yet.
#[derive(Debug, Clone)]
pub struct PendingCall<'a> {
    pub call: Call,
    pub request: &'a TripRequest,
    pub dropoff: NodeId,
    pub vehicle: VehicleId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reassignment {
    pub request: RequestId,
    pub from: VehicleId,
    pub to: VehicleId,
    pub old_eta_s: f64,
    pub new_eta_s: f64,
}

/// Re-plans pending pickups, in the order given, under the current traffic.
/// A request moves only when another vehicle would arrive more than the
/// configured threshold sooner; the displaced vehicle drops the pickup. The
/// schedule is consulted but never extended here.
#[allow(clippy::too_many_arguments)]
pub fn oss_reschedule(
    pending: &[PendingCall<'_>],
    fleet: &mut Fleet,
    node_zone: &[ZoneId],
    net: &RoadNetwork,
    traffic: &TrafficState,
    sched: &AdjacencySchedule,
    cfg: &DispatchConfig,
    now_s: f64,
) -> Result<Vec<Reassignment>, FleetError> {
    let mut moves = Vec::new();
    for p in pending {
        let Some(plan) = fleet.get(p.vehicle).pending_plan(p.call.request) else {
            continue;
        };
        let current = plan.pickup_at_s() - now_s;
        let ctx = DispatchContext { fleet, node_zone, net, traffic, now_s };
        let Outcome::Assigned(alt) = search(&p.call, ctx, sched, cfg, Some(p.vehicle)).outcome else {
            continue;
        };
        if current - alt.eta_s <= cfg.oss_reassign_threshold_s {
            continue;
        }
        let Some(trip) = route_astar(net, traffic, now_s, p.call.pickup, p.dropoff) else {
            continue;
        };
        fleet.get_mut(p.vehicle).release(p.call.request, now_s);
        fleet.get_mut(alt.vehicle).assign(p.request, alt.route_to_pickup.clone(), trip, now_s)?;
        moves.push(Reassignment {
            request: p.call.request,
            from: p.vehicle,
            to: alt.vehicle,
            old_eta_s: current,
            new_eta_s: alt.eta_s,
        });
    }
    Ok(moves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::Vehicle;
    use crate::geo::GeoPoint;
    use crate::scenario::GridCity;

    /// One row of `n` nodes, 100 m apart at 10 m/s, each node its own zone.
    struct Line {
        net: RoadNetwork,
        node_zone: Vec<ZoneId>,
    }

    fn line(n: usize) -> Line {
        let g = GridCity::new(1, n, 100.0, 10.0);
        Line { net: g.network(20.0).unwrap(), node_zone: (0..n as u32).map(ZoneId).collect() }
    }

    fn chain(n: usize) -> AdjacencySchedule {
        let mut s = AdjacencySchedule::isolated(n);
        for i in 1..n as u32 {
            s.add_neighbor(ZoneId(i - 1), ZoneId(i)).unwrap();
        }
        s
    }

    fn idle(ids_nodes: &[(u32, u32)]) -> Fleet {
        Fleet::new(ids_nodes.iter().map(|&(i, n)| Vehicle::idle_at(VehicleId(i), NodeId(n), 4)).collect())
    }

    fn ctx<'a>(l: &'a Line, fleet: &'a Fleet, traffic: &'a TrafficState) -> DispatchContext<'a> {
        DispatchContext { fleet, node_zone: &l.node_zone, net: &l.net, traffic, now_s: 0.0 }
    }

    fn call_at(node: u32) -> Call {
        Call { request: RequestId(0), pickup: NodeId(node), zone: ZoneId(node) }
    }

    fn request(id: u64) -> TripRequest {
        TripRequest {
            id: RequestId(id),
            medallion: String::new(),
            request_time_s: 0.0,
            pickup: GeoPoint::new(0.0, 0.0),
            dropoff: GeoPoint::new(0.0, 0.0),
            party_size: 1,
            patience_s: 3600.0,
        }
    }

    fn set(zs: &[u32]) -> BTreeSet<ZoneId> {
        zs.iter().map(|&z| ZoneId(z)).collect()
    }

    #[test]
    fn chain_needs_two_rounds() {
        let l = line(3);
        let fleet = idle(&[(0, 2)]);
        let free = TrafficState::free_flow();
        let mut sched = chain(3);
        let revision = sched.revision();
        let cfg = DispatchConfig::new(Strategy::Nss, true);
        let d = dispatch_eat(&call_at(0), ctx(&l, &fleet, &free), &mut sched, &cfg);
        assert_eq!(d.assigned().unwrap().vehicle, VehicleId(0));
        assert_eq!(d.zones_searched, vec![set(&[0, 1]), set(&[0, 1, 2])]);
        assert!(!d.adjacency_updated);
        assert_eq!(sched.revision(), revision);

        // the one-ring baseline cannot see zone 2
        let b = dispatch_baseline(&call_at(0), ctx(&l, &fleet, &free), &sched, &cfg);
        assert_eq!(b.outcome, Outcome::Rejected(RejectReason::NoVehicle));
        assert_eq!(b.zones_searched, vec![set(&[0]), set(&[0, 1])]);

        let near = idle(&[(0, 1)]);
        let b = dispatch_baseline(&call_at(0), ctx(&l, &near, &free), &sched, &cfg);
        assert_eq!(b.assigned().unwrap().eta_s, 10.0);
    }

    #[test]
    fn isolated_zone_gets_linked() {
        let l = line(4);
        let fleet = idle(&[(0, 1)]);
        let free = TrafficState::free_flow();
        let mut sched = chain(3);
        sched = {
            // zone 3 has no neighbours
            let mut s = AdjacencySchedule::isolated(4);
            for (a, b) in sched.pairs() {
                s.add_neighbor(a, b).unwrap();
            }
            s
        };
        let cfg = DispatchConfig::new(Strategy::Sss, true);
        let d = dispatch_eat(&call_at(3), ctx(&l, &fleet, &free), &mut sched, &cfg);
        assert_eq!(d.assigned().unwrap().vehicle, VehicleId(0));
        assert!(d.adjacency_updated);
        assert!(sched.neighbors(ZoneId(3)).unwrap().contains(&ZoneId(1)));
        assert_eq!(d.zones_searched, vec![set(&[3]), set(&[0, 1, 2, 3])]);

        let fresh = AdjacencySchedule::isolated(4);
        let b = dispatch_baseline(&call_at(3), ctx(&l, &fleet, &free), &fresh, &cfg);
        assert_eq!(b.outcome, Outcome::Rejected(RejectReason::NoVehicle));
        assert_eq!(fresh.revision(), 0);
    }

    #[test]
    fn empty_fleet_is_rejected_after_fixed_point() {
        let l = line(3);
        let fleet = Fleet::new(Vec::new());
        let free = TrafficState::free_flow();
        let mut sched = chain(3);
        let d = dispatch_eat(&call_at(1), ctx(&l, &fleet, &free), &mut sched, &DispatchConfig::new(Strategy::Oss, true));
        assert_eq!(d.outcome, Outcome::Rejected(RejectReason::NoVehicle));
        assert_eq!(d.zones_searched, vec![set(&[0, 1, 2])]);
        assert!(!d.adjacency_updated);
    }

    #[test]
    fn component_exhausted_without_fallback() {
        let l = line(4);
        let fleet = idle(&[(0, 3)]);
        let free = TrafficState::free_flow();
        let mut sched = AdjacencySchedule::isolated(4);
        sched.add_neighbor(ZoneId(0), ZoneId(1)).unwrap();
        let mut cfg = DispatchConfig::new(Strategy::Nss, true);
        cfg.global_fallback_after_component = false;
        let d = dispatch_eat(&call_at(0), ctx(&l, &fleet, &free), &mut sched, &cfg);
        assert_eq!(d.outcome, Outcome::Rejected(RejectReason::NoVehicle));
        cfg.global_fallback_after_component = true;
        let d = dispatch_eat(&call_at(0), ctx(&l, &fleet, &free), &mut sched, &cfg);
        assert_eq!(d.assigned().unwrap().vehicle, VehicleId(0));
        assert!(d.adjacency_updated);
        assert!(sched.neighbors(ZoneId(0)).unwrap().contains(&ZoneId(3)));
    }

    #[test]
    fn expansion_beats_local_minimum() {
        // zone A = nodes 0..=4, zone B = node 5; call at node 4.
        // in-zone vehicle at node 0 is 40 s away, neighbour-zone vehicle at
        // node 5 is 10 s away
        let g = GridCity::new(1, 6, 100.0, 10.0);
        let l = Line { net: g.network(20.0).unwrap(), node_zone: vec![ZoneId(0); 5].into_iter().chain([ZoneId(1)]).collect() };
        let fleet = idle(&[(0, 0), (1, 5)]);
        let free = TrafficState::free_flow();
        let mut sched = chain(2);
        let call = Call { request: RequestId(0), pickup: NodeId(4), zone: ZoneId(0) };
        let d = dispatch_eat(&call, ctx(&l, &fleet, &free), &mut sched, &DispatchConfig::new(Strategy::Nss, true));
        let e = d.assigned().unwrap();
        assert_eq!((e.vehicle, e.eta_s), (VehicleId(1), 10.0));
        let b = dispatch_baseline(&call, ctx(&l, &fleet, &free), &sched, &DispatchConfig::new(Strategy::Nss, false));
        assert_eq!(b.assigned().unwrap().vehicle, VehicleId(0));
    }

    #[test]
    fn equal_eta_goes_to_lowest_id() {
        let l = line(3);
        let fleet = idle(&[(0, 2), (1, 0)]);
        let free = TrafficState::free_flow();
        let mut sched = AdjacencySchedule::complete(3);
        let d = dispatch_eat(&call_at(1), ctx(&l, &fleet, &free), &mut sched, &DispatchConfig::new(Strategy::Sss, true));
        assert_eq!(d.assigned().unwrap().vehicle, VehicleId(0));
    }

    #[test]
    fn unreachable_pickup_is_unroutable() {
        // two disconnected nodes
        let nodes = vec![GeoPoint::new(40.7, -74.0), GeoPoint::new(40.7, -73.99)];
        let net = RoadNetwork::new(nodes, Vec::new(), 20.0).unwrap();
        let l = Line { net, node_zone: vec![ZoneId(0), ZoneId(1)] };
        let fleet = idle(&[(0, 0)]);
        let free = TrafficState::free_flow();
        let mut sched = chain(2);
        let d = dispatch_eat(&call_at(1), ctx(&l, &fleet, &free), &mut sched, &DispatchConfig::new(Strategy::Nss, true));
        assert_eq!(d.outcome, Outcome::Rejected(RejectReason::Unroutable));
    }

    #[test]
    fn reschedule_moves_only_past_threshold() {
        // line of 13 nodes; vehicle 0 heads 0 -> 12 (120 s); vehicle 1 sits
        // on a 2-node trip ending at node 10 at t = 20
        let l = line(13);
        let free = TrafficState::free_flow();
        let sched = AdjacencySchedule::complete(13);
        let mut fleet = idle(&[(0, 0), (1, 8)]);
        let r = |a: u32, b: u32| route_astar(&l.net, &free, 0.0, NodeId(a), NodeId(b)).unwrap();
        fleet.get_mut(VehicleId(1)).assign(&request(7), r(8, 8), r(8, 10), 0.0).unwrap();
        fleet.get_mut(VehicleId(1)).arrive_at_pickup().unwrap();
        let req = request(1);
        fleet.get_mut(VehicleId(0)).assign(&req, r(0, 12), r(12, 11), 0.0).unwrap();
        let pending = [PendingCall {
            call: Call { request: req.id, pickup: NodeId(12), zone: ZoneId(12) },
            request: &req,
            dropoff: NodeId(11),
            vehicle: VehicleId(0),
        }];
        let mut cfg = DispatchConfig::new(Strategy::Oss, true);

        // vehicle 1: 20 s left + 20 s = 40 s against 120 s; gain 80 s
        cfg.oss_reassign_threshold_s = 90.0;
        let mut kept = fleet.clone();
        let none = oss_reschedule(&pending, &mut kept, &l.node_zone, &l.net, &free, &sched, &cfg, 0.0).unwrap();
        assert!(none.is_empty());
        assert_eq!(kept, fleet);

        cfg.oss_reassign_threshold_s = 60.0;
        let moved = oss_reschedule(&pending, &mut fleet, &l.node_zone, &l.net, &free, &sched, &cfg, 0.0).unwrap();
        assert_eq!(
            moved,
            vec![Reassignment { request: req.id, from: VehicleId(0), to: VehicleId(1), old_eta_s: 120.0, new_eta_s: 40.0 }]
        );
        assert!(fleet.get(VehicleId(0)).plan().is_none());
        assert_eq!(fleet.get(VehicleId(1)).queued().unwrap().request, req.id);
        fleet.check_unique_plans().unwrap();
    }

    #[test]
    fn labels() {
        assert_eq!(DispatchConfig::new(Strategy::Oss, true).label(), "OSS-EAT");
        assert_eq!(DispatchConfig::new(Strategy::Nss, false).label(), "NSS");
        assert_eq!(RejectReason::from_label("unroutable"), Some(RejectReason::Unroutable));
    }
}
