//! Vehicles, their plan state machine, candidate pools and pickup ETAs.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{RequestId, TripRequest};
use crate::road::{route_astar, NodeId, RoadNetwork, Route, TrafficState};

pub(crate) const STREAM_FLEET: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub u32);

impl VehicleId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Scheduling strategy: which vehicles may be considered for a call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Idle vehicles only.
    #[serde(rename = "NSS")]
    Nss,
    /// Idle and busy vehicles; assignments are never revisited.
    #[serde(rename = "SSS")]
    Sss,
    /// As SSS, with pending pickups re-planned when traffic changes.
    #[serde(rename = "OSS")]
    Oss,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Nss, Strategy::Sss, Strategy::Oss];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Nss => "NSS",
            Strategy::Sss => "SSS",
            Strategy::Oss => "OSS",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NSS" => Ok(Strategy::Nss),
            "SSS" => Ok(Strategy::Sss),
            "OSS" => Ok(Strategy::Oss),
            other => Err(format!("unknown strategy `{other}` (expected NSS, SSS or OSS)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FleetError {
    #[error("vehicle {vehicle} is {status} and cannot take request {request}")]
    NotAssignable { vehicle: VehicleId, status: VehicleStatus, request: RequestId },
    #[error("party of {party} exceeds vehicle {vehicle} capacity {capacity}")]
    OverCapacity { vehicle: VehicleId, party: u32, capacity: u32 },
    #[error("vehicle {vehicle}: invalid transition {from} -> {to}")]
    BadTransition { vehicle: VehicleId, from: VehicleStatus, to: VehicleStatus },
    #[error("request {0} appears in more than one vehicle plan")]
    DuplicatePlan(RequestId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VehicleStatus {
    Idle,
    EnRouteToPickup,
    OnTrip,
}

impl fmt::Display for VehicleStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VehicleStatus::Idle => "idle",
            VehicleStatus::EnRouteToPickup => "en-route-to-pickup",
            VehicleStatus::OnTrip => "on-trip",
        })
    }
}

/// One served request: drive to the pickup, then carry the party.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub request: RequestId,
    pub to_pickup: Route,
    pub trip: Route,
    pub depart_s: f64,
}

impl Plan {
    pub fn pickup_node(&self) -> NodeId {
        self.trip.origin()
    }

    pub fn dropoff_node(&self) -> NodeId {
        self.trip.destination()
    }

    pub fn pickup_at_s(&self) -> f64 {
        self.depart_s + self.to_pickup.total_time_s()
    }

    pub fn busy_until_s(&self) -> f64 {
        self.pickup_at_s() + self.trip.total_time_s()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Activity {
    Idle,
    EnRoute(Plan),
    OnTrip { plan: Plan, queued: Option<Plan> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub capacity: u32,
    /// Node where the current activity started (the idle position when idle).
    node: NodeId,
    activity: Activity,
    epoch: u64,
}

impl Vehicle {
    pub fn idle_at(id: VehicleId, node: NodeId, capacity: u32) -> Self {
        Self { id, capacity, node, activity: Activity::Idle, epoch: 0 }
    }

    pub fn status(&self) -> VehicleStatus {
        match self.activity {
            Activity::Idle => VehicleStatus::Idle,
            Activity::EnRoute(_) => VehicleStatus::EnRouteToPickup,
            Activity::OnTrip { .. } => VehicleStatus::OnTrip,
        }
    }

    /// Bumped on every state change; events scheduled under an older epoch
    /// are stale.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn plan(&self) -> Option<&Plan> {
        match &self.activity {
            Activity::Idle => None,
            Activity::EnRoute(p) | Activity::OnTrip { plan: p, .. } => Some(p),
        }
    }

    pub fn queued(&self) -> Option<&Plan> {
        match &self.activity {
            Activity::OnTrip { queued, .. } => queued.as_ref(),
            _ => None,
        }
    }

    pub fn busy_until_s(&self) -> Option<f64> {
        self.plan().map(Plan::busy_until_s)
    }

    /// Requests this vehicle is committed to, current first.
    pub fn requests(&self) -> impl Iterator<Item = RequestId> + '_ {
        self.plan().into_iter().chain(self.queued()).map(|p| p.request)
    }

    /// Last node passed at `now_s`.
    pub fn position_at(&self, now_s: f64) -> NodeId {
        match &self.activity {
            Activity::Idle => self.node,
            Activity::EnRoute(p) => p.to_pickup.node_at(now_s - p.depart_s),
            Activity::OnTrip { plan, .. } => plan.trip.node_at(now_s - plan.pickup_at_s()),
        }
    }

    /// Takes a request. Idle vehicles head out now; a busy vehicle without a
    /// queued plan gets this one queued behind its current trip.
    pub fn assign(
        &mut self,
        request: &TripRequest,
        route_to_pickup: Route,
        route_of_trip: Route,
        now_s: f64,
    ) -> Result<(), FleetError> {
        if request.party_size > self.capacity {
            return Err(FleetError::OverCapacity {
                vehicle: self.id,
                party: request.party_size,
                capacity: self.capacity,
            });
        }
        let refuse = FleetError::NotAssignable { vehicle: self.id, status: self.status(), request: request.id };
        match &mut self.activity {
            Activity::Idle => {
                self.activity = Activity::EnRoute(Plan {
                    request: request.id,
                    to_pickup: route_to_pickup,
                    trip: route_of_trip,
                    depart_s: now_s,
                });
            }
            Activity::OnTrip { plan, queued: queued @ None } => {
                *queued = Some(Plan {
                    request: request.id,
                    to_pickup: route_to_pickup,
                    trip: route_of_trip,
                    depart_s: plan.busy_until_s(),
                });
            }
            _ => return Err(refuse),
        }
        self.epoch += 1;
        Ok(())
    }

    /// En-route vehicle reaches the pickup and starts the trip.
    pub fn arrive_at_pickup(&mut self) -> Result<&Plan, FleetError> {
        match std::mem::replace(&mut self.activity, Activity::Idle) {
            Activity::EnRoute(plan) => {
                self.node = plan.pickup_node();
                self.activity = Activity::OnTrip { plan, queued: None };
                self.epoch += 1;
                Ok(self.plan().expect("on trip"))
            }
            other => {
                let from = status_of(&other);
                self.activity = other;
                Err(FleetError::BadTransition { vehicle: self.id, from, to: VehicleStatus::OnTrip })
            }
        }
    }

    /// Trip done: the vehicle either starts its queued plan or turns idle at
    /// the drop-off. Returns the plan it starts, if any.
    pub fn complete_trip(&mut self, now_s: f64) -> Result<Option<&Plan>, FleetError> {
        match std::mem::replace(&mut self.activity, Activity::Idle) {
            Activity::OnTrip { plan, queued } => {
                self.node = plan.dropoff_node();
                self.epoch += 1;
                if let Some(mut next) = queued {
                    next.depart_s = now_s;
                    self.activity = Activity::EnRoute(next);
                    return Ok(self.plan());
                }
                Ok(None)
            }
            other => {
                let from = status_of(&other);
                self.activity = other;
                Err(FleetError::BadTransition { vehicle: self.id, from, to: VehicleStatus::Idle })
            }
        }
    }

    /// Drops the commitment to `request`: an en-route vehicle turns idle at
    /// its current node, a queued plan is discarded. Returns false when the
    /// vehicle held no pending pickup for `request`.
    pub fn release(&mut self, request: RequestId, now_s: f64) -> bool {
        let position = self.position_at(now_s);
        match &mut self.activity {
            Activity::EnRoute(p) if p.request == request => {
                self.node = position;
                self.activity = Activity::Idle;
            }
            Activity::OnTrip { queued, .. } if queued.as_ref().is_some_and(|q| q.request == request) => {
                *queued = None;
            }
            _ => return false,
        }
        self.epoch += 1;
        true
    }

    /// The plan that will pick up `request`, current or queued.
    pub fn pending_plan(&self, request: RequestId) -> Option<&Plan> {
        match &self.activity {
            Activity::EnRoute(p) if p.request == request => Some(p),
            Activity::OnTrip { queued: Some(q), .. } if q.request == request => Some(q),
            _ => None,
        }
    }
}

fn status_of(a: &Activity) -> VehicleStatus {
    match a {
        Activity::Idle => VehicleStatus::Idle,
        Activity::EnRoute(_) => VehicleStatus::EnRouteToPickup,
        Activity::OnTrip { .. } => VehicleStatus::OnTrip,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    vehicles: Vec<Vehicle>,
}

impl Fleet {
    pub fn new(vehicles: Vec<Vehicle>) -> Self {
        Self { vehicles }
    }

    /// Idle vehicles at nodes drawn uniformly with `seed`.
    pub fn place_uniform(size: usize, capacity: u32, net: &RoadNetwork, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_FLEET);
        let n = net.node_count() as u32;
        let vehicles = (0..size as u32)
            .map(|i| Vehicle::idle_at(VehicleId(i), NodeId(rng.random_range(0..n.max(1))), capacity))
            .collect();
        Self { vehicles }
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn get(&self, id: VehicleId) -> &Vehicle {
        &self.vehicles[id.index()]
    }

    pub fn get_mut(&mut self, id: VehicleId) -> &mut Vehicle {
        &mut self.vehicles[id.index()]
    }

    /// Checks that no request sits in two plans.
    pub fn check_unique_plans(&self) -> Result<(), FleetError> {
        let mut seen = std::collections::BTreeSet::new();
        for r in self.vehicles.iter().flat_map(Vehicle::requests) {
            if !seen.insert(r) {
                return Err(FleetError::DuplicatePlan(r));
            }
        }
        Ok(())
    }
}

/// Whether a vehicle may be offered a new call under `strategy`. Busy vehicles
/// hold at most one queued plan and en-route vehicles are never re-targeted.
pub fn is_candidate(v: &Vehicle, strategy: Strategy) -> bool {
    match (strategy, v.status()) {
        (_, VehicleStatus::Idle) => true,
        (Strategy::Nss, _) => false,
        (_, VehicleStatus::EnRouteToPickup) => false,
        (_, VehicleStatus::OnTrip) => v.queued().is_none(),
    }
}

pub fn candidate_pool(fleet: &Fleet, strategy: Strategy) -> Vec<VehicleId> {
    fleet.vehicles.iter().filter(|v| is_candidate(v, strategy)).map(|v| v.id).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaBasis {
    FromCurrentPosition,
    FromTripEndpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEstimate {
    pub vehicle: VehicleId,
    pub eta_s: f64,
    pub basis: EtaBasis,
    /// Drive to the pickup, from the idle node or the current trip's drop-off.
    pub route_to_pickup: Route,
}

/// Seconds until `v` could reach `pickup`, or `None` when the pickup is
/// unreachable or the vehicle cannot take another plan.
pub fn estimate_eta(
    v: &Vehicle,
    pickup: NodeId,
    net: &RoadNetwork,
    traffic: &TrafficState,
    now_s: f64,
) -> Option<CandidateEstimate> {
    match &v.activity {
        Activity::Idle => {
            let route = route_astar(net, traffic, now_s, v.node, pickup)?;
            Some(CandidateEstimate {
                vehicle: v.id,
                eta_s: route.total_time_s(),
                basis: EtaBasis::FromCurrentPosition,
                route_to_pickup: route,
            })
        }
        Activity::OnTrip { plan, queued: None } => {
            let route = route_astar(net, traffic, now_s, plan.dropoff_node(), pickup)?;
            let remaining = (plan.busy_until_s() - now_s).max(0.0);
            Some(CandidateEstimate {
                vehicle: v.id,
                eta_s: remaining + route.total_time_s(),
                basis: EtaBasis::FromTripEndpoint,
                route_to_pickup: route,
            })
        }
        _ => None,
    }
}

/// One observed status change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub time_s: f64,
    pub vehicle: VehicleId,
    pub from: VehicleStatus,
    pub to: VehicleStatus,
}

/// Accepts Idle -> EnRoute -> OnTrip -> Idle, OnTrip -> EnRoute (queued plan)
/// and EnRoute -> Idle (pickup abandoned or handed to another vehicle).
pub fn validate_transitions(trace: &[Transition]) -> Result<(), FleetError> {
    use VehicleStatus::*;
    for t in trace {
        let ok = matches!(
            (t.from, t.to),
            (Idle, EnRouteToPickup)
                | (EnRouteToPickup, OnTrip)
                | (OnTrip, Idle)
                | (OnTrip, EnRouteToPickup)
                | (EnRouteToPickup, Idle)
        );
        if !ok {
            return Err(FleetError::BadTransition { vehicle: t.vehicle, from: t.from, to: t.to });
        }
    }
    Ok(())
}
