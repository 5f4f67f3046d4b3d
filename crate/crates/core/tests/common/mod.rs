#![allow(dead_code)]

pub mod tables;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::File;
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use amod_core::demand::{read_scripted, RequestId, TripRequest};
use amod_core::dispatch::{Call, DispatchConfig, DispatchContext, Outcome};
use amod_core::engine::{run, RunOutput, Scenario, SimConfig};
use amod_core::fleet::{candidate_pool, estimate_eta, Fleet, Strategy, Vehicle, VehicleId};
use amod_core::geo::{haversine_m, GeoPoint};
use amod_core::road::{route_astar, NodeId, RoadEdge, RoadNetwork, TrafficState, DEFAULT_SPEED_LIMIT_MPS};
use amod_core::scenario::GridCity;
use amod_core::zones::{AdjacencySchedule, ZoneId, ZoneSet};

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub struct Golden {
    pub net: RoadNetwork,
    pub zones: ZoneSet,
    pub demand: Vec<TripRequest>,
}

pub fn load_golden() -> Golden {
    let dir = golden_dir();
    let net = RoadNetwork::load(&dir.join("nodes.txt"), &dir.join("edges.txt"), DEFAULT_SPEED_LIMIT_MPS).unwrap();
    let (zones, _) = ZoneSet::load_geojson(&dir.join("zones.geojson")).unwrap();
    let demand = read_scripted(File::open(dir.join("requests.csv")).unwrap()).unwrap();
    Golden { net, zones, demand }
}

pub fn run_golden(g: &Golden, strategy: Strategy, eat: bool) -> RunOutput {
    let fleet = Fleet::new(
        [0, 5, 7].iter().enumerate().map(|(i, &n)| Vehicle::idle_at(VehicleId(i as u32), NodeId(n), 4)).collect(),
    );
    let scenario = Scenario {
        network: &g.net,
        zones: &g.zones,
        adjacency: g.zones.initial_adjacency(),
        traffic: TrafficState::free_flow(),
        fleet,
        demand: g.demand.clone(),
    };
    run(&SimConfig::new(DispatchConfig::new(strategy, eat)), scenario, "golden").unwrap()
}

/// Textbook Dijkstra over the network's outgoing edges; ties on the heap are
/// broken by node id.
pub fn dijkstra_times(net: &RoadNetwork, multiplier: f64, source: NodeId) -> Vec<Option<f64>> {
    #[derive(PartialEq)]
    struct Key(f64, u32);
    impl Eq for Key {}
    impl PartialOrd for Key {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Key {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&o.0).then(self.1.cmp(&o.1))
        }
    }
    let mut dist: Vec<Option<f64>> = vec![None; net.node_count()];
    let mut done = vec![false; net.node_count()];
    let mut heap = BinaryHeap::new();
    dist[source.index()] = Some(0.0);
    heap.push(Reverse(Key(0.0, source.0)));
    while let Some(Reverse(Key(d, u))) = heap.pop() {
        if done[u as usize] {
            continue;
        }
        done[u as usize] = true;
        for e in net.out_edges(NodeId(u)) {
            let nd = d + e.length_m / (e.base_speed_mps * multiplier);
            let v = e.to.index();
            if dist[v].is_none_or(|old| nd < old) {
                dist[v] = Some(nd);
                heap.push(Reverse(Key(nd, e.to.0)));
            }
        }
    }
    dist
}

pub fn random_graph(rng: &mut ChaCha8Rng) -> RoadNetwork {
    let n = rng.random_range(2..=200u32);
    let origin = GeoPoint::new(40.70, -74.00);
    let nodes: Vec<GeoPoint> = (0..n)
        .map(|_| origin.offset_m(rng.random_range(0.0..5000.0), rng.random_range(0.0..5000.0)))
        .collect();
    let mut edges = Vec::new();
    let density = rng.random_range(0.5..4.0);
    for a in 0..n {
        let k = (density * rng.random_range(0.0..2.0f64)).round() as u32;
        for _ in 0..k {
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            let straight = haversine_m(nodes[a as usize], nodes[b as usize]);
            edges.push(RoadEdge {
                from: NodeId(a),
                to: NodeId(b),
                length_m: straight * rng.random_range(1.0..1.6) + 1.0,
                base_speed_mps: rng.random_range(3.0..15.0),
            });
        }
    }
    RoadNetwork::new(nodes, edges, DEFAULT_SPEED_LIMIT_MPS).expect("valid random graph")
}


pub struct Instance {
    pub net: RoadNetwork,
    pub node_zone: Vec<ZoneId>,
    pub zone_count: usize,
    pub fleet: Fleet,
    pub traffic: TrafficState,
    pub now_s: f64,
    pub call: Call,
}

pub fn request(id: u64) -> TripRequest {
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

/// Random grid, block zones, and a fleet in a mix of idle, en-route, busy and
/// busy-with-queue states.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let city = GridCity::new(rng.random_range(2..9), rng.random_range(2..9), rng.random_range(80.0..300.0), rng.random_range(5.0..11.0));
    let net = city.network(DEFAULT_SPEED_LIMIT_MPS).expect("grid network");
    let zones = city.block_zones(rng.random_range(1..4), rng.random_range(1..4), 0.0);
    let node_zone: Vec<ZoneId> = net.locations().iter().map(|&p| zones.locate_or_nearest(p).expect("zones").0).collect();
    let free = TrafficState::free_flow();
    let n = net.node_count() as u32;
    let node = |rng: &mut ChaCha8Rng| NodeId(rng.random_range(0..n));
    let mut vehicles = Vec::new();
    let mut next_request = 1;
    for i in 0..rng.random_range(0..16u32) {
        let mut v = Vehicle::idle_at(VehicleId(i), node(rng), 4);
        let state = rng.random_range(0..4);
        if state > 0 {
            let (p, d) = (node(rng), node(rng));
            let to_pickup = route_astar(&net, &free, 0.0, v.position_at(0.0), p).expect("connected grid");
            let trip = route_astar(&net, &free, 0.0, p, d).expect("connected grid");
            v.assign(&request(next_request), to_pickup, trip, 0.0).expect("idle vehicle");
            next_request += 1;
            if state > 1 {
                v.arrive_at_pickup().expect("en route");
            }
            if state > 2 {
                let end = v.plan().expect("plan").dropoff_node();
                let (p, d) = (node(rng), node(rng));
                let to_pickup = route_astar(&net, &free, 0.0, end, p).expect("connected grid");
                let trip = route_astar(&net, &free, 0.0, p, d).expect("connected grid");
                v.assign(&request(next_request), to_pickup, trip, 0.0).expect("busy vehicle");
                next_request += 1;
            }
        }
        vehicles.push(v);
    }
    let pickup = node(rng);
    Instance {
        zone_count: zones.len(),
        call: Call { request: RequestId(0), pickup, zone: node_zone[pickup.index()] },
        node_zone,
        net,
        fleet: Fleet::new(vehicles),
        traffic: TrafficState::constant(rng.random_range(0.5..=2.0)).expect("valid multiplier"),
        now_s: rng.random_range(0.0..120.0),
    }
}

impl Instance {
    pub fn ctx(&self) -> DispatchContext<'_> {
        DispatchContext { fleet: &self.fleet, node_zone: &self.node_zone, net: &self.net, traffic: &self.traffic, now_s: self.now_s }
    }

    /// Exhaustive scan of the whole candidate pool.
    pub fn global_argmin(&self, strategy: Strategy) -> Option<VehicleId> {
        candidate_pool(&self.fleet, strategy)
            .into_iter()
            .filter_map(|id| estimate_eta(self.fleet.get(id), self.call.pickup, &self.net, &self.traffic, self.now_s))
            .min_by(|a, b| a.eta_s.total_cmp(&b.eta_s).then(a.vehicle.cmp(&b.vehicle)))
            .map(|e| e.vehicle)
    }
}


pub fn random_adjacency(rng: &mut ChaCha8Rng, zones: usize) -> AdjacencySchedule {
    let mut s = AdjacencySchedule::isolated(zones);
    let p = rng.random_range(0.0..0.6);
    for a in 0..zones as u32 {
        for b in a + 1..zones as u32 {
            if rng.random_bool(p) {
                s.add_neighbor(ZoneId(a), ZoneId(b)).expect("valid zones");
            }
        }
    }
    s
}

pub fn assigned_vehicle(o: &Outcome) -> Option<VehicleId> {
    match o {
        Outcome::Assigned(e) => Some(e.vehicle),
        Outcome::Rejected(_) => None,
    }
}
