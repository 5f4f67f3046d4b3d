//! Directed road graph, piecewise-constant traffic and shortest-time routing.
//!
//! Routing is time-frozen: the traffic multiplier in force at the query
//! instant is applied to every edge of the route.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use petgraph::graph::DiGraph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_m, GeoPoint, NodeIndex};

/// 25 mph.
pub const DEFAULT_SPEED_LIMIT_MPS: f64 = 11.176;

/// Edges may be up to 1% shorter than the straight line between their ends.
const LENGTH_TOLERANCE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("{file}:{line}: edge references unknown node {node}")]
    DanglingEndpoint { file: String, line: usize, node: u32 },
    #[error("cannot read {file}: {source}")]
    Io { file: String, source: std::io::Error },
    #[error("node ids must be dense 0..{count}; id {id} is missing or duplicated")]
    SparseIds { count: usize, id: u32 },
    #[error("speed limit must be positive and finite, got {0}")]
    BadSpeedLimit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoadEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    pub base_speed_mps: f64,
}

/// Strongly-connected-component summary produced at load time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityReport {
    pub nodes: usize,
    pub edges: usize,
    pub components: usize,
    pub largest_component: usize,
}

impl ConnectivityReport {
    pub fn is_strongly_connected(&self) -> bool {
        self.components <= 1
    }
}

impl fmt::Display for ConnectivityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes = {}", self.nodes)?;
        writeln!(f, "edges = {}", self.edges)?;
        writeln!(f, "strongly_connected_components = {}", self.components)?;
        writeln!(f, "largest_component = {}", self.largest_component)
    }
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<GeoPoint>,
    // CSR layout: edges of node i are edges[offsets[i]..offsets[i + 1]]
    offsets: Vec<usize>,
    edges: Vec<RoadEdge>,
    speed_limit_mps: f64,
    index: NodeIndex,
    connectivity: ConnectivityReport,
}

impl RoadNetwork {
    /// Builds a validated network. Node `i` of `nodes` has id `i`; edge speeds
    /// above the limit are clamped.
    pub fn new(
        nodes: Vec<GeoPoint>,
        edges: Vec<RoadEdge>,
        speed_limit_mps: f64,
    ) -> Result<Self, NetworkError> {
        let rows = edges.into_iter().enumerate().map(|(i, e)| (i + 1, e)).collect();
        Self::assemble(nodes, rows, speed_limit_mps, "<edges>")
    }

    fn assemble(
        nodes: Vec<GeoPoint>,
        rows: Vec<(usize, RoadEdge)>,
        speed_limit_mps: f64,
        edges_name: &str,
    ) -> Result<Self, NetworkError> {
        if !(speed_limit_mps > 0.0 && speed_limit_mps.is_finite()) {
            return Err(NetworkError::BadSpeedLimit(speed_limit_mps));
        }
        let n = nodes.len();
        let mut edges = Vec::with_capacity(rows.len());
        for (line, mut e) in rows {
            for end in [e.from, e.to] {
                if end.index() >= n {
                    return Err(NetworkError::DanglingEndpoint {
                        file: edges_name.to_string(),
                        line,
                        node: end.0,
                    });
                }
            }
            let bad = |message: String| NetworkError::Parse {
                file: edges_name.to_string(),
                line,
                message,
            };
            if !(e.length_m > 0.0 && e.length_m.is_finite()) {
                return Err(bad(format!("edge length must be positive, got {}", e.length_m)));
            }
            if !(e.base_speed_mps > 0.0 && e.base_speed_mps.is_finite()) {
                return Err(bad(format!("edge speed must be positive, got {}", e.base_speed_mps)));
            }
            let straight = haversine_m(nodes[e.from.index()], nodes[e.to.index()]);
            if e.length_m < LENGTH_TOLERANCE * straight {
                return Err(bad(format!(
                    "edge length {} m is shorter than the straight-line distance {:.3} m",
                    e.length_m, straight
                )));
            }
            e.base_speed_mps = e.base_speed_mps.min(speed_limit_mps);
            edges.push(e);
        }
        edges.sort_by_key(|e| (e.from, e.to));
        let mut offsets = vec![0usize; n + 1];
        for e in &edges {
            offsets[e.from.index() + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let connectivity = connectivity_report(n, &edges);
        if !connectivity.is_strongly_connected() {
            log::warn!(
                "road network has {} strongly connected components (largest has {} of {} nodes)",
                connectivity.components,
                connectivity.largest_component,
                n
            );
        }
        let index = NodeIndex::build(&nodes);
        Ok(Self { nodes, offsets, edges, speed_limit_mps, index, connectivity })
    }

    /// Reads the whitespace-separated node and edge files.
    pub fn load(
        nodes_path: &Path,
        edges_path: &Path,
        speed_limit_mps: f64,
    ) -> Result<Self, NetworkError> {
        let open = |p: &Path| {
            File::open(p)
                .map(BufReader::new)
                .map_err(|source| NetworkError::Io { file: p.display().to_string(), source })
        };
        Self::parse(
            open(nodes_path)?,
            &nodes_path.display().to_string(),
            open(edges_path)?,
            &edges_path.display().to_string(),
            speed_limit_mps,
        )
    }

    pub fn parse(
        nodes: impl BufRead,
        nodes_name: &str,
        edges: impl BufRead,
        edges_name: &str,
        speed_limit_mps: f64,
    ) -> Result<Self, NetworkError> {
        let mut points: Vec<Option<GeoPoint>> = Vec::new();
        for (line_no, fields) in data_rows(nodes, nodes_name)? {
            let bad = |message: String| NetworkError::Parse {
                file: nodes_name.to_string(),
                line: line_no,
                message,
            };
            let [id, lat, lon] = fields.as_slice() else {
                return Err(bad(format!("expected `id lat lon`, got {} fields", fields.len())));
            };
            let id: u32 = id.parse().map_err(|_| bad(format!("bad node id `{id}`")))?;
            let lat: f64 = lat.parse().map_err(|_| bad(format!("bad latitude `{lat}`")))?;
            let lon: f64 = lon.parse().map_err(|_| bad(format!("bad longitude `{lon}`")))?;
            let p = GeoPoint::checked(lat, lon).map_err(|e| bad(e.to_string()))?;
            let slot = id as usize;
            if slot >= points.len() {
                points.resize(slot + 1, None);
            }
            if points[slot].replace(p).is_some() {
                return Err(bad(format!("duplicate node id {id}")));
            }
        }
        let count = points.len();
        let nodes = points
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or(NetworkError::SparseIds { count, id: i as u32 }))
            .collect::<Result<Vec<_>, _>>()?;

        let mut rows = Vec::new();
        for (line_no, fields) in data_rows(edges, edges_name)? {
            let bad = |message: String| NetworkError::Parse {
                file: edges_name.to_string(),
                line: line_no,
                message,
            };
            let [from, to, length, speed] = fields.as_slice() else {
                return Err(bad(format!(
                    "expected `from_id to_id length_m speed_mps`, got {} fields",
                    fields.len()
                )));
            };
            let from: u32 = from.parse().map_err(|_| bad(format!("bad node id `{from}`")))?;
            let to: u32 = to.parse().map_err(|_| bad(format!("bad node id `{to}`")))?;
            let length_m: f64 = length.parse().map_err(|_| bad(format!("bad length `{length}`")))?;
            let speed: f64 = speed.parse().map_err(|_| bad(format!("bad speed `{speed}`")))?;
            rows.push((
                line_no,
                RoadEdge { from: NodeId(from), to: NodeId(to), length_m, base_speed_mps: speed },
            ));
        }
        Self::assemble(nodes, rows, speed_limit_mps, edges_name)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn location(&self, node: NodeId) -> GeoPoint {
        self.nodes[node.index()]
    }

    pub fn locations(&self) -> &[GeoPoint] {
        &self.nodes
    }

    pub fn edges(&self) -> &[RoadEdge] {
        &self.edges
    }

    pub fn out_edges(&self, node: NodeId) -> &[RoadEdge] {
        &self.edges[self.offsets[node.index()]..self.offsets[node.index() + 1]]
    }

    pub fn speed_limit_mps(&self) -> f64 {
        self.speed_limit_mps
    }

    pub fn connectivity(&self) -> &ConnectivityReport {
        &self.connectivity
    }

    pub fn nearest_node(&self, p: GeoPoint, max_radius_m: f64) -> Option<NodeId> {
        self.index.nearest(p, max_radius_m).map(NodeId)
    }
}

fn data_rows(
    reader: impl BufRead,
    name: &str,
) -> Result<Vec<(usize, Vec<String>)>, NetworkError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| NetworkError::Io { file: name.to_string(), source })?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        rows.push((i + 1, body.split_whitespace().map(str::to_string).collect()));
    }
    Ok(rows)
}

fn connectivity_report(n: usize, edges: &[RoadEdge]) -> ConnectivityReport {
    let mut g = DiGraph::<(), ()>::with_capacity(n, edges.len());
    for _ in 0..n {
        g.add_node(());
    }
    for e in edges {
        g.add_edge(e.from.0.into(), e.to.0.into(), ());
    }
    let sccs = petgraph::algo::kosaraju_scc(&g);
    ConnectivityReport {
        nodes: n,
        edges: edges.len(),
        components: sccs.len(),
        largest_component: sccs.iter().map(Vec::len).max().unwrap_or(0),
    }
}

/// Highest multiplier a traffic state may carry.
pub const MAX_MULTIPLIER: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("traffic multiplier {0} outside (0, 2]")]
    BadMultiplier(f64),
    #[error("traffic schedule must be sorted by start time")]
    Unsorted,
    #[error("random walk needs step_s > 0 and sigma >= 0")]
    BadRandomWalk,
}

/// Global piecewise-constant speed multiplier. Before the first breakpoint
/// the multiplier is 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrafficState {
    breakpoints: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomWalk {
    pub seed: u64,
    pub step_s: f64,
    pub sigma: f64,
}

const WALK_MIN: f64 = 0.5;
const WALK_MAX: f64 = 1.5;

impl TrafficState {
    pub fn free_flow() -> Self {
        Self::default()
    }

    pub fn constant(multiplier: f64) -> Result<Self, TrafficError> {
        Self::from_schedule(vec![(f64::NEG_INFINITY, multiplier)])
    }

    pub fn from_schedule(breakpoints: Vec<(f64, f64)>) -> Result<Self, TrafficError> {
        if let Some(&(_, m)) = breakpoints.iter().find(|(_, m)| !valid_multiplier(*m)) {
            return Err(TrafficError::BadMultiplier(m));
        }
        if breakpoints.windows(2).any(|w| w[0].0 > w[1].0) {
            return Err(TrafficError::Unsorted);
        }
        Ok(Self { breakpoints })
    }

    pub fn multiplier_at(&self, t: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&(start, _)| start <= t);
        if i == 0 {
            1.0
        } else {
            self.breakpoints[i - 1].1
        }
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    /// Instants at which the multiplier may change, restricted to `(after, until]`.
    pub fn change_times(&self, after: f64, until: f64) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .breakpoints
            .iter()
            .map(|&(t, _)| t)
            .filter(|&t| t > after && t <= until)
            .collect();
        times.dedup();
        times
    }

    /// Multiplies the schedule by a seeded random walk sampled every `step_s`
    /// over `[0, horizon_s]`. The walk factor is clamped to [0.5, 1.5] and the
    /// product to the (0, 2] range.
    pub fn with_random_walk(&self, walk: &RandomWalk, horizon_s: f64) -> Result<Self, TrafficError> {
        if !(walk.step_s > 0.0 && walk.sigma >= 0.0 && walk.sigma.is_finite()) {
            return Err(TrafficError::BadRandomWalk);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(walk.seed);
        rng.set_stream(STREAM_TRAFFIC);
        let noise = Normal::new(0.0, walk.sigma).map_err(|_| TrafficError::BadRandomWalk)?;
        let mut factors = vec![(0.0, 1.0)];
        let mut level = 1.0f64;
        let mut t = walk.step_s;
        while t <= horizon_s {
            level = (level + noise.sample(&mut rng)).clamp(WALK_MIN, WALK_MAX);
            factors.push((t, level));
            t += walk.step_s;
        }
        let mut times: Vec<f64> = self
            .breakpoints
            .iter()
            .map(|&(t, _)| t)
            .chain(factors.iter().map(|&(t, _)| t))
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let walk_at = |t: f64| {
            let i = factors.partition_point(|&(s, _)| s <= t);
            if i == 0 {
                1.0
            } else {
                factors[i - 1].1
            }
        };
        let breakpoints = times
            .into_iter()
            .map(|t| (t, (self.multiplier_at(t) * walk_at(t)).min(MAX_MULTIPLIER)))
            .collect();
        Ok(Self { breakpoints })
    }
}

pub(crate) const STREAM_TRAFFIC: u64 = 3;

fn valid_multiplier(m: f64) -> bool {
    m > 0.0 && m <= MAX_MULTIPLIER
}

/// A routed path with per-node arrival offsets from the route start.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    nodes: Vec<NodeId>,
    arrival_s: Vec<f64>,
    total_length_m: f64,
}

impl Route {
    pub fn stationary(node: NodeId) -> Self {
        Self { nodes: vec![node], arrival_s: vec![0.0], total_length_m: 0.0 }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn arrival_offsets(&self) -> &[f64] {
        &self.arrival_s
    }

    pub fn origin(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.nodes.last().expect("route has at least one node")
    }

    pub fn total_time_s(&self) -> f64 {
        *self.arrival_s.last().expect("route has at least one node")
    }

    pub fn total_length_m(&self) -> f64 {
        self.total_length_m
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Last node passed `elapsed_s` seconds after leaving the origin.
    pub fn node_at(&self, elapsed_s: f64) -> NodeId {
        let i = self.arrival_s.partition_point(|&t| t <= elapsed_s);
        self.nodes[i.saturating_sub(1)]
    }
}

#[derive(Clone, Copy)]
struct Frontier {
    f: f64,
    g: f64,
    node: u32,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // min-heap on (f, node id)
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.node.cmp(&self.node))
    }
}

fn best_first(
    net: &RoadNetwork,
    multiplier: f64,
    src: NodeId,
    dst: NodeId,
    heuristic: impl Fn(NodeId) -> f64,
) -> Option<Route> {
    let n = net.node_count();
    if src.index() >= n || dst.index() >= n {
        return None;
    }
    let mut g = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<(u32, usize)>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    g[src.index()] = 0.0;
    heap.push(Frontier { f: heuristic(src), g: 0.0, node: src.0 });
    while let Some(Frontier { g: gn, node, .. }) = heap.pop() {
        let u = node as usize;
        if gn > g[u] {
            continue;
        }
        if node == dst.0 {
            break;
        }
        for (k, e) in net.out_edges(NodeId(node)).iter().enumerate() {
            let cost = e.length_m / (e.base_speed_mps * multiplier);
            let candidate = gn + cost;
            let v = e.to.index();
            if candidate < g[v] {
                g[v] = candidate;
                pred[v] = Some((node, net.offsets[u] + k));
                heap.push(Frontier { f: candidate + heuristic(e.to), g: candidate, node: e.to.0 });
            }
        }
    }
    if !g[dst.index()].is_finite() {
        return None;
    }
    let mut nodes = vec![dst];
    let mut edge_ids = Vec::new();
    let mut cur = dst.index();
    while let Some((p, eid)) = pred[cur] {
        if cur == src.index() {
            break;
        }
        nodes.push(NodeId(p));
        edge_ids.push(eid);
        cur = p as usize;
    }
    nodes.reverse();
    edge_ids.reverse();
    let mut arrival_s = Vec::with_capacity(nodes.len());
    arrival_s.push(0.0);
    let mut total_length_m = 0.0;
    let mut t = 0.0;
    for eid in edge_ids {
        let e = &net.edges[eid];
        t += e.length_m / (e.base_speed_mps * multiplier);
        total_length_m += e.length_m;
        arrival_s.push(t);
    }
    Some(Route { nodes, arrival_s, total_length_m })
}

/// Time-optimal route under the multiplier in force at `at`, or `None` when
/// `dst` is unreachable.
pub fn route_astar(
    net: &RoadNetwork,
    traffic: &TrafficState,
    at: f64,
    src: NodeId,
    dst: NodeId,
) -> Option<Route> {
    let multiplier = traffic.multiplier_at(at);
    let target = net.location(dst);
    // straight-line time at the top effective speed, shrunk by the
    // edge-length tolerance so the bound stays below every edge cost
    let scale = LENGTH_TOLERANCE / (net.speed_limit_mps * multiplier);
    let h = |n: NodeId| haversine_m(net.location(n), target) * scale;
    let route = best_first(net, multiplier, src, dst, h)?;
    #[cfg(debug_assertions)]
    {
        let total = route.total_time_s();
        for (node, t) in route.nodes.iter().zip(&route.arrival_s) {
            let remaining = total - t;
            debug_assert!(
                h(*node) <= remaining + 1e-9 * total.max(1.0),
                "inadmissible heuristic at node {node}: {} > {remaining}",
                h(*node)
            );
        }
    }
    Some(route)
}

/// Plain Dijkstra over the same cost model; the exact fallback for A*.
pub fn route_dijkstra(
    net: &RoadNetwork,
    traffic: &TrafficState,
    at: f64,
    src: NodeId,
    dst: NodeId,
) -> Option<Route> {
    best_first(net, traffic.multiplier_at(at), src, dst, |_| 0.0)
}

pub fn travel_time_s(
    net: &RoadNetwork,
    traffic: &TrafficState,
    at: f64,
    src: NodeId,
    dst: NodeId,
) -> Option<f64> {
    route_astar(net, traffic, at, src, dst).map(|r| r.total_time_s())
}
