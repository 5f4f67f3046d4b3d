//! Loading and checking everything a run consumes, plus content
//! fingerprints used to decide whether two runs are comparable.

use std::fmt::{self, Write as _};
use std::fs::File;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use amod_core::demand::{
    generate_demand, parse_trips, read_scripted, write_scripted, CleaningReport, DemandSpec, ParseOptions, Region,
    MAX_PATIENCE_S, TIMESTAMP_FORMAT,
};
use amod_core::fleet::{Fleet, Vehicle, VehicleId};
use amod_core::road::{NodeId, RandomWalk, RoadNetwork, TrafficState};
use amod_core::zones::{AdjacencySchedule, ZoneSet};
use amod_core::TripRequest;

use crate::config::{DemandSection, RunConfig};

/// Share of raw demand rows that may be dropped before validation warns.
const REJECTION_WARN_RATE: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone)]
pub struct Issue {
    pub severity: Severity,
    pub message: String,
}

/// Outcome of loading and checking a config.
#[derive(Debug, Default)]
pub struct Validation {
    pub issues: Vec<Issue>,
    pub notes: Vec<String>,
}

impl Validation {
    fn error(&mut self, message: impl Into<String>) {
        self.issues.push(Issue { severity: Severity::Error, message: message.into() });
    }

    fn warn(&mut self, message: impl Into<String>) {
        self.issues.push(Issue { severity: Severity::Warning, message: message.into() });
    }

    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Error)
    }
}

impl fmt::Display for Validation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in &self.notes {
            writeln!(f, "{n}")?;
        }
        for i in &self.issues {
            let tag = match i.severity {
                Severity::Warning => "warning",
                Severity::Error => "error",
            };
            writeln!(f, "{tag}: {}", i.message)?;
        }
        let errors = self.issues.iter().filter(|i| i.severity == Severity::Error).count();
        write!(f, "{} error(s), {} warning(s)", errors, self.issues.len() - errors)
    }
}

/// SHA-256 digests of the inputs a run is built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprints {
    pub network: String,
    pub zones: String,
    pub demand: String,
    pub fleet: String,
    pub traffic: String,
}

impl Fingerprints {
    /// Short digest over all inputs, stamped into the event log.
    pub fn combined(&self) -> String {
        let joined = [&self.network, &self.zones, &self.demand, &self.fleet, &self.traffic].map(String::as_str).join(":");
        digest(joined.as_bytes())[..16].to_string()
    }

    /// Names of the inputs on which two runs differ.
    pub fn differences(&self, other: &Self) -> Vec<&'static str> {
        [
            ("network", &self.network, &other.network),
            ("zones", &self.zones, &other.zones),
            ("demand", &self.demand, &other.demand),
            ("fleet", &self.fleet, &other.fleet),
            ("traffic", &self.traffic, &other.traffic),
        ]
        .into_iter()
        .filter(|(_, a, b)| a != b)
        .map(|(name, _, _)| name)
        .collect()
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Inputs {
    pub network: RoadNetwork,
    pub zones: ZoneSet,
    pub adjacency: AdjacencySchedule,
    pub demand: Vec<TripRequest>,
    pub fleet: Fleet,
    pub traffic: TrafficState,
    /// Wall-clock time of simulation second 0, when known.
    pub epoch: Option<NaiveDateTime>,
    pub cleaning: Option<CleaningReport>,
    pub fingerprints: Fingerprints,
}

/// Loads every input and runs the integrity checks. Returns the inputs only
/// when no check failed.
pub fn load(cfg: &RunConfig) -> (Option<Inputs>, Validation) {
    let mut v = Validation::default();

    let network = match RoadNetwork::load(&cfg.network.nodes, &cfg.network.edges, cfg.network.speed_limit_mps) {
        Ok(n) => {
            let c = n.connectivity();
            v.notes.push(format!(
                "network: {} nodes, {} edges, {} strongly connected component(s)",
                c.nodes, c.edges, c.components
            ));
            if n.node_count() == 0 {
                v.error(format!("{}: network has no nodes", cfg.network.nodes.display()));
            } else if !c.is_strongly_connected() {
                v.warn(format!(
                    "network is not strongly connected: largest component holds {} of {} nodes",
                    c.largest_component, c.nodes
                ));
            }
            Some(n)
        }
        Err(e) => {
            v.error(e.to_string());
            None
        }
    };

    let zones = match ZoneSet::load_geojson(&cfg.zones.geojson) {
        Ok((z, sched)) if !z.is_empty() => {
            v.notes.push(format!("zones: {} polygons, {} adjacent pairs", z.len(), sched.pairs().len()));
            Some((z, sched))
        }
        Ok(_) => {
            v.error(format!("{}: no zones", cfg.zones.geojson.display()));
            None
        }
        Err(e) => {
            v.error(format!("{}: {e}", cfg.zones.geojson.display()));
            None
        }
    };

    let demand = load_demand(cfg, zones.as_ref().map(|(z, _)| z), &mut v);

    if let (Some((z, _)), Some((trips, _, _))) = (&zones, &demand) {
        let outside = trips.iter().filter(|t| z.locate(t.pickup).is_none() || z.locate(t.dropoff).is_none()).count();
        if outside > 0 {
            v.warn(format!(
                "{outside} of {} requests have an endpoint outside every zone; they are served from the nearest zone",
                trips.len()
            ));
        }
    }

    let fleet = network.as_ref().and_then(|n| build_fleet(cfg, n, &mut v));
    let horizon = demand.as_ref().map_or(0.0, |(trips, _, _)| {
        trips.iter().map(|t| t.request_time_s).fold(0.0, f64::max) + MAX_PATIENCE_S
    });
    let traffic = build_traffic(cfg, horizon, &mut v);

    let (Some(network), Some((zones, adjacency)), Some((demand, epoch, cleaning)), Some(fleet), Some(traffic)) =
        (network, zones, demand, fleet, traffic)
    else {
        return (None, v);
    };
    if v.has_errors() {
        return (None, v);
    }
    let fingerprints = match fingerprint(cfg, &demand, &fleet, &traffic) {
        Ok(f) => f,
        Err(e) => {
            v.error(e);
            return (None, v);
        }
    };
    (Some(Inputs { network, zones, adjacency, demand, fleet, traffic, epoch, cleaning, fingerprints }), v)
}

type LoadedDemand = (Vec<TripRequest>, Option<NaiveDateTime>, Option<CleaningReport>);

fn parse_epoch(text: &Option<String>, v: &mut Validation) -> Option<NaiveDateTime> {
    let text = text.as_ref()?;
    match NaiveDateTime::parse_from_str(text, TIMESTAMP_FORMAT) {
        Ok(t) => Some(t),
        Err(e) => {
            v.error(format!("demand.epoch \"{text}\": {e} (expected {TIMESTAMP_FORMAT})"));
            None
        }
    }
}

fn load_demand(cfg: &RunConfig, zones: Option<&ZoneSet>, v: &mut Validation) -> Option<LoadedDemand> {
    match &cfg.demand {
        DemandSection::Csv { path, seed, capacity, aliases } => {
            let file = File::open(path).map_err(|e| v.error(format!("cannot read {}: {e}", path.display()))).ok()?;
            let opts = ParseOptions { capacity: *capacity, seed: *seed, aliases: aliases.clone(), ..Default::default() };
            match parse_trips(file, &opts) {
                Ok((trips, report)) => {
                    v.notes.push(format!("demand: {} of {} rows kept", report.rows_kept, report.rows_read));
                    if report.rejection_rate() > REJECTION_WARN_RATE {
                        let mut reasons = String::new();
                        for (reason, n) in &report.rejected {
                            let _ = write!(reasons, " {}={n}", reason.label());
                        }
                        v.warn(format!(
                            "{}: {:.1}% of rows rejected:{reasons}",
                            path.display(),
                            100.0 * report.rejection_rate()
                        ));
                    }
                    if trips.is_empty() {
                        v.error(format!("{}: no usable trips", path.display()));
                    }
                    Some((trips, report.epoch, Some(report)))
                }
                Err(e) => {
                    v.error(format!("{}: {e}", path.display()));
                    None
                }
            }
        }
        DemandSection::Scripted { path, epoch } => {
            let epoch = parse_epoch(epoch, v);
            let file = File::open(path).map_err(|e| v.error(format!("cannot read {}: {e}", path.display()))).ok()?;
            match read_scripted(file) {
                Ok(trips) => {
                    v.notes.push(format!("demand: {} scripted requests", trips.len()));
                    Some((trips, epoch, None))
                }
                Err(e) => {
                    v.error(format!("{}: {e}", path.display()));
                    None
                }
            }
        }
        DemandSection::Synthetic { seed, rate_per_hour, duration_s, party_weights, epoch } => {
            let epoch = parse_epoch(epoch, v);
            let spec = DemandSpec { rate_per_hour: *rate_per_hour, duration_s: *duration_s, party_weights: party_weights.clone() };
            match generate_demand(&spec, Region::Zones(zones?), *seed) {
                Ok(trips) => {
                    v.notes.push(format!("demand: {} synthetic requests", trips.len()));
                    Some((trips, epoch, None))
                }
                Err(e) => {
                    v.error(format!("demand: {e}"));
                    None
                }
            }
        }
    }
}

fn build_fleet(cfg: &RunConfig, net: &RoadNetwork, v: &mut Validation) -> Option<Fleet> {
    let f = &cfg.fleet;
    if f.capacity == 0 {
        v.error("fleet.capacity must be at least 1");
        return None;
    }
    match &f.start_nodes {
        None => Some(Fleet::place_uniform(f.size, f.capacity, net, f.seed)),
        Some(nodes) => {
            if nodes.len() != f.size {
                v.error(format!("fleet.start_nodes lists {} nodes for {} vehicles", nodes.len(), f.size));
                return None;
            }
            if let Some(bad) = nodes.iter().find(|&&n| n as usize >= net.node_count()) {
                v.error(format!("fleet.start_nodes: node {bad} is not in the network"));
                return None;
            }
            Some(Fleet::new(
                nodes.iter().enumerate().map(|(i, &n)| Vehicle::idle_at(VehicleId(i as u32), NodeId(n), f.capacity)).collect(),
            ))
        }
    }
}

fn build_traffic(cfg: &RunConfig, horizon_s: f64, v: &mut Validation) -> Option<TrafficState> {
    let base = TrafficState::from_schedule(cfg.traffic.schedule.clone()).map_err(|e| v.error(format!("traffic.schedule: {e}"))).ok()?;
    match cfg.traffic.random_walk {
        None => Some(base),
        Some(w) => base
            .with_random_walk(&RandomWalk { seed: w.seed, step_s: w.step_s, sigma: w.sigma }, w.horizon_s.unwrap_or(horizon_s))
            .map_err(|e| v.error(format!("traffic.random_walk: {e}")))
            .ok(),
    }
}

fn fingerprint(cfg: &RunConfig, demand: &[TripRequest], fleet: &Fleet, traffic: &TrafficState) -> Result<Fingerprints, String> {
    let read = |p: &std::path::Path| std::fs::read(p).map_err(|e| format!("cannot read {}: {e}", p.display()));
    let mut net = read(&cfg.network.nodes)?;
    net.extend(read(&cfg.network.edges)?);
    net.extend(format!("speed_limit_mps={:?}", cfg.network.speed_limit_mps).bytes());

    let mut trips = Vec::new();
    write_scripted(demand, &mut trips).map_err(|e| format!("demand: {e}"))?;

    let mut vehicles = String::new();
    for veh in fleet.vehicles() {
        let _ = writeln!(vehicles, "{} {} {}", veh.id, veh.position_at(0.0), veh.capacity);
    }

    let mut breakpoints = String::new();
    for (t, m) in traffic.breakpoints() {
        let _ = writeln!(breakpoints, "{t:?} {m:?}");
    }

    Ok(Fingerprints {
        network: digest(&net),
        zones: digest(&read(&cfg.zones.geojson)?),
        demand: digest(&trips),
        fleet: digest(vehicles.as_bytes()),
        traffic: digest(breakpoints.as_bytes()),
    })
}
