//! Synthetic grid cities for desk-scale experiments, tests and benchmarks.

use crate::demand::{generate_demand, DemandError, DemandSpec, Region};
use crate::dispatch::DispatchConfig;
use crate::engine::{run, EngineError, RunOutput, Scenario, SimConfig};
use crate::fleet::Fleet;
use crate::geo::{BoundingBox, GeoPoint, Polygon};
use crate::road::{NetworkError, NodeId, RandomWalk, RoadEdge, RoadNetwork, TrafficError, TrafficState};
use crate::zones::ZoneSet;

/// Rectangular street grid with two-way edges between 4-neighbours.
/// Node `(row, col)` has id `row * cols + col`; rows run north, columns east.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCity {
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    pub speed_mps: f64,
    pub origin: GeoPoint,
}

impl GridCity {
    pub fn new(rows: usize, cols: usize, spacing_m: f64, speed_mps: f64) -> Self {
        Self { rows, cols, spacing_m, speed_mps, origin: GeoPoint::new(40.70, -74.00) }
    }

    pub fn node_id(&self, row: usize, col: usize) -> NodeId {
        NodeId((row * self.cols + col) as u32)
    }

    /// Location at fractional grid coordinates.
    pub fn point(&self, row: f64, col: f64) -> GeoPoint {
        self.origin.offset_m(col * self.spacing_m, row * self.spacing_m)
    }

    pub fn nodes(&self) -> Vec<GeoPoint> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .map(|(r, c)| self.point(r as f64, c as f64))
            .collect()
    }

    pub fn edges(&self) -> Vec<RoadEdge> {
        let mut out = Vec::new();
        let edge = |a: NodeId, b: NodeId| RoadEdge {
            from: a,
            to: b,
            length_m: self.spacing_m,
            base_speed_mps: self.speed_mps,
        };
        for r in 0..self.rows {
            for c in 0..self.cols {
                let here = self.node_id(r, c);
                if c + 1 < self.cols {
                    let east = self.node_id(r, c + 1);
                    out.push(edge(here, east));
                    out.push(edge(east, here));
                }
                if r + 1 < self.rows {
                    let north = self.node_id(r + 1, c);
                    out.push(edge(here, north));
                    out.push(edge(north, here));
                }
            }
        }
        out
    }

    pub fn network(&self, speed_limit_mps: f64) -> Result<RoadNetwork, NetworkError> {
        RoadNetwork::new(self.nodes(), self.edges(), speed_limit_mps)
    }

    /// Extent of the grid padded by half a block on every side.
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::around(&[
            self.point(-0.5, -0.5),
            self.point(self.rows as f64 - 0.5, self.cols as f64 - 0.5),
        ])
    }

    /// Axis-aligned rectangle in fractional grid coordinates.
    pub fn rectangle(&self, row0: f64, col0: f64, row1: f64, col1: f64) -> Polygon {
        Polygon::new(vec![
            self.point(row0, col0),
            self.point(row0, col1),
            self.point(row1, col1),
            self.point(row1, col0),
        ])
        .expect("rectangle is a simple polygon")
    }

    /// Tiles the padded grid into `zone_rows x zone_cols` rectangular zones,
    /// numbered row-major from the south-west corner. A positive `gap_blocks`
    /// shrinks every tile so that neighbouring tiles no longer touch.
    pub fn block_zones(&self, zone_rows: usize, zone_cols: usize, gap_blocks: f64) -> ZoneSet {
        let height = self.rows as f64 / zone_rows as f64;
        let width = self.cols as f64 / zone_cols as f64;
        let half = gap_blocks / 2.0;
        let mut polys = Vec::with_capacity(zone_rows * zone_cols);
        for zr in 0..zone_rows {
            for zc in 0..zone_cols {
                let r0 = -0.5 + zr as f64 * height + half;
                let c0 = -0.5 + zc as f64 * width + half;
                let r1 = -0.5 + (zr + 1) as f64 * height - half;
                let c1 = -0.5 + (zc + 1) as f64 * width - half;
                polys.push((format!("block-{zr}-{zc}"), self.rectangle(r0, c0, r1, c1)));
            }
        }
        ZoneSet::from_polygons(polys)
    }
}

/// A seeded synthetic city: grid network, block zones, uniformly placed
/// fleet, Poisson demand and optionally a random-walk traffic multiplier.
/// Every random draw derives from the replication seed, so runs of different
/// dispatchers with the same seed see the same demand, fleet and traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct DeskExperiment {
    pub city: GridCity,
    pub zone_rows: usize,
    pub zone_cols: usize,
    pub zone_gap_blocks: f64,
    pub vehicles: usize,
    pub capacity: u32,
    pub demand: DemandSpec,
    /// `(step_s, sigma)` of the traffic walk.
    pub traffic_walk: Option<(f64, f64)>,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Inputs of one replication, before the dispatcher is chosen.
pub struct Replication {
    pub network: RoadNetwork,
    pub zones: ZoneSet,
    pub traffic: TrafficState,
    pub fleet: Fleet,
    pub demand: Vec<crate::demand::TripRequest>,
}

impl DeskExperiment {
    /// 20 x 20 blocks of 200 m, nine zones, 30 vehicles, 90 calls per hour
    /// for four hours, traffic re-drawn every ten minutes.
    pub fn standard() -> Self {
        Self {
            city: GridCity::new(20, 20, 200.0, 11.0),
            zone_rows: 3,
            zone_cols: 3,
            zone_gap_blocks: 0.0,
            vehicles: 30,
            capacity: 4,
            demand: DemandSpec { rate_per_hour: 90.0, duration_s: 4.0 * 3600.0, party_weights: vec![6.0, 2.0, 1.0, 1.0] },
            traffic_walk: Some((600.0, 0.1)),
        }
    }

    pub fn replication(&self, seed: u64) -> Result<Replication, ExperimentError> {
        let network = self.city.network(crate::road::DEFAULT_SPEED_LIMIT_MPS)?;
        let zones = self.city.block_zones(self.zone_rows, self.zone_cols, self.zone_gap_blocks);
        let demand = generate_demand(&self.demand, Region::Zones(&zones), seed)?;
        let fleet = Fleet::place_uniform(self.vehicles, self.capacity, &network, seed);
        let traffic = match self.traffic_walk {
            Some((step_s, sigma)) => TrafficState::free_flow()
                .with_random_walk(&RandomWalk { seed, step_s, sigma }, self.demand.duration_s + 3600.0)?,
            None => TrafficState::free_flow(),
        };
        Ok(Replication { network, zones, traffic, fleet, demand })
    }

    pub fn run(&self, dispatch: DispatchConfig, seed: u64) -> Result<RunOutput, ExperimentError> {
        let r = self.replication(seed)?;
        let scenario = Scenario {
            network: &r.network,
            zones: &r.zones,
            adjacency: r.zones.initial_adjacency(),
            traffic: r.traffic,
            fleet: r.fleet,
            demand: r.demand,
        };
        Ok(run(&SimConfig::new(dispatch), scenario, &format!("desk-{seed}"))?)
    }
}
