//! Fixtures shared by the benchmarks.

use amod_core::dispatch::Call;
use amod_core::fleet::{Fleet, Vehicle, VehicleId};
use amod_core::road::{NodeId, RoadNetwork, DEFAULT_SPEED_LIMIT_MPS};
use amod_core::scenario::GridCity;
use amod_core::zones::{ZoneId, ZoneSet};
use amod_core::RequestId;

pub struct CityFixture {
    pub city: GridCity,
    pub network: RoadNetwork,
    pub zones: ZoneSet,
    pub node_zone: Vec<ZoneId>,
}

/// Square grid of `side` x `side` nodes, 200 m apart, split into
/// `zones_per_side`^2 block zones.
pub fn city(side: usize, zones_per_side: usize) -> CityFixture {
    let city = GridCity::new(side, side, 200.0, 11.0);
    let network = city.network(DEFAULT_SPEED_LIMIT_MPS).expect("grid network");
    let zones = city.block_zones(zones_per_side, zones_per_side, 0.0);
    let node_zone = network
        .locations()
        .iter()
        .map(|&p| zones.locate_or_nearest(p).expect("zones cover the grid").0)
        .collect();
    CityFixture { city, network, zones, node_zone }
}

impl CityFixture {
    /// Idle vehicles parked in the far corner, away from [`Self::corner_call`].
    pub fn corner_fleet(&self, size: usize) -> Fleet {
        let n = self.network.node_count() as u32;
        Fleet::new((0..size as u32).map(|i| Vehicle::idle_at(VehicleId(i), NodeId(n - 1 - i % n), 4)).collect())
    }

    pub fn corner_call(&self) -> Call {
        Call { request: RequestId(0), pickup: NodeId(0), zone: self.node_zone[0] }
    }
}
