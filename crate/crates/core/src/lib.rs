//! Discrete-event simulation of on-demand taxi dispatch over a road network
//! partitioned into zones.

pub mod demand;
pub mod dispatch;
pub mod engine;
pub mod fleet;
pub mod geo;
pub mod metrics;
pub mod road;
pub mod scenario;
pub mod zones;

pub use demand::{RequestId, TripRequest};
pub use fleet::{Fleet, Strategy, Vehicle, VehicleId, VehicleStatus};
pub use geo::{BoundingBox, GeoPoint, Polygon};
pub use road::{NodeId, RoadNetwork, Route, TrafficState};
pub use zones::{AdjacencySchedule, ZoneId, ZoneSet};
pub use dispatch::{DispatchConfig, RejectReason};
pub use engine::{run, CallOutcome, CallRecord, RunOutput, Scenario, SimConfig};
pub use metrics::MetricsSummary;
