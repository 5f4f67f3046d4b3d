//! Dispatching zones and the mutable adjacency schedule.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::geo::{
    haversine_m, point_in_polygon, segments_cross, BoundingBox, GeoError, GeoPoint, Polygon,
};

/// Vertices closer than this to another zone's boundary make the zones neighbors.
pub const ADJACENCY_TOLERANCE_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ZoneId(pub u32);

impl ZoneId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Error)]
pub enum ZoneError {
    #[error("cannot read {file}: {message}")]
    Read { file: String, message: String },
    #[error("feature {feature}: unsupported geometry type `{kind}` (only Polygon is accepted)")]
    NotPolygon { feature: usize, kind: String },
    #[error("feature {feature} ({name}): {source}")]
    BadRing { feature: usize, name: String, source: GeoError },
    #[error("unknown zone {0}")]
    UnknownZone(ZoneId),
    #[error("a zone cannot neighbor itself ({0})")]
    SelfLink(ZoneId),
}

#[derive(Debug, Clone)]
pub struct Zone {
    pub id: ZoneId,
    pub name: String,
    pub boundary: Polygon,
}

/// Zones in id order with their precomputed centroids.
#[derive(Debug, Clone)]
pub struct ZoneSet {
    zones: Vec<Zone>,
    centroids: Vec<GeoPoint>,
}

impl ZoneSet {
    /// Reassigns ids by position.
    pub fn new(mut zones: Vec<Zone>) -> Self {
        for (i, z) in zones.iter_mut().enumerate() {
            z.id = ZoneId(i as u32);
        }
        let centroids = zones.iter().map(|z| z.boundary.centroid()).collect();
        Self { zones, centroids }
    }

    pub fn from_polygons(polys: impl IntoIterator<Item = (String, Polygon)>) -> Self {
        Self::new(
            polys
                .into_iter()
                .map(|(name, boundary)| Zone { id: ZoneId(0), name, boundary })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn get(&self, id: ZoneId) -> Option<&Zone> {
        self.zones.get(id.index())
    }

    pub fn ids(&self) -> impl Iterator<Item = ZoneId> + '_ {
        (0..self.zones.len() as u32).map(ZoneId)
    }

    pub fn bbox(&self) -> Option<BoundingBox> {
        self.zones.iter().map(|z| z.boundary.bbox()).reduce(|a, b| a.union(&b))
    }

    /// Zone containing `p`; boundary points are inside and overlaps resolve to
    /// the lowest id.
    pub fn locate(&self, p: GeoPoint) -> Option<ZoneId> {
        self.zones.iter().find(|z| point_in_polygon(p, &z.boundary)).map(|z| z.id)
    }

    /// `locate`, falling back to the zone with the nearest centroid. The flag
    /// reports whether the fallback was used.
    pub fn locate_or_nearest(&self, p: GeoPoint) -> Option<(ZoneId, bool)> {
        if let Some(z) = self.locate(p) {
            return Some((z, false));
        }
        self.centroids
            .iter()
            .enumerate()
            .map(|(i, c)| (haversine_m(p, *c), i))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, i)| (ZoneId(i as u32), true))
    }

    /// Initial schedule from geometry: zones are neighbors when a vertex of one
    /// lies within 1 m of the other's boundary or their interiors overlap.
    pub fn initial_adjacency(&self) -> AdjacencySchedule {
        let mut sched = AdjacencySchedule::isolated(self.len());
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                if polygons_adjacent(&self.zones[i].boundary, &self.zones[j].boundary) {
                    sched.link(ZoneId(i as u32), ZoneId(j as u32));
                }
            }
        }
        sched.revision = 0;
        sched
    }

    pub fn load_geojson(path: &Path) -> Result<(Self, AdjacencySchedule), ZoneError> {
        let text = std::fs::read_to_string(path).map_err(|e| ZoneError::Read {
            file: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse_geojson(&text).map_err(|e| match e {
            ZoneError::Read { message, .. } => ZoneError::Read { file: path.display().to_string(), message },
            other => other,
        })
    }

    pub fn parse_geojson(text: &str) -> Result<(Self, AdjacencySchedule), ZoneError> {
        let fc: FeatureCollection = serde_json::from_str(text).map_err(|e| ZoneError::Read {
            file: "<geojson>".into(),
            message: e.to_string(),
        })?;
        let mut polys = Vec::with_capacity(fc.features.len());
        for (i, f) in fc.features.into_iter().enumerate() {
            let name = f
                .properties
                .as_ref()
                .and_then(|p| p.get("name"))
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .unwrap_or_else(|| format!("zone-{i}"));
            if f.geometry.kind != "Polygon" {
                return Err(ZoneError::NotPolygon { feature: i, kind: f.geometry.kind });
            }
            let rings: Vec<Vec<Vec<f64>>> = serde_json::from_value(f.geometry.coordinates)
                .map_err(|e| ZoneError::Read { file: "<geojson>".into(), message: format!("feature {i}: {e}") })?;
            let exterior = rings.into_iter().next().unwrap_or_default();
            let ring = exterior
                .iter()
                .map(|c| match c.as_slice() {
                    [lon, lat, ..] => Ok(GeoPoint::new(*lat, *lon)),
                    _ => Err(GeoError::TooFewVertices(0)),
                })
                .collect::<Result<Vec<_>, _>>()
                .and_then(Polygon::new)
                .map_err(|source| ZoneError::BadRing { feature: i, name: name.clone(), source })?;
            polys.push((name, ring));
        }
        let set = Self::from_polygons(polys);
        let sched = set.initial_adjacency();
        Ok((set, sched))
    }

    /// Serializes the zones back into a GeoJSON FeatureCollection.
    pub fn to_geojson(&self) -> String {
        let features: Vec<serde_json::Value> = self
            .zones
            .iter()
            .map(|z| {
                let mut ring: Vec<[f64; 2]> =
                    z.boundary.vertices().iter().map(|p| [p.lon, p.lat]).collect();
                ring.push(ring[0]);
                serde_json::json!({
                    "type": "Feature",
                    "properties": { "name": z.name },
                    "geometry": { "type": "Polygon", "coordinates": [ring] },
                })
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "type": "FeatureCollection",
            "features": features,
        }))
        .expect("geojson serializes")
    }
}

#[derive(Deserialize)]
struct FeatureCollection {
    features: Vec<Feature>,
}

#[derive(Deserialize)]
struct Feature {
    geometry: Geometry,
    properties: Option<serde_json::Map<String, serde_json::Value>>,
}

#[derive(Deserialize)]
struct Geometry {
    #[serde(rename = "type")]
    kind: String,
    coordinates: serde_json::Value,
}

/// The adjacency rule. Swapping this function swaps the rule.
pub fn polygons_adjacent(a: &Polygon, b: &Polygon) -> bool {
    let (ba, bb) = (a.bbox(), b.bbox());
    // cheap reject: bounding boxes more than ~1 m apart in both axes
    let pad = 2e-5;
    if ba.max_lat + pad < bb.min_lat
        || bb.max_lat + pad < ba.min_lat
        || ba.max_lon + pad < bb.min_lon
        || bb.max_lon + pad < ba.min_lon
    {
        return false;
    }
    let near = |p: &Polygon, q: &Polygon| {
        p.vertices()
            .iter()
            .any(|v| q.boundary_distance_m(*v) <= ADJACENCY_TOLERANCE_M)
    };
    if near(a, b) || near(b, a) {
        return true;
    }
    let inside = |p: &Polygon, q: &Polygon| p.vertices().iter().any(|v| point_in_polygon(*v, q));
    if inside(a, b) || inside(b, a) {
        return true;
    }
    a.edges().any(|(p, q)| b.edges().any(|(r, s)| segments_cross(p, q, r, s)))
}

/// Symmetric, irreflexive zone neighbor relation with a mutation counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencySchedule {
    neighbors: Vec<BTreeSet<ZoneId>>,
    revision: u64,
}

impl AdjacencySchedule {
    pub fn isolated(zone_count: usize) -> Self {
        Self { neighbors: vec![BTreeSet::new(); zone_count], revision: 0 }
    }

    /// Every zone neighbors every other zone.
    pub fn complete(zone_count: usize) -> Self {
        let all: BTreeSet<ZoneId> = (0..zone_count as u32).map(ZoneId).collect();
        let neighbors = (0..zone_count as u32)
            .map(|z| {
                let mut s = all.clone();
                s.remove(&ZoneId(z));
                s
            })
            .collect();
        Self { neighbors, revision: 0 }
    }

    pub fn zone_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    fn check(&self, z: ZoneId) -> Result<(), ZoneError> {
        if z.index() < self.neighbors.len() {
            Ok(())
        } else {
            Err(ZoneError::UnknownZone(z))
        }
    }

    pub fn neighbors(&self, z: ZoneId) -> Result<&BTreeSet<ZoneId>, ZoneError> {
        self.check(z)?;
        Ok(&self.neighbors[z.index()])
    }

    fn link(&mut self, a: ZoneId, b: ZoneId) {
        self.neighbors[a.index()].insert(b);
        self.neighbors[b.index()].insert(a);
        self.revision += 1;
    }

    /// Adds the symmetric link `a <-> b`. Re-adding an existing link leaves
    /// the sets alone but still bumps the revision.
    pub fn add_neighbor(&mut self, a: ZoneId, b: ZoneId) -> Result<(), ZoneError> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Err(ZoneError::SelfLink(a));
        }
        self.link(a, b);
        Ok(())
    }

    /// `visited` together with every neighbor of its members. Unknown ids in
    /// `visited` are carried through unchanged.
    pub fn expand_frontier(&self, visited: &BTreeSet<ZoneId>) -> BTreeSet<ZoneId> {
        let mut out = visited.clone();
        for z in visited {
            if let Some(ns) = self.neighbors.get(z.index()) {
                out.extend(ns.iter().copied());
            }
        }
        out
    }

    /// Unordered neighbor pairs, lower id first, sorted.
    pub fn pairs(&self) -> Vec<(ZoneId, ZoneId)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| {
                let a = ZoneId(a as u32);
                ns.iter().filter(move |b| a < **b).map(move |b| (a, *b))
            })
            .collect()
    }

    /// Writes `zone_id neighbor_id` rows, one per pair.
    pub fn export(&self, mut out: impl Write) -> io::Result<()> {
        for (a, b) in self.pairs() {
            writeln!(out, "{a} {b}")?;
        }
        Ok(())
    }
}
