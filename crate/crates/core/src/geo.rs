//! Spherical-earth geometry: great-circle distance, point-in-polygon and a
//! uniform-grid nearest-node index.
//!
//! Polygon tests work in the plane of (lon, lat) degrees. That is exact for
//! the containment predicate at city scale and keeps the predicate free of
//! projection parameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean earth radius used for every distance in the crate.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("polygon needs at least 3 distinct vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon ring self-intersects between edges {0} and {1}")]
    SelfIntersecting(usize, usize),
    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    OutOfRange { lat: f64, lon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    /// True when both coordinates are finite and inside their degree ranges.
    pub fn in_range(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }

    pub fn checked(lat: f64, lon: f64) -> Result<Self, GeoError> {
        let p = Self::new(lat, lon);
        if p.in_range() {
            Ok(p)
        } else {
            Err(GeoError::OutOfRange { lat, lon })
        }
    }

    /// Moves the point by the given offsets in meters using a local
    /// equirectangular approximation.
    pub fn offset_m(&self, east_m: f64, north_m: f64) -> Self {
        let lat = self.lat + north_m / METERS_PER_DEGREE;
        let lon = self.lon + east_m / (METERS_PER_DEGREE * self.lat.to_radians().cos());
        Self { lat, lon }
    }
}

/// Great-circle distance in meters.
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Simple polygon given by its exterior ring. The closing vertex is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    ring: Vec<GeoPoint>,
    bbox: BoundingBox,
}

impl Polygon {
    /// Builds a polygon, dropping an explicit closing vertex and consecutive
    /// duplicates, and rejecting self-intersecting rings.
    pub fn new(mut ring: Vec<GeoPoint>) -> Result<Self, GeoError> {
        ring.dedup();
        if ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        if ring.len() < 3 {
            return Err(GeoError::TooFewVertices(ring.len()));
        }
        if let Some(p) = ring.iter().find(|p| !p.in_range()) {
            return Err(GeoError::OutOfRange { lat: p.lat, lon: p.lon });
        }
        let n = ring.len();
        for i in 0..n {
            for j in (i + 1)..n {
                // adjacent edges share a vertex by construction
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a, b) = (ring[i], ring[(i + 1) % n]);
                let (c, d) = (ring[j], ring[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(GeoError::SelfIntersecting(i, j));
                }
            }
        }
        let bbox = BoundingBox::around(&ring);
        Ok(Self { ring, bbox })
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        &self.ring
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    /// Iterates the ring's edges, including the implicit closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (GeoPoint, GeoPoint)> + '_ {
        let n = self.ring.len();
        (0..n).map(move |i| (self.ring[i], self.ring[(i + 1) % n]))
    }

    /// Area-weighted centroid in (lon, lat) degree space.
    pub fn centroid(&self) -> GeoPoint {
        let mut area2 = 0.0;
        let (mut cx, mut cy) = (0.0, 0.0);
        for (a, b) in self.edges() {
            let cross = a.lon * b.lat - b.lon * a.lat;
            area2 += cross;
            cx += (a.lon + b.lon) * cross;
            cy += (a.lat + b.lat) * cross;
        }
        if area2.abs() < f64::EPSILON {
            let n = self.ring.len() as f64;
            let lat = self.ring.iter().map(|p| p.lat).sum::<f64>() / n;
            let lon = self.ring.iter().map(|p| p.lon).sum::<f64>() / n;
            return GeoPoint::new(lat, lon);
        }
        GeoPoint::new(cy / (3.0 * area2), cx / (3.0 * area2))
    }

    /// Shortest distance in meters from `p` to the polygon's boundary.
    pub fn boundary_distance_m(&self, p: GeoPoint) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance_m(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Boundary points count as inside.
pub fn point_in_polygon(p: GeoPoint, poly: &Polygon) -> bool {
    if !poly.bbox.contains(p) {
        return false;
    }
    let mut inside = false;
    for (a, b) in poly.edges() {
        if on_segment(p, a, b) {
            return true;
        }
        // half-open rule on the y extent counts each crossing once
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if p.lon < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn orientation(a: GeoPoint, b: GeoPoint, c: GeoPoint) -> f64 {
    (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon)
}

fn on_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> bool {
    let scale = (b.lon - a.lon).abs().max((b.lat - a.lat).abs()).max(1e-300);
    orientation(a, b, p).abs() <= 1e-12 * scale * scale.max(1.0)
        && p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

/// Closed-segment intersection test, touching endpoints included.
pub(crate) fn segments_intersect(a: GeoPoint, b: GeoPoint, c: GeoPoint, d: GeoPoint) -> bool {
    let d1 = orientation(c, d, a);
    let d2 = orientation(c, d, b);
    let d3 = orientation(a, b, c);
    let d4 = orientation(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

/// Strict crossing of two segments: interiors cross at a single point.
pub(crate) fn segments_cross(a: GeoPoint, b: GeoPoint, c: GeoPoint, d: GeoPoint) -> bool {
    let d1 = orientation(c, d, a);
    let d2 = orientation(c, d, b);
    let d3 = orientation(a, b, c);
    let d4 = orientation(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Distance from `p` to segment `ab` in a tangent plane centred on `p`.
pub fn point_segment_distance_m(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    let kx = METERS_PER_DEGREE * p.lat.to_radians().cos();
    let ky = METERS_PER_DEGREE;
    let (ax, ay) = ((a.lon - p.lon) * kx, (a.lat - p.lat) * ky);
    let (bx, by) = ((b.lon - p.lon) * kx, (b.lat - p.lat) * ky);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (-(ax * dx + ay * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (ax + t * dx, ay + t * dy);
    (qx * qx + qy * qy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn around(points: &[GeoPoint]) -> Self {
        let mut b = Self {
            min_lat: f64::INFINITY,
            max_lat: f64::NEG_INFINITY,
            min_lon: f64::INFINITY,
            max_lon: f64::NEG_INFINITY,
        };
        for p in points {
            b.min_lat = b.min_lat.min(p.lat);
            b.max_lat = b.max_lat.max(p.lat);
            b.min_lon = b.min_lon.min(p.lon);
            b.max_lon = b.max_lon.max(p.lon);
        }
        b
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }

    pub fn is_empty(&self) -> bool {
        !(self.min_lat < self.max_lat && self.min_lon < self.max_lon)
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            min_lat: self.min_lat.min(other.min_lat),
            max_lat: self.max_lat.max(other.max_lat),
            min_lon: self.min_lon.min(other.min_lon),
            max_lon: self.max_lon.max(other.max_lon),
        }
    }
}

/// Uniform grid over the bounding box of a point set. Queries return the same
/// answer as a linear scan; the grid only prunes candidates.
#[derive(Debug, Clone)]
pub struct NodeIndex {
    points: Vec<GeoPoint>,
    origin: GeoPoint,
    cell_lat: f64,
    cell_lon: f64,
    rows: usize,
    cols: usize,
    cells: Vec<Vec<u32>>,
}

const TARGET_CELL_M: f64 = 500.0;
const MAX_CELLS_PER_AXIS: usize = 2048;

impl NodeIndex {
    /// Indexes `points`; the position in the slice is the node id.
    pub fn build(points: &[GeoPoint]) -> Self {
        let bbox = if points.is_empty() {
            BoundingBox { min_lat: 0.0, max_lat: 0.0, min_lon: 0.0, max_lon: 0.0 }
        } else {
            BoundingBox::around(points)
        };
        let mid_lat = ((bbox.min_lat + bbox.max_lat) / 2.0).to_radians();
        let mut cell_lat = TARGET_CELL_M / METERS_PER_DEGREE;
        let mut cell_lon = TARGET_CELL_M / (METERS_PER_DEGREE * mid_lat.cos().max(0.01));
        let span_lat = bbox.max_lat - bbox.min_lat;
        let span_lon = bbox.max_lon - bbox.min_lon;
        cell_lat = cell_lat.max(span_lat / MAX_CELLS_PER_AXIS as f64);
        cell_lon = cell_lon.max(span_lon / MAX_CELLS_PER_AXIS as f64);
        let rows = (span_lat / cell_lat).floor() as usize + 1;
        let cols = (span_lon / cell_lon).floor() as usize + 1;
        let mut index = Self {
            points: points.to_vec(),
            origin: GeoPoint::new(bbox.min_lat, bbox.min_lon),
            cell_lat,
            cell_lon,
            rows,
            cols,
            cells: vec![Vec::new(); rows * cols],
        };
        for (id, p) in points.iter().enumerate() {
            let (r, c) = index.cell_of(*p);
            index.cells[r * cols + c].push(id as u32);
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn cell_of(&self, p: GeoPoint) -> (usize, usize) {
        let r = ((p.lat - self.origin.lat) / self.cell_lat).floor();
        let c = ((p.lon - self.origin.lon) / self.cell_lon).floor();
        (
            (r.max(0.0) as usize).min(self.rows - 1),
            (c.max(0.0) as usize).min(self.cols - 1),
        )
    }

    /// Nearest indexed point within `max_radius_m`, ties to the lowest id.
    pub fn nearest(&self, p: GeoPoint, max_radius_m: f64) -> Option<u32> {
        if self.points.is_empty() || max_radius_m.is_nan() || max_radius_m < 0.0 {
            return None;
        }
        let mut radius = TARGET_CELL_M.min(max_radius_m);
        loop {
            let best = self.best_within(p, radius);
            if let Some((d, id)) = best {
                if d <= radius {
                    return Some(id);
                }
            }
            if radius >= max_radius_m {
                return best.filter(|(d, _)| *d <= max_radius_m).map(|(_, id)| id);
            }
            radius = (radius * 4.0).min(max_radius_m);
        }
    }

    /// Best candidate among all cells that can hold a point within `radius`.
    fn best_within(&self, p: GeoPoint, radius: f64) -> Option<(f64, u32)> {
        let angular = radius / EARTH_RADIUS_M;
        let dlat = angular.to_degrees();
        let (lat_lo, lat_hi) = (p.lat - dlat, p.lat + dlat);
        // longitude half-width of the spherical cap around p
        let dlon = if angular >= std::f64::consts::FRAC_PI_2 || lat_hi >= 90.0 || lat_lo <= -90.0 {
            f64::INFINITY
        } else {
            let s = angular.sin() / p.lat.to_radians().cos();
            if s >= 1.0 {
                f64::INFINITY
            } else {
                s.asin().to_degrees()
            }
        };
        let (r0, r1) = self.row_range(lat_lo, lat_hi)?;
        let (c0, c1) = if dlon.is_finite() {
            self.col_range(p.lon - dlon, p.lon + dlon)?
        } else {
            (0, self.cols - 1)
        };
        let mut best: Option<(f64, u32)> = None;
        for r in r0..=r1 {
            for c in c0..=c1 {
                for &id in &self.cells[r * self.cols + c] {
                    let d = haversine_m(p, self.points[id as usize]);
                    let better = match best {
                        None => true,
                        Some((bd, bid)) => d < bd || (d == bd && id < bid),
                    };
                    if better {
                        best = Some((d, id));
                    }
                }
            }
        }
        best
    }

    fn row_range(&self, lo: f64, hi: f64) -> Option<(usize, usize)> {
        axis_range(lo, hi, self.origin.lat, self.cell_lat, self.rows)
    }

    fn col_range(&self, lo: f64, hi: f64) -> Option<(usize, usize)> {
        axis_range(lo, hi, self.origin.lon, self.cell_lon, self.cols)
    }
}

fn axis_range(lo: f64, hi: f64, origin: f64, step: f64, n: usize) -> Option<(usize, usize)> {
    let a = ((lo - origin) / step).floor();
    let b = ((hi - origin) / step).floor();
    if b < 0.0 || a > (n - 1) as f64 {
        return None;
    }
    Some(((a.max(0.0) as usize), (b as usize).min(n - 1)))
}
