//! Trip demand: CSV ingestion with cleaning, patience sampling and a seeded
//! Poisson generator for synthetic scenarios.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use chrono::NaiveDateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{BoundingBox, GeoPoint};
use crate::zones::ZoneSet;

pub const MIN_PATIENCE_S: f64 = 60.0;
pub const MAX_PATIENCE_S: f64 = 3600.0;
pub const DEFAULT_CAPACITY: u32 = 4;
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

pub(crate) const STREAM_PATIENCE: u64 = 1;
pub(crate) const STREAM_DEMAND: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestId(pub u64);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRequest {
    pub id: RequestId,
    pub medallion: String,
    pub request_time_s: f64,
    pub pickup: GeoPoint,
    pub dropoff: GeoPoint,
    pub party_size: u32,
    pub patience_s: f64,
}

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("trip file is missing column `{0}`")]
    MissingColumn(String),
    #[error("cannot read trip file: {0}")]
    Csv(#[from] csv::Error),
    #[error("demand region is empty")]
    EmptyRegion,
    #[error("invalid generator setting: {0}")]
    BadSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rejection {
    BadCoordinates,
    NonPositiveDuration,
    OversizeParty,
    Unparseable,
    OutOfBounds,
}

impl Rejection {
    pub const ALL: [Rejection; 5] = [
        Rejection::BadCoordinates,
        Rejection::NonPositiveDuration,
        Rejection::OversizeParty,
        Rejection::Unparseable,
        Rejection::OutOfBounds,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Rejection::BadCoordinates => "bad-coordinates",
            Rejection::NonPositiveDuration => "non-positive-duration",
            Rejection::OversizeParty => "oversize-party",
            Rejection::Unparseable => "unparseable",
            Rejection::OutOfBounds => "out-of-bounds",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CleaningReport {
    pub rows_read: u64,
    pub rows_kept: u64,
    pub rejected: BTreeMap<Rejection, u64>,
    /// Wall-clock time of simulation second 0, when any row was kept.
    pub epoch: Option<NaiveDateTime>,
}

impl CleaningReport {
    pub fn count(&self, reason: Rejection) -> u64 {
        self.rejected.get(&reason).copied().unwrap_or(0)
    }

    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }

    pub fn is_balanced(&self) -> bool {
        self.rows_read == self.rows_kept + self.rejected_total()
    }

    pub fn rejection_rate(&self) -> f64 {
        if self.rows_read == 0 {
            0.0
        } else {
            self.rejected_total() as f64 / self.rows_read as f64
        }
    }
}

impl fmt::Display for CleaningReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows_read = {}", self.rows_read)?;
        writeln!(f, "rows_kept = {}", self.rows_kept)?;
        for r in Rejection::ALL {
            writeln!(f, "rejected.{} = {}", r.label(), self.count(r))?;
        }
        if let Some(epoch) = self.epoch {
            writeln!(f, "epoch = \"{}\"", epoch.format(TIMESTAMP_FORMAT))?;
        }
        Ok(())
    }
}

/// Logical columns of the trip CSV.
pub const COLUMNS: [&str; 8] = [
    "medallion",
    "pickup time",
    "dropoff time",
    "passenger count",
    "pickup log",
    "pickup lat",
    "dropoff log",
    "dropoff lat",
];

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub bbox: BoundingBox,
    pub capacity: u32,
    pub seed: u64,
    /// Maps a logical column name to the header used in the file.
    pub aliases: BTreeMap<String, String>,
}

/// Lon in [-74.30, -73.65], lat in [40.45, 41.00].
pub const NYC_BBOX: BoundingBox =
    BoundingBox { min_lat: 40.45, max_lat: 41.00, min_lon: -74.30, max_lon: -73.65 };

impl Default for ParseOptions {
    fn default() -> Self {
        Self { bbox: NYC_BBOX, capacity: DEFAULT_CAPACITY, seed: 0, aliases: BTreeMap::new() }
    }
}

/// Uniform patience in [60, 3600] seconds.
pub fn sample_patience(rng: &mut impl Rng) -> f64 {
    rng.random_range(MIN_PATIENCE_S..=MAX_PATIENCE_S)
}

struct Parsed {
    row: u64,
    medallion: String,
    pickup_at: NaiveDateTime,
    pickup: GeoPoint,
    dropoff: GeoPoint,
    party: u32,
}

/// Reads and cleans trip rows. Request times are the pickup-time column,
/// measured from the earliest kept row; output is ordered by (time, id) where
/// `id` is the 0-based data row.
pub fn parse_trips(
    input: impl Read,
    opts: &ParseOptions,
) -> Result<(Vec<TripRequest>, CleaningReport), DemandError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(input);
    let headers = reader.headers()?.clone();
    let mut col = [0usize; 8];
    for (slot, logical) in col.iter_mut().zip(COLUMNS) {
        let wanted = opts.aliases.get(logical).map(String::as_str).unwrap_or(logical);
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(wanted))
            .ok_or_else(|| DemandError::MissingColumn(wanted.to_string()))?;
    }

    let mut report = CleaningReport::default();
    let mut kept = Vec::new();
    for (row, record) in reader.records().enumerate() {
        report.rows_read += 1;
        let verdict = match record {
            Ok(rec) => classify(row as u64, &rec, &col, opts),
            Err(_) => Err(Rejection::Unparseable),
        };
        match verdict {
            Ok(p) => kept.push(p),
            Err(reason) => *report.rejected.entry(reason).or_default() += 1,
        }
    }
    report.rows_kept = kept.len() as u64;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(STREAM_PATIENCE);
    let epoch = kept.iter().map(|p| p.pickup_at).min();
    report.epoch = epoch;
    let mut trips: Vec<TripRequest> = kept
        .into_iter()
        .map(|p| TripRequest {
            id: RequestId(p.row),
            medallion: p.medallion,
            request_time_s: (p.pickup_at - epoch.expect("non-empty")).num_seconds() as f64,
            pickup: p.pickup,
            dropoff: p.dropoff,
            party_size: p.party,
            patience_s: sample_patience(&mut rng),
        })
        .collect();
    sort_fcfs(&mut trips);
    Ok((trips, report))
}

/// FCFS order: request time, then id.
pub fn sort_fcfs(trips: &mut [TripRequest]) {
    trips.sort_by(|a, b| a.request_time_s.total_cmp(&b.request_time_s).then(a.id.cmp(&b.id)));
}

fn classify(
    row: u64,
    rec: &csv::StringRecord,
    col: &[usize; 8],
    opts: &ParseOptions,
) -> Result<Parsed, Rejection> {
    let field = |i: usize| rec.get(col[i]).ok_or(Rejection::Unparseable);
    let num = |i: usize| field(i)?.parse::<f64>().map_err(|_| Rejection::Unparseable);
    let time = |i: usize| {
        NaiveDateTime::parse_from_str(field(i)?, TIMESTAMP_FORMAT).map_err(|_| Rejection::Unparseable)
    };
    let medallion = field(0)?.to_string();
    let pickup_at = time(1)?;
    let dropoff_at = time(2)?;
    let party: u32 = field(3)?.parse().map_err(|_| Rejection::Unparseable)?;
    let pickup = GeoPoint::new(num(5)?, num(4)?);
    let dropoff = GeoPoint::new(num(7)?, num(6)?);
    if party == 0 {
        return Err(Rejection::Unparseable);
    }
    let impossible = |p: GeoPoint| !p.in_range() || (p.lat == 0.0 && p.lon == 0.0);
    if impossible(pickup) || impossible(dropoff) {
        return Err(Rejection::BadCoordinates);
    }
    if !opts.bbox.contains(pickup) || !opts.bbox.contains(dropoff) {
        return Err(Rejection::OutOfBounds);
    }
    if dropoff_at <= pickup_at {
        return Err(Rejection::NonPositiveDuration);
    }
    if party > opts.capacity {
        return Err(Rejection::OversizeParty);
    }
    Ok(Parsed { row, medallion, pickup_at, pickup, dropoff, party })
}

/// Where synthetic trips start and end.
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    Zones(&'a ZoneSet),
    Box(BoundingBox),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandSpec {
    pub rate_per_hour: f64,
    pub duration_s: f64,
    /// Relative weights of party sizes 1, 2, ...
    pub party_weights: Vec<f64>,
}

impl Default for DemandSpec {
    fn default() -> Self {
        Self { rate_per_hour: 60.0, duration_s: 3600.0, party_weights: vec![1.0] }
    }
}

const MAX_REJECTION_DRAWS: usize = 10_000;

/// Poisson arrivals over `[0, duration_s)` with origins and destinations
/// uniform over the region.
pub fn generate_demand(spec: &DemandSpec, region: Region<'_>, seed: u64) -> Result<Vec<TripRequest>, DemandError> {
    if !(spec.rate_per_hour >= 0.0 && spec.rate_per_hour.is_finite()) {
        return Err(DemandError::BadSpec(format!("rate_per_hour = {}", spec.rate_per_hour)));
    }
    if !(spec.duration_s >= 0.0 && spec.duration_s.is_finite()) {
        return Err(DemandError::BadSpec(format!("duration_s = {}", spec.duration_s)));
    }
    let bbox = match region {
        Region::Zones(z) => z.bbox().ok_or(DemandError::EmptyRegion)?,
        Region::Box(b) => b,
    };
    if bbox.is_empty() {
        return Err(DemandError::EmptyRegion);
    }
    let parties = WeightedIndex::new(&spec.party_weights)
        .map_err(|e| DemandError::BadSpec(format!("party_weights: {e}")))?;
    if spec.rate_per_hour == 0.0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_DEMAND);
    let gaps = Exp::new(spec.rate_per_hour / 3600.0).expect("positive rate");
    let sample_point = |rng: &mut ChaCha8Rng| -> Result<GeoPoint, DemandError> {
        for _ in 0..MAX_REJECTION_DRAWS {
            let p = GeoPoint::new(
                rng.random_range(bbox.min_lat..=bbox.max_lat),
                rng.random_range(bbox.min_lon..=bbox.max_lon),
            );
            match region {
                Region::Box(_) => return Ok(p),
                Region::Zones(z) if z.locate(p).is_some() => return Ok(p),
                Region::Zones(_) => {}
            }
        }
        Err(DemandError::EmptyRegion)
    };
    let mut out = Vec::new();
    let mut t = gaps.sample(&mut rng);
    while t < spec.duration_s {
        let pickup = sample_point(&mut rng)?;
        let dropoff = sample_point(&mut rng)?;
        let party_size = parties.sample(&mut rng) as u32 + 1;
        let patience_s = sample_patience(&mut rng);
        out.push(TripRequest {
            id: RequestId(out.len() as u64),
            medallion: scripted_medallion(out.len() as u64),
            request_time_s: t,
            pickup,
            dropoff,
            party_size,
            patience_s,
        });
        t += gaps.sample(&mut rng);
    }
    Ok(out)
}

/// Columns of the scripted-request CSV, which carries explicit patience.
pub const SCRIPTED_HEADER: [&str; 8] = [
    "id",
    "request_time_s",
    "pickup_lat",
    "pickup_lon",
    "dropoff_lat",
    "dropoff_lon",
    "party_size",
    "patience_s",
];

#[derive(Debug, Serialize, Deserialize)]
struct ScriptedRow {
    id: u64,
    request_time_s: f64,
    pickup_lat: f64,
    pickup_lon: f64,
    dropoff_lat: f64,
    dropoff_lon: f64,
    party_size: u32,
    patience_s: f64,
}

fn scripted_medallion(id: u64) -> String {
    format!("r{id:06}")
}

/// Reads fully specified requests (no cleaning, no sampling).
pub fn read_scripted(input: impl Read) -> Result<Vec<TripRequest>, DemandError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut trips = Vec::new();
    for row in reader.deserialize::<ScriptedRow>() {
        let r = row?;
        trips.push(TripRequest {
            id: RequestId(r.id),
            medallion: scripted_medallion(r.id),
            request_time_s: r.request_time_s,
            pickup: GeoPoint::new(r.pickup_lat, r.pickup_lon),
            dropoff: GeoPoint::new(r.dropoff_lat, r.dropoff_lon),
            party_size: r.party_size,
            patience_s: r.patience_s,
        });
    }
    sort_fcfs(&mut trips);
    Ok(trips)
}

pub fn write_scripted(trips: &[TripRequest], out: impl std::io::Write) -> Result<(), DemandError> {
    let mut w = csv::Writer::from_writer(out);
    for t in trips {
        w.serialize(ScriptedRow {
            id: t.id.0,
            request_time_s: t.request_time_s,
            pickup_lat: t.pickup.lat,
            pickup_lon: t.pickup.lon,
            dropoff_lat: t.dropoff.lat,
            dropoff_lon: t.dropoff.lon,
            party_size: t.party_size,
            patience_s: t.patience_s,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "medallion,pickup time,dropoff time,passenger count,pickup log,pickup lat,dropoff log,dropoff lat\n";

    fn parse(body: &str) -> (Vec<TripRequest>, CleaningReport) {
        parse_trips(format!("{HEADER}{body}").as_bytes(), &ParseOptions::default()).unwrap()
    }

    #[test]
    fn sample_rows_are_kept() {
        let (trips, report) = parse(
            "2013002932,2013-01-02 23:43:00,2013-01-02 23:49:00,4,-73.946922,40.682198,-73.92067,40.685219\n\
             2013009193,2013-01-02 23:43:00,2013-01-02 23:54:00,2,-74.004379,40.747887,-73.983376,40.766918\n\
             2013007140,2013-01-02 23:46:00,2013-01-02 23:55:00,1,-73.869743,40.772369,-73.907898,40.767262\n\
             2013008400,2013-01-02 23:50:12,2013-01-02 23:56:41,3,-73.984756,40.768322,-73.983276,40.757259\n",
        );
        assert_eq!(report.rows_kept, 4);
        assert!(report.is_balanced());
        assert_eq!(trips[0].medallion, "2013002932");
        assert_eq!(trips[0].party_size, 4);
        assert_eq!(trips[0].pickup, GeoPoint::new(40.682198, -73.946922));
        let times: Vec<f64> = trips.iter().map(|t| t.request_time_s).collect();
        assert_eq!(times, vec![0.0, 0.0, 180.0, 432.0]);
        assert_eq!(report.epoch.unwrap().to_string(), "2013-01-02 23:43:00");
        for t in &trips {
            assert!((MIN_PATIENCE_S..=MAX_PATIENCE_S).contains(&t.patience_s));
        }
    }

    #[test]
    fn rejection_reasons() {
        let (trips, report) = parse(
            "a,2013-01-02 23:43:00,2013-01-02 23:49:00,1,0,0,-73.92067,40.685219\n\
             b,2013-01-02 23:43:00,2013-01-02 23:43:00,1,-73.946922,40.682198,-73.92067,40.685219\n\
             c,2013-01-02 23:43:00,2013-01-02 23:49:00,6,-73.946922,40.682198,-73.92067,40.685219\n\
             d,yesterday,2013-01-02 23:49:00,1,-73.946922,40.682198,-73.92067,40.685219\n\
             e,2013-01-02 23:43:00,2013-01-02 23:49:00,1,-118.2,34.05,-73.92067,40.685219\n\
             f,2013-01-02 23:43:00,2013-01-02 23:49:00,1,-73.946922,40.682198,-73.92067,40.685219\n",
        );
        assert_eq!(trips.len(), 1);
        assert_eq!(trips[0].id, RequestId(5));
        assert_eq!(report.count(Rejection::BadCoordinates), 1);
        assert_eq!(report.count(Rejection::NonPositiveDuration), 1);
        assert_eq!(report.count(Rejection::OversizeParty), 1);
        assert_eq!(report.count(Rejection::Unparseable), 1);
        assert_eq!(report.count(Rejection::OutOfBounds), 1);
        assert!(report.is_balanced());
        assert!(report.to_string().contains("rejected.oversize-party = 1"));
    }

    #[test]
    fn missing_column_is_fatal() {
        let err = parse_trips("medallion,pickup time\n".as_bytes(), &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, DemandError::MissingColumn(c) if c == "dropoff time"));
    }

    #[test]
    fn aliases_rename_columns() {
        let mut opts = ParseOptions::default();
        opts.aliases.insert("pickup log".into(), "pickup_longitude".into());
        let body = "medallion,pickup time,dropoff time,passenger count,pickup_longitude,pickup lat,dropoff log,dropoff lat\n\
                    m,2013-01-02 23:43:00,2013-01-02 23:49:00,1,-73.946922,40.682198,-73.92067,40.685219\n";
        let (trips, _) = parse_trips(body.as_bytes(), &opts).unwrap();
        assert_eq!(trips.len(), 1);
    }

    #[test]
    fn patience_is_seeded() {
        let body = format!("{HEADER}m,2013-01-02 23:43:00,2013-01-02 23:49:00,1,-73.946922,40.682198,-73.92067,40.685219\n");
        let a = parse_trips(body.as_bytes(), &ParseOptions::default()).unwrap().0;
        let b = parse_trips(body.as_bytes(), &ParseOptions::default()).unwrap().0;
        let c = parse_trips(body.as_bytes(), &ParseOptions { seed: 1, ..Default::default() }).unwrap().0;
        assert_eq!(a, b);
        assert_ne!(a[0].patience_s, c[0].patience_s);
    }

    #[test]
    fn patience_mean_is_near_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_patience(&mut rng)).sum::<f64>() / n as f64;
        assert!((1650.0..=2010.0).contains(&mean), "{mean}");
    }

    #[test]
    fn generator_zero_rate_and_determinism() {
        let bbox = NYC_BBOX;
        let zero = DemandSpec { rate_per_hour: 0.0, ..Default::default() };
        assert!(generate_demand(&zero, Region::Box(bbox), 1).unwrap().is_empty());
        let spec = DemandSpec { rate_per_hour: 120.0, duration_s: 7200.0, party_weights: vec![3.0, 1.0] };
        let a = generate_demand(&spec, Region::Box(bbox), 5).unwrap();
        let b = generate_demand(&spec, Region::Box(bbox), 5).unwrap();
        let mut wa = Vec::new();
        let mut wb = Vec::new();
        write_scripted(&a, &mut wa).unwrap();
        write_scripted(&b, &mut wb).unwrap();
        assert_eq!(wa, wb);
        assert!(a.windows(2).all(|w| w[0].request_time_s <= w[1].request_time_s));
        assert!(a.iter().all(|t| bbox.contains(t.pickup) && (1..=2).contains(&t.party_size)));
        assert_eq!(read_scripted(wa.as_slice()).unwrap(), a);
    }

    #[test]
    fn generator_count_within_poisson_bounds() {
        // P(N outside [480, 720]) for N ~ Poisson(600) is about 1.1e-6
        let spec = DemandSpec { rate_per_hour: 60.0, duration_s: 36_000.0, party_weights: vec![1.0] };
        for seed in 0..25 {
            let n = generate_demand(&spec, Region::Box(NYC_BBOX), seed).unwrap().len();
            assert!((480..=720).contains(&n), "seed {seed}: {n}");
        }
    }

    #[test]
    fn empty_region_is_an_error() {
        let flat = BoundingBox { min_lat: 40.0, max_lat: 40.0, min_lon: -74.0, max_lon: -73.0 };
        assert!(matches!(
            generate_demand(&DemandSpec::default(), Region::Box(flat), 0),
            Err(DemandError::EmptyRegion)
        ));
        let none = ZoneSet::new(Vec::new());
        assert!(matches!(
            generate_demand(&DemandSpec::default(), Region::Zones(&none), 0),
            Err(DemandError::EmptyRegion)
        ));
    }
}
