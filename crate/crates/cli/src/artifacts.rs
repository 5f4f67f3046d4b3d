//! Run directories: writing a run's outputs, reading them back, comparing
//! two runs and sweeping the strategy matrix.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use amod_core::demand::TIMESTAMP_FORMAT;
use amod_core::engine::{read_records, run, write_records, CallRecord, Scenario, SimConfig};
use amod_core::fleet::Strategy;
use amod_core::metrics::{
    aggregate, improvement, periodic_log, render_comparison, window_label, write_summaries, Bucket, ComparisonRow,
    MetricsSummary, NO_DATA,
};

use crate::config::RunConfig;
use crate::inputs::{digest, Fingerprints, Inputs};

pub const RECORDS: &str = "records.csv";
pub const EVENTS: &str = "events.log";
pub const SUMMARY: &str = "summary.csv";
pub const DAILY: &str = "daily.csv";
pub const PERIODIC: &str = "periodic.csv";
pub const ADJACENCY: &str = "adjacency.txt";
pub const COUNTS: &str = "counts.txt";
pub const META: &str = "meta.json";
pub const TIMING: &str = "timing.txt";

/// Files whose presence marks a finished run.
const OUTPUTS: [&str; 8] = [RECORDS, EVENTS, SUMMARY, DAILY, PERIODIC, ADJACENCY, COUNTS, META];

/// Self-description written next to every run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool: String,
    pub label: String,
    /// Digest of the inputs and every setting that affects the outputs.
    pub run_hash: String,
    pub fingerprints: Fingerprints,
    pub epoch: Option<String>,
    pub config: RunConfig,
    pub cleaning: Option<String>,
}

impl RunMeta {
    pub fn epoch(&self) -> Option<NaiveDateTime> {
        self.epoch.as_deref().and_then(|e| NaiveDateTime::parse_from_str(e, TIMESTAMP_FORMAT).ok())
    }
}

/// Digest of everything that determines a run's outputs.
pub fn run_hash(cfg: &RunConfig, fp: &Fingerprints) -> String {
    let settings = serde_json::to_string(&(&cfg.dispatch, cfg.output.period_s, fp)).expect("serializable settings");
    digest(settings.as_bytes())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?))
}

/// True when `dir` already holds a finished run with this hash.
pub fn is_complete(dir: &Path, hash: &str) -> bool {
    OUTPUTS.iter().all(|f| dir.join(f).is_file()) && read_meta(dir).is_ok_and(|m| m.run_hash == hash)
}

/// Runs one configuration over loaded inputs and writes its directory.
pub fn execute(cfg: &RunConfig, inputs: &Inputs, dir: &Path) -> Result<RunMeta> {
    let started = Instant::now();
    let dispatch = cfg.dispatch_config();
    let sim = SimConfig { dispatch, snap_radius_m: cfg.dispatch.snap_radius_m };
    let scenario = Scenario {
        network: &inputs.network,
        zones: &inputs.zones,
        adjacency: inputs.adjacency.clone(),
        traffic: inputs.traffic.clone(),
        fleet: inputs.fleet.clone(),
        demand: inputs.demand.clone(),
    };
    let out = run(&sim, scenario, &inputs.fingerprints.combined()).with_context(|| format!("{} run failed", dispatch.label()))?;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;

    let mut w = create(dir, RECORDS)?;
    write_records(&out.records, &mut w)?;
    w.flush()?;
    fs::write(dir.join(EVENTS), &out.event_log)?;
    let mut w = create(dir, SUMMARY)?;
    write_summaries(&aggregate(&out.records, Bucket::WholeRun, inputs.epoch), &mut w)?;
    w.flush()?;
    let mut w = create(dir, DAILY)?;
    write_summaries(&aggregate(&out.records, Bucket::Daily, inputs.epoch), &mut w)?;
    w.flush()?;
    let horizon = inputs.demand.iter().map(|r| r.request_time_s).fold(0.0, f64::max);
    let mut w = create(dir, PERIODIC)?;
    periodic_log(&out.records, cfg.output.period_s, horizon, &mut w)?;
    w.flush()?;
    let mut w = create(dir, ADJACENCY)?;
    out.adjacency.export(&mut w)?;
    w.flush()?;
    fs::write(dir.join(COUNTS), format!("{}\n", out.counts))?;

    let meta = RunMeta {
        tool: format!("amod {}", env!("CARGO_PKG_VERSION")),
        label: dispatch.label(),
        run_hash: run_hash(cfg, &inputs.fingerprints),
        fingerprints: inputs.fingerprints.clone(),
        epoch: inputs.epoch.map(|e| e.format(TIMESTAMP_FORMAT).to_string()),
        config: cfg.clone(),
        cleaning: inputs.cleaning.as_ref().map(|c| c.to_string()),
    };
    fs::write(dir.join(META), serde_json::to_string_pretty(&meta)? + "\n")?;
    fs::write(dir.join(TIMING), format!("wall_seconds = {:.3}\n", started.elapsed().as_secs_f64()))?;
    log::info!("{}: {} calls, {} picked up -> {}", meta.label, out.counts.requests, out.counts.picked_up, dir.display());
    Ok(meta)
}

pub fn read_meta(dir: &Path) -> Result<RunMeta> {
    let path = dir.join(META);
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))
}

pub fn read_run_records(dir: &Path) -> Result<Vec<CallRecord>> {
    let path = dir.join(RECORDS);
    let file = File::open(&path).with_context(|| format!("cannot read {}", path.display()))?;
    read_records(file).with_context(|| format!("malformed {}", path.display()))
}

/// Why two run directories cannot be compared.
#[derive(Debug)]
pub struct Mismatch(pub String);

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Mismatch {}

/// Day-by-day and whole-run table of `with` against `without`.
fn comparison_rows(with: &[CallRecord], without: &[CallRecord], bucket: Bucket, epoch: Option<NaiveDateTime>) -> Vec<ComparisonRow> {
    let a = aggregate(with, bucket, epoch);
    let b = aggregate(without, bucket, epoch);
    let mut starts: Vec<i64> = a.iter().chain(&b).map(|s| s.window_start_s).collect();
    starts.sort_unstable();
    starts.dedup();
    let find = |v: &[MetricsSummary], start: i64| v.iter().find(|s| s.window_start_s == start).copied().unwrap_or_default();
    let mut rows: Vec<ComparisonRow> = starts
        .into_iter()
        .map(|start| ComparisonRow { label: window_label(start, bucket, epoch), report: improvement(find(&a, start), find(&b, start)) })
        .collect();
    let whole = |r: &[CallRecord]| aggregate(r, Bucket::WholeRun, epoch).first().copied().unwrap_or_default();
    rows.push(ComparisonRow { label: "all".to_string(), report: improvement(whole(with), whole(without)) });
    rows
}

/// Improvement of the run in `with_dir` over the run in `without_dir`.
/// Fails with [`Mismatch`] unless both runs consumed identical inputs.
pub fn compare(with_dir: &Path, without_dir: &Path) -> Result<String> {
    let (ma, mb) = (read_meta(with_dir)?, read_meta(without_dir)?);
    let diff = ma.fingerprints.differences(&mb.fingerprints);
    if !diff.is_empty() {
        return Err(Mismatch(format!(
            "{} and {} were run on different inputs ({}); refusing to compare",
            with_dir.display(),
            without_dir.display(),
            diff.join(", ")
        ))
        .into());
    }
    let (ra, rb) = (read_run_records(with_dir)?, read_run_records(without_dir)?);
    let title = format!("{} vs {}", ma.label, mb.label);
    Ok(render_comparison(&title, &comparison_rows(&ra, &rb, Bucket::Daily, ma.epoch())))
}

/// Outcome of one matrix cell.
pub enum CellStatus {
    Ran,
    UpToDate,
    Failed(String),
}

pub struct MatrixOutcome {
    pub cells: Vec<(String, CellStatus)>,
    pub report: Option<PathBuf>,
}

fn fmt_metric(v: Option<f64>, scale: f64) -> String {
    v.map_or_else(|| NO_DATA.to_string(), |x| format!("{:.2}", x * scale))
}

/// Per-day series of one metric, one column per cell.
fn write_series(
    path: &Path,
    runs: &[(String, Vec<MetricsSummary>)],
    epoch: Option<NaiveDateTime>,
    value: fn(&MetricsSummary) -> Option<f64>,
) -> Result<()> {
    let mut starts: Vec<i64> = runs.iter().flat_map(|(_, d)| d.iter().map(|s| s.window_start_s)).collect();
    starts.sort_unstable();
    starts.dedup();
    let mut out = String::from("day");
    for (label, _) in runs {
        let _ = write!(out, ",{label}");
    }
    out.push('\n');
    for start in starts {
        out.push_str(&window_label(start, Bucket::Daily, epoch));
        for (_, days) in runs {
            let v = days.iter().find(|s| s.window_start_s == start).and_then(value);
            let _ = write!(out, ",{}", v.map_or_else(|| NO_DATA.to_string(), |x| format!("{x:.4}")));
        }
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

/// Runs every strategy with and without expansion over the same inputs,
/// skipping cells whose outputs are already current, then writes the
/// combined report and plot series.
pub fn matrix(base: &RunConfig, inputs: &Inputs, strategies: &[Strategy], out: &Path) -> Result<MatrixOutcome> {
    if strategies.is_empty() {
        bail!("no strategies selected");
    }
    let cells: Vec<RunConfig> = strategies.iter().flat_map(|&s| [base.with_dispatch(s, true), base.with_dispatch(s, false)]).collect();
    let statuses: Vec<(String, CellStatus)> = cells
        .par_iter()
        .map(|cfg| {
            let label = cfg.dispatch_config().label();
            let dir = out.join(&label);
            if is_complete(&dir, &run_hash(cfg, &inputs.fingerprints)) {
                log::info!("{label}: up to date");
                return (label, CellStatus::UpToDate);
            }
            match execute(cfg, inputs, &dir) {
                Ok(_) => (label, CellStatus::Ran),
                Err(e) => (label, CellStatus::Failed(format!("{e:#}"))),
            }
        })
        .collect();
    if statuses.iter().any(|(_, s)| matches!(s, CellStatus::Failed(_))) {
        return Ok(MatrixOutcome { cells: statuses, report: None });
    }

    let records: Vec<(String, Vec<CallRecord>)> =
        statuses.iter().map(|(label, _)| Ok((label.clone(), read_run_records(&out.join(label))?))).collect::<Result<_>>()?;
    let epoch = inputs.epoch;
    let bucket = if epoch.is_some() { Bucket::Monthly } else { Bucket::Daily };

    let mut report = String::new();
    let _ = writeln!(report, "inputs {}", inputs.fingerprints.combined());
    let _ = writeln!(report);
    let windows = |r: &[CallRecord]| {
        let mut v: Vec<(String, MetricsSummary)> =
            aggregate(r, bucket, epoch).into_iter().map(|s| (window_label(s.window_start_s, bucket, epoch), s)).collect();
        v.push(("all".to_string(), aggregate(r, Bucket::WholeRun, epoch).first().copied().unwrap_or_default()));
        v
    };
    let per_cell: Vec<(String, Vec<(String, MetricsSummary)>)> = records.iter().map(|(l, r)| (l.clone(), windows(r))).collect();
    let mut labels: Vec<String> = per_cell.iter().flat_map(|(_, w)| w.iter().map(|(l, _)| l.clone())).collect();
    let mut seen = std::collections::BTreeSet::new();
    labels.retain(|l| seen.insert(l.clone()));
    for (title, scale, value) in [
        ("Average passenger waiting time (min)", 1.0, MetricsSummary::t_apw_min as fn(&MetricsSummary) -> Option<f64>),
        ("Trip success rate (%)", 100.0, MetricsSummary::r_ts),
    ] {
        let _ = writeln!(report, "{title}");
        let _ = write!(report, "{:<12}", "window");
        for (label, _) in &per_cell {
            let _ = write!(report, " {label:>10}");
        }
        let _ = writeln!(report);
        for window in &labels {
            let _ = write!(report, "{window:<12}");
            for (_, w) in &per_cell {
                let v = w.iter().find(|(l, _)| l == window).and_then(|(_, s)| value(s));
                let _ = write!(report, " {:>10}", fmt_metric(v, scale));
            }
            let _ = writeln!(report);
        }
        let _ = writeln!(report);
    }
    for (i, &s) in strategies.iter().enumerate() {
        let (with, without) = (&records[2 * i].1, &records[2 * i + 1].1);
        let title = format!("Improvement of {s}-EAT over {s} (%)");
        report.push_str(&render_comparison(&title, &comparison_rows(with, without, bucket, epoch)));
        let _ = writeln!(report);
    }
    let report_path = out.join("report.txt");
    fs::write(&report_path, &report).with_context(|| format!("cannot write {}", report_path.display()))?;

    let daily: Vec<(String, Vec<MetricsSummary>)> =
        records.iter().map(|(l, r)| (l.clone(), aggregate(r, Bucket::Daily, epoch))).collect();
    write_series(&out.join("daily_t_apw.csv"), &daily, epoch, MetricsSummary::t_apw_min)?;
    write_series(&out.join("daily_r_ts.csv"), &daily, epoch, MetricsSummary::r_ts)?;
    Ok(MatrixOutcome { cells: statuses, report: Some(report_path) })
}
