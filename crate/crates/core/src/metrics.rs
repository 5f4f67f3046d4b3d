//! Waiting time and trip success rate over call records, improvement
//! percentages between paired runs, and calendar bucketing.
//!
//! Waits are accumulated as integer milliseconds so that bucket totals add up
//! to whole-run totals exactly. The mean wait covers picked-up calls only;
//! rejected and abandoned calls count toward the success rate alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};

use crate::engine::CallRecord;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Marker written wherever a metric has no data.
pub const NO_DATA: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetricsSummary {
    pub window_start_s: i64,
    pub window_end_s: i64,
    pub n_calls: u64,
    pub n_success: u64,
    pub total_wait_ms: i64,
}

impl MetricsSummary {
    pub fn over(records: &[CallRecord], window_start_s: i64, window_end_s: i64) -> Self {
        let mut s = Self { window_start_s, window_end_s, ..Self::default() };
        for r in records {
            s.add(r);
        }
        s
    }

    fn add(&mut self, r: &CallRecord) {
        self.n_calls += 1;
        if let Some(w) = r.wait_ms() {
            self.n_success += 1;
            self.total_wait_ms += w;
        }
    }

    /// Mean wait of picked-up calls, in seconds.
    pub fn t_apw_s(&self) -> Option<f64> {
        (self.n_success > 0).then(|| self.total_wait_ms as f64 / 1000.0 / self.n_success as f64)
    }

    pub fn t_apw_min(&self) -> Option<f64> {
        self.t_apw_s().map(|s| s / 60.0)
    }

    pub fn r_ts(&self) -> Option<f64> {
        (self.n_calls > 0).then(|| self.n_success as f64 / self.n_calls as f64)
    }
}

pub fn t_apw(records: &[CallRecord]) -> Option<f64> {
    MetricsSummary::over(records, 0, 0).t_apw_s()
}

pub fn r_ts(records: &[CallRecord]) -> Option<f64> {
    MetricsSummary::over(records, 0, 0).r_ts()
}

/// Percent by which the wait without expansion exceeds the wait with it.
pub fn time_improvement_pct(t_with: f64, t_without: f64) -> Option<f64> {
    (t_with != 0.0).then(|| (t_without / t_with - 1.0) * 100.0)
}

/// Percent by which the success rate with expansion exceeds the rate without.
pub fn rate_improvement_pct(r_with: f64, r_without: f64) -> Option<f64> {
    (r_without != 0.0).then(|| (r_with / r_without - 1.0) * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImprovementReport {
    pub with_eat: MetricsSummary,
    pub without_eat: MetricsSummary,
    pub time_improvement_pct: Option<f64>,
    pub rate_improvement_pct: Option<f64>,
}

pub fn improvement(with_eat: MetricsSummary, without_eat: MetricsSummary) -> ImprovementReport {
    let time = with_eat.t_apw_s().zip(without_eat.t_apw_s()).and_then(|(w, wo)| time_improvement_pct(w, wo));
    let rate = with_eat.r_ts().zip(without_eat.r_ts()).and_then(|(w, wo)| rate_improvement_pct(w, wo));
    ImprovementReport { with_eat, without_eat, time_improvement_pct: time, rate_improvement_pct: rate }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bucket {
    Daily,
    Monthly,
    WholeRun,
}

fn midnight_epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date").and_hms_opt(0, 0, 0).expect("valid time")
}

fn month_start(year: i32, month: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(year, month, 1).expect("valid month").and_hms_opt(0, 0, 0).expect("valid time")
}

/// Window `[start, end)` in simulation seconds holding a request at `t`.
/// Simulation time zero is `epoch`; without one it is taken as midnight.
fn window_of(t: f64, bucket: Bucket, epoch: NaiveDateTime) -> (i64, i64) {
    let secs = t.floor() as i64;
    match bucket {
        Bucket::WholeRun => (i64::MIN, i64::MAX),
        Bucket::Daily => {
            let offset = epoch.time().num_seconds_from_midnight() as i64;
            let day = (secs + offset).div_euclid(86_400);
            let start = day * 86_400 - offset;
            (start, start + 86_400)
        }
        Bucket::Monthly => {
            let at = epoch + Duration::seconds(secs);
            let start = month_start(at.year(), at.month());
            let end = if at.month() == 12 { month_start(at.year() + 1, 1) } else { month_start(at.year(), at.month() + 1) };
            ((start - epoch).num_seconds(), (end - epoch).num_seconds())
        }
    }
}

/// Summaries of the non-empty windows, in time order. The whole-run bucket
/// spans the first to the last request.
pub fn aggregate(records: &[CallRecord], bucket: Bucket, epoch: Option<NaiveDateTime>) -> Vec<MetricsSummary> {
    let epoch = epoch.unwrap_or_else(midnight_epoch);
    if bucket == Bucket::WholeRun {
        if records.is_empty() {
            return Vec::new();
        }
        let lo = records.iter().map(|r| r.request_time_s).fold(f64::INFINITY, f64::min).floor() as i64;
        let hi = records.iter().map(|r| r.request_time_s).fold(f64::NEG_INFINITY, f64::max).floor() as i64;
        return vec![MetricsSummary::over(records, lo, hi + 1)];
    }
    let mut out: BTreeMap<(i64, i64), MetricsSummary> = BTreeMap::new();
    for r in records {
        let (start, end) = window_of(r.request_time_s, bucket, epoch);
        out.entry((start, end))
            .or_insert(MetricsSummary { window_start_s: start, window_end_s: end, ..Default::default() })
            .add(r);
    }
    out.into_values().collect()
}

pub const SUMMARY_HEADER: &str = "window_start,window_end,n_calls,n_success,r_ts,t_apw_min";

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| NO_DATA.to_string(), |x| format!("{x:.decimals$}"))
}

pub fn summary_row(s: &MetricsSummary) -> String {
    format!(
        "{},{},{},{},{},{}",
        s.window_start_s,
        s.window_end_s,
        s.n_calls,
        s.n_success,
        fmt_opt(s.r_ts(), 4),
        fmt_opt(s.t_apw_min(), 2)
    )
}

pub fn write_summaries(summaries: &[MetricsSummary], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for s in summaries {
        writeln!(out, "{}", summary_row(s))?;
    }
    Ok(())
}

/// One row per `period_s` slice of request time, from zero through the last
/// request or `horizon_s`, whichever is later. Empty slices get zero counts
/// and no-data metrics; no records gives a header-only log.
pub fn periodic_log(records: &[CallRecord], period_s: f64, horizon_s: f64, out: impl Write) -> io::Result<()> {
    assert!(period_s > 0.0, "period must be positive");
    if records.is_empty() {
        return write_summaries(&[], out);
    }
    let index = |t: f64| (t / period_s).floor().max(0.0) as usize;
    let last = records.iter().map(|r| index(r.request_time_s)).max().unwrap_or(0);
    let rows = ((horizon_s / period_s).ceil() as usize).max(last + 1);
    let mut slices: Vec<MetricsSummary> = (0..rows)
        .map(|i| MetricsSummary {
            window_start_s: (i as f64 * period_s).floor() as i64,
            window_end_s: ((i + 1) as f64 * period_s).floor() as i64,
            ..Default::default()
        })
        .collect();
    for r in records {
        slices[index(r.request_time_s)].add(r);
    }
    write_summaries(&slices, out)
}

/// One labelled pair of runs (say a month) for the comparison table.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub label: String,
    pub report: ImprovementReport,
}

/// Aligned text table: waits in minutes, rates in percent, improvements in
/// percent, two decimals throughout.
pub fn render_comparison(title: &str, rows: &[ComparisonRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    let _ = writeln!(
        s,
        "{:<12} {:>12} {:>12} {:>10} {:>12} {:>12} {:>10}",
        "window", "T_APW w/o", "T_APW with", "time %", "R_TS w/o", "R_TS with", "rate %"
    );
    for row in rows {
        let r = &row.report;
        let pct = |v: Option<f64>| fmt_opt(v.map(|x| x * 100.0), 2);
        let _ = writeln!(
            s,
            "{:<12} {:>12} {:>12} {:>10} {:>12} {:>12} {:>10}",
            row.label,
            fmt_opt(r.without_eat.t_apw_min(), 2),
            fmt_opt(r.with_eat.t_apw_min(), 2),
            fmt_opt(r.time_improvement_pct, 2),
            pct(r.without_eat.r_ts()),
            pct(r.with_eat.r_ts()),
            fmt_opt(r.rate_improvement_pct, 2),
        );
    }
    s
}

/// Calendar label of a window start: `YYYY-MM-DD` for days, `YYYY-MM` for
/// months.
pub fn window_label(start_s: i64, bucket: Bucket, epoch: Option<NaiveDateTime>) -> String {
    let at = epoch.unwrap_or_else(midnight_epoch) + Duration::seconds(start_s);
    match bucket {
        Bucket::Daily => at.format("%Y-%m-%d").to_string(),
        Bucket::Monthly => at.format("%Y-%m").to_string(),
        Bucket::WholeRun => "all".to_string(),
    }
}
