//! Performance metrics over completed timeline logs: throughput is the
//! maximum of per-interval insertion averages (30 s intervals), latency is
//! the median of per-interval latency averages (10 s intervals), both
//! aligned to the first insertion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::TimelineEvent;

pub const THROUGHPUT_INTERVAL_S: f64 = 30.0;
pub const LATENCY_INTERVAL_S: f64 = 10.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("no timeline events")]
    Empty,
    #[error("interval width must be positive")]
    InvalidInterval,
    #[error("the run is shorter than half an interval; no interval qualifies")]
    NoQualifiedInterval,
}

/// Buckets `values` (ns offsets paired with payloads) into consecutive
/// intervals of `interval_s` starting at the minimum timestamp. The final
/// partial interval is discarded when shorter than half the width;
/// otherwise it keeps its true width. Returns (bucket payload lists,
/// bucket widths in seconds).
fn bucket_by<T: Copy>(
    stamps: &[(u64, T)],
    interval_s: f64,
) -> Result<(Vec<Vec<T>>, Vec<f64>), ReportError> {
    if stamps.is_empty() {
        return Err(ReportError::Empty);
    }
    if !(interval_s > 0.0) {
        return Err(ReportError::InvalidInterval);
    }
    let interval_ns = (interval_s * 1e9) as u64;
    let min = stamps.iter().map(|(t, _)| *t).min().unwrap();
    let max = stamps.iter().map(|(t, _)| *t).max().unwrap();
    let span = max - min;

    let full = (span / interval_ns) as usize;
    let tail_ns = span - full as u64 * interval_ns;
    let (count, tail_kept) = if tail_ns == 0 {
        (full, false)
    } else if tail_ns < interval_ns / 2 {
        (full, false) // discard the short tail
    } else {
        (full + 1, true)
    };
    if count == 0 {
        return Err(ReportError::NoQualifiedInterval);
    }

    let mut buckets: Vec<Vec<T>> = vec![Vec::new(); count];
    for &(t, payload) in stamps {
        let idx = ((t - min) / interval_ns) as usize;
        if idx < count {
            buckets[idx].push(payload);
        } else if idx == count && tail_ns == 0 {
            // The event at the exact end of an evenly divisible span closes
            // the last interval rather than opening an empty one.
            buckets[count - 1].push(payload);
        }
        // Otherwise the event sits in a discarded partial tail.
    }
    let mut widths = vec![interval_s; count];
    if tail_kept {
        widths[count - 1] = tail_ns as f64 / 1e9;
    }
    Ok((buckets, widths))
}

/// Insertions/s: max over the per-interval averages.
pub fn compute_throughput(
    events: &[TimelineEvent],
    interval_s: f64,
) -> Result<(f64, Vec<f64>), ReportError> {
    let stamps: Vec<(u64, ())> = events.iter().map(|e| (e.inserted_at, ())).collect();
    let (buckets, widths) = bucket_by(&stamps, interval_s)?;
    let table: Vec<f64> =
        buckets.iter().zip(&widths).map(|(b, w)| b.len() as f64 / w).collect();
    let value = table.iter().copied().fold(f64::MIN, f64::max);
    Ok((value, table))
}

/// Milliseconds from admission to insertion: median over the per-interval
/// averages (even count → mean of the two middle values).
pub fn compute_latency(
    events: &[TimelineEvent],
    interval_s: f64,
) -> Result<(f64, Vec<f64>), ReportError> {
    let stamps: Vec<(u64, f64)> = events
        .iter()
        .map(|e| (e.inserted_at, (e.inserted_at - e.created_at) as f64 / 1e6))
        .collect();
    let (buckets, _) = bucket_by(&stamps, interval_s)?;
    let table: Vec<f64> = buckets
        .iter()
        .filter(|b| !b.is_empty())
        .map(|b| b.iter().sum::<f64>() / b.len() as f64)
        .collect();
    if table.is_empty() {
        return Err(ReportError::NoQualifiedInterval);
    }
    let mut sorted = table.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let value =
        if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    Ok((value, table))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub classifier: String,
    pub params: serde_json::Value,
    /// Replay rate in sessions/s; absent means unlimited.
    pub rate: Option<f64>,
    pub duration_s: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub throughput_sessions_per_s: f64,
    pub latency_ms: f64,
    pub throughput_intervals: Vec<f64>,
    pub latency_intervals_ms: Vec<f64>,
    pub stage_busy_ratios: BTreeMap<String, f64>,
    pub metadata: RunMetadata,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

impl BenchReport {
    pub fn from_events(
        events: &[TimelineEvent],
        stage_busy_ratios: BTreeMap<String, f64>,
        metadata: RunMetadata,
    ) -> Result<BenchReport, ReportError> {
        Self::from_events_with_intervals(
            events,
            THROUGHPUT_INTERVAL_S,
            LATENCY_INTERVAL_S,
            stage_busy_ratios,
            metadata,
        )
    }

    /// Desk-scale runs are often far shorter than the default intervals;
    /// the harness can shrink them while keeping the same max/median rules.
    pub fn from_events_with_intervals(
        events: &[TimelineEvent],
        throughput_interval_s: f64,
        latency_interval_s: f64,
        stage_busy_ratios: BTreeMap<String, f64>,
        metadata: RunMetadata,
    ) -> Result<BenchReport, ReportError> {
        let (throughput, throughput_intervals) =
            compute_throughput(events, throughput_interval_s)?;
        let (latency, latency_intervals_ms) = compute_latency(events, latency_interval_s)?;
        Ok(BenchReport {
            schema_version: REPORT_SCHEMA_VERSION,
            throughput_sessions_per_s: throughput,
            latency_ms: latency,
            throughput_intervals,
            latency_intervals_ms,
            stage_busy_ratios,
            metadata,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Stable, diff-friendly serialization. CSV is long format: one row per
/// throughput interval, latency interval, and stage ratio.
pub fn emit_report(report: &BenchReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
            out.push(b'\n');
            out
        }
        ReportFormat::Csv => {
            let mut out = String::from("metric,interval_index,value\n");
            for (i, v) in report.throughput_intervals.iter().enumerate() {
                out.push_str(&format!("throughput_sessions_per_s,{i},{v}\n"));
            }
            for (i, v) in report.latency_intervals_ms.iter().enumerate() {
                out.push_str(&format!("latency_ms,{i},{v}\n"));
            }
            for (stage, v) in &report.stage_busy_ratios {
                out.push_str(&format!("stage_busy_{stage},0,{v}\n"));
            }
            out.into_bytes()
        }
    }
}

/// Multi-run summary statistic: mean with the observed min/max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

fn spread(values: impl Iterator<Item = f64> + Clone) -> Spread {
    let n = values.clone().count().max(1) as f64;
    Spread {
        mean: values.clone().sum::<f64>() / n,
        min: values.clone().fold(f64::INFINITY, f64::min),
        max: values.fold(f64::NEG_INFINITY, f64::max),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema_version: u32,
    pub runs: Vec<BenchReport>,
    pub throughput_sessions_per_s: Spread,
    pub latency_ms: Spread,
}

/// Mean ± min/max across repeated measurement runs (three by default in the
/// harness).
pub fn aggregate_reports(runs: Vec<BenchReport>) -> Result<AggregateReport, ReportError> {
    if runs.is_empty() {
        return Err(ReportError::Empty);
    }
    let throughput = spread(runs.iter().map(|r| r.throughput_sessions_per_s));
    let latency = spread(runs.iter().map(|r| r.latency_ms));
    Ok(AggregateReport {
        schema_version: REPORT_SCHEMA_VERSION,
        runs,
        throughput_sessions_per_s: throughput,
        latency_ms: latency,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn event(created_ns: u64, inserted_ns: u64) -> TimelineEvent {
        TimelineEvent {
            session_id: inserted_ns,
            created_at: created_ns,
            encoded_at: created_ns,
            classified_at: inserted_ns,
            inserted_at: inserted_ns,
        }
    }

    fn at_seconds(times: &[f64]) -> Vec<TimelineEvent> {
        times.iter().map(|&t| event((t * 1e9) as u64, (t * 1e9) as u64)).collect()
    }

    /// Independent oracle written straight from the metric prose: walk
    /// explicit interval windows [start, start + width) from the first
    /// insertion, discarding a final partial window under half width.
    fn oracle_windows(events: &[TimelineEvent], interval_s: f64) -> Vec<(u64, u64, f64)> {
        let min = events.iter().map(|e| e.inserted_at).min().unwrap();
        let max = events.iter().map(|e| e.inserted_at).max().unwrap();
        let step = (interval_s * 1e9) as u64;
        let mut out = Vec::new();
        let mut start = min;
        while start + step <= max {
            out.push((start, start + step, interval_s));
            start += step;
        }
        let tail = max - start;
        if tail >= step / 2 && tail > 0 {
            out.push((start, max, tail as f64 / 1e9));
        }
        out
    }

    fn oracle_throughput(events: &[TimelineEvent], interval_s: f64) -> Option<(f64, Vec<f64>)> {
        let windows = oracle_windows(events, interval_s);
        if windows.is_empty() {
            return None;
        }
        let max_t = events.iter().map(|e| e.inserted_at).max().unwrap();
        let last = windows.len() - 1;
        let table: Vec<f64> = windows
            .iter()
            .enumerate()
            .map(|(i, &(s, e, w))| {
                let close_the_end = i == last && e == max_t;
                let n = events
                    .iter()
                    .filter(|ev| {
                        ev.inserted_at >= s
                            && (ev.inserted_at < e || (close_the_end && ev.inserted_at == e))
                    })
                    .count();
                n as f64 / w
            })
            .collect();
        Some((table.iter().copied().fold(f64::MIN, f64::max), table))
    }

    fn oracle_latency(events: &[TimelineEvent], interval_s: f64) -> Option<(f64, Vec<f64>)> {
        let windows = oracle_windows(events, interval_s);
        let max_t = events.iter().map(|e| e.inserted_at).max().unwrap();
        let last = windows.len().checked_sub(1)?;
        let mut table = Vec::new();
        for (i, &(s, e, _)) in windows.iter().enumerate() {
            let close_the_end = i == last && e == max_t;
            let lats: Vec<f64> = events
                .iter()
                .filter(|ev| {
                    ev.inserted_at >= s
                        && (ev.inserted_at < e || (close_the_end && ev.inserted_at == e))
                })
                .map(|ev| (ev.inserted_at - ev.created_at) as f64 / 1e6)
                .collect();
            if !lats.is_empty() {
                table.push(lats.iter().sum::<f64>() / lats.len() as f64);
            }
        }
        if table.is_empty() {
            return None;
        }
        let mut sorted = table.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median =
            if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
        Some((median, table))
    }

    #[test]
    fn throughput_uniform_stream_is_the_rate() {
        // 10/s for 90 s.
        let times: Vec<f64> = (0..900).map(|i| i as f64 * 0.1).collect();
        let (value, table) = compute_throughput(&at_seconds(&times), 30.0).unwrap();
        assert_eq!(table.len(), 3); // tail [60, 89.9] spans 29.9 s and qualifies
        assert!((value - 10.0).abs() < 0.1, "value {value}");
    }

    #[test]
    fn throughput_takes_the_max_interval() {
        // 60 s at 5/s then 60 s at 20/s.
        let mut times: Vec<f64> = (0..300).map(|i| i as f64 * 0.2).collect();
        times.extend((0..1200).map(|i| 60.0 + i as f64 * 0.05));
        let (value, table) = compute_throughput(&at_seconds(&times), 30.0).unwrap();
        assert!((table[0] - 5.0).abs() < 0.1);
        assert!((value - 20.0).abs() < 0.25, "value {value}");
    }

    #[test]
    fn throughput_single_event_is_an_error() {
        assert_eq!(
            compute_throughput(&at_seconds(&[1.0]), 30.0),
            Err(ReportError::NoQualifiedInterval)
        );
    }

    #[test]
    fn latency_constant_stream_is_that_latency() {
        let events: Vec<TimelineEvent> = (0..300)
            .map(|i| {
                let t = (i as f64 * 0.1 * 1e9) as u64;
                event(t, t + 50_000_000) // 50 ms later
            })
            .collect();
        let (value, _) = compute_latency(&events, 10.0).unwrap();
        assert!((value - 50.0).abs() < 1e-9, "value {value}");
    }

    #[test]
    fn latency_median_resists_a_congested_tail() {
        // Interval averages 10, 20, 400 ms across three 10 s intervals.
        let mut events = Vec::new();
        for i in 0..100 {
            let t = (i as f64 * 0.1 * 1e9) as u64;
            events.push(event(t, t + 10_000_000));
        }
        for i in 0..100 {
            let t = ((10.0 + i as f64 * 0.1) * 1e9) as u64;
            events.push(event(t, t + 20_000_000));
        }
        for i in 0..100 {
            let t = ((20.0 + i as f64 * 0.1) * 1e9) as u64;
            events.push(event(t, t + 400_000_000));
        }
        let (value, table) = compute_latency(&events, 10.0).unwrap();
        assert_eq!(table.len(), 3);
        assert!((value - 20.0).abs() < 0.5, "value {value}");
    }

    #[test]
    fn latency_even_interval_count_means_the_middle_mean() {
        // Two 10 s intervals averaging 10 ms and 30 ms.
        let mut events = Vec::new();
        for i in 0..100 {
            let t = (i as f64 * 0.1 * 1e9) as u64;
            events.push(event(t, t + 10_000_000));
        }
        for i in 0..101 {
            let t = ((10.0 + i as f64 * 0.1) * 1e9) as u64;
            events.push(event(t, t + 30_000_000));
        }
        let (value, table) = compute_latency(&events, 10.0).unwrap();
        assert_eq!(table.len(), 2);
        assert!((value - 20.0).abs() < 0.5, "value {value}");
    }

    #[test]
    fn metrics_match_the_oracle_on_randomized_timelines() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        for _ in 0..1000 {
            let n = rng.random_range(2..200);
            let span_s: f64 = rng.random_range(1.0..200.0);
            let events: Vec<TimelineEvent> = (0..n)
                .map(|_| {
                    let ins = (rng.random_range(0.0..span_s) * 1e9) as u64;
                    let lat = rng.random_range(0..2_000_000_000u64);
                    event(ins.saturating_sub(lat), ins)
                })
                .collect();

            match (compute_throughput(&events, 30.0), oracle_throughput(&events, 30.0)) {
                (Ok((v, table)), Some((ov, otable))) => {
                    assert_eq!(table, otable);
                    assert_eq!(v, ov);
                    checked += 1;
                }
                (Err(_), None) => {}
                (got, want) => panic!("throughput divergence: {got:?} vs {want:?}"),
            }
            match (compute_latency(&events, 10.0), oracle_latency(&events, 10.0)) {
                (Ok((v, table)), Some((ov, otable))) => {
                    assert_eq!(table, otable);
                    assert_eq!(v, ov);
                }
                (Err(_), None) => {}
                (got, want) => panic!("latency divergence: {got:?} vs {want:?}"),
            }
        }
        assert!(checked > 500, "only {checked} informative trials");
    }

    #[test]
    fn metrics_are_permutation_and_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut events: Vec<TimelineEvent> = (0..500)
            .map(|_| {
                let ins = (rng.random_range(0.0..100.0) * 1e9) as u64;
                event(ins.saturating_sub(rng.random_range(0..500_000_000)), ins)
            })
            .collect();
        let base_t = compute_throughput(&events, 30.0).unwrap();
        let base_l = compute_latency(&events, 10.0).unwrap();

        // Summation order inside a bucket changes under permutation, so
        // latency equality is up to float associativity.
        let close = |a: &(f64, Vec<f64>), b: &(f64, Vec<f64>)| {
            (a.0 - b.0).abs() < 1e-9
                && a.1.len() == b.1.len()
                && a.1.iter().zip(&b.1).all(|(x, y)| (x - y).abs() < 1e-9)
        };

        events.reverse();
        assert_eq!(compute_throughput(&events, 30.0).unwrap(), base_t);
        assert!(close(&compute_latency(&events, 10.0).unwrap(), &base_l));

        let shift = 7_000_000_000u64;
        let shifted: Vec<TimelineEvent> = events
            .iter()
            .map(|e| event(e.created_at + shift, e.inserted_at + shift))
            .collect();
        assert_eq!(compute_throughput(&shifted, 30.0).unwrap(), base_t);
        assert!(close(&compute_latency(&shifted, 10.0).unwrap(), &base_l));
    }

    fn sample_report() -> BenchReport {
        BenchReport {
            schema_version: REPORT_SCHEMA_VERSION,
            throughput_sessions_per_s: 120.5,
            latency_ms: 42.0,
            throughput_intervals: vec![100.0, 120.5],
            latency_intervals_ms: vec![40.0, 44.0, 41.0],
            stage_busy_ratios: [("feature".to_string(), 0.3), ("sink".to_string(), 0.1)]
                .into_iter()
                .collect(),
            metadata: RunMetadata {
                classifier: "dt".to_string(),
                params: serde_json::json!({"confidence_c": 0.25}),
                rate: Some(1000.0),
                duration_s: 60.0,
                seed: 7,
            },
        }
    }

    #[test]
    fn report_json_round_trips_and_is_stable() {
        let report = sample_report();
        let a = emit_report(&report, ReportFormat::Json);
        let b = emit_report(&report, ReportFormat::Json);
        assert_eq!(a, b);
        let parsed: BenchReport = serde_json::from_slice(&a).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn report_csv_has_the_contracted_row_count() {
        let report = sample_report();
        let csv = String::from_utf8(emit_report(&report, ReportFormat::Csv)).unwrap();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(
            lines.len(),
            1 + report.throughput_intervals.len()
                + report.latency_intervals_ms.len()
                + report.stage_busy_ratios.len()
        );
        assert_eq!(lines[0], "metric,interval_index,value");
        assert_eq!(lines[1], "throughput_sessions_per_s,0,100");
    }

    #[test]
    fn aggregate_reports_mean_min_max() {
        let mut runs = Vec::new();
        for (t, l) in [(100.0, 10.0), (110.0, 20.0), (90.0, 30.0)] {
            let mut r = sample_report();
            r.throughput_sessions_per_s = t;
            r.latency_ms = l;
            runs.push(r);
        }
        let agg = aggregate_reports(runs).unwrap();
        assert_eq!(agg.runs.len(), 3);
        assert!((agg.throughput_sessions_per_s.mean - 100.0).abs() < 1e-9);
        assert_eq!(agg.throughput_sessions_per_s.min, 90.0);
        assert_eq!(agg.throughput_sessions_per_s.max, 110.0);
        assert!((agg.latency_ms.mean - 20.0).abs() < 1e-9);
        assert!(aggregate_reports(Vec::new()).is_err());
    }
}
