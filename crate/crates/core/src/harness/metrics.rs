use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::RoundRecord;

use super::sim::{LinkEvent, MetricsRow, Sink};

type CsvOut = csv::Writer<BufWriter<File>>;

fn csv_out(path: &Path) -> Result<CsvOut> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// Writes simulation outputs as CSV files in a directory: `metrics.csv`
/// always, `channel.csv` and `satisfaction.csv` when links are logged,
/// `rounds.csv` when federation is on.
pub struct CsvSink {
    metrics: CsvOut,
    channel: Option<CsvOut>,
    satisfaction: Option<CsvOut>,
    rounds: Option<CsvOut>,
    error: Option<Error>,
}

impl CsvSink {
    pub fn create(dir: &Path, links: bool, rounds: bool) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            metrics: csv_out(&dir.join("metrics.csv"))?,
            channel: if links { Some(csv_out(&dir.join("channel.csv"))?) } else { None },
            satisfaction: if links { Some(csv_out(&dir.join("satisfaction.csv"))?) } else { None },
            rounds: if rounds { Some(csv_out(&dir.join("rounds.csv"))?) } else { None },
            error: None,
        })
    }

    fn keep(&mut self, r: std::result::Result<(), csv::Error>) {
        if let (Err(e), None) = (r, &self.error) {
            self.error = Some(e.into());
        }
    }

    /// Flushes every file and reports the first write error seen.
    pub fn flush(&mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.metrics.flush()?;
        for w in [&mut self.channel, &mut self.satisfaction, &mut self.rounds].into_iter().flatten() {
            w.flush()?;
        }
        Ok(())
    }
}

impl Sink for CsvSink {
    fn step(&mut self, row: &MetricsRow) {
        let r = self.metrics.serialize(row);
        self.keep(r);
    }

    fn link(&mut self, e: &LinkEvent) {
        if let Some(w) = self.channel.as_mut() {
            let r = w.serialize(e.channel_record());
            self.keep(r);
        }
        if let Some(w) = self.satisfaction.as_mut() {
            let r = w.serialize(e.satisfaction_record());
            self.keep(r);
        }
    }

    fn round(&mut self, record: &RoundRecord) {
        if let Some(w) = self.rounds.as_mut() {
            let r = w.serialize(record);
            self.keep(r);
        }
    }
}

/// Collects rows in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub rows: Vec<MetricsRow>,
    pub links: Vec<LinkEvent>,
    pub rounds: Vec<RoundRecord>,
}

impl Sink for MemorySink {
    fn step(&mut self, row: &MetricsRow) {
        self.rows.push(row.clone());
    }

    fn link(&mut self, e: &LinkEvent) {
        self.links.push(e.clone());
    }

    fn round(&mut self, record: &RoundRecord) {
        self.rounds.push(record.clone());
    }
}

/// Trailing moving average: entry `i` averages the last `window` values
/// up to and including `i` (fewer at the start).
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= w {
            sum -= xs[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

/// Linear-interpolated percentile of ascending `sorted`, `p` in [0, 1].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

/// `P(R > x)` over ascending `sorted`.
pub fn ccdf_at(sorted: &[f64], x: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let above = sorted.len() - sorted.partition_point(|&v| v <= x);
    above as f64 / sorted.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdfPoint {
    pub reward: f64,
    pub ccdf: f64,
}

/// CCDF on `points` evenly spaced thresholds from 0 to the largest sample.
pub fn ccdf_table(samples: &[f64], points: usize) -> Vec<CcdfPoint> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let top = sorted.last().copied().unwrap_or(0.0).max(0.0);
    let steps = points.max(2) - 1;
    (0..=steps)
        .map(|i| {
            let reward = top * i as f64 / steps as f64;
            CcdfPoint { reward, ccdf: ccdf_at(&sorted, reward) }
        })
        .collect()
}

/// Whether the CCDF of `a` is at least that of `b` at every sample value
/// of either.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    sa.iter().chain(&sb).all(|&x| ccdf_at(&sa, x) >= ccdf_at(&sb, x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub episode: usize,
    /// Mean over vehicles of each vehicle's smoothed episode reward.
    pub mean: f64,
    pub p05: f64,
    pub p95: f64,
    pub vehicles: usize,
}

/// Per-vehicle episode rewards from metrics rows, keyed by agent id.
pub fn vehicle_episode_rewards(rows: &[MetricsRow]) -> BTreeMap<String, Vec<(usize, f64)>> {
    let mut acc: BTreeMap<String, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.slot.is_some()) {
        let e = acc.entry(r.agent.clone()).or_default().entry(r.episode).or_insert((0.0, 0));
        e.0 += r.reward;
        e.1 += 1;
    }
    acc.into_iter().map(|(a, eps)| (a, eps.into_iter().map(|(e, (s, c))| (e, s / c as f64)).collect())).collect()
}

/// Smoothed learning curves: each vehicle's episode rewards are averaged
/// over a trailing `window`, then summarized across vehicles per episode
/// by mean and 5th/95th percentiles.
pub fn plot_rows(rows: &[MetricsRow], window: usize) -> Result<Vec<PlotRow>> {
    if window == 0 {
        return Err(Error::Config("smoothing window must be at least 1".into()));
    }
    let mut per_episode: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for series in vehicle_episode_rewards(rows).values() {
        let values: Vec<f64> = series.iter().map(|&(_, r)| r).collect();
        for (&(e, _), s) in series.iter().zip(moving_average(&values, window)) {
            per_episode.entry(e).or_default().push(s);
        }
    }
    Ok(per_episode
        .into_iter()
        .map(|(episode, mut v)| {
            v.sort_by(f64::total_cmp);
            PlotRow { episode, mean: v.iter().sum::<f64>() / v.len() as f64, p05: percentile(&v, 0.05), p95: percentile(&v, 0.95), vehicles: v.len() }
        })
        .collect())
}

pub fn read_metrics<R: Read>(r: R) -> Result<Vec<MetricsRow>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|r| r.map_err(|e| Error::Format(e.to_string()))).collect()
}

/// Reads a metrics CSV and writes the smoothed curves as CSV.
pub fn export_plotdata<R: Read, W: Write>(metrics: R, window: usize, out: W) -> Result<usize> {
    let rows = plot_rows(&read_metrics(metrics)?, window)?;
    let mut w = csv::Writer::from_writer(out);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows.len())
}
