//! The four evaluation metrics and their aggregation across seeds.

use std::fmt;

use crate::cluster::MessageKind;

/// Raw per-run counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunCounters {
    /// Control packet receptions, duplicates included.
    pub control_packets_received: u64,
    /// Control packet transmissions, relays included.
    pub routing_packets_sent: u64,
    pub data_packets_sent_by_sources: u64,
    /// One per (member, packet) pair.
    pub data_receipts_unique: u64,
    /// Data receptions at group members, duplicates included.
    pub data_packets_received_total: u64,
    /// seconds
    pub delay_sum: f64,
    pub delay_samples: u64,
    /// Packets times live members at send time.
    pub expected_receipts: u64,
    /// Control receptions broken down by message kind; flooded data relays
    /// are tallied in `flood_relays_received`.
    pub received_by_kind: [u64; 5],
    pub flood_relays_received: u64,
}

impl RunCounters {
    pub fn control_received(&mut self, kind: MessageKind) {
        self.control_packets_received += 1;
        self.received_by_kind[kind.index()] += 1;
    }

    pub fn received_of(&self, kind: MessageKind) -> u64 {
        self.received_by_kind[kind.index()]
    }

    pub fn unique_receipt(&mut self, delay: f64) {
        self.data_receipts_unique += 1;
        self.delay_samples += 1;
        self.delay_sum += delay;
    }
}

pub fn overhead(c: &RunCounters) -> u64 {
    c.control_packets_received
}

/// Routing transmissions per data packet received; `None` without data.
pub fn routing_load(c: &RunCounters) -> Option<f64> {
    (c.data_packets_received_total > 0)
        .then(|| c.routing_packets_sent as f64 / c.data_packets_received_total as f64)
}

pub fn avg_delay(c: &RunCounters) -> Option<f64> {
    (c.delay_samples > 0).then(|| c.delay_sum / c.delay_samples as f64)
}

/// Packet delivery fraction in percent.
pub fn pdf(c: &RunCounters) -> Option<f64> {
    (c.expected_receipts > 0).then(|| 100.0 * c.data_receipts_unique as f64 / c.expected_receipts as f64)
}

/// The four metrics of one run; `None` marks an undefined value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub overhead: f64,
    pub routing_load: Option<f64>,
    pub avg_delay: Option<f64>,
    pub pdf: Option<f64>,
}

impl RunMetrics {
    pub fn from_counters(c: &RunCounters) -> Self {
        Self {
            overhead: overhead(c) as f64,
            routing_load: routing_load(c),
            avg_delay: avg_delay(c),
            pdf: pdf(c),
        }
    }

    /// Mean over runs; an undefined value is skipped, and a metric that is
    /// undefined in every run stays undefined.
    pub fn mean(runs: &[RunMetrics]) -> RunMetrics {
        fn mean_of(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
            let v: Vec<f64> = vals.flatten().collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        }
        RunMetrics {
            overhead: mean_of(runs.iter().map(|r| Some(r.overhead))).unwrap_or(0.0),
            routing_load: mean_of(runs.iter().map(|r| r.routing_load)),
            avg_delay: mean_of(runs.iter().map(|r| r.avg_delay)),
            pdf: mean_of(runs.iter().map(|r| r.pdf)),
        }
    }
}

/// Per-seed metrics for one (protocol, scenario) point plus their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_seed: Vec<(u64, RunMetrics)>,
    pub mean: RunMetrics,
}

impl MetricsReport {
    pub fn from_runs(per_seed: Vec<(u64, RunMetrics)>) -> Self {
        let runs: Vec<RunMetrics> = per_seed.iter().map(|(_, m)| *m).collect();
        let mean = RunMetrics::mean(&runs);
        Self { per_seed, mean }
    }
}

pub const CSV_HEADER: &str = "protocol,n_nodes,group_size,seed,overhead,load,delay_s,pdf_pct";

/// Seed column of a CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SeedLabel {
    Seed(u64),
    Mean,
}

impl fmt::Display for SeedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeedLabel::Seed(s) => write!(f, "{s}"),
            SeedLabel::Mean => f.write_str("mean"),
        }
    }
}

fn opt(v: Option<f64>, precision: usize) -> String {
    match v {
        Some(x) => format!("{x:.precision$}"),
        None => "N/A".to_string(),
    }
}

pub fn csv_row(protocol: &str, n_nodes: usize, group_size: usize, seed: SeedLabel, m: &RunMetrics) -> String {
    format!(
        "{protocol},{n_nodes},{group_size},{seed},{:.2},{},{},{}",
        m.overhead,
        opt(m.routing_load, 6),
        opt(m.avg_delay, 6),
        opt(m.pdf, 4)
    )
}
