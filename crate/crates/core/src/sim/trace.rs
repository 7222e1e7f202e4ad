//! Tab-separated event trace and its replay into run counters.
//!
//! Line layouts (time is seconds with nanosecond precision):
//!
//! ```text
//! time  KIND  origin    dest|BCAST  group  hop_count  ttl  seq   control or flood transmission
//! time  RX    receiver  KIND        origin group      seq        control reception
//! time  SEND  source    expected    group  seq                   data packet generated
//! time  DATA  source    holder      group  seq                   data reception at a member
//! ```
//!
//! `KIND` is one of JOIN, LEADER, MEMBER, MCAST_REQ, MCAST_REP or FLOOD (a
//! data packet relayed by the flooding baseline).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::BufRead;

use crate::cluster::{GroupId, MessageKind};
use crate::error::TraceError;
use crate::metrics::RunCounters;
use crate::topology::NodeId;

use super::event::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Control(MessageKind),
    Flood,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Control(k) => k.as_str(),
            TraceKind::Flood => "FLOOD",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "FLOOD" {
            return Some(TraceKind::Flood);
        }
        MessageKind::parse(s).map(TraceKind::Control)
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceRecord {
    Tx {
        time: SimTime,
        kind: TraceKind,
        origin: NodeId,
        dest: Option<NodeId>,
        group: GroupId,
        hop_count: u32,
        ttl: u32,
        seq: u64,
    },
    Rx {
        time: SimTime,
        receiver: NodeId,
        kind: TraceKind,
        origin: NodeId,
        group: GroupId,
        seq: u64,
    },
    Send {
        time: SimTime,
        source: NodeId,
        expected: u64,
        group: GroupId,
        seq: u64,
    },
    Data {
        time: SimTime,
        source: NodeId,
        holder: NodeId,
        group: GroupId,
        seq: u64,
    },
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceRecord::Tx { time, kind, origin, dest, group, hop_count, ttl, seq } => {
                write!(f, "{time}\t{kind}\t{origin}\t")?;
                match dest {
                    Some(d) => write!(f, "{d}")?,
                    None => f.write_str("BCAST")?,
                }
                write!(f, "\t{group}\t{hop_count}\t{ttl}\t{seq}")
            }
            TraceRecord::Rx { time, receiver, kind, origin, group, seq } => {
                write!(f, "{time}\tRX\t{receiver}\t{kind}\t{origin}\t{group}\t{seq}")
            }
            TraceRecord::Send { time, source, expected, group, seq } => {
                write!(f, "{time}\tSEND\t{source}\t{expected}\t{group}\t{seq}")
            }
            TraceRecord::Data { time, source, holder, group, seq } => {
                write!(f, "{time}\tDATA\t{source}\t{holder}\t{group}\t{seq}")
            }
        }
    }
}

fn parse_time(s: &str) -> Option<SimTime> {
    let (whole, frac) = s.split_once('.').unwrap_or((s, "0"));
    if frac.len() > 9 || frac.is_empty() {
        return None;
    }
    let secs: u64 = whole.parse().ok()?;
    let frac_ns: u64 = format!("{frac:0<9}").parse().ok()?;
    Some(SimTime(secs * 1_000_000_000 + frac_ns))
}

impl TraceRecord {
    pub fn time(&self) -> SimTime {
        match self {
            TraceRecord::Tx { time, .. }
            | TraceRecord::Rx { time, .. }
            | TraceRecord::Send { time, .. }
            | TraceRecord::Data { time, .. } => *time,
        }
    }

    pub fn parse(line: &str, line_no: usize) -> Result<Self, TraceError> {
        let bad = |message: &str| TraceError::Malformed { line: line_no, message: message.to_string() };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 6 {
            return Err(bad("too few fields"));
        }
        let time = parse_time(f[0]).ok_or_else(|| bad("bad time"))?;
        let node = |s: &str| s.parse::<usize>().map(NodeId).map_err(|_| bad("bad node id"));
        let num = |s: &str| s.parse::<u64>().map_err(|_| bad("bad number"));
        let group = |s: &str| s.parse::<u32>().map(GroupId).map_err(|_| bad("bad group"));
        match f[1] {
            "RX" => {
                if f.len() != 7 {
                    return Err(bad("RX needs 7 fields"));
                }
                Ok(TraceRecord::Rx {
                    time,
                    receiver: node(f[2])?,
                    kind: TraceKind::parse(f[3]).ok_or_else(|| bad("unknown kind"))?,
                    origin: node(f[4])?,
                    group: group(f[5])?,
                    seq: num(f[6])?,
                })
            }
            "SEND" => Ok(TraceRecord::Send {
                time,
                source: node(f[2])?,
                expected: num(f[3])?,
                group: group(f[4])?,
                seq: num(f[5])?,
            }),
            "DATA" => Ok(TraceRecord::Data {
                time,
                source: node(f[2])?,
                holder: node(f[3])?,
                group: group(f[4])?,
                seq: num(f[5])?,
            }),
            k => {
                let kind = TraceKind::parse(k).ok_or_else(|| bad("unknown kind"))?;
                if f.len() != 8 {
                    return Err(bad("transmission needs 8 fields"));
                }
                let dest = if f[3] == "BCAST" { None } else { Some(node(f[3])?) };
                Ok(TraceRecord::Tx {
                    time,
                    kind,
                    origin: node(f[2])?,
                    dest,
                    group: group(f[4])?,
                    hop_count: num(f[5])? as u32,
                    ttl: num(f[6])? as u32,
                    seq: num(f[7])?,
                })
            }
        }
    }
}

pub fn render(records: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 40);
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

pub fn read_trace(reader: impl BufRead) -> Result<Vec<TraceRecord>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(TraceRecord::parse(&line, i + 1)?);
    }
    Ok(out)
}

/// Rebuilds run counters from a trace.
pub fn replay(records: &[TraceRecord]) -> RunCounters {
    let mut c = RunCounters::default();
    let mut created: HashMap<(NodeId, GroupId, u64), SimTime> = HashMap::new();
    let mut got: HashSet<(NodeId, NodeId, GroupId, u64)> = HashSet::new();
    for r in records {
        match *r {
            TraceRecord::Tx { .. } => c.routing_packets_sent += 1,
            TraceRecord::Rx { kind, .. } => match kind {
                TraceKind::Control(k) => c.control_received(k),
                TraceKind::Flood => {
                    c.control_packets_received += 1;
                    c.flood_relays_received += 1;
                }
            },
            TraceRecord::Send { time, source, expected, group, seq } => {
                c.data_packets_sent_by_sources += 1;
                c.expected_receipts += expected;
                created.insert((source, group, seq), time);
            }
            TraceRecord::Data { time, source, holder, group, seq } => {
                c.data_packets_received_total += 1;
                if got.insert((holder, source, group, seq)) {
                    let t0 = created.get(&(source, group, seq)).copied().unwrap_or(time);
                    c.unique_receipt((time - t0).as_secs());
                }
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_round_trip() {
        let recs = vec![
            TraceRecord::Tx {
                time: SimTime(1_500_000_000),
                kind: TraceKind::Control(MessageKind::Join),
                origin: NodeId(3),
                dest: None,
                group: GroupId(0),
                hop_count: 0,
                ttl: 2,
                seq: 1,
            },
            TraceRecord::Tx {
                time: SimTime(2),
                kind: TraceKind::Control(MessageKind::Member),
                origin: NodeId(3),
                dest: Some(NodeId(7)),
                group: GroupId(1),
                hop_count: 1,
                ttl: 3,
                seq: 9,
            },
            TraceRecord::Rx {
                time: SimTime(3),
                receiver: NodeId(4),
                kind: TraceKind::Flood,
                origin: NodeId(0),
                group: GroupId(0),
                seq: 5,
            },
            TraceRecord::Send { time: SimTime(4), source: NodeId(0), expected: 6, group: GroupId(0), seq: 1 },
            TraceRecord::Data { time: SimTime(5), source: NodeId(0), holder: NodeId(2), group: GroupId(0), seq: 1 },
        ];
        let text = render(&recs);
        assert!(text.starts_with("1.500000000\tJOIN\t3\tBCAST\t0\t0\t2\t1\n"));
        let back = read_trace(text.as_bytes()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn replay_dedups_data_and_measures_delay() {
        let g = GroupId(0);
        let recs = vec![
            TraceRecord::Send { time: SimTime(1_000_000), source: NodeId(0), expected: 2, group: g, seq: 1 },
            TraceRecord::Data { time: SimTime(7_000_000), source: NodeId(0), holder: NodeId(3), group: g, seq: 1 },
            TraceRecord::Data { time: SimTime(9_000_000), source: NodeId(0), holder: NodeId(3), group: g, seq: 1 },
        ];
        let c = replay(&recs);
        assert_eq!(c.data_receipts_unique, 1);
        assert_eq!(c.data_packets_received_total, 2);
        assert!((c.delay_sum - 0.006).abs() < 1e-15);
        assert_eq!(c.expected_receipts, 2);
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = read_trace("0.1\tJOIN\tx\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
