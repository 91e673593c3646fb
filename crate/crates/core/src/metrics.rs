//! Run metrics, reduced from the trace alone.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::engine::SimTime;
use crate::name::NodeId;
use crate::trace::{Code, TraceError, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeecherOutcome {
    pub node: NodeId,
    pub torrent: String,
    pub completed: bool,
    pub completion_time_us: Option<SimTime>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeCounters {
    pub role: String,
    pub interests_tx: u64,
    pub data_tx: u64,
    pub drops_by_reason: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub leechers: Vec<LeecherOutcome>,
    pub nodes: BTreeMap<NodeId, NodeCounters>,
    pub total_tx: u64,
    /// Pieces handed to applications.
    pub deliveries: u64,
    /// `total_tx / deliveries`; absent when nothing was delivered.
    pub overhead_ratio: Option<f64>,
}

impl MetricsSummary {
    pub fn from_trace(records: &[TraceRecord]) -> MetricsSummary {
        let mut nodes: BTreeMap<NodeId, NodeCounters> = BTreeMap::new();
        let mut leechers: BTreeMap<NodeId, LeecherOutcome> = BTreeMap::new();
        let mut deliveries = 0;
        for r in records {
            let counters = nodes.entry(r.node).or_default();
            match r.event {
                Code::Node => {
                    counters.role = r.detail_value("kind").unwrap_or_default().to_string();
                    if counters.role == "leecher" {
                        leechers.insert(
                            r.node,
                            LeecherOutcome {
                                node: r.node,
                                torrent: r.detail_value("torrent").unwrap_or_default().to_string(),
                                completed: false,
                                completion_time_us: None,
                            },
                        );
                    }
                }
                Code::InterestTx => counters.interests_tx += 1,
                Code::DataTx => counters.data_tx += 1,
                Code::PieceRx => deliveries += 1,
                Code::Completed => {
                    if let Some(l) = leechers.get_mut(&r.node) {
                        if !l.completed {
                            l.completed = true;
                            l.completion_time_us = Some(r.time_us);
                        }
                    }
                }
                c if c.is_drop() => {
                    let reason = match r.detail_value("reason") {
                        Some(why) => format!("{c}:{why}"),
                        None => c.to_string(),
                    };
                    *counters.drops_by_reason.entry(reason).or_default() += 1;
                }
                _ => {}
            }
        }
        let total_tx = nodes.values().map(|c| c.interests_tx + c.data_tx).sum();
        MetricsSummary {
            leechers: leechers.into_values().collect(),
            nodes,
            total_tx,
            deliveries,
            overhead_ratio: (deliveries > 0).then(|| total_tx as f64 / deliveries as f64),
        }
    }

    pub fn all_completed(&self) -> bool {
        self.leechers.iter().all(|l| l.completed)
    }

    pub fn leecher(&self, node: NodeId) -> Option<&LeecherOutcome> {
        self.leechers.iter().find(|l| l.node == node)
    }
}

/// Long-format CSV: `scope,node,metric,value`.
pub fn write_metrics<W: Write>(m: &MetricsSummary, out: W) -> Result<(), TraceError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["scope", "node", "metric", "value"])?;
    for l in &m.leechers {
        let node = l.node.to_string();
        w.write_record(["leecher", &node, "torrent", &l.torrent])?;
        w.write_record(["leecher", &node, "completed", if l.completed { "true" } else { "false" }])?;
        let t = l.completion_time_us.map(|t| t.to_string()).unwrap_or_default();
        w.write_record(["leecher", &node, "completion_time_us", &t])?;
    }
    for (id, c) in &m.nodes {
        let node = id.to_string();
        w.write_record(["node", &node, "role", &c.role])?;
        w.write_record(["node", &node, "interests_tx", &c.interests_tx.to_string()])?;
        w.write_record(["node", &node, "data_tx", &c.data_tx.to_string()])?;
        for (reason, n) in &c.drops_by_reason {
            w.write_record(["node", &node, &format!("drops.{reason}"), &n.to_string()])?;
        }
    }
    w.write_record(["global", "", "total_tx", &m.total_tx.to_string()])?;
    w.write_record(["global", "", "deliveries", &m.deliveries.to_string()])?;
    let ratio = m.overhead_ratio.map(|r| format!("{r:.6}")).unwrap_or_default();
    w.write_record(["global", "", "overhead_ratio", &ratio])?;
    w.flush()?;
    Ok(())
}

pub fn write_metrics_csv(m: &MetricsSummary, path: &Path) -> Result<(), TraceError> {
    let f = std::fs::File::create(path)?;
    write_metrics(m, std::io::BufWriter::new(f))
}
