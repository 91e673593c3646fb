//! Graph-reachability prediction of which leechers can complete.
//!
//! Only defined for static layouts with explicit positions, a lossless
//! medium and a deterministic forwarding probability (0 or 1).

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::mobility::in_range;
use crate::name::NodeId;
use crate::scenario::{Mobility, NodeKind, Placement, ScenarioConfig};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("oracle unsupported: {0}")]
    Unsupported(&'static str),
}

/// For every leecher: can it reach a seeder of its torrent through nodes
/// that relay its traffic, in at most `max_hops` hops?
///
/// Every nTorrent peer relays (its own torrent by serving content, foreign
/// torrents once overheard). Pure forwarders relay only when `p_forward`
/// is 1.
pub fn reachability_oracle(cfg: &ScenarioConfig) -> Result<BTreeMap<NodeId, bool>, OracleError> {
    let p = cfg.strategy.p_forward;
    if p != 0.0 && p != 1.0 {
        return Err(OracleError::Unsupported("p_forward must be 0 or 1"));
    }
    if cfg.radio.loss_prob != 0.0 {
        return Err(OracleError::Unsupported("lossy medium"));
    }
    if cfg.collision_mode {
        return Err(OracleError::Unsupported("collision mode"));
    }
    let mut pos = Vec::with_capacity(cfg.nodes.len());
    for n in &cfg.nodes {
        if n.mobility != Mobility::Static {
            return Err(OracleError::Unsupported("mobile node"));
        }
        match n.position {
            Placement::At(p) => pos.push(p),
            Placement::Random => return Err(OracleError::Unsupported("unresolved position")),
        }
    }
    let relays = |i: usize| match cfg.nodes[i].kind {
        NodeKind::PureForwarder => p == 1.0,
        _ => true,
    };

    let mut out = BTreeMap::new();
    for (start, spec) in cfg.nodes.iter().enumerate() {
        let NodeKind::Leecher(want) = &spec.kind else {
            continue;
        };
        let is_target = |i: usize| matches!(&cfg.nodes[i].kind, NodeKind::Seeder(t) if t == want);
        let mut dist = vec![u32::MAX; cfg.nodes.len()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            if is_target(u) {
                found = true;
                break;
            }
            if u != start && !relays(u) {
                continue;
            }
            if dist[u] >= cfg.max_hops {
                continue;
            }
            for v in 0..cfg.nodes.len() {
                if dist[v] == u32::MAX && in_range(&pos[u], &pos[v], &cfg.radio) {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        out.insert(spec.id, found);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SECOND;
    use crate::name::TorrentId;
    use crate::scenario::{build_five_node, line_scenario, TorrentSpec};

    fn spl(p: f64) -> ScenarioConfig {
        let t = TorrentId::new("movie1");
        let mut cfg = line_scenario(
            &[NodeKind::Seeder(t.clone()), NodeKind::PureForwarder, NodeKind::Leecher(t)],
            50.0,
            60 * SECOND,
            vec![TorrentSpec::new("movie1")],
        );
        cfg.strategy.p_forward = p;
        cfg
    }

    #[test]
    fn forwarder_gate() {
        assert!(reachability_oracle(&spl(1.0)).unwrap()[&NodeId(2)]);
        assert!(!reachability_oracle(&spl(0.0)).unwrap()[&NodeId(2)]);
    }

    #[test]
    fn five_node_all_reachable_only_with_forwarder() {
        let mut cfg = build_five_node();
        assert!(reachability_oracle(&cfg).unwrap().values().all(|&r| r));
        cfg.strategy.p_forward = 0.0;
        let r = reachability_oracle(&cfg).unwrap();
        assert!(r[&NodeId(2)]);
        assert!(!r[&NodeId(1)]);
    }

    #[test]
    fn rejects_unsupported() {
        let mut cfg = spl(0.5);
        assert!(reachability_oracle(&cfg).is_err());
        cfg.strategy.p_forward = 1.0;
        cfg.radio.loss_prob = 0.1;
        assert!(reachability_oracle(&cfg).is_err());
    }
}
