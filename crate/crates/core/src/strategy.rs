//! The two interest forwarding strategies.
//!
//! Pure forwarders run no application: every fresh interest is rebroadcast
//! with probability `p_forward` after a random jitter. nTorrent peers hand
//! their own torrent's traffic to the application and relay traffic for
//! other torrents only once they have overheard that torrent before, within
//! the memory lifetime `t_mem`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{Micros, SimRng, SimTime};
use crate::forwarding::ForwardAction;
use crate::name::{NameClass, Packet, TorrentId};
use crate::trace::Code;

pub const DEFAULT_T_MEM: Micros = 30_000_000;
pub const DEFAULT_JITTER_MIN: Micros = 2_000;
pub const DEFAULT_JITTER_MAX: Micros = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PureForwarderConfig {
    pub p_forward: f64,
    pub jitter_min: Micros,
    pub jitter_max: Micros,
}

impl Default for PureForwarderConfig {
    fn default() -> Self {
        PureForwarderConfig {
            p_forward: 1.0,
            jitter_min: DEFAULT_JITTER_MIN,
            jitter_max: DEFAULT_JITTER_MAX,
        }
    }
}

impl PureForwarderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.p_forward) {
            return Err(format!("p_forward {} outside [0, 1]", self.p_forward));
        }
        validate_jitter(self.jitter_min, self.jitter_max)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerStrategyConfig {
    pub own_torrent: TorrentId,
    pub t_mem: Micros,
    pub jitter_min: Micros,
    pub jitter_max: Micros,
}

impl PeerStrategyConfig {
    pub fn new(own_torrent: TorrentId) -> Self {
        PeerStrategyConfig {
            own_torrent,
            t_mem: DEFAULT_T_MEM,
            jitter_min: DEFAULT_JITTER_MIN,
            jitter_max: DEFAULT_JITTER_MAX,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        validate_jitter(self.jitter_min, self.jitter_max)
    }
}

fn validate_jitter(min: Micros, max: Micros) -> Result<(), String> {
    if min > max {
        return Err(format!("jitter_min {min} exceeds jitter_max {max}"));
    }
    Ok(())
}

/// A forwarding verdict plus the reason code traced with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub action: ForwardAction,
    pub reason: Code,
}

fn jitter(rng: &mut SimRng, min: Micros, max: Micros) -> Micros {
    rng.uniform_u64(min, max)
}

/// Probabilistic rebroadcast. Draws one uniform for the gate, and one more
/// for the delay only when forwarding.
pub fn pure_decide(cfg: &PureForwarderConfig, _interest: &Packet, rng: &mut SimRng) -> Decision {
    if rng.bernoulli(cfg.p_forward) {
        Decision {
            action: ForwardAction::ForwardInterest {
                delay: jitter(rng, cfg.jitter_min, cfg.jitter_max),
            },
            reason: Code::ProbFwd,
        }
    } else {
        Decision {
            action: ForwardAction::Drop,
            reason: Code::ProbDrop,
        }
    }
}

/// Foreign torrent names a peer has overheard, each with an expiry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverheardNameTable {
    entries: BTreeMap<TorrentId, SimTime>,
    t_mem: Micros,
}

impl OverheardNameTable {
    pub fn new(t_mem: Micros) -> Self {
        OverheardNameTable {
            entries: BTreeMap::new(),
            t_mem,
        }
    }

    pub fn t_mem(&self) -> Micros {
        self.t_mem
    }

    /// Live means `now` is strictly before the stored expiry.
    pub fn is_live(&self, torrent: &TorrentId, now: SimTime) -> bool {
        self.entries.get(torrent).is_some_and(|&exp| now < exp)
    }

    pub fn expiry(&self, torrent: &TorrentId) -> Option<SimTime> {
        self.entries.get(torrent).copied()
    }

    /// Inserts or refreshes the entry so it expires at `now + t_mem`.
    pub fn remember(&mut self, torrent: &TorrentId, now: SimTime) {
        self.entries.insert(torrent.clone(), now + self.t_mem);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Drops every entry whose expiry is at or before `now`.
    pub fn gc(&mut self, now: SimTime) -> usize {
        let before = self.entries.len();
        self.entries.retain(|_, exp| *exp > now);
        before - self.entries.len()
    }
}

pub fn table_gc(table: &mut OverheardNameTable, now: SimTime) -> usize {
    table.gc(now)
}

/// Decision for an nTorrent peer.
///
/// Own-torrent traffic and beacons go to the application. For another
/// torrent, the first interest heard (or the first after the memory lapsed)
/// is dropped and remembered; later ones within `t_mem` are forwarded. Both
/// cases refresh the memory.
pub fn peer_decide(
    cfg: &PeerStrategyConfig,
    table: &mut OverheardNameTable,
    interest: &Packet,
    now: SimTime,
    rng: &mut SimRng,
) -> Decision {
    let class = interest.name().classify();
    let torrent = match &class {
        NameClass::Beacon { .. } => {
            return Decision {
                action: ForwardAction::DeliverToApp,
                reason: Code::OwnApp,
            }
        }
        NameClass::Unknown => {
            return Decision {
                action: ForwardAction::Drop,
                reason: Code::UnknownDrop,
            }
        }
        other => other.torrent().expect("torrent-bearing class"),
    };
    if *torrent == cfg.own_torrent {
        return Decision {
            action: ForwardAction::DeliverToApp,
            reason: Code::OwnApp,
        };
    }
    let live = table.is_live(torrent, now);
    table.remember(torrent, now);
    if live {
        Decision {
            action: ForwardAction::ForwardInterest {
                delay: jitter(rng, cfg.jitter_min, cfg.jitter_max),
            },
            reason: Code::ForeignFwd,
        }
    } else {
        Decision {
            action: ForwardAction::Drop,
            reason: Code::ForeignLearn,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SECOND;
    use crate::name::{Name, NodeId};

    fn interest(s: &str) -> Packet {
        Packet::interest(Name::parse(s).unwrap(), 1, NodeId(9))
    }

    fn peer(own: &str, t_mem: Micros) -> (PeerStrategyConfig, OverheardNameTable) {
        let mut cfg = PeerStrategyConfig::new(TorrentId::new(own));
        cfg.t_mem = t_mem;
        (cfg, OverheardNameTable::new(t_mem))
    }

    #[test]
    fn degenerate_probabilities() {
        let mut rng = SimRng::from_key(1);
        let pkt = interest("/ntorrent/movie1/data/0");
        let always = PureForwarderConfig { p_forward: 1.0, ..Default::default() };
        let never = PureForwarderConfig { p_forward: 0.0, ..Default::default() };
        for _ in 0..1_000 {
            assert_eq!(pure_decide(&always, &pkt, &mut rng).reason, Code::ProbFwd);
            let d = pure_decide(&never, &pkt, &mut rng);
            assert_eq!((d.action, d.reason), (ForwardAction::Drop, Code::ProbDrop));
        }
    }

    #[test]
    fn pure_never_delivers_to_app() {
        let mut rng = SimRng::from_key(2);
        let cfg = PureForwarderConfig { p_forward: 0.5, ..Default::default() };
        for s in ["/ntorrent/beacon/n1", "/ntorrent/movie1/data/0", "/x"] {
            for _ in 0..200 {
                assert_ne!(pure_decide(&cfg, &interest(s), &mut rng).action, ForwardAction::DeliverToApp);
            }
        }
    }

    #[test]
    fn first_foreign_learns_second_forwards() {
        let (cfg, mut table) = peer("movie2", 30 * SECOND);
        let mut rng = SimRng::from_key(3);
        let pkt = interest("/ntorrent/movie1/data/0");
        let d = peer_decide(&cfg, &mut table, &pkt, 5 * SECOND, &mut rng);
        assert_eq!((d.action, d.reason), (ForwardAction::Drop, Code::ForeignLearn));
        assert_eq!(table.expiry(&TorrentId::new("movie1")), Some(35 * SECOND));
        let d = peer_decide(&cfg, &mut table, &pkt, 6 * SECOND, &mut rng);
        assert_eq!(d.reason, Code::ForeignFwd);
        assert!(matches!(d.action, ForwardAction::ForwardInterest { .. }));
    }

    #[test]
    fn lapsed_memory_relearns() {
        let t_mem = 30 * SECOND;
        let (cfg, mut table) = peer("movie2", t_mem);
        let mut rng = SimRng::from_key(4);
        let pkt = interest("/ntorrent/movie1/data/0");
        peer_decide(&cfg, &mut table, &pkt, 5 * SECOND, &mut rng);
        let d = peer_decide(&cfg, &mut table, &pkt, 5 * SECOND + t_mem + 1, &mut rng);
        assert_eq!(d.reason, Code::ForeignLearn);
        assert_eq!(table.expiry(&TorrentId::new("movie1")), Some(5 * SECOND + 2 * t_mem + 1));
        // exactly at expiry also counts as lapsed
        let (cfg, mut table) = peer("movie2", t_mem);
        peer_decide(&cfg, &mut table, &pkt, 0, &mut rng);
        assert_eq!(peer_decide(&cfg, &mut table, &pkt, t_mem, &mut rng).reason, Code::ForeignLearn);
    }

    #[test]
    fn own_and_beacon_go_to_app_unknown_dropped() {
        let (cfg, mut table) = peer("movie1", 30 * SECOND);
        let mut rng = SimRng::from_key(5);
        for s in [
            "/ntorrent/beacon/n3",
            "/ntorrent/movie1/data/2",
            "/ntorrent/movie1/bitmap/n2/0a/4",
            "/ntorrent/movie1/other",
        ] {
            let d = peer_decide(&cfg, &mut table, &interest(s), 0, &mut rng);
            assert_eq!((d.action, d.reason), (ForwardAction::DeliverToApp, Code::OwnApp), "{s}");
        }
        assert!(table.is_empty());
        let d = peer_decide(&cfg, &mut table, &interest("/other/x"), 0, &mut rng);
        assert_eq!((d.action, d.reason), (ForwardAction::Drop, Code::UnknownDrop));
    }

    #[test]
    fn foreign_bitmaps_use_the_memory_rule() {
        let (cfg, mut table) = peer("movie2", 30 * SECOND);
        let mut rng = SimRng::from_key(6);
        let bm = interest("/ntorrent/movie1/bitmap/n0/0f/4");
        assert_eq!(peer_decide(&cfg, &mut table, &bm, 0, &mut rng).reason, Code::ForeignLearn);
        let piece = interest("/ntorrent/movie1/data/3");
        assert_eq!(peer_decide(&cfg, &mut table, &piece, 1, &mut rng).reason, Code::ForeignFwd);
    }

    #[test]
    fn table_gc_examples() {
        let mut t = OverheardNameTable::new(10 * SECOND);
        assert_eq!(table_gc(&mut t, 0), 0);
        t.remember(&TorrentId::new("a"), 0);
        assert_eq!(table_gc(&mut t, 5 * SECOND), 0);
        t.remember(&TorrentId::new("b"), 10 * SECOND);
        // expiries 10 s and 20 s
        assert_eq!(table_gc(&mut t, 15 * SECOND), 1);
        assert!(t.is_live(&TorrentId::new("b"), 15 * SECOND));
        assert_eq!(table_gc(&mut t, 20 * SECOND), 1);
        assert!(t.is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(PureForwarderConfig { p_forward: 1.5, ..Default::default() }.validate().is_err());
        assert!(PureForwarderConfig { jitter_min: 5, jitter_max: 4, ..Default::default() }
            .validate()
            .is_err());
        assert!(PureForwarderConfig::default().validate().is_ok());
    }
}
